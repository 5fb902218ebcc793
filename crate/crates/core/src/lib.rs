//! Spectral-sequence computations for families of real quadratic forms.
//!
//! A family is an affine map `v ↦ f(v)` from a parameter domain `V ⊂ ℝ^d`
//! into symmetric `n×n` matrices. The crate provides the eigen-level
//! primitives ([`symspec`]), tracing of the curves where two consecutive
//! eigenvalues coincide ([`strata`]), ℤ₂ cohomology of the sublevel pairs
//! `(V, {λ_j > 0})` on cubical grids ([`z2homology`]), the resulting E² page
//! and its low differentials ([`specseq`]), mod-2 linking numbers of
//! polygonal curves ([`linkage`]) and the built-in example families
//! ([`lab`]).

pub mod error;
pub mod geom;
pub mod json;
pub mod lab;
pub mod linkage;
pub mod specseq;
pub mod strata;
pub mod symspec;
pub mod z2homology;

pub use error::{Error, Result};
pub use symspec::{ParamDomain, QuadraticFamily, SymMatrix, ZeroTol};
