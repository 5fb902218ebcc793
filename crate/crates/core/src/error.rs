use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("eigenvalue index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("invalid parameter domain: {0}")]
    InvalidDomain(String),

    #[error("point {point:?} lies outside the parameter domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrector diverged near {at:?} (non-generic family or step too large)")]
    CorrectorDivergence { at: Vec<f64> },

    #[error("non-generic input: {0}")]
    NonGeneric(String),

    #[error("curve exceeded the vertex cap of {0}")]
    MaxVertices(usize),

    #[error("cell boundary too close to the coincidence locus (min gap {min_gap:e})")]
    BoundaryTooClose { min_gap: f64 },

    #[error("unresolved subcell near {center:?} (tangential crossing, perturb the family)")]
    UnresolvedCell { center: Vec<f64> },

    #[error("rank precondition violated: {0}")]
    RankPrecondition(String),

    #[error("curves too close for a linking number (separation {separation:e})")]
    CurvesTooClose { separation: f64 },

    #[error("no non-degenerate projection found after {tries} directions")]
    NoGenericProjection { tries: usize },

    #[error("curve endpoint not on the boundary sphere (distance {distance:e})")]
    EndpointNotOnBoundary { distance: f64 },

    #[error("page changed under grid refinement: {0}")]
    RefinementUnstable(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by non-generic input, as opposed to malformed input or
    /// violated preconditions. Callers usually resample or perturb on these.
    pub fn is_non_generic(&self) -> bool {
        matches!(
            self,
            Error::CorrectorDivergence { .. }
                | Error::NonGeneric(_)
                | Error::UnresolvedCell { .. }
                | Error::BoundaryTooClose { .. }
                | Error::CurvesTooClose { .. }
                | Error::NoGenericProjection { .. }
                | Error::MaxVertices(_)
        )
    }
}
