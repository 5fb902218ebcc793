use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qforms::lab::{
    run_hopf_pipeline, run_lemma4_disk, run_prop1_trials, HopfConfig, Prop1Config,
};
use qforms::linkage::{mod2_linking, mod2_linking_seeded, ArcChoice, PolyLink};
use qforms::specseq::{compute_e2, page_json};
use qforms::strata::{trace_all, DegeneracyCurve, TraceOptions};
use qforms::{Error, ParamDomain, QuadraticFamily, Result, ZeroTol};

#[derive(Parser)]
#[command(name = "qforms", version, about = "Spectral sequences of families of quadratic forms")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Cubical grid resolution per axis
    #[arg(long, global = true, default_value_t = 64)]
    grid: usize,
    /// Relative zero tolerance for eigenvalues
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Maximal tracing step (default: domain diameter / 200)
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    json_out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the curves where λ_j = λ_{j+1}
    Trace {
        family: PathBuf,
        #[arg(long)]
        j: usize,
        /// Seed lattice resolution
        #[arg(long, default_value_t = 48)]
        seed_grid: usize,
    },
    /// Compute the E² page of a family
    E2 { family: PathBuf },
    /// Mod-2 linking number of two curves
    Link {
        a: PathBuf,
        b: PathBuf,
        /// Radius of the origin-centered ball used to close relative curves
        #[arg(long)]
        radius: Option<f64>,
        /// Override the projection RNG seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Linking parities of the coincidence curves of random S0 + i·su(2)
    Prop1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed ball radius (default: 4·(1+‖S0‖))
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Page, curves, d₃ and collapse for the quaternionic family minus ς
    Hopf {
        #[arg(long, default_value_t = 0.05)]
        zeta_scale: f64,
    },
    /// The trace-free disk family: E², d₂ and E³
    Lemma4 {
        #[arg(long, default_value_t = 0.3)]
        s: f64,
    },
}

fn read_family(path: &Path) -> Result<QuadraticFamily> {
    QuadraticFamily::from_json_str(&std::fs::read_to_string(path)?)
}

fn read_curve(path: &Path) -> Result<DegeneracyCurve> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn trace_options(g: &Global) -> TraceOptions {
    TraceOptions {
        step: g.step,
        ..TraceOptions::default()
    }
}

struct Output {
    json: Value,
    text: Option<String>,
}

fn run(cli: &Cli) -> Result<Output> {
    let g = &cli.global;
    let tol = ZeroTol::Relative(g.tol);
    match &cli.command {
        Command::Trace { family, j, seed_grid } => {
            let f = read_family(family)?;
            let curves = trace_all(&f, *j, *seed_grid, &trace_options(g))?;
            Ok(Output {
                json: serde_json::to_value(curves)?,
                text: None,
            })
        }
        Command::E2 { family } => {
            let f = read_family(family)?;
            let page = compute_e2(&f, g.grid, tol)?;
            Ok(Output {
                json: page.to_json(),
                text: Some(page.text_table()),
            })
        }
        Command::Link { a, b, radius, seed } => {
            let (a, b) = (read_curve(a)?, read_curve(b)?);
            let link = match radius {
                Some(r) => {
                    let ball = ParamDomain::ball(vec![0.0; 3], *r)?;
                    PolyLink::from_curves(&a, &b, &ball, &ArcChoice::Shortest)?
                }
                None if a.closed && b.closed => PolyLink::new(&a.points, &b.points)?,
                None => {
                    return Err(Error::InvalidArgument(
                        "relative curves need --radius to be closed".into(),
                    ))
                }
            };
            let report = match seed {
                Some(s) => mod2_linking_seeded(&link, *s)?,
                None => mod2_linking(&link)?,
            };
            Ok(Output {
                json: serde_json::to_value(report)?,
                text: None,
            })
        }
        Command::Prop1 { seed, radius, trials } => {
            let cfg = Prop1Config {
                trace: trace_options(g),
                ..Prop1Config::default()
            };
            let fixed = radius.map(|r| move |_: &qforms::SymMatrix| r);
            let reports = match &fixed {
                Some(r) => run_prop1_trials(*trials, *seed, Some(r), &cfg)?,
                None => run_prop1_trials(*trials, *seed, None, &cfg)?,
            };
            Ok(Output {
                json: serde_json::to_value(reports)?,
                text: None,
            })
        }
        Command::Hopf { zeta_scale } => {
            let cfg = HopfConfig {
                zeta_scale: *zeta_scale,
                grid_res: g.grid,
                trace: trace_options(g),
                ..HopfConfig::default()
            };
            let r = run_hopf_pipeline(&cfg)?;
            let json = json!({
                "zeta": r.zeta.to_rows(),
                "page": page_json(&r.page, &r.d2, &r.d3),
                "curves": r.curves,
                "collapse": r.collapse.to_json(),
            });
            let text = format!(
                "E2:\n{}E_inf (total rank {}):\n{}",
                r.page.text_table(),
                r.collapse.total,
                r.collapse.text_table(r.page.n, r.page.d)
            );
            Ok(Output {
                json,
                text: Some(text),
            })
        }
        Command::Lemma4 { s } => {
            let r = run_lemma4_disk(*s, g.grid)?;
            let json = json!({
                "s": r.s,
                "grid_res": r.grid_res,
                "refined_grid": r.refined_grid,
                "page": page_json(&r.page, std::slice::from_ref(&r.d2), &[]),
                "collapse": r.collapse.to_json(),
                "exact": r.exact,
            });
            let text = format!(
                "E2:\n{}E3 is {}\n",
                r.page.text_table(),
                if r.exact { "zero" } else { "nonzero" }
            );
            Ok(Output {
                json,
                text: Some(text),
            })
        }
    }
}

fn emit(cli: &Cli, out: Output) -> Result<()> {
    let body = qforms::json::to_string(&out.json)? + "\n";
    match &cli.global.json_out {
        Some(path) => {
            std::fs::write(path, body)?;
            if let Some(t) = out.text {
                print!("{t}");
            }
        }
        None => {
            if let Some(t) = out.text {
                eprint!("{t}");
            }
            print!("{body}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli).and_then(|out| emit(&cli, out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_non_generic() { 3 } else { 2 })
        }
    }
}
