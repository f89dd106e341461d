//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verdict fails (for example a residual
//! above `--threshold`), 2 on unreadable or invalid input.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::compensation::{self, CompensationSeries};
use crate::curve::{self, CurveError};
use crate::gamma::{self, GammaSet};
use crate::io::{load_walk, LoadError, WalkFile};
use crate::oracle;
use crate::walk::{from_switch, SingularClass, SwitchParams, ValidatedWalk};

#[derive(Debug, Parser)]
#[command(name = "qpwalk", version, about = "Geometric-term invariant measures of quarter-plane random walks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drift, singular class, branch points, singularity and eligibility.
    Analyze { walk: PathBuf },
    /// Sample the positive component of the kernel curve.
    Trace {
        walk: PathBuf,
        #[arg(long, default_value_t = curve::DEFAULT_TRACE_POINTS)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Build compensation series and assemble them into one measure.
    Construct {
        walk: PathBuf,
        #[command(flatten)]
        series: SeriesArgs,
        /// Seed at every curve/boundary intersection, not only the V ones.
        #[arg(long)]
        seed_all: bool,
        #[arg(long, default_value_t = 12)]
        window: usize,
    },
    /// Balance residuals of a term set and its distance to the oracle.
    Verify {
        walk: PathBuf,
        gamma: PathBuf,
        #[arg(long, default_value_t = 12)]
        window: usize,
        #[arg(long, default_value_t = 80)]
        oracle_n: usize,
        /// Core box compared against the oracle.
        #[arg(long, default_value_t = 8)]
        core: usize,
        /// Largest accepted scaled balance residual.
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
        /// Also write the oracle grid as CSV (`i,j,pi`).
        #[arg(long)]
        dump_oracle: Option<PathBuf>,
    },
    /// Maximal uncoupled partitions and, with a walk, the necessary conditions.
    Partition {
        gamma: PathBuf,
        #[arg(long)]
        walk: Option<PathBuf>,
        /// Treat the set as a truncation of an infinite family.
        #[arg(long)]
        claims_infinite: bool,
    },
    /// Print the walk of a 2x2 switch (defaults: the bundled switch preset).
    Switch(SwitchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SeriesArgs {
    /// Tail bound at which a series stops.
    #[arg(long, default_value_t = compensation::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = compensation::DEFAULT_MAX_TERMS)]
    pub max_terms: usize,
    #[arg(long, default_value_t = curve::DEFAULT_TRACE_POINTS)]
    pub points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SwitchArgs {
    #[arg(long, default_value_t = SwitchParams::FIG7.r1)]
    pub r1: f64,
    #[arg(long, default_value_t = SwitchParams::FIG7.r2)]
    pub r2: f64,
    #[arg(long, default_value_t = SwitchParams::FIG7.t11)]
    pub t11: f64,
    #[arg(long, default_value_t = SwitchParams::FIG7.t12)]
    pub t12: f64,
    #[arg(long, default_value_t = SwitchParams::FIG7.t21)]
    pub t21: f64,
    #[arg(long, default_value_t = SwitchParams::FIG7.t22)]
    pub t22: f64,
}

/// A failed run: exit code plus a machine-readable diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub diagnostic: Value,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure {
            code: 2,
            diagnostic: json!({ "error": message.to_string() }),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        let diagnostic = match &e {
            LoadError::Invalid(list) => json!({ "error": e.to_string(), "violations": list }),
            _ => json!({ "error": e.to_string() }),
        };
        Failure { code: 2, diagnostic }
    }
}

/// Result of a successful run: the document to emit and the exit code
/// (1 when a verdict failed).
pub struct Outcome {
    pub body: String,
    pub code: i32,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn read_gamma(path: &Path) -> Result<GammaSet, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    GammaSet::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn curve_failure(e: CurveError) -> Failure {
    Failure {
        code: 1,
        diagnostic: json!({ "error": e.to_string() }),
    }
}

pub fn analyze(walk: &ValidatedWalk) -> Value {
    let drift = walk.drift();
    let class = walk.singular_class();
    let mut report = json!({
        "drift": drift,
        "ergodicity_warning": (!walk.drift_permits_ergodicity())
            .then_some("both drifts are non-negative; the walk cannot be ergodic"),
        "singular_class": class,
    });
    if class != SingularClass::NonSingular {
        report["eligible"] = json!(false);
        return report;
    }
    match curve::branch_points(walk) {
        Ok(bp) => {
            let mut violations = curve::branch_point_violations(&bp.roots_x, drift.my, drift.mx);
            violations.extend(
                curve::branch_point_violations(&bp.roots_y, drift.mx, drift.my)
                    .into_iter()
                    .map(|v| format!("y: {v}")),
            );
            report["branch_points"] = json!(bp);
            report["branch_point_checks"] = json!(violations);
        }
        Err(e) => report["branch_points"] = json!({ "error": e.to_string() }),
    }
    let singularity = match curve::detect_singularity(walk) {
        Ok(s) => json!(s),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let eligible = walk.lacks_northeast_steps();
    report["singularity"] = singularity;
    report["eligible"] = json!(eligible);
    report
}

#[derive(Serialize)]
struct ConstructReport<'a> {
    terms: &'a [gamma::WeightedTerm],
    origin_mass: f64,
    series: &'a [CompensationSeries],
    weights: &'a [f64],
    condition_number: f64,
    fit_residual: f64,
    residuals: &'a oracle::VerificationReport,
    weighting: &'a str,
}

pub fn run(cli: Cli) -> Result<Outcome, Failure> {
    let ok = |body: String| Ok(Outcome { body, code: 0 });
    match cli.command {
        Command::Analyze { walk } => {
            let w = load_walk(&walk)?;
            ok(to_json(&analyze(&w)))
        }
        Command::Trace {
            walk,
            points,
            format,
        } => {
            let w = load_walk(&walk)?;
            let t = curve::trace_qplus(&w, points).map_err(curve_failure)?;
            ok(match format {
                Format::Csv => t.to_csv(),
                Format::Json => to_json(&t),
            })
        }
        Command::Construct {
            walk,
            series,
            seed_all,
            window,
        } => {
            let w = load_walk(&walk)?;
            let seeds = compensation::find_seeds(&w, series.points, seed_all).map_err(|e| Failure {
                code: 1,
                diagnostic: json!({ "error": e.to_string() }),
            })?;
            if seeds.is_empty() {
                return Err(Failure {
                    code: 1,
                    diagnostic: json!({ "error": "no seed on the kernel curve inside the unit square" }),
                });
            }
            let built: Vec<CompensationSeries> = seeds
                .into_iter()
                .map(|s| compensation::build_series(&w, s, series.tol, series.max_terms))
                .collect::<Result<_, _>>()
                .map_err(|e| Failure {
                    code: 1,
                    diagnostic: json!({ "error": e.to_string() }),
                })?;
            let a = compensation::assemble_measure(&w, &built, window).map_err(|e| Failure {
                code: 1,
                diagnostic: json!({ "error": e.to_string() }),
            })?;
            ok(to_json(&ConstructReport {
                terms: &a.gamma.terms,
                origin_mass: a.origin_mass,
                series: &built,
                weights: &a.weights,
                condition_number: a.condition_number,
                fit_residual: a.fit_residual,
                residuals: &a.report,
                weighting: a.weighting,
            }))
        }
        Command::Verify {
            walk,
            gamma,
            window,
            oracle_n,
            core,
            threshold,
            dump_oracle,
        } => {
            let w = load_walk(&walk)?;
            let g = read_gamma(&gamma)?;
            let mut report = oracle::balance_residuals(w.spec(), &g, window);
            let pi = oracle::truncated_stationary(w.spec(), oracle_n).map_err(Failure::input)?;
            report.sup_rel_error = Some(oracle::compare(&g, &pi, core).map_err(Failure::input)?);
            if let Some(path) = dump_oracle {
                std::fs::write(&path, pi.to_csv())
                    .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
            }
            let pass = report.max_scaled() <= threshold;
            let body = to_json(&json!({
                "report": report,
                "threshold": threshold,
                "oracle_n": oracle_n,
                "core": core,
                "pass": pass,
            }));
            Ok(Outcome {
                body,
                code: if pass { 0 } else { 1 },
            })
        }
        Command::Partition {
            gamma,
            walk,
            claims_infinite,
        } => {
            let g = read_gamma(&gamma)?;
            let parts = gamma::maximal_partitions(&g);
            let (h, v, c) = parts.counts();
            let mut body = json!({
                "partitions": parts,
                "counts": { "horizontal": h, "vertical": v, "uncoupled": c },
                "norm": g.norm(),
            });
            let mut code = 0;
            if let Some(path) = walk {
                let w = load_walk(&path)?;
                let report = gamma::necessary_conditions(&w, &g, claims_infinite);
                if !report.all_pass() {
                    code = 1;
                }
                body["conditions"] = json!(report);
            }
            Ok(Outcome {
                body: to_json(&body),
                code,
            })
        }
        Command::Switch(a) => {
            let params = SwitchParams {
                r1: a.r1,
                r2: a.r2,
                t11: a.t11,
                t12: a.t12,
                t21: a.t21,
                t22: a.t22,
            };
            let w = from_switch(params).map_err(Failure::input)?;
            let spec = w.spec();
            ok(to_json(&WalkFile {
                interior: Some(spec.interior),
                horizontal: Some(spec.horizontal),
                vertical: Some(spec.vertical),
                switch: None,
            }))
        }
    }
}

/// Parses arguments, runs, writes output and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let out = cli.out.clone();
    match run(cli) {
        Ok(outcome) => {
            let written = match &out {
                Some(path) => std::fs::write(path, &outcome.body),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(outcome.body.as_bytes())
                }
            };
            if let Err(e) = written {
                eprintln!("{}", json!({ "error": format!("cannot write output: {e}") }));
                return 2;
            }
            outcome.code
        }
        Err(f) => {
            eprintln!("{}", serde_json::to_string_pretty(&f.diagnostic).unwrap_or_default());
            f.code
        }
    }
}
