//! Command-line front end. Every command reads JSON (or DIMACS) files and
//! writes JSON, either to stdout or to the `-o` path.
//!
//! Exit codes: 0 on success, 1 when a check fails or nothing was found, 2 on
//! usage and I/O errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::check::{verify_equilibrium, FloatTolerances};
use crate::enumerate::{enumerate_equilibria, EnumerationLimits, DEFAULT_PATTERN_CAP};
use crate::fixedpoint::{solve, write_trace_csv, Selection, SolveOutcome, SolverConfig};
use crate::graph::check_conditions;
use crate::model::{parse_rational, AnyCandidate, Instance, Rational};
use crate::polymatrix::{
    build_polymatrix_instance, recover_strategy, verify_gadget_properties, verify_polymatrix_equilibrium,
    PolymatrixError, PolymatrixGame,
};
use crate::sat::{
    assignment_to_equilibrium, build_sat_instance, earning_scale, equilibrium_to_assignment,
    expand_to_equal_earnings, CnfFormula, SatError, SatGadgetParams,
};

#[derive(Debug, Parser)]
#[command(name = "chorediv", version, about = "Competitive equilibria for chore division")]
struct Cli {
    /// Seed for randomized fallbacks. Every current algorithm is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectionArg {
    MaxFlow,
    Proportional,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the component and exchange-graph conditions.
    CheckConditions {
        #[arg(long)]
        instance: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a candidate equilibrium.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        equilibrium: PathBuf,
        #[arg(long, default_value = "0")]
        epsilon: String,
        #[arg(long, default_value_t = 1e-9)]
        mpb_tol: f64,
        #[arg(long, default_value_t = 1e-7)]
        clearing_tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List every equilibrium price ray exactly.
    Enumerate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "0")]
        epsilon: String,
        #[arg(long, default_value_t = DEFAULT_PATTERN_CAP)]
        cap: u128,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the damped fixed-point price iteration.
    SolveFixedpoint {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 0.5)]
        damping: f64,
        #[arg(long, value_enum, default_value_t = SelectionArg::MaxFlow)]
        selection: SelectionArg,
        /// CSV file receiving one row per iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to write the candidate equilibrium.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the fixed-earnings market of a CNF formula.
    GenSat {
        #[arg(long)]
        cnf: PathBuf,
        #[arg(long, default_value = "1/10")]
        eps: String,
        #[arg(long, default_value = "1/30")]
        eps_prime: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Turn a satisfying assignment such as `101` into an equilibrium.
    SatEquilibrium {
        #[arg(long)]
        cnf: PathBuf,
        #[arg(long)]
        assignment: String,
        #[arg(long, default_value = "1/10")]
        eps: String,
        #[arg(long, default_value = "1/30")]
        eps_prime: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Read the assignment encoded by an equilibrium of a formula market.
    SatReadback {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        equilibrium: PathBuf,
    },
    /// Split fixed-earnings agents into unit-earning copies.
    ExpandEqualEarnings {
        #[arg(long)]
        instance: PathBuf,
        /// Defaults to the smallest scale that makes all earnings integral.
        #[arg(long)]
        scale: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the layered exchange market of a polymatrix game.
    GenPolymatrix {
        #[arg(long)]
        game: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the layer schedule here.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Check the structural and price properties of a polymatrix market.
    CheckGadget {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        equilibrium: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// Read a strategy vector off equilibrium prices of a polymatrix market.
    RecoverStrategy {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        equilibrium: PathBuf,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a strategy vector against a polymatrix game.
    VerifyPolymatrix {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        slack: f64,
    },
}

/// Strategy vector file: `{"x": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct StrategyFile {
    pub x: Vec<f64>,
}

enum Failure {
    /// A check ran and failed.
    Checked(String),
    /// Bad arguments, unreadable files or malformed input.
    Usage(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome = Result<bool, Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    2
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Checked(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn deliver(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => writeln!(out, "{text}").map_err(usage),
    }
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file", path.display())))
    }
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_candidate(path: &Path) -> Result<AnyCandidate, Failure> {
    AnyCandidate::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn rational_arg(name: &str, text: &str) -> Result<Rational, Failure> {
    parse_rational(text).map_err(|e| usage(format!("--{name}: {e}")))
}

fn load_cnf(path: &Path) -> Result<CnfFormula, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    CnfFormula::parse_dimacs(&text).map_err(usage)
}

fn sat_params(eps: &str, eps_prime: &str) -> Result<SatGadgetParams, Failure> {
    let params = SatGadgetParams {
        eps: rational_arg("eps", eps)?,
        eps_prime: rational_arg("eps-prime", eps_prime)?,
        ..SatGadgetParams::default()
    };
    params.validate().map_err(usage)?;
    Ok(params)
}

fn parse_assignment(text: &str) -> Result<Vec<bool>, Failure> {
    text.chars()
        .map(|c| match c {
            '1' | 'T' | 't' => Ok(true),
            '0' | 'F' | 'f' => Ok(false),
            _ => Err(usage(format!("assignment character {c:?} is not 0/1"))),
        })
        .collect()
}

fn assignment_string(values: &[bool]) -> String {
    values.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn to_value(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("generated JSON parses")
}

fn dispatch(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::CheckConditions { instance, output } => {
            let inst = load_instance(&instance)?;
            let report = check_conditions(&inst);
            let mut value = serde_json::to_value(&report).expect("report serializes");
            value["passed"] = json!(report.passed());
            deliver(out, output.as_deref(), &pretty(&value))?;
            Ok(report.passed())
        }
        Command::Verify {
            instance,
            equilibrium,
            epsilon,
            mpb_tol,
            clearing_tol,
            output,
        } => {
            require(&instance)?;
            require(&equilibrium)?;
            let eps = rational_arg("epsilon", &epsilon)?;
            let inst = load_instance(&instance)?;
            let cand = load_candidate(&equilibrium)?;
            let tol = FloatTolerances {
                mpb: mpb_tol,
                clearing: clearing_tol,
            };
            let report = verify_equilibrium(&inst, &cand, &eps, tol).map_err(usage)?;
            let mut value = serde_json::to_value(&report).expect("report serializes");
            value["passed"] = json!(report.passed());
            deliver(out, output.as_deref(), &pretty(&value))?;
            Ok(report.passed())
        }
        Command::Enumerate {
            instance,
            epsilon,
            cap,
            output,
        } => {
            let eps = rational_arg("epsilon", &epsilon)?;
            let inst = load_instance(&instance)?;
            let set = enumerate_equilibria(&inst, &eps, EnumerationLimits { pattern_cap: cap }).map_err(usage)?;
            deliver(out, output.as_deref(), &pretty(&set.to_json()))?;
            Ok(!set.is_empty())
        }
        Command::SolveFixedpoint {
            instance,
            max_iters,
            tol,
            damping,
            selection,
            trace,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let cfg = SolverConfig {
                max_iters,
                residual_tol: tol,
                damping,
                selection: match selection {
                    SelectionArg::MaxFlow => Selection::MaxFlow,
                    SelectionArg::Proportional => Selection::Proportional,
                },
                ..SolverConfig::default()
            };
            let outcome = solve(&inst, &cfg).map_err(usage)?;
            if let Some(path) = &trace {
                let file = std::fs::File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                write_trace_csv(outcome.trace(), file).map_err(usage)?;
            }
            match outcome {
                SolveOutcome::Converged {
                    candidate,
                    residual,
                    iterations,
                    polished,
                    report,
                    ..
                } => {
                    let cand_json = AnyCandidate::Float(candidate).to_json().map_err(usage)?;
                    let mut summary = json!({
                        "status": "converged",
                        "residual": residual,
                        "iterations": iterations,
                        "polished": polished,
                        "verification": report,
                    });
                    match &output {
                        Some(p) => deliver(out, Some(p), &cand_json)?,
                        None => summary["equilibrium"] = to_value(&cand_json),
                    }
                    writeln!(out, "{}", pretty(&summary)).map_err(usage)?;
                    Ok(report.passed())
                }
                SolveOutcome::Stalled { trace } => {
                    let summary = json!({
                        "status": "stalled",
                        "iterations": trace.len(),
                        "residual": trace.last().map(|r| r.residual),
                    });
                    writeln!(out, "{}", pretty(&summary)).map_err(usage)?;
                    Ok(false)
                }
            }
        }
        Command::GenSat {
            cnf,
            eps,
            eps_prime,
            output,
        } => {
            let phi = load_cnf(&cnf)?;
            let params = sat_params(&eps, &eps_prime)?;
            let inst = build_sat_instance(&phi, &params).map_err(usage)?;
            let text = inst.to_json().map_err(usage)?;
            deliver(out, output.as_deref(), &text)?;
            if output.is_some() {
                let summary = json!({"agents": inst.agents(), "chores": inst.chores()});
                writeln!(out, "{}", pretty(&summary)).map_err(usage)?;
            }
            Ok(true)
        }
        Command::SatEquilibrium {
            cnf,
            assignment,
            eps,
            eps_prime,
            output,
        } => {
            let phi = load_cnf(&cnf)?;
            let params = sat_params(&eps, &eps_prime)?;
            let values = parse_assignment(&assignment)?;
            let cand = match assignment_to_equilibrium(&phi, &params, &values) {
                Ok(c) => c,
                Err(SatError::NotSatisfying) => return Err(Failure::Checked(SatError::NotSatisfying.to_string())),
                Err(e) => return Err(usage(e)),
            };
            let text = AnyCandidate::Exact(cand).to_json().map_err(usage)?;
            deliver(out, output.as_deref(), &text)?;
            Ok(true)
        }
        Command::SatReadback { instance, equilibrium } => {
            require(&instance)?;
            require(&equilibrium)?;
            let inst = load_instance(&instance)?;
            let cand = load_candidate(&equilibrium)?;
            let values = equilibrium_to_assignment(&inst, &cand).map_err(usage)?;
            let satisfies = match &inst.metadata {
                Some(crate::model::GadgetMetadata::Sat(layout)) => layout.formula().map_err(usage)?.evaluate(&values),
                _ => false,
            };
            let report = json!({"assignment": assignment_string(&values), "satisfies": satisfies});
            writeln!(out, "{}", pretty(&report)).map_err(usage)?;
            Ok(true)
        }
        Command::ExpandEqualEarnings {
            instance,
            scale,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let scale = match scale {
                Some(s) => rational_arg("scale", &s)?,
                None => earning_scale(&inst).map_err(usage)?,
            };
            let expanded = expand_to_equal_earnings(&inst, &scale).map_err(usage)?;
            let text = expanded.instance.to_json().map_err(usage)?;
            deliver(out, output.as_deref(), &text)?;
            if output.is_some() {
                let summary = json!({"agents": expanded.instance.agents(), "origin": expanded.origin});
                writeln!(out, "{}", pretty(&summary)).map_err(usage)?;
            }
            Ok(true)
        }
        Command::GenPolymatrix { game, output, params } => {
            let game = PolymatrixGame::load(&game).map_err(usage)?;
            let (inst, schedule) = build_polymatrix_instance(&game).map_err(usage)?;
            if let Some(p) = &params {
                deliver(out, Some(p), &schedule.to_json())?;
            }
            let text = inst.to_json().map_err(usage)?;
            deliver(out, output.as_deref(), &text)?;
            if output.is_some() {
                let summary = json!({
                    "agents": inst.agents(),
                    "chores": inst.chores(),
                    "levels": schedule.levels,
                });
                writeln!(out, "{}", pretty(&summary)).map_err(usage)?;
            }
            Ok(true)
        }
        Command::CheckGadget {
            instance,
            equilibrium,
            tol,
        } => {
            let inst = load_instance(&instance)?;
            let prices = match &equilibrium {
                Some(p) => Some(load_candidate(p)?.prices_f64()),
                None => None,
            };
            let report = verify_gadget_properties(&inst, prices.as_deref(), tol).map_err(usage)?;
            let mut value = serde_json::to_value(&report).expect("report serializes");
            value["passed"] = json!(report.passed());
            writeln!(out, "{}", pretty(&value)).map_err(usage)?;
            Ok(report.passed())
        }
        Command::RecoverStrategy {
            instance,
            equilibrium,
            tol,
            output,
        } => {
            require(&instance)?;
            require(&equilibrium)?;
            let inst = load_instance(&instance)?;
            let prices = load_candidate(&equilibrium)?.prices_f64();
            let x = match recover_strategy(&inst, &prices, tol) {
                Ok(x) => x,
                Err(e @ PolymatrixError::OutOfBand { .. }) => return Err(Failure::Checked(e.to_string())),
                Err(e) => return Err(usage(e)),
            };
            deliver(out, output.as_deref(), &pretty(&StrategyFile { x }))?;
            Ok(true)
        }
        Command::VerifyPolymatrix { game, strategy, slack } => {
            require(&game)?;
            require(&strategy)?;
            let game = PolymatrixGame::load(&game).map_err(usage)?;
            let text = std::fs::read_to_string(&strategy).map_err(|e| usage(format!("{}: {e}", strategy.display())))?;
            let file: StrategyFile =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", strategy.display())))?;
            let verdict = verify_polymatrix_equilibrium(&game, &file.x, slack).map_err(usage)?;
            writeln!(out, "{}", pretty(&verdict)).map_err(usage)?;
            Ok(verdict.passed)
        }
    }
}
