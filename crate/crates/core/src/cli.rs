//! Command-line front end.
//!
//! Model parameters come from `--preset`, an inline `params` object in a
//! `--config` manifest, or both (flags win). Every emitted file carries the
//! resolved manifest: as a `manifest` field in JSON, or as a leading `#` line
//! in CSV.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::curve::{build_curve, min_delay};
use crate::error::Error;
use crate::lp::{build_lp, recover_policy, solve_simplex, text::export_lp_text, LpStatus};
use crate::model::{preset, ModelParams, Policy, RawParams, ThresholdPolicy};
use crate::oracle::{policy_cloud, reference_from_cloud};
use crate::relax::{policy_iteration, EvalMode};
use crate::sim::{simulate, trajectory_csv, SimConfig, DEFAULT_WARMUP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Caps the worker threads used by parallel library routines.
pub const THREADS_ENV: &str = "TRADEOFF_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tradeoff-forge", version, about = "Optimal delay-power tradeoff for batched-arrival transmission scheduling")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON manifest with model parameters and subcommand inputs.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: fig4 or fig5.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Overrides the arrival probability.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    SingleBackup,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the optimal tradeoff curve.
    Curve,
    /// Minimum delay under a power budget.
    Query {
        #[arg(long)]
        pth: Option<f64>,
    },
    /// Solve the Lagrangian relaxation for one multiplier.
    Relax {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Solve the occupation-measure LP for a power budget.
    Lp {
        #[arg(long)]
        pth: Option<f64>,
        /// Also write the program in CPLEX-LP format.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Enumerate all deterministic policies and build the reference curve.
    Enumerate {
        /// Write the policy cloud as CSV.
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Simulate a policy read from a JSON file.
    Simulate {
        /// A policy matrix (nested arrays) or a threshold object.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        warmup: Option<u64>,
        #[arg(long)]
        q0: Option<usize>,
        /// Write the per-slot trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<RawParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<EvalMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<usize>,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleBudget { .. } => EXIT_INFEASIBLE,
        Error::NumericalFailure(_)
        | Error::NoConvergence(_)
        | Error::MultiChain { .. }
        | Error::OverflowViolated { .. }
        | Error::UnderflowViolated { .. } => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args` (program name first) and runs, writing to the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let mut buf = Vec::new();
    let result = match thread_pool() {
        Ok(Some(pool)) => pool.install(|| execute(&cli, &mut buf)),
        Ok(None) => execute(&cli, &mut buf),
        Err(f) => Err(f),
    };
    if let Err(e) = out.write_all(&buf) {
        let _ = writeln!(err, "error: cannot write output: {e}");
        return EXIT_VALIDATION;
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>, Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| invalid(format!("cannot build thread pool: {e}")))
}

fn read_manifest(path: &Path) -> Result<RunManifest, Failure> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("bad manifest {}: {e}", path.display())))
}

/// Merges flags over the config file and resolves the model.
fn resolve(cli: &Cli) -> Result<(RunManifest, ModelParams), Failure> {
    let mut m = match &cli.common.config {
        Some(p) => read_manifest(p)?,
        None => RunManifest::default(),
    };
    let c = &cli.common;
    if c.preset.is_some() {
        // a preset on the command line replaces inline params from the file
        m.preset = c.preset.clone();
        m.params = None;
    }
    m.alpha = c.alpha.or(m.alpha);
    m.format = c.format.or(m.format);
    m.out = c.out.clone().or(m.out);
    match &cli.command {
        Command::Curve | Command::Enumerate { .. } => {}
        Command::Query { pth } | Command::Lp { pth, .. } => m.pth = pth.or(m.pth),
        Command::Relax { eta, mode } => {
            m.eta = eta.or(m.eta);
            if let Some(mode) = mode {
                m.mode = Some(match mode {
                    ModeArg::Exact => EvalMode::ExactEval,
                    ModeArg::SingleBackup => EvalMode::SingleBackup,
                });
            }
        }
        Command::Simulate {
            policy,
            seed,
            slots,
            warmup,
            q0,
            ..
        } => {
            m.policy = policy.clone().or(m.policy);
            m.seed = seed.or(m.seed);
            m.slots = slots.or(m.slots);
            m.warmup = warmup.or(m.warmup);
            m.q0 = q0.or(m.q0);
        }
    }
    let params = match (&m.preset, &m.params) {
        (Some(name), _) => preset(name, m.alpha)?,
        (None, Some(raw)) => {
            let mut raw = raw.clone();
            if let Some(a) = m.alpha {
                raw.alpha = a;
            }
            ModelParams::try_from(raw)?
        }
        (None, None) => return Err(invalid("no model given: use --preset or a --config with params")),
    };
    // record the fully resolved parameters
    m.params = Some(params.clone().into());
    m.alpha = Some(params.alpha());
    m.format = Some(m.format.unwrap_or(Format::Json));
    Ok((m, params))
}

fn require<T: Copy>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| invalid(format!("missing required input --{flag}")))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Curve => "curve",
        Command::Query { .. } => "query",
        Command::Relax { .. } => "relax",
        Command::Lp { .. } => "lp",
        Command::Enumerate { .. } => "enumerate",
        Command::Simulate { .. } => "simulate",
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

struct Emitter<'a> {
    manifest: Value,
    format: Format,
    out_path: Option<PathBuf>,
    out: &'a mut Vec<u8>,
}

impl Emitter<'_> {
    fn csv_header(&self) -> String {
        format!("# manifest: {}\n", self.manifest)
    }

    fn emit(&mut self, result: Value, csv: impl FnOnce() -> String) -> Result<(), Failure> {
        let text = match self.format {
            Format::Json => {
                let doc = json!({ "manifest": self.manifest, "result": result });
                let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
                s.push('\n');
                s
            }
            Format::Csv => self.csv_header() + &csv(),
        };
        match &self.out_path {
            Some(p) => write_file(p, &text),
            None => {
                self.out.extend_from_slice(text.as_bytes());
                Ok(())
            }
        }
    }
}

fn execute(cli: &Cli, out: &mut Vec<u8>) -> Result<(), Failure> {
    let (manifest, params) = resolve(cli)?;
    let mut doc = serde_json::to_value(&manifest).expect("serializable");
    doc["command"] = json!(command_name(&cli.command));
    let mut em = Emitter {
        manifest: doc,
        format: manifest.format.expect("resolved"),
        out_path: manifest.out.clone(),
        out,
    };
    match &cli.command {
        Command::Curve => {
            let curve = build_curve(&params)?;
            em.emit(serde_json::to_value(&curve).expect("serializable"), || curve.to_csv())
        }
        Command::Query { .. } => {
            let budget = require(manifest.pth, "pth")?;
            let curve = build_curve(&params)?;
            let ans = min_delay(&curve, &params, budget)?;
            em.emit(serde_json::to_value(&ans).expect("serializable"), || {
                format!("budget,delay,power\n{},{},{}\n", ans.budget, ans.delay, ans.power)
            })
        }
        Command::Relax { .. } => {
            let eta = require(manifest.eta, "eta")?;
            let sol = policy_iteration(&params, eta, manifest.mode.unwrap_or_default())?;
            em.emit(serde_json::to_value(&sol).expect("serializable"), || {
                let mut s = String::from("q,s,bias\n");
                for (q, (a, h)) in sol.s_of_q.iter().zip(&sol.bias).enumerate() {
                    s.push_str(&format!("{q},{a},{h}\n"));
                }
                s
            })
        }
        Command::Lp { export, .. } => {
            let budget = require(manifest.pth, "pth")?;
            let prog = build_lp(&params, budget)?;
            if let Some(path) = export {
                write_file(path, &export_lp_text(&prog))?;
            }
            let sol = solve_simplex(&prog)?;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => {
                    return Err(Failure {
                        code: EXIT_INFEASIBLE,
                        message: format!("no policy meets power budget {budget}"),
                    })
                }
                LpStatus::Unbounded => {
                    return Err(Failure {
                        code: EXIT_NUMERICAL,
                        message: "LP reported unbounded".into(),
                    })
                }
            }
            let (policy, steady) = recover_policy(&params, &sol)?;
            let delay = sol.objective.expect("optimal solution has an objective");
            let result = json!({ "solution": sol, "policy": policy, "pi": steady.pi });
            em.emit(result, || format!("budget,delay\n{budget},{delay}\n"))
        }
        Command::Enumerate { cloud } => {
            let points = policy_cloud(&params)?;
            if let Some(path) = cloud {
                write_file(path, &(em.csv_header() + &points.to_csv()))?;
            }
            let reference = reference_from_cloud(&params, &points)?;
            let result = json!({
                "curve": reference,
                "unichain": points.unichain,
                "multichain": points.multichain,
            });
            em.emit(result, || reference.to_csv())
        }
        Command::Simulate { trajectory, .. } => {
            let path = manifest.policy.clone().ok_or_else(|| invalid("missing required input --policy"))?;
            let policy = read_policy(&params, &path)?;
            let cfg = SimConfig {
                seed: require(manifest.seed, "seed")?,
                slots: require(manifest.slots, "slots")?,
                warmup: manifest.warmup.unwrap_or(DEFAULT_WARMUP),
                q0: manifest.q0.unwrap_or(0),
            };
            let res = match trajectory {
                Some(t) => {
                    let (res, csv) = trajectory_csv(&params, &policy, &cfg)?;
                    write_file(t, &(em.csv_header() + &csv))?;
                    res
                }
                None => simulate(&params, &policy, &cfg)?,
            };
            em.emit(serde_json::to_value(res).expect("serializable"), || {
                format!(
                    "power_mean,delay_mean,power_se,delay_se,slots_used\n{},{},{},{},{}\n",
                    res.power_mean, res.delay_mean, res.power_se, res.delay_se, res.slots_used
                )
            })
        }
    }
}

/// Accepts a policy matrix or a threshold object.
pub fn read_policy(params: &ModelParams, path: &Path) -> Result<Policy, Failure> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("bad policy file: {e}")))?;
    if value.is_array() {
        let rows: Vec<Vec<f64>> = serde_json::from_value(value).map_err(|e| invalid(format!("bad policy matrix: {e}")))?;
        return Ok(Policy::new(params, rows)?);
    }
    let t: ThresholdPolicy = serde_json::from_value(value).map_err(|e| invalid(format!("bad threshold policy: {e}")))?;
    Ok(t.to_policy(params)?)
}
