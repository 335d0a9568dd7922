//! Command-line front end: `analyze`, `validate`, `simulate` and `estimate`.
//!
//! Exit codes: 0 success, 1 input/output or parse error, 2 numerical failure,
//! 3 model rejected.

pub mod files;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use crate::error::Error;
use crate::estimator::{self, Method, DEFAULT_Q};
use crate::kcf::{compute_kcf, KcfDecomposition};
use crate::linalg::DEFAULT_TOL;
use crate::model::{validate_with, StochasticDescriptorModel};
use crate::sim::{simulate, FreeStateSpec};
use files::{read_input, read_sequence, write_atomic, Input, ModelFile, Table};
use report::*;

/// Environment variable overriding the default rank tolerance.
pub const TOL_ENV: &str = "ESTIMATOR_TOL";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, kind: "input".into(), message: message.into() }
    }

    fn rejected(message: impl Into<String>) -> Self {
        Self { code: EXIT_REJECTED, kind: "model_rejected".into(), message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ModelRejected(_) => EXIT_REJECTED,
            Error::Dimension(_) | Error::InvalidArgument(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        Self { code, kind: e.kind().into(), message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "descmap", version, about = "MAP state estimation for linear stochastic descriptor systems")]
pub struct Cli {
    /// Relative rank tolerance (default: $ESTIMATOR_TOL, else 1e-10).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kronecker structure, index and finite eigenvalues of the pencil (E, A).
    Analyze {
        /// Model JSON file.
        model: PathBuf,
        /// Report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Well-posedness, estimableness and causality findings.
    Validate {
        /// Model JSON file.
        model: PathBuf,
        /// Report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a trajectory with noisy measurements.
    Simulate {
        /// Model JSON file.
        model: PathBuf,
        /// Last time index T; required with `--input zero`, checked against the input rows otherwise.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV with columns k, u0, u1, ..., or `zero`.
        #[arg(long, default_value = "zero")]
        input: String,
        /// Spread of the sampled under-determined states.
        #[arg(long, default_value_t = 1.0)]
        free_q: f64,
        /// Writes `<prefix>.csv` and `<prefix>.json` (default: report on stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MAP estimate of the state sequence from measurements.
    Estimate {
        /// Model JSON file.
        model: PathBuf,
        /// CSV with columns k, y0, y1, ...
        #[arg(long)]
        y: PathBuf,
        /// CSV with columns k, u0, u1, ... (required when the model has inputs).
        #[arg(long)]
        u: Option<PathBuf>,
        /// batch, recursive, ml, constrained, transformed or dense.
        #[arg(long, default_value = "batch")]
        method: Method,
        /// Prior spread of the free states for the transformed method.
        #[arg(long, default_value_t = DEFAULT_Q)]
        q: f64,
        /// Writes `<prefix>.csv` and `<prefix>.json` (default: report on stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Validate { .. } => "validate",
            Command::Simulate { .. } => "simulate",
            Command::Estimate { .. } => "estimate",
        }
    }
}

fn tolerance(flag: Option<f64>) -> Result<f64, CliError> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(s) => s.trim().parse().map_err(|_| CliError::input(format!("{TOL_ENV}={s:?} is not a number")))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::input(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    Ok(tol)
}

struct Run {
    command: &'static str,
    tol: f64,
    started: Instant,
    inputs: Vec<InputDigest>,
}

impl Run {
    fn read(&mut self, role: &str, path: &Path) -> Result<Input, CliError> {
        let input = read_input(path)?;
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: input.sha256.clone(),
        });
        Ok(input)
    }

    fn model_file(&mut self, path: &Path) -> Result<ModelFile, CliError> {
        let input = self.read("model", path)?;
        ModelFile::parse(&input.text, &path.display().to_string())
    }

    fn report(self) -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: self.command.into(),
            tool_version: env!("CARGO_PKG_VERSION"),
            tolerance: self.tol,
            inputs: self.inputs,
            structure: None,
            validation: None,
            simulation: None,
            estimate: None,
            outputs: Vec::new(),
            timing: Timing { elapsed_seconds: self.started.elapsed().as_secs_f64() },
        }
    }
}

/// JSON text of a report; a non-finite number would serialize as `null`.
fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::input(format!("serialization: {e}")))?;
    fn has_null(v: &serde_json::Value) -> bool {
        match v {
            serde_json::Value::Null => true,
            serde_json::Value::Array(a) => a.iter().any(has_null),
            serde_json::Value::Object(o) => o.values().any(has_null),
            _ => false,
        }
    }
    if has_null(&v) {
        return Err(CliError {
            code: EXIT_NUMERICAL,
            kind: "non_finite".into(),
            message: "the report contains a non-finite number".into(),
        });
    }
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::input(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::input(format!("stdout: {e}"))),
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn decompose(model: &StochasticDescriptorModel, tol: f64) -> Result<KcfDecomposition, CliError> {
    Ok(compute_kcf(&model.pencil(), tol)?)
}

/// Parse `args`, run the command and return the exit code. Reports go to
/// `stdout` (or `--out`); error objects go to `stderr` as one JSON line.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let command = cli.command.name();
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let body = ErrorReport {
                schema_version: SCHEMA_VERSION,
                command: command.into(),
                error: ErrorBody { kind: e.kind, message: e.message, exit_code: e.code },
            };
            let _ = writeln!(stderr, "{}", serde_json::to_string(&body).unwrap_or_default());
            e.code
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let mut run = Run { command: cli.command.name(), tol: tolerance(cli.tol)?, started: Instant::now(), inputs: Vec::new() };
    let tol = run.tol;
    match cli.command {
        Command::Analyze { model, out } => {
            let pencil = run.model_file(&model)?.pencil()?;
            let d = compute_kcf(&pencil, tol)?;
            let mut report = run.report();
            report.structure = Some(StructureSummary::new(&pencil, &d, tol));
            emit(&to_json(&report)?, out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Validate { model, out } => {
            let model = run.model_file(&model)?.model()?;
            let d = decompose(&model, tol)?;
            let v = validate_with(&model, &d, tol)?;
            let well_posed = v.well_posed();
            let diagnostics = v.diagnostics.join("; ");
            let mut report = run.report();
            report.structure = Some(StructureSummary::new(&model.pencil(), &d, tol));
            report.validation = Some(v);
            emit(&to_json(&report)?, out.as_deref(), stdout)?;
            if well_posed {
                Ok(EXIT_OK)
            } else {
                Err(CliError::rejected(format!("model is not well posed: {diagnostics}")))
            }
        }
        Command::Simulate { model, horizon, seed, input, free_q, out } => {
            let model = run.model_file(&model)?.model()?;
            let u = if input == "zero" {
                let t = horizon.ok_or_else(|| CliError::input("--horizon is required with --input zero"))?;
                vec![DVector::zeros(model.n_inputs()); t + 1]
            } else {
                let data = run.read("input", Path::new(&input))?;
                let u = read_sequence(&data, "u")?;
                if let Some(t) = horizon {
                    if u.len() != t + 1 {
                        return Err(CliError::input(format!("{input}: {} rows, expected {} for horizon {t}", u.len(), t + 1)));
                    }
                }
                u
            };
            let d = decompose(&model, tol)?;
            let v = validate_with(&model, &d, tol)?;
            let free = FreeStateSpec::Sampled { mean: None, q: free_q };
            let traj = simulate(&model, &d, &u, seed, &free)?;
            let sim = SimulationSummary::new(&traj, &model, seed);
            let mut report = run.report();
            report.validation = Some(v);
            if let Some(prefix) = &out {
                let len = traj.states.len();
                let mut table = Table::new();
                table.push("x", model.n(), &traj.states, len);
                table.push("y", model.n_outputs(), &traj.measurements, len);
                table.push("u", model.n_inputs(), &traj.inputs, len);
                let mut w = traj.disturbances.clone();
                w.push(traj.terminal_disturbance.clone());
                table.push("w", model.n_disturbances(), &w, len);
                table.push("v", model.n_outputs(), &traj.measurement_noise, len);
                table.push_scalar("dynamics_residual", &traj.dynamics_residuals(&model));
                let csv_path = with_ext(prefix, "csv");
                let json_path = with_ext(prefix, "json");
                write_atomic(&csv_path, &table.to_csv()?)?;
                report.outputs = vec![csv_path.display().to_string(), json_path.display().to_string()];
                report.simulation = Some(sim);
                write_atomic(&json_path, to_json(&report)?.as_bytes())?;
            } else {
                report.simulation = Some(sim);
                emit(&to_json(&report)?, None, stdout)?;
            }
            Ok(EXIT_OK)
        }
        Command::Estimate { model, y, u, method, q, out } => {
            let model = run.model_file(&model)?.model()?;
            let y_data = run.read("y", &y)?;
            let ys = read_sequence(&y_data, "y")?;
            let us = match &u {
                Some(path) => {
                    let data = run.read("u", path)?;
                    read_sequence(&data, "u")?
                }
                None if model.n_inputs() == 0 => Vec::new(),
                None => return Err(CliError::input("--u is required: the model has inputs")),
            };
            let d = decompose(&model, tol)?;
            let v = validate_with(&model, &d, tol)?;
            if !v.well_posed() {
                return Err(CliError::rejected(format!("model is not well posed: {}", v.diagnostics.join("; "))));
            }
            let est = match method {
                Method::Transformed => estimator::solve_map_transformed(&model, &d, &ys, &us, q, None, tol)?,
                m => estimator::estimate(&model, &ys, &us, m, q, tol)?,
            };
            let mut report = run.report();
            report.validation = Some(v);
            report.estimate = Some(EstimateSummary::new(&est));
            if let Some(prefix) = &out {
                let mut table = Table::new();
                table.push("x", model.n(), &est.states, est.states.len());
                let csv_path = with_ext(prefix, "csv");
                let json_path = with_ext(prefix, "json");
                write_atomic(&csv_path, &table.to_csv()?)?;
                report.outputs = vec![csv_path.display().to_string(), json_path.display().to_string()];
                write_atomic(&json_path, to_json(&report)?.as_bytes())?;
            } else {
                emit(&to_json(&report)?, None, stdout)?;
            }
            Ok(EXIT_OK)
        }
    }
}
