use nalgebra::DVector;
use serde::Serialize;

use crate::estimator::{MapEstimate, Method, SolverDiagnostics};
use crate::kcf::{nilpotency_index, KcfDecomposition};
use crate::model::ValidationReport;
use crate::pencil::{is_regular, Eigenvalue, KroneckerStructure, MatrixPencil};
use crate::sim::Trajectory;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct EigenvalueEntry {
    pub re: f64,
    pub im: f64,
    pub block_size: usize,
}

#[derive(Debug, Serialize)]
pub struct StructureSummary {
    pub n_eq: usize,
    pub n: usize,
    pub regular: bool,
    pub index: usize,
    pub kronecker: KroneckerStructure,
    pub eigenvalues: Vec<EigenvalueEntry>,
    /// Half-open range of transformed columns taken by zero columns and U-blocks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub under_determined_columns: Option<[usize; 2]>,
    /// Half-open range of transformed rows taken by O-blocks and zero rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub over_determined_rows: Option<[usize; 2]>,
    pub residual: f64,
    pub cond_p: f64,
    pub cond_q: f64,
}

impl StructureSummary {
    pub fn new(pencil: &MatrixPencil, d: &KcfDecomposition, tol: f64) -> Self {
        let s = &d.structure;
        let mut eigenvalues = Vec::new();
        for b in &s.jordan {
            match b.eigenvalue {
                Eigenvalue::Real(v) => eigenvalues.push(EigenvalueEntry { re: v, im: 0.0, block_size: b.size }),
                Eigenvalue::ComplexPair { re, im } => {
                    eigenvalues.push(EigenvalueEntry { re, im, block_size: b.size });
                    eigenvalues.push(EigenvalueEntry { re, im: -im, block_size: b.size });
                }
            }
        }
        let (c, r) = (d.col_partition, d.row_partition);
        Self {
            n_eq: pencil.n_eq(),
            n: pencil.n(),
            regular: is_regular(pencil, tol),
            index: nilpotency_index(d),
            kronecker: s.clone(),
            eigenvalues,
            under_determined_columns: s.has_u_blocks().then_some([c[0], c[1]]),
            over_determined_rows: s.has_o_blocks().then_some([r[3], r[4]]),
            residual: d.residual,
            cond_p: d.cond_p,
            cond_q: d.cond_q,
        }
    }
}

fn rows(seq: &[DVector<f64>]) -> Vec<Vec<f64>> {
    seq.iter().map(|v| v.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct TrajectoryData {
    pub states: Vec<Vec<f64>>,
    pub measurements: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub terminal_disturbance: Vec<f64>,
    pub measurement_noise: Vec<Vec<f64>>,
    pub free_states: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct SimulationSummary {
    pub horizon: usize,
    pub seed: u64,
    pub max_dynamics_residual: f64,
    pub max_measurement_residual: f64,
    pub trajectory: TrajectoryData,
}

impl SimulationSummary {
    pub fn new(t: &Trajectory, model: &crate::StochasticDescriptorModel, seed: u64) -> Self {
        let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
        Self {
            horizon: t.horizon(),
            seed,
            max_dynamics_residual: max(t.dynamics_residuals(model)),
            max_measurement_residual: max(t.measurement_residuals(model)),
            trajectory: TrajectoryData {
                states: rows(&t.states),
                measurements: rows(&t.measurements),
                inputs: rows(&t.inputs),
                disturbances: rows(&t.disturbances),
                terminal_disturbance: t.terminal_disturbance.iter().copied().collect(),
                measurement_noise: rows(&t.measurement_noise),
                free_states: rows(&t.free_states),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EstimateSummary {
    pub method: Method,
    pub horizon: usize,
    pub objective_value: f64,
    pub prior_residual: f64,
    pub max_measurement_residual: f64,
    pub max_dynamics_residual: f64,
    pub diagnostics: SolverDiagnostics,
    pub states: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbances: Option<Vec<Vec<f64>>>,
}

impl EstimateSummary {
    pub fn new(est: &MapEstimate) -> Self {
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        Self {
            method: est.diagnostics.method,
            horizon: est.horizon(),
            objective_value: est.objective_value,
            prior_residual: est.residuals.prior,
            max_measurement_residual: max(&est.residuals.measurement),
            max_dynamics_residual: max(&est.residuals.dynamics),
            diagnostics: est.diagnostics.clone(),
            states: rows(&est.states),
            disturbances: est.disturbances.as_deref().map(rows),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: &'static str,
    pub command: String,
    pub tool_version: &'static str,
    pub tolerance: f64,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSummary>,
    pub outputs: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub schema_version: &'static str,
    pub command: String,
    pub error: ErrorBody,
}
