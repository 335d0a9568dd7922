//! MAP estimation of the state sequence.
//!
//! Every solver minimizes
//!
//! ```text
//! ½‖E x₀ − r̄₀‖²_{P₀} + ½ Σ_{k=0}^{T} ‖y_k − H x_k‖²_R + ½ Σ_{k=0}^{T−1} ‖E x_{k+1} − A x_k − B u_k‖²_{FFᵀ}
//! ```
//!
//! where `‖z‖²_W = zᵀ W⁻¹ z`. [`solve_map_batch`] factors the whitened stacked
//! residual system block by block, [`solve_recursive`] eliminates forward in
//! information form, [`solve_ml`] treats inputs and the prior as pseudo-measurements,
//! [`solve_map_constrained`] keeps the disturbances as unknowns under hard
//! dynamics constraints, [`solve_map_transformed`] works in canonical
//! coordinates with a proper prior on the free states, and
//! [`solve_dense_oracle`] is a dense reference solver.

mod banded;
mod batch;
mod constrained;
mod dense;
mod ml;
mod recursive;
mod transformed;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, pinv_whitener, spd_inverse};
use crate::model::StochasticDescriptorModel;

pub use batch::solve_map_batch;
pub use constrained::solve_map_constrained;
pub use dense::{solve_dense_oracle, DENSE_ORACLE_MAX_UNKNOWNS};
pub use ml::solve_ml;
pub use recursive::{solve_recursive, RecursiveEstimate};
pub use transformed::{solve_map_transformed, DEFAULT_Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Batch,
    Recursive,
    Ml,
    Constrained,
    Transformed,
    DenseOracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Batch => "batch",
            Method::Recursive => "recursive",
            Method::Ml => "ml",
            Method::Constrained => "constrained",
            Method::Transformed => "transformed",
            Method::DenseOracle => "dense_oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Method::Batch),
            "recursive" => Ok(Method::Recursive),
            "ml" => Ok(Method::Ml),
            "constrained" => Ok(Method::Constrained),
            "transformed" => Ok(Method::Transformed),
            "dense_oracle" | "dense" => Ok(Method::DenseOracle),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Euclidean norms of the unweighted residuals at an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermResiduals {
    /// `‖E x₀ − r̄₀‖`.
    pub prior: f64,
    /// `‖y_k − H x_k‖` for `k = 0..T`.
    pub measurement: Vec<f64>,
    /// `‖E x_{k+1} − A x_k − B u_k‖` for `k = 0..T−1`.
    pub dynamics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub method: Method,
    /// Largest condition number among the factored pivot blocks.
    pub condition: f64,
    pub iterations: usize,
    /// First-order optimality residual at the estimate.
    pub gradient_norm: f64,
    /// The same residual at the zero sequence, for relative comparisons.
    pub gradient_norm_at_zero: f64,
    /// Stationarity plus feasibility residual of the constrained problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    /// `x̂_0..x̂_T`.
    pub states: Vec<DVector<f64>>,
    pub objective_value: f64,
    pub residuals: TermResiduals,
    pub diagnostics: SolverDiagnostics,
    /// `ŵ_0..ŵ_{T−1}` when the disturbances are unknowns.
    pub disturbances: Option<Vec<DVector<f64>>>,
}

impl MapEstimate {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("estimates are never empty")
    }
}

/// Check measurement and input sequences; returns the horizon `T`.
///
/// An empty input sequence stands for zero inputs when the model has none.
pub(crate) fn check_data(model: &StochasticDescriptorModel, y: &[DVector<f64>], u: &[DVector<f64>]) -> Result<usize> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("at least one measurement is required".into()));
    }
    if let Some(k) = y.iter().position(|v| v.len() != model.n_outputs()) {
        return Err(Error::Dimension(format!(
            "measurement {k} has length {}, expected {}",
            y[k].len(),
            model.n_outputs()
        )));
    }
    let t = y.len() - 1;
    if u.is_empty() && model.n_inputs() == 0 {
        return Ok(t);
    }
    if u.len() < t.max(1) || u.len() > t + 1 {
        return Err(Error::Dimension(format!("expected {} inputs, got {}", t + 1, u.len())));
    }
    if let Some(k) = u.iter().position(|v| v.len() != model.n_inputs()) {
        return Err(Error::Dimension(format!(
            "input {k} has length {}, expected {}",
            u[k].len(),
            model.n_inputs()
        )));
    }
    if y.iter().chain(u).any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidArgument("data contain non-finite values".into()));
    }
    Ok(t)
}

/// `B u_k`, treating a missing input as zero.
pub(crate) fn drive(model: &StochasticDescriptorModel, u: &[DVector<f64>], k: usize) -> DVector<f64> {
    match u.get(k) {
        Some(uk) => model.b() * uk,
        None => DVector::zeros(model.n_eq()),
    }
}

/// Whitening factors `(W₀, W_R, W_F)` with `WᵀW` the inverse covariances.
pub(crate) struct Whiteners {
    pub w0: DMatrix<f64>,
    pub wr: DMatrix<f64>,
    pub wf: DMatrix<f64>,
}

pub(crate) fn whiteners(model: &StochasticDescriptorModel, horizon: usize) -> Result<Whiteners> {
    let w0 = linalg::whitener(model.p0(), "P0")?;
    let wr = linalg::whitener(model.r(), "R")?;
    let wf = if horizon > 0 {
        linalg::whitener(&model.process_covariance(), "F F^T").map_err(|e| match e {
            Error::SingularWeight(m) => Error::SingularWeight(format!("{m}; use the constrained solver")),
            other => other,
        })?
    } else {
        DMatrix::zeros(0, model.n_eq())
    };
    Ok(Whiteners { w0, wr, wf })
}

pub fn term_residuals(
    model: &StochasticDescriptorModel,
    x: &[DVector<f64>],
    y: &[DVector<f64>],
    u: &[DVector<f64>],
) -> TermResiduals {
    let prior = (model.e() * &x[0] - model.r0bar()).norm();
    let measurement = x.iter().zip(y).map(|(xk, yk)| (yk - model.h() * xk).norm()).collect();
    let dynamics = (0..x.len() - 1)
        .map(|k| (model.e() * &x[k + 1] - model.a() * &x[k] - drive(model, u, k)).norm())
        .collect();
    TermResiduals { prior, measurement, dynamics }
}

struct Inverses {
    p0: DMatrix<f64>,
    r: DMatrix<f64>,
    q: DMatrix<f64>,
}

fn inverses(model: &StochasticDescriptorModel, horizon: usize) -> Result<Inverses> {
    let w0 = pinv_whitener(model.p0(), linalg::DEFAULT_TOL);
    let q = if horizon > 0 {
        spd_inverse(&model.process_covariance(), "F F^T")?
    } else {
        DMatrix::zeros(model.n_eq(), model.n_eq())
    };
    Ok(Inverses { p0: w0.transpose() * w0, r: spd_inverse(model.r(), "R")?, q })
}

/// Value of the MAP objective at `x`; a singular `P₀` is weighted by its pseudo-inverse.
pub fn objective(
    model: &StochasticDescriptorModel,
    x: &[DVector<f64>],
    y: &[DVector<f64>],
    u: &[DVector<f64>],
) -> Result<f64> {
    let t = check_data(model, y, u)?;
    check_states(model, x, t)?;
    let inv = inverses(model, t)?;
    let quad = |w: &DMatrix<f64>, z: &DVector<f64>| z.dot(&(w * z));
    let mut j = quad(&inv.p0, &(model.e() * &x[0] - model.r0bar()));
    for k in 0..=t {
        j += quad(&inv.r, &(&y[k] - model.h() * &x[k]));
    }
    for k in 0..t {
        j += quad(&inv.q, &(model.e() * &x[k + 1] - model.a() * &x[k] - drive(model, u, k)));
    }
    Ok(0.5 * j)
}

/// Gradient of [`objective`] with respect to `x_0..x_T`.
pub fn gradient(
    model: &StochasticDescriptorModel,
    x: &[DVector<f64>],
    y: &[DVector<f64>],
    u: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let t = check_data(model, y, u)?;
    check_states(model, x, t)?;
    let inv = inverses(model, t)?;
    let (e, a, h) = (model.e(), model.a(), model.h());
    let mut g: Vec<DVector<f64>> = x.iter().enumerate().map(|(k, xk)| -(h.transpose() * (&inv.r * (&y[k] - h * xk)))).collect();
    g[0] += e.transpose() * (&inv.p0 * (e * &x[0] - model.r0bar()));
    for k in 0..t {
        let z = &inv.q * (e * &x[k + 1] - a * &x[k] - drive(model, u, k));
        g[k + 1] += e.transpose() * &z;
        g[k] -= a.transpose() * &z;
    }
    Ok(g)
}

fn check_states(model: &StochasticDescriptorModel, x: &[DVector<f64>], t: usize) -> Result<()> {
    if x.len() != t + 1 || x.iter().any(|v| v.len() != model.n()) {
        return Err(Error::Dimension(format!("expected {} states of length {}", t + 1, model.n())));
    }
    Ok(())
}

fn stacked_norm(g: &[DVector<f64>]) -> f64 {
    g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

/// Fill objective, residuals and gradient diagnostics for an unconstrained estimate.
pub(crate) fn finish(
    model: &StochasticDescriptorModel,
    states: Vec<DVector<f64>>,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    method: Method,
    condition: f64,
) -> Result<MapEstimate> {
    let objective_value = objective(model, &states, y, u)?;
    let gradient_norm = stacked_norm(&gradient(model, &states, y, u)?);
    let zero = vec![DVector::zeros(model.n()); states.len()];
    let gradient_norm_at_zero = stacked_norm(&gradient(model, &zero, y, u)?);
    let residuals = term_residuals(model, &states, y, u);
    Ok(MapEstimate {
        states,
        objective_value,
        residuals,
        diagnostics: SolverDiagnostics {
            method,
            condition,
            iterations: 0,
            gradient_norm,
            gradient_norm_at_zero,
            kkt_residual: None,
        },
        disturbances: None,
    })
}

/// Dispatch by method name; `q` only affects the transformed solver.
pub fn estimate(
    model: &StochasticDescriptorModel,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    method: Method,
    q: f64,
    tol: f64,
) -> Result<MapEstimate> {
    match method {
        Method::Batch => solve_map_batch(model, y, u, tol),
        Method::Ml => solve_ml(model, y, u),
        Method::Constrained => solve_map_constrained(model, y, u, tol),
        Method::DenseOracle => solve_dense_oracle(model, y, u, tol),
        Method::Transformed => {
            let decomp = crate::kcf::compute_kcf(&model.pencil(), tol)?;
            solve_map_transformed(model, &decomp, y, u, q, None, tol)
        }
        Method::Recursive => {
            let r = solve_recursive(model, y, u)?;
            let cond = r.condition;
            finish(model, r.filtered, y, u, Method::Recursive, cond)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn gradient_matches_finite_differences() {
        let m = StochasticDescriptorModel::new(
            dmatrix![1.0, 0.0; 0.0, 0.0],
            dmatrix![0.5, 0.2; 0.1, 1.0],
            dmatrix![1.0; 0.5],
            dmatrix![1.0, 0.0; 0.3, 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![0.5],
            dvector![0.2, 0.0],
            dmatrix![2.0, 0.1; 0.1, 1.0],
        )
        .unwrap();
        let y = vec![dvector![1.0], dvector![0.5], dvector![-0.2]];
        let u = vec![dvector![1.0], dvector![0.0], dvector![2.0]];
        let x = vec![dvector![0.3, -0.1], dvector![1.0, 0.2], dvector![-0.4, 0.8]];
        let g = gradient(&m, &x, &y, &u).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k][i] += h;
                xm[k][i] -= h;
                let fd = (objective(&m, &xp, &y, &u).unwrap() - objective(&m, &xm, &y, &u).unwrap()) / (2.0 * h);
                assert!((fd - g[k][i]).abs() < 1e-6, "k={k} i={i}: {fd} vs {}", g[k][i]);
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Batch, Method::Recursive, Method::Ml, Method::Constrained, Method::Transformed, Method::DenseOracle] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("kalman".parse::<Method>().is_err());
    }
}
