use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_data, drive, finish, MapEstimate, Method};
use crate::error::{Error, Result};
use crate::linalg::{self, spd_inverse};
use crate::model::StochasticDescriptorModel;

/// Refinement sweeps after the first solve.
const REFINE_STEPS: usize = 3;

/// One Gaussian observation `z = G_k x_k + G_{k+1} x_{k+1} + noise`, `noise ~ N(0, Σ)`.
struct Observation {
    at: usize,
    g_now: DMatrix<f64>,
    g_next: Option<DMatrix<f64>>,
    z: DVector<f64>,
    info: DMatrix<f64>,
}

/// Maximum-likelihood estimate with `x` as parameters and the prior and inputs
/// recast as noisy observations: `r̄₀ = E x₀ + e`, `B u_k = E x_{k+1} − A x_k − F w_k`,
/// next to `y_k = H x_k + v_k`. The block-tridiagonal normal equations are solved
/// by block Cholesky elimination, followed by iterative refinement.
pub fn solve_ml(model: &StochasticDescriptorModel, y: &[DVector<f64>], u: &[DVector<f64>]) -> Result<MapEstimate> {
    let t = check_data(model, y, u)?;
    let n = model.n();
    let (e, a, h) = (model.e(), model.a(), model.h());
    let r_info = spd_inverse(model.r(), "R")?;
    let mut obs = vec![Observation {
        at: 0,
        g_now: e.clone(),
        g_next: None,
        z: model.r0bar().clone(),
        info: spd_inverse(model.p0(), "P0")?,
    }];
    for (k, yk) in y.iter().enumerate() {
        obs.push(Observation { at: k, g_now: h.clone(), g_next: None, z: yk.clone(), info: r_info.clone() });
    }
    if t > 0 {
        let q_info = spd_inverse(&model.process_covariance(), "F F^T")?;
        for k in 0..t {
            obs.push(Observation {
                at: k,
                g_now: -a,
                g_next: Some(e.clone()),
                z: drive(model, u, k),
                info: q_info.clone(),
            });
        }
    }

    // diagonal blocks D_k, sub-diagonal blocks L_k = block (k+1, k), right-hand sides b_k
    let mut diag = vec![DMatrix::<f64>::zeros(n, n); t + 1];
    let mut lower = vec![DMatrix::<f64>::zeros(n, n); t];
    let mut rhs = vec![DVector::<f64>::zeros(n); t + 1];
    for o in &obs {
        let k = o.at;
        let gt_w = o.g_now.transpose() * &o.info;
        diag[k] += &gt_w * &o.g_now;
        rhs[k] += &gt_w * &o.z;
        if let Some(g1) = &o.g_next {
            let g1t_w = g1.transpose() * &o.info;
            diag[k + 1] += &g1t_w * g1;
            rhs[k + 1] += &g1t_w * &o.z;
            lower[k] += &g1t_w * &o.g_now;
        }
    }

    let mut factors = Vec::with_capacity(t + 1);
    let mut condition = 1.0_f64;
    for k in 0..=t {
        let mut s = diag[k].clone();
        if k > 0 {
            let prev: &Cholesky<f64, Dyn> = &factors[k - 1];
            s -= &lower[k - 1] * prev.solve(&lower[k - 1].transpose());
        }
        let s = 0.5 * (&s + s.transpose());
        let c = linalg::cond(&s);
        if !(c < 1e14) {
            return Err(Error::Unestimable(format!("state {k} is not determined by the data")));
        }
        condition = condition.max(c);
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Unestimable(format!("state {k} is not determined by the data")))?;
        factors.push(chol);
    }
    let solve = |mut b: Vec<DVector<f64>>| {
        for k in 1..=t {
            let carried = &lower[k - 1] * factors[k - 1].solve(&b[k - 1]);
            b[k] -= carried;
        }
        let mut x = vec![DVector::zeros(n); t + 1];
        x[t] = factors[t].solve(&b[t]);
        for k in (0..t).rev() {
            x[k] = factors[k].solve(&(&b[k] - lower[k].transpose() * &x[k + 1]));
        }
        x
    };

    // refinement with residuals taken from the observations, not the normal matrix
    let mut states = solve(rhs);
    let mut iterations = 0;
    for _ in 0..REFINE_STEPS {
        let mut r = vec![DVector::<f64>::zeros(n); t + 1];
        for o in &obs {
            let mut misfit = &o.z - &o.g_now * &states[o.at];
            if let Some(g1) = &o.g_next {
                misfit -= g1 * &states[o.at + 1];
            }
            let w = &o.info * misfit;
            r[o.at] += o.g_now.transpose() * &w;
            if let Some(g1) = &o.g_next {
                r[o.at + 1] += g1.transpose() * &w;
            }
        }
        let delta = solve(r);
        let size = delta.iter().map(|d| d.amax()).fold(0.0, f64::max);
        let scale = states.iter().map(|x| x.amax()).fold(f64::MIN_POSITIVE, f64::max);
        for (x, d) in states.iter_mut().zip(&delta) {
            *x += d;
        }
        iterations += 1;
        if size <= f64::EPSILON * scale {
            break;
        }
    }
    let mut est = finish(model, states, y, u, Method::Ml, condition)?;
    est.diagnostics.iterations = iterations;
    Ok(est)
}
