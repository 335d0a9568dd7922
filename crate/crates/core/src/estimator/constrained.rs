use nalgebra::{DMatrix, DVector};

use super::{check_data, drive, term_residuals, MapEstimate, Method, SolverDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{self, pinv_whitener, right_basis};
use crate::model::StochasticDescriptorModel;

/// Largest number of unknowns `(T+1)·n + T·p` for the dense constrained solver.
pub const CONSTRAINED_MAX_UNKNOWNS: usize = 4000;

/// MAP estimate with the disturbances as unknowns:
/// minimize `½‖E x₀ − r̄₀‖²_{P₀} + ½ Σ ‖y_k − H x_k‖²_R + ½ Σ ‖w_k‖²`
/// subject to `E x_{k+1} = A x_k + B u_k + F w_k`.
///
/// Works for singular `F Fᵀ` (including `F = 0`), and weights a singular `P₀`
/// by its pseudo-inverse. Solved by the null-space method.
pub fn solve_map_constrained(
    model: &StochasticDescriptorModel,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    tol: f64,
) -> Result<MapEstimate> {
    let t = check_data(model, y, u)?;
    let (n, p, n_eq) = (model.n(), model.n_disturbances(), model.n_eq());
    let nx = (t + 1) * n;
    let nz = nx + t * p;
    if nz > CONSTRAINED_MAX_UNKNOWNS {
        return Err(Error::InvalidArgument(format!(
            "constrained solver handles at most {CONSTRAINED_MAX_UNKNOWNS} unknowns, got {nz}"
        )));
    }
    let w0 = pinv_whitener(model.p0(), tol);
    let wr = linalg::whitener(model.r(), "R")?;
    let (n0, m) = (w0.nrows(), wr.nrows());

    // objective ½‖G z − h‖²
    let g_rows = n0 + (t + 1) * m + t * p;
    let mut g = DMatrix::zeros(g_rows, nz);
    let mut h = DVector::zeros(g_rows);
    g.view_mut((0, 0), (n0, n)).copy_from(&(&w0 * model.e()));
    h.rows_mut(0, n0).copy_from(&(&w0 * model.r0bar()));
    let mut at = n0;
    for k in 0..=t {
        g.view_mut((at, k * n), (m, n)).copy_from(&(&wr * model.h()));
        h.rows_mut(at, m).copy_from(&(&wr * &y[k]));
        at += m;
    }
    for k in 0..t {
        g.view_mut((at, nx + k * p), (p, p)).fill_with_identity();
        at += p;
    }

    // constraints C z = d
    let mut c = DMatrix::zeros(t * n_eq, nz);
    let mut d = DVector::zeros(t * n_eq);
    for k in 0..t {
        let r = k * n_eq;
        c.view_mut((r, k * n), (n_eq, n)).copy_from(&(-model.a()));
        c.view_mut((r, (k + 1) * n), (n_eq, n)).copy_from(model.e());
        c.view_mut((r, nx + k * p), (n_eq, p)).copy_from(&(-model.f()));
        d.rows_mut(r, n_eq).copy_from(&drive(model, u, k));
    }

    let (z_part, null) = if t == 0 {
        (DVector::zeros(nz), DMatrix::identity(nz, nz))
    } else {
        let basis = right_basis(&c);
        let scale = basis.singular.first().copied().unwrap_or(0.0);
        let rank = linalg::decide_rank(&basis.singular, scale, tol, nz).rank;
        let range = basis.v.columns(0, rank).into_owned();
        // particular solution in the row space of C
        let cr = &c * &range;
        let s = linalg::svd(&cr, true, true)
            .solve(&d, tol * scale)
            .map_err(|e| Error::Infeasible(e.to_string()))?;
        let z_part = &range * s;
        let infeas = (&c * &z_part - &d).amax();
        if infeas > 1e-9 * (1.0 + d.amax()) {
            return Err(Error::Infeasible(format!("dynamics constraints are inconsistent (residual {infeas:.3e})")));
        }
        (z_part, basis.v.columns(rank, nz - rank).into_owned())
    };

    let reduced = &g * &null;
    let target = &h - &g * &z_part;
    let nfree = null.ncols();
    if reduced.nrows() < nfree {
        return Err(Error::Unestimable("fewer residuals than free directions".into()));
    }
    let (coef, top, bottom) = if nfree == 0 {
        (DVector::zeros(0), 1.0, 1.0)
    } else {
        let rows = reduced.nrows();
        let qr = reduced.col_piv_qr();
        let r = qr.r();
        let top = r[(0, 0)].abs();
        let bottom = r[(nfree - 1, nfree - 1)].abs();
        if !(bottom > tol * top * rows as f64) {
            return Err(Error::Unestimable(format!(
                "state sequence is not determined by the data (pivot ratio {:.3e})",
                bottom / top
            )));
        }
        let mut rhs = target;
        qr.q_tr_mul(&mut rhs);
        let mut coef = r
            .solve_upper_triangular(&rhs.rows(0, nfree).into_owned())
            .ok_or_else(|| Error::Unestimable("singular triangular factor".into()))?;
        qr.p().inv_permute_rows(&mut coef);
        (coef, top, bottom)
    };
    let z = &z_part + &null * coef;

    let resid = &g * &z - &h;
    let objective_value = 0.5 * resid.norm_squared();
    let grad = g.transpose() * &resid;
    let grad0 = g.transpose() * &h;
    let (stationarity, feasibility) = if t == 0 {
        (grad.norm(), 0.0)
    } else {
        let ct = c.transpose();
        let lambda = linalg::svd(&ct, true, true)
            .solve(&(-&grad), 1e-14 * linalg::norm2(&ct).max(1.0))
            .map_err(|e| Error::Infeasible(e.to_string()))?;
        ((&grad + &ct * lambda).norm(), (&c * &z - &d).norm())
    };
    let kkt = (stationarity + feasibility) / (1.0 + grad0.norm() + d.norm());

    let states: Vec<DVector<f64>> = (0..=t).map(|k| z.rows(k * n, n).into_owned()).collect();
    let disturbances = (0..t).map(|k| z.rows(nx + k * p, p).into_owned()).collect();
    let residuals = term_residuals(model, &states, y, u);
    Ok(MapEstimate {
        states,
        objective_value,
        residuals,
        diagnostics: SolverDiagnostics {
            method: Method::Constrained,
            condition: top / bottom,
            iterations: 0,
            gradient_norm: stationarity,
            gradient_norm_at_zero: grad0.norm(),
            kkt_residual: Some(kkt),
        },
        disturbances: Some(disturbances),
    })
}
