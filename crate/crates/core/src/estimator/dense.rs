use nalgebra::{DMatrix, DVector};

use super::{check_data, drive, finish, whiteners, MapEstimate, Method};
use crate::error::{Error, Result};
use crate::model::StochasticDescriptorModel;

/// Largest `(T+1)·n` accepted by the dense oracle.
pub const DENSE_ORACLE_MAX_UNKNOWNS: usize = 200;

/// Reference solver: the full whitened residual system, factored densely with
/// column-pivoted QR.
pub fn solve_dense_oracle(
    model: &StochasticDescriptorModel,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    tol: f64,
) -> Result<MapEstimate> {
    let t = check_data(model, y, u)?;
    let n = model.n();
    let cols = (t + 1) * n;
    if cols > DENSE_ORACLE_MAX_UNKNOWNS {
        return Err(Error::InvalidArgument(format!(
            "dense oracle handles at most {DENSE_ORACLE_MAX_UNKNOWNS} unknowns, got {cols}"
        )));
    }
    let w = whiteners(model, t)?;
    let (n0, m, nf) = (w.w0.nrows(), w.wr.nrows(), w.wf.nrows());
    let rows = n0 + (t + 1) * m + t * nf;
    let mut big = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    big.view_mut((0, 0), (n0, n)).copy_from(&(&w.w0 * model.e()));
    rhs.rows_mut(0, n0).copy_from(&(&w.w0 * model.r0bar()));
    let mut at = n0;
    for k in 0..=t {
        big.view_mut((at, k * n), (m, n)).copy_from(&(&w.wr * model.h()));
        rhs.rows_mut(at, m).copy_from(&(&w.wr * &y[k]));
        at += m;
    }
    for k in 0..t {
        big.view_mut((at, k * n), (nf, n)).copy_from(&(-(&w.wf * model.a())));
        big.view_mut((at, (k + 1) * n), (nf, n)).copy_from(&(&w.wf * model.e()));
        rhs.rows_mut(at, nf).copy_from(&(&w.wf * drive(model, u, k)));
        at += nf;
    }
    if rows < cols {
        return Err(Error::Unestimable("fewer residuals than unknowns".into()));
    }

    let qr = big.col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
    let top = diag[0];
    let bottom = diag[cols - 1];
    if !(bottom > tol * top * rows as f64) {
        return Err(Error::Unestimable(format!(
            "stacked system is column rank deficient (pivot ratio {:.3e})",
            bottom / top
        )));
    }
    let mut z = rhs;
    qr.q_tr_mul(&mut z);
    let mut sol = r
        .solve_upper_triangular(&z.rows(0, cols).into_owned())
        .ok_or_else(|| Error::Unestimable("singular triangular factor".into()))?;
    qr.p().inv_permute_rows(&mut sol);
    let states = (0..=t).map(|k| sol.rows(k * n, n).into_owned()).collect();
    finish(model, states, y, u, Method::DenseOracle, top / bottom)
}
