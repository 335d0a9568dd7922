//! Generalized Sylvester equations used to remove off-diagonal coupling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `E11 Y + X E22 = −E12`, `A11 Y + X A22 = −A12` in the least-squares
/// sense; returns `(X, Y)` and fails when the residual is not negligible.
pub(crate) fn solve_pair(
    e11: &DMatrix<f64>,
    a11: &DMatrix<f64>,
    e22: &DMatrix<f64>,
    a22: &DMatrix<f64>,
    e12: &DMatrix<f64>,
    a12: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m1, n1) = e11.shape();
    let (m2, n2) = e22.shape();
    let ny = n1 * n2;
    let nx = m1 * m2;
    let rows = 2 * m1 * n2;
    let mut x = DMatrix::zeros(m1, m2);
    let mut y = DMatrix::zeros(n1, n2);
    if rows == 0 {
        return Ok((x, y));
    }
    let rhs_scale = e12.amax().max(a12.amax());
    if ny + nx == 0 {
        if rhs_scale > 1e-12 {
            return Err(Error::IllConditioned("coupling block cannot be removed".into()));
        }
        return Ok((x, y));
    }
    let id_n2 = DMatrix::<f64>::identity(n2, n2);
    let id_m1 = DMatrix::<f64>::identity(m1, m1);
    let mut k = DMatrix::zeros(rows, ny + nx);
    let half = m1 * n2;
    k.view_mut((0, 0), (half, ny)).copy_from(&id_n2.kronecker(e11));
    k.view_mut((0, ny), (half, nx)).copy_from(&e22.transpose().kronecker(&id_m1));
    k.view_mut((half, 0), (half, ny)).copy_from(&id_n2.kronecker(a11));
    k.view_mut((half, ny), (half, nx)).copy_from(&a22.transpose().kronecker(&id_m1));
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, half).copy_from(&DVector::from_column_slice(e12.as_slice()));
    rhs.rows_mut(half, half).copy_from(&DVector::from_column_slice(a12.as_slice()));
    rhs.neg_mut();

    let svd = crate::linalg::svd(&k, true, true);
    let eps = 1e-13 * svd.singular_values.amax().max(1.0);
    let solve = |b: &DVector<f64>| {
        svd.solve(b, eps)
            .map_err(|e| Error::IllConditioned(format!("Sylvester solve failed: {e}")))
    };
    let mut sol = solve(&rhs)?;
    for _ in 0..3 {
        let r = &rhs - &k * &sol;
        sol += solve(&r)?;
    }
    let resid = (&k * &sol - &rhs).amax();
    if resid > 1e-10 * (1.0 + rhs_scale) {
        return Err(Error::IllConditioned(format!(
            "coupled Sylvester equation inconsistent (residual {resid:.3e})"
        )));
    }
    y.copy_from_slice(sol.rows(0, ny).as_slice());
    x.copy_from_slice(sol.rows(ny, nx).as_slice());
    Ok((x, y))
}
