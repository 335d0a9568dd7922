//! Minimal polynomial bases and the canonical form of the singular parts.

use nalgebra::{DMatrix, DVector};

use super::jordan::{forced_null, independent_span};
use crate::error::{Error, Result};
use crate::linalg::{self, left_basis};

/// Polynomial null vector `x(λ) = Σ λ^j x_j` of `λE − A`.
struct PolyVector {
    coeffs: Vec<DVector<f64>>,
}

impl PolyVector {
    fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Block Toeplitz matrix whose null space holds the coefficient stacks of degree-`d` null vectors.
fn toeplitz(e: &DMatrix<f64>, a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let (m, n) = e.shape();
    let mut t = DMatrix::zeros((d + 2) * m, (d + 1) * n);
    for j in 0..=d {
        t.view_mut((j * m, j * n), (m, n)).copy_from(&(-a));
        t.view_mut(((j + 1) * m, j * n), (m, n)).copy_from(e);
    }
    t
}

/// Minimal basis of the right null space for a pencil made only of zero
/// columns and U-blocks with the given sizes.
fn minimal_basis(e: &DMatrix<f64>, a: &DMatrix<f64>, eps0: usize, eps: &[usize]) -> Result<Vec<PolyVector>> {
    let n = e.ncols();
    let max_deg = eps.iter().copied().max().unwrap_or(0);
    let mut found: Vec<PolyVector> = Vec::new();
    for d in 0..=max_deg {
        let count = if d == 0 { eps0 } else { eps.iter().filter(|&&x| x == d).count() };
        if count == 0 {
            continue;
        }
        let len = (d + 1) * n;
        let mut shifts: Vec<DVector<f64>> = Vec::new();
        for v in &found {
            for k in 0..=(d - v.degree()) {
                let mut z = DVector::zeros(len);
                for (i, x) in v.coeffs.iter().enumerate() {
                    z.rows_mut((i + k) * n, n).copy_from(x);
                }
                shifts.push(z);
            }
        }
        let null = forced_null(&toeplitz(e, a, d), shifts.len() + count, "polynomial null space")?;
        let span = independent_span(len, &shifts, "shifted null vectors")?;
        let rest = &null - &span * (span.transpose() * &null);
        let lb = left_basis(&rest);
        if lb.singular.get(count - 1).copied().unwrap_or(0.0) <= 1e-8 {
            return Err(Error::IllConditioned(format!("no new null vectors of degree {d}")));
        }
        for j in 0..count {
            let z = lb.v.column(j);
            let coeffs = (0..=d).map(|i| z.rows(i * n, n).into_owned()).collect();
            found.push(PolyVector { coeffs });
        }
    }
    Ok(found)
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    if linalg::cond(m) > 1e12 {
        return Err(Error::IllConditioned(format!("{what} is numerically singular")));
    }
    m.clone().try_inverse().ok_or_else(|| Error::IllConditioned(format!("{what} is singular")))
}

/// `(p, q)` with `p E q`, `p A q` equal to the canonical U part: zero columns
/// (first, or last when `zeros_last`) and U-blocks of decreasing size.
pub(crate) fn u_canonical(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    eps0: usize,
    eps: &[usize],
    zeros_last: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = e.shape();
    let mut basis = minimal_basis(e, a, eps0, eps)?;
    basis.sort_by_key(|b| std::cmp::Reverse(b.degree()));
    let mut zero_cols = Vec::new();
    let mut block_cols = Vec::new();
    let mut p_inv_cols = Vec::new();
    for v in &basis {
        if v.degree() == 0 {
            zero_cols.push(v.coeffs[0].clone());
            continue;
        }
        block_cols.extend(v.coeffs.iter().rev().cloned());
        p_inv_cols.extend(v.coeffs[..v.degree()].iter().rev().map(|x| e * x));
    }
    let cols: Vec<DVector<f64>> = if zeros_last {
        block_cols.into_iter().chain(zero_cols).collect()
    } else {
        zero_cols.into_iter().chain(block_cols).collect()
    };
    if cols.len() != n || p_inv_cols.len() != m {
        return Err(Error::IllConditioned("minimal basis does not match the block sizes".into()));
    }
    let q = if n == 0 { DMatrix::zeros(0, 0) } else { DMatrix::from_columns(&cols) };
    let p_inv = if m == 0 { DMatrix::zeros(0, 0) } else { DMatrix::from_columns(&p_inv_cols) };
    invert(&q, "U-part column basis")?;
    Ok((invert(&p_inv, "U-part row basis")?, q))
}

fn reversal_blocks(sizes: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let blocks: Vec<DMatrix<f64>> = sizes
        .map(|s| DMatrix::from_fn(s, s, |i, j| if i + j + 1 == s { 1.0 } else { 0.0 }))
        .collect();
    linalg::block_diag(&blocks)
}

/// `(p, q)` with `p E q`, `p A q` equal to the canonical O part: O-blocks of
/// decreasing size followed by zero rows.
pub(crate) fn o_canonical(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    eta0: usize,
    eta: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (pt, qt) = u_canonical(&e.transpose(), &a.transpose(), eta0, eta, true)?;
    let r_rows = reversal_blocks(eta.iter().map(|&h| h + 1).chain(std::iter::repeat_n(1, eta0)));
    let r_cols = reversal_blocks(eta.iter().copied());
    Ok((r_rows * qt.transpose(), pt.transpose() * r_cols))
}
