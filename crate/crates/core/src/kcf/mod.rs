//! Real Kronecker canonical decomposition `P(λE − A)Q`, the descriptor index and
//! the conformal partitioning of the input, disturbance and measurement maps.

mod jordan;
mod minimal;
mod regular;
mod staircase;
mod sylvester;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag};
use crate::pencil::{canonical_matrices, KroneckerStructure, MatrixPencil};

pub use regular::MAX_REGULAR_DIM;

/// Transformations `(P, Q)` with `P E Q`, `P A Q` in canonical block form.
#[derive(Debug, Clone, PartialEq)]
pub struct KcfDecomposition {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub structure: KroneckerStructure,
    /// Column offsets `[U, J, N, O, end]` of the transformed state.
    pub col_partition: [usize; 5],
    /// Row offsets `[U, J, N, O, end]` of the transformed equations.
    pub row_partition: [usize; 5],
    /// Relative reconstruction residual measured on the input pencil.
    pub residual: f64,
    pub cond_p: f64,
    pub cond_q: f64,
}

/// Maps of the transformed system `P E Q`, `P A Q`, `P B`, `P F`, `H Q`, grouped by block family.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSystem {
    pub e_u: DMatrix<f64>,
    pub a_u: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub h_u: DMatrix<f64>,
    pub e_j: DMatrix<f64>,
    pub a_j: DMatrix<f64>,
    pub b_j: DMatrix<f64>,
    pub f_j: DMatrix<f64>,
    pub h_j: DMatrix<f64>,
    pub e_n: DMatrix<f64>,
    pub a_n: DMatrix<f64>,
    pub b_n: DMatrix<f64>,
    pub f_n: DMatrix<f64>,
    pub h_n: DMatrix<f64>,
    pub b_o: DMatrix<f64>,
    pub f_o: DMatrix<f64>,
}

/// Diagnostics from [`verify_kcf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KcfReport {
    pub residual_e: f64,
    pub residual_a: f64,
    /// `max(residual_e, residual_a) / max(‖E‖, ‖A‖, 1)`.
    pub relative_residual: f64,
    pub dims_consistent: bool,
    pub cond_p: f64,
    pub cond_q: f64,
}

/// Reconstruction residuals above this bound are reported as `IllConditioned`.
const ACCEPT_RESIDUAL: f64 = 1e-6;

fn embed(m: usize, at: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m, m);
    out.view_mut((at, at), block.shape()).copy_from(block);
    out
}

/// Swap two consecutive index ranges: `[a..a+x, a+x..a+x+y]` becomes `[second, first]`.
fn rotate_perm(total: usize, start: usize, first: usize, second: usize) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..total).collect();
    order[start..start + first + second].rotate_left(first);
    DMatrix::from_fn(total, total, |i, j| if order[i] == j { 1.0 } else { 0.0 })
}

/// Remove the coupling between row/column groups `[0, split)` and `[split, end)`
/// of an upper block triangular pencil restricted to `range`.
fn decouple(
    e: &mut DMatrix<f64>,
    a: &mut DMatrix<f64>,
    p: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    rows: (usize, usize, usize),
    cols: (usize, usize, usize),
) -> Result<()> {
    let (r0, r1, r2) = rows;
    let (c0, c1, c2) = cols;
    let (m1, m2, n1, n2) = (r1 - r0, r2 - r1, c1 - c0, c2 - c1);
    if (m1 == 0 && n1 == 0) || (m2 == 0 && n2 == 0) {
        return Ok(());
    }
    let blk = |mat: &DMatrix<f64>, r: usize, c: usize, h: usize, w: usize| mat.view((r, c), (h, w)).into_owned();
    let (x, y) = sylvester::solve_pair(
        &blk(e, r0, c0, m1, n1),
        &blk(a, r0, c0, m1, n1),
        &blk(e, r1, c1, m2, n2),
        &blk(a, r1, c1, m2, n2),
        &blk(e, r0, c1, m1, n2),
        &blk(a, r0, c1, m1, n2),
    )?;
    let (m, n) = e.shape();
    let mut ps = DMatrix::identity(m, m);
    ps.view_mut((r0, r1), (m1, m2)).copy_from(&x);
    let mut qs = DMatrix::identity(n, n);
    qs.view_mut((c0, c1), (n1, n2)).copy_from(&y);
    *e = &ps * &*e * &qs;
    *a = &ps * &*a * &qs;
    *p = &ps * &*p;
    *q = &*q * &qs;
    Ok(())
}

/// Compute the real Kronecker canonical decomposition of `pencil`.
///
/// Rank decisions use singular values relative to `max(‖E‖, ‖A‖)` with
/// threshold `tol · max(n_eq, n)`; a decision whose gap is below `10 · tol`
/// yields [`Error::IllConditioned`].
pub fn compute_kcf(pencil: &MatrixPencil, tol: f64) -> Result<KcfDecomposition> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive and finite, got {tol}")));
    }
    let (m, n) = (pencil.n_eq(), pencil.n());
    let scale = linalg::norm2(pencil.e()).max(linalg::norm2(pencil.a()));
    if scale == 0.0 {
        let structure = KroneckerStructure { eps0: n, eta0: m, ..Default::default() };
        return Ok(finish(pencil, DMatrix::identity(m, m), DMatrix::identity(n, n), structure));
    }
    let e = pencil.e() / scale;
    let a = pencil.a() / scale;
    let dim = m.max(n);
    let c = staircase::choose_shift(&e, &a, tol, dim);

    // right singular part to the top-left
    let right = staircase::right_staircase(&e, &a, c, tol, dim)?;
    let (mu, nu) = (right.rows, right.cols);
    let et = &right.p * &e * &right.q;
    let at = &right.p * &a * &right.q;

    // left singular part of the remainder, found on the transpose
    let rest_e = et.view((mu, nu), (m - mu, n - nu)).transpose();
    let rest_a = at.view((mu, nu), (m - mu, n - nu)).transpose();
    let left = staircase::right_staircase(&rest_e, &rest_a, c, tol, dim)?;
    let (mo, no) = (left.cols, left.rows);
    let nr = m - mu - mo;
    if n - nu - no != nr {
        return Err(Error::IllConditioned("deflated regular part is not square".into()));
    }
    let row_perm = rotate_perm(m - mu, 0, mo, nr);
    let col_perm = rotate_perm(n - nu, 0, no, nr);
    let p_rest = row_perm * left.q.transpose();
    let q_rest = left.p.transpose() * col_perm.transpose();
    let mut p = embed(m, mu, &p_rest) * &right.p;
    let mut q = &right.q * embed(n, nu, &q_rest);
    let mut e1 = &p * &e * &q;
    let mut a1 = &p * &a * &q;

    // block diagonalize: regular part from O part, then U part from the rest
    decouple(&mut e1, &mut a1, &mut p, &mut q, (mu, mu + nr, m), (nu, nu + nr, n))?;
    decouple(&mut e1, &mut a1, &mut p, &mut q, (0, mu, m), (0, nu, n))?;

    let sub = |mat: &DMatrix<f64>, r: usize, c: usize, h: usize, w: usize| mat.view((r, c), (h, w)).into_owned();
    let (pu, qu) = minimal::u_canonical(&sub(&e1, 0, 0, mu, nu), &sub(&a1, 0, 0, mu, nu), right.eps0, &right.eps, false)?;
    let reg = regular::regular_form(&sub(&e1, mu, nu, nr, nr), &sub(&a1, mu, nu, nr, nr), tol)?;
    let (po, qo) = minimal::o_canonical(
        &sub(&e1, mu + nr, nu + nr, mo, no),
        &sub(&a1, mu + nr, nu + nr, mo, no),
        left.eps0,
        &left.eps,
    )?;

    let p = block_diag(&[pu, reg.p, po]) * p / scale;
    let q = q * block_diag(&[qu, reg.q, qo]);
    let structure = KroneckerStructure {
        eps0: right.eps0,
        eps: right.eps,
        jordan: reg.jordan,
        nilpotent: reg.nilpotent,
        eta0: left.eps0,
        eta: left.eps,
    };
    let decomp = finish(pencil, p, q, structure);
    if !(decomp.residual <= ACCEPT_RESIDUAL) {
        return Err(Error::IllConditioned(format!(
            "reconstruction residual {:.3e} exceeds {ACCEPT_RESIDUAL:.0e}",
            decomp.residual
        )));
    }
    Ok(decomp)
}

fn finish(pencil: &MatrixPencil, p: DMatrix<f64>, q: DMatrix<f64>, structure: KroneckerStructure) -> KcfDecomposition {
    let mut decomp = KcfDecomposition {
        col_partition: structure.col_partition(),
        row_partition: structure.row_partition(),
        cond_p: linalg::cond(&p),
        cond_q: linalg::cond(&q),
        p,
        q,
        structure,
        residual: 0.0,
    };
    decomp.residual = verify_kcf(pencil, &decomp).relative_residual;
    decomp
}

/// Descriptor index `ν_d`.
///
/// Zero for a pure Jordan structure; otherwise the largest nilpotent block
/// size, at least 1 because algebraic equations are present.
pub fn nilpotency_index(decomp: &KcfDecomposition) -> usize {
    let s = &decomp.structure;
    let max_sigma = s.nilpotent.iter().copied().max().unwrap_or(0);
    if max_sigma == 0 && !s.has_u_blocks() && !s.has_o_blocks() {
        0
    } else {
        max_sigma.max(1)
    }
}

/// Slice `P B`, `P F`, `H Q` conformally with the canonical blocks.
pub fn partition_transformed(
    decomp: &KcfDecomposition,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<TransformedSystem> {
    let (m, n) = (decomp.p.nrows(), decomp.q.nrows());
    if b.nrows() != m {
        return Err(Error::Dimension(format!("B has {} rows, expected {m}", b.nrows())));
    }
    if f.nrows() != m {
        return Err(Error::Dimension(format!("F has {} rows, expected {m}", f.nrows())));
    }
    if h.ncols() != n {
        return Err(Error::Dimension(format!("H has {} columns, expected {n}", h.ncols())));
    }
    let (ec, ac) = canonical_matrices(&decomp.structure);
    let pb = &decomp.p * b;
    let pf = &decomp.p * f;
    let hq = h * &decomp.q;
    let r = decomp.row_partition;
    let c = decomp.col_partition;
    let rows = |mat: &DMatrix<f64>, g: usize| mat.rows(r[g], r[g + 1] - r[g]).into_owned();
    let cols = |mat: &DMatrix<f64>, g: usize| mat.columns(c[g], c[g + 1] - c[g]).into_owned();
    let diag = |mat: &DMatrix<f64>, g: usize| mat.view((r[g], c[g]), (r[g + 1] - r[g], c[g + 1] - c[g])).into_owned();
    Ok(TransformedSystem {
        e_u: diag(&ec, 0),
        a_u: diag(&ac, 0),
        b_u: rows(&pb, 0),
        f_u: rows(&pf, 0),
        h_u: cols(&hq, 0),
        e_j: diag(&ec, 1),
        a_j: diag(&ac, 1),
        b_j: rows(&pb, 1),
        f_j: rows(&pf, 1),
        h_j: cols(&hq, 1),
        e_n: diag(&ec, 2),
        a_n: diag(&ac, 2),
        b_n: rows(&pb, 2),
        f_n: rows(&pf, 2),
        h_n: cols(&hq, 2),
        b_o: rows(&pb, 3),
        f_o: rows(&pf, 3),
    })
}

/// Fail unless the decomposition belongs to an `n_eq × n` pencil.
pub fn check_dims(decomp: &KcfDecomposition, n_eq: usize, n: usize) -> Result<()> {
    if decomp.p.shape() != (n_eq, n_eq) || decomp.q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "decomposition is for a {}x{} pencil, model is {n_eq}x{n}",
            decomp.p.nrows(),
            decomp.q.nrows()
        )));
    }
    Ok(())
}

/// Columns of the transformed state left unspecified by the dynamics: every
/// zero column and the first column of each U-block.
pub fn free_columns(structure: &KroneckerStructure) -> Vec<usize> {
    let mut cols: Vec<usize> = (0..structure.eps0).collect();
    let mut at = structure.eps0;
    for &e in &structure.eps {
        cols.push(at);
        at += e + 1;
    }
    cols
}

/// Reconstruction residuals and conditioning of a decomposition.
pub fn verify_kcf(pencil: &MatrixPencil, decomp: &KcfDecomposition) -> KcfReport {
    let (m, n) = (pencil.n_eq(), pencil.n());
    let dims_consistent = decomp.structure.dims() == (m, n)
        && decomp.p.shape() == (m, m)
        && decomp.q.shape() == (n, n)
        && decomp.row_partition[4] == m
        && decomp.col_partition[4] == n;
    if !dims_consistent {
        return KcfReport {
            residual_e: f64::INFINITY,
            residual_a: f64::INFINITY,
            relative_residual: f64::INFINITY,
            dims_consistent,
            cond_p: linalg::cond(&decomp.p),
            cond_q: linalg::cond(&decomp.q),
        };
    }
    let (ec, ac) = canonical_matrices(&decomp.structure);
    let residual_e = linalg::norm2(&(&decomp.p * pencil.e() * &decomp.q - ec));
    let residual_a = linalg::norm2(&(&decomp.p * pencil.a() * &decomp.q - ac));
    let denom = linalg::norm2(pencil.e()).max(linalg::norm2(pencil.a())).max(1.0);
    KcfReport {
        residual_e,
        residual_a,
        relative_residual: residual_e.max(residual_a) / denom,
        dims_consistent,
        cond_p: linalg::cond(&decomp.p),
        cond_q: linalg::cond(&decomp.q),
    }
}
