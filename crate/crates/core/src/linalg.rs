//! Dense linear-algebra helpers shared by the pencil, KCF and estimator code.
//!
//! Everything here is thin glue over `nalgebra`: sorted SVDs with complete
//! bases, rank decisions with an ambiguity flag, and covariance factorizations.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use std::any::Any;

use crate::error::{Error, Result};

/// Default relative tolerance for rank decisions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap for the iterative decompositions; nalgebra's defaults never give up.
const MAX_ITER: usize = 20_000;

/// Row-reversal permutation (its own inverse).
fn reversal<T: ComplexField>(n: usize) -> DMatrix<T> {
    DMatrix::from_fn(n, n, |i, j| if i + j + 1 == n { T::one() } else { T::zero() })
}

/// Thin SVD through faer for `f64` and `Complex64` matrices.
fn faer_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, compute_u: bool, compute_v: bool) -> Option<SVD<T, Dyn, Dyn>> {
    fn run<F>(a: &DMatrix<F>, compute_u: bool, compute_v: bool) -> Option<SVD<F, Dyn, Dyn>>
    where
        F: ComplexField<RealField = f64> + faer::traits::ComplexField<Real = f64> + faer::traits::Conjugate<Canonical = F>,
    {
        let (m, n) = a.shape();
        let k = m.min(n);
        let fm = faer::Mat::<F>::from_fn(m, n, |i, j| a[(i, j)].clone());
        if !compute_u && !compute_v {
            let s = fm.singular_values().ok()?;
            return Some(SVD { u: None, v_t: None, singular_values: DVector::from_vec(s) });
        }
        let s = fm.thin_svd().ok()?;
        let (fu, fs, fv) = (s.U(), s.S().column_vector(), s.V());
        Some(SVD {
            u: compute_u.then(|| DMatrix::from_fn(m, k, |i, j| fu[(i, j)].clone())),
            v_t: compute_v.then(|| DMatrix::from_fn(k, n, |i, j| ComplexField::conjugate(fv[(j, i)].clone()))),
            singular_values: DVector::from_fn(k, |i, _| ComplexField::real(fs[i].clone())),
        })
    }
    let any = a as &dyn Any;
    let out: Box<dyn Any> = if let Some(r) = any.downcast_ref::<DMatrix<f64>>() {
        Box::new(run(r, compute_u, compute_v)?)
    } else {
        Box::new(run(any.downcast_ref::<DMatrix<Complex64>>()?, compute_u, compute_v)?)
    };
    out.downcast::<SVD<T, Dyn, Dyn>>().ok().map(|s| *s)
}

/// SVD of `a`, with faer first. nalgebra's implicit-shift routine is kept as a
/// fallback, tried on `a`, its adjoint and a row-reversed copy; its candidates
/// must reproduce the Frobenius norm of `a` since it can converge to a wrong
/// factorization on rank-deficient input.
pub fn svd<T>(a: &DMatrix<T>, compute_u: bool, compute_v: bool) -> SVD<T, Dyn, Dyn>
where
    T: ComplexField<RealField = f64>,
{
    let (m, n) = a.shape();
    if m.min(n) == 0 {
        return SVD {
            u: compute_u.then(|| DMatrix::zeros(m, 0)),
            v_t: compute_v.then(|| DMatrix::zeros(0, n)),
            singular_values: DVector::zeros(0),
        };
    }
    if let Some(s) = faer_svd(a, compute_u, compute_v) {
        return s;
    }
    let eps = 5.0 * f64::EPSILON;
    let norm2 = a.norm_squared();
    let sound = |s: &SVD<T, Dyn, Dyn>| {
        let sum: f64 = s.singular_values.iter().map(|v| v * v).sum();
        s.singular_values.iter().all(|v| v.is_finite()) && (sum - norm2).abs() <= 1e-10 * norm2.max(f64::MIN_POSITIVE)
    };
    if let Some(s) = SVD::try_new(a.clone(), compute_u, compute_v, eps, MAX_ITER).filter(&sound) {
        return s;
    }
    if let Some(s) = SVD::try_new(a.adjoint(), compute_v, compute_u, eps, MAX_ITER) {
        let s = SVD {
            u: s.v_t.map(|vt| vt.adjoint()),
            v_t: s.u.map(|u| u.adjoint()),
            singular_values: s.singular_values,
        };
        if sound(&s) {
            return s;
        }
    }
    let r = reversal::<T>(a.nrows());
    if let Some(mut s) = SVD::try_new(&r * a, compute_u, compute_v, eps, MAX_ITER).filter(&sound) {
        s.u = s.u.map(|u| &r * u);
        return s;
    }
    SVD::new(a.clone(), compute_u, compute_v)
}

/// Eigenvalues of a real square matrix from its real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eps = f64::EPSILON;
    if let Some(s) = Schur::try_new(m.clone(), eps, MAX_ITER) {
        return Ok(s.complex_eigenvalues().iter().copied().collect());
    }
    // fixed Householder similarities change the iteration path without changing the spectrum
    for k in 0..8 {
        let v = DVector::from_fn(n, |i, _| 1.0 + ((i + 3 * k) as f64 * 0.618_033_988_7).fract()).normalize();
        let h = DMatrix::identity(n, n) - (&v * v.transpose()) * 2.0;
        let cand = if k % 2 == 0 { &h * m * &h } else { &h * m.transpose() * &h };
        if let Some(s) = Schur::try_new(cand, eps, MAX_ITER) {
            return Ok(s.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::IllConditioned("eigenvalue iteration did not converge".into()))
}

fn symmetric_eigen(a: DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::try_new(a.clone(), f64::EPSILON, MAX_ITER).unwrap_or_else(|| SymmetricEigen::new(a))
}

/// Outcome of a thresholded rank decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDecision {
    pub rank: usize,
    /// The smallest kept and largest dropped singular values are closer than `10 * tol * scale`.
    pub ambiguous: bool,
}

/// Decide the numerical rank from singular values sorted in decreasing order.
///
/// Values at or below `tol * scale * dim` count as zero.
pub fn decide_rank(singular: &[f64], scale: f64, tol: f64, dim: usize) -> RankDecision {
    let threshold = tol * scale * dim.max(1) as f64;
    let rank = singular.iter().take_while(|&&s| s > threshold).count();
    let ambiguous = if rank == 0 || scale == 0.0 {
        false
    } else {
        let kept = singular[rank - 1];
        let dropped = singular.get(rank).copied().unwrap_or(0.0);
        kept - dropped < 10.0 * tol * scale
    };
    RankDecision { rank, ambiguous }
}

/// Singular values (decreasing) together with a complete orthonormal right basis.
///
/// Column `i` of `v` pairs with singular value `i`; columns past `min(m, n)` span
/// the remainder of the null space.
pub struct RightBasis<T: ComplexField> {
    pub singular: Vec<f64>,
    pub v: DMatrix<T>,
}

pub fn right_basis<T>(a: &DMatrix<T>) -> RightBasis<T>
where
    T: ComplexField<RealField = f64>,
{
    let (m, n) = a.shape();
    if n == 0 {
        return RightBasis { singular: Vec::new(), v: DMatrix::zeros(0, 0) };
    }
    if m == 0 {
        return RightBasis { singular: Vec::new(), v: DMatrix::identity(n, n) };
    }
    // Pad wide matrices with zero rows so the thin SVD yields a full V.
    let work = if m < n {
        let mut padded = DMatrix::<T>::zeros(n, n);
        padded.view_mut((0, 0), (m, n)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = svd(&work, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut v = DMatrix::<T>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &v_t.row(src).adjoint());
    }
    let singular = order.iter().take(m.min(n)).map(|&i| svd.singular_values[i]).collect();
    RightBasis { singular, v }
}

/// Complete orthonormal left basis: columns of `u` ordered by decreasing singular value.
pub fn left_basis<T>(a: &DMatrix<T>) -> RightBasis<T>
where
    T: ComplexField<RealField = f64>,
{
    right_basis(&a.adjoint())
}

pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = svd(a, false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn norm2(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Numerical rank: singular values below `tol * sigma_max * max(m, n)` are zero.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let s = singular_values(a);
    let scale = s.first().copied().unwrap_or(0.0);
    decide_rank(&s, scale, tol, a.nrows().max(a.ncols())).rank
}

/// 2-norm condition number; infinite for singular or empty-rank matrices.
pub fn cond(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && s.len() == a.nrows().min(a.ncols()) => hi / lo,
        (None, None) => 1.0,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis for the column span of `a` at the given rank tolerance.
pub fn orthonormal_span<T>(a: &DMatrix<T>, scale: f64, tol: f64) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let basis = left_basis(a);
    let r = decide_rank(&basis.singular, scale, tol, a.nrows().max(a.ncols())).rank;
    basis.v.columns(0, r).into_owned()
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(1e-300);
    (a - a.transpose()).amax() <= rel_tol * scale
}

/// Factor `L` with `L L^T = cov` for a symmetric positive semidefinite `cov`.
///
/// Uses the eigendecomposition, clamping eigenvalues in `[-tol*max, 0)` to zero.
pub fn psd_factor(cov: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = 0.5 * (cov + cov.transpose());
    let eig = symmetric_eigen(sym);
    let max_ev = eig.eigenvalues.amax();
    let floor = -tol.max(1e-12) * max_ev.max(1e-300) * n as f64;
    let mut l = eig.eigenvectors.clone();
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < floor {
            return Err(Error::NotPsd(format!("eigenvalue {ev:.3e} is negative")));
        }
        let root = ev.max(0.0).sqrt();
        l.column_mut(j).scale_mut(root);
    }
    Ok(l)
}

/// Whitening matrix `W` with `W^T W = cov^{-1}`, from a Cholesky factorization.
pub fn whitener(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = 0.5 * (cov + cov.transpose());
    let chol = sym
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularWeight(format!("{what} is not positive definite")))?;
    let l = chol.l();
    let diag_min = l.diagonal().iter().fold(f64::INFINITY, |m, &d| m.min(d.abs()));
    let diag_max = l.diagonal().amax();
    if diag_min <= 1e-8 * diag_max {
        return Err(Error::SingularWeight(format!("{what} is numerically singular")));
    }
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::SingularWeight(format!("{what} is singular")))?;
    Ok(inv)
}

/// Whitening matrix `W` (one row per nonzero eigenvalue) with `W^T W = cov^+`
/// for a symmetric positive semidefinite `cov`.
pub fn pinv_whitener(cov: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = cov.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = symmetric_eigen(0.5 * (cov + cov.transpose()));
    let max_ev = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > tol.max(1e-12) * max_ev * n as f64).collect();
    let mut w = DMatrix::zeros(keep.len(), n);
    for (r, &i) in keep.iter().enumerate() {
        let row = eig.eigenvectors.column(i).transpose() / eig.eigenvalues[i].sqrt();
        w.set_row(r, &row);
    }
    w
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let w = whitener(a, what)?;
    Ok(w.transpose() * w)
}

/// Stack vectors end to end.
pub fn stack(vs: &[DVector<f64>]) -> DVector<f64> {
    let len = vs.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for v in vs {
        out.rows_mut(at, v.len()).copy_from(v);
        at += v.len();
    }
    out
}

/// Stack matrices with equal column counts on top of each other.
pub fn stack_rows(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), b.shape()).copy_from(b);
        at += b.nrows();
    }
    out
}

pub fn unstack(x: &DVector<f64>, block: usize) -> Vec<DVector<f64>> {
    if block == 0 {
        return Vec::new();
    }
    (0..x.len() / block).map(|k| x.rows(k * block, block).into_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use num_complex::Complex64;

    #[test]
    fn rank_one_wide_svd_reconstructs() {
        let f = dmatrix![
            -0.8266368479731734, -0.3374942509993159, 0.7579168645371358, 0.6944292160841221;
            -1.4511163448702256, -0.5924529315692146, 1.330482125106432, 1.219032986838
        ];
        let s = svd(&f, true, true);
        let top: f64 = s.singular_values.max();
        let fro = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((top - fro).abs() < 1e-12);
        assert!((s.recompose().unwrap() - &f).amax() < 1e-12);
        assert_eq!(rank(&f, DEFAULT_TOL), 1);
    }

    #[test]
    fn rank_of_wide_and_tall() {
        let a = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 6.0];
        assert_eq!(rank(&a, DEFAULT_TOL), 1);
        assert_eq!(rank(&a.transpose(), DEFAULT_TOL), 1);
        assert_eq!(rank(&DMatrix::<f64>::zeros(3, 2), DEFAULT_TOL), 0);
    }

    #[test]
    fn right_basis_is_complete_for_wide_input() {
        let a = dmatrix![1.0, 0.0, 1.0];
        let b = right_basis(&a);
        assert_eq!(b.v.shape(), (3, 3));
        assert!((b.v.transpose() * &b.v - DMatrix::identity(3, 3)).amax() < 1e-12);
        // trailing two columns span the null space
        assert!((&a * b.v.columns(1, 2)).amax() < 1e-12);
    }

    #[test]
    fn complex_right_basis_orthonormal() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = DMatrix::from_row_slice(1, 2, &[one, i]);
        let b = right_basis(&a);
        let gram = b.v.adjoint() * &b.v;
        assert!((gram - DMatrix::<Complex64>::identity(2, 2)).camax() < 1e-12);
        assert!((&a * b.v.column(1)).camax() < 1e-12);
    }

    #[test]
    fn ambiguous_gap_is_flagged() {
        let d = decide_rank(&[1.0, 5e-10, 4.5e-10], 1.0, 1e-10, 1);
        assert_eq!(d.rank, 3);
        assert!(d.ambiguous);
        let clean = decide_rank(&[1.0, 1e-3, 1e-16], 1.0, 1e-10, 3);
        assert_eq!(clean.rank, 2);
        assert!(!clean.ambiguous);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let c = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(psd_factor(&c, DEFAULT_TOL), Err(Error::NotPsd(_))));
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(psd_factor(&z, DEFAULT_TOL).unwrap(), z);
    }

    #[test]
    fn whitener_inverts_covariance() {
        let c = dmatrix![4.0, 1.0; 1.0, 3.0];
        let w = whitener(&c, "c").unwrap();
        let inv = c.clone().try_inverse().unwrap();
        assert!((w.transpose() * &w - inv).amax() < 1e-12);
        assert!(whitener(&dmatrix![1.0, 1.0; 1.0, 1.0], "c").is_err());
    }
}
