//! Orthogonal staircase deflation of the right singular structure.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{decide_rank, left_basis, right_basis, singular_values};

const SHIFTS: [f64; 5] = [0.5772156649, -1.2020569, 1.6180339887, -std::f64::consts::FRAC_1_PI, std::f64::consts::E];

/// Orthogonal `p`, `q` putting `(E, A)` into `[[U, *], [0, rest]]` where the
/// leading `rows × cols` block carries exactly the zero columns and U-blocks.
pub(crate) struct Staircase {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub rows: usize,
    pub cols: usize,
    pub eps0: usize,
    /// Block sizes, descending.
    pub eps: Vec<usize>,
}

/// Shift `c` such that `A − cE` has maximal rank with the largest margin.
pub(crate) fn choose_shift(e: &DMatrix<f64>, a: &DMatrix<f64>, tol: f64, dim: usize) -> f64 {
    let score = |c: f64| {
        let s = singular_values(&(a - e * c));
        let r = decide_rank(&s, 1.0, tol, dim).rank;
        (r, if r == 0 { 0.0 } else { s[r - 1] })
    };
    let mut best = SHIFTS[0];
    let mut best_score = score(best);
    for &c in &SHIFTS[1..] {
        let sc = score(c);
        if sc.0 > best_score.0 || (sc.0 == best_score.0 && sc.1 > best_score.1) {
            best = c;
            best_score = sc;
        }
    }
    best
}

fn ambiguous(what: &str, step: usize) -> Error {
    Error::IllConditioned(format!("ambiguous rank decision in {what} at staircase step {step}"))
}

/// Deflate the zero columns and U-blocks of a pencil whose entries are scaled to norm 1.
pub(crate) fn right_staircase(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: f64,
    tol: f64,
    dim: usize,
) -> Result<Staircase> {
    let (m, n) = e.shape();
    let mut ew = e.clone();
    let mut aw = a - e * c;
    let mut p = DMatrix::identity(m, m);
    let mut q = DMatrix::identity(n, n);
    let (mut ro, mut co) = (0, 0);
    let mut ds = Vec::new();
    let mut rs = Vec::new();
    while co < n {
        let k = n - co;
        let sub = aw.view((ro, co), (m - ro, k)).into_owned();
        let basis = right_basis(&sub);
        let dec = decide_rank(&basis.singular, 1.0, tol, dim);
        if dec.ambiguous {
            return Err(ambiguous("the shifted A", ds.len() + 1));
        }
        let d = k - dec.rank;
        if d == 0 {
            break;
        }
        let mut v = DMatrix::zeros(k, k);
        v.columns_mut(0, d).copy_from(&basis.v.columns(dec.rank, d));
        v.columns_mut(d, dec.rank).copy_from(&basis.v.columns(0, dec.rank));
        for mat in [&mut ew, &mut aw, &mut q] {
            let block = mat.columns(co, k) * &v;
            mat.columns_mut(co, k).copy_from(&block);
        }

        let e1 = ew.view((ro, co), (m - ro, d)).into_owned();
        let lb = left_basis(&e1);
        let dr = decide_rank(&lb.singular, 1.0, tol, dim);
        if dr.ambiguous {
            return Err(ambiguous("E", ds.len() + 1));
        }
        let ut = lb.v.transpose();
        for mat in [&mut ew, &mut aw, &mut p] {
            let block = &ut * mat.rows(ro, m - ro);
            mat.rows_mut(ro, m - ro).copy_from(&block);
        }
        ds.push(d);
        rs.push(dr.rank);
        ro += dr.rank;
        co += d;
    }

    let mut eps0 = 0;
    let mut eps = Vec::new();
    for i in 0..ds.len() {
        let next = ds.get(i + 1).copied().unwrap_or(0);
        if rs[i] != next {
            return Err(Error::IllConditioned(format!(
                "inconsistent staircase: step {} has {} rows but {} next columns",
                i + 1,
                rs[i],
                next
            )));
        }
        let count = ds[i] - rs[i];
        if i == 0 {
            eps0 = count;
        } else {
            eps.extend(std::iter::repeat_n(i, count));
        }
    }
    eps.sort_unstable_by(|x, y| y.cmp(x));
    Ok(Staircase { p, q, rows: ro, cols: co, eps0, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::{canonical_matrices, JordanBlock, Eigenvalue, KroneckerStructure};

    #[test]
    fn counts_u_blocks_beside_regular_part() {
        let s = KroneckerStructure {
            eps0: 1,
            eps: vec![2, 1],
            jordan: vec![JordanBlock::new(1, Eigenvalue::Real(0.0))],
            nilpotent: vec![2],
            eta: vec![1],
            ..Default::default()
        };
        let (e, a) = canonical_matrices(&s);
        let dim = e.nrows().max(e.ncols());
        let c = choose_shift(&e, &a, 1e-10, dim);
        let st = right_staircase(&e, &a, c, 1e-10, dim).unwrap();
        assert_eq!(st.eps0, 1);
        assert_eq!(st.eps, vec![2, 1]);
        assert_eq!(st.rows, 3);
        assert_eq!(st.cols, 6);
        let et = &st.p * &e * &st.q;
        let at = &st.p * &a * &st.q;
        let (m, n) = e.shape();
        assert!(et.view((st.rows, 0), (m - st.rows, st.cols)).amax() < 1e-12);
        assert!(at.view((st.rows, 0), (m - st.rows, st.cols)).amax() < 1e-12);
        assert_eq!((m, n), (8, 10));
    }
}
