//! Null spaces with prescribed dimension, Weyr characteristics and Jordan chains.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{left_basis, right_basis};

/// Minimum ratio between the smallest kept and the largest dropped singular value.
const GAP: f64 = 1e3;

/// Orthonormal basis of the `dim`-dimensional (numerical) null space of `x`.
///
/// The dimension is imposed; the call fails when the singular values show no
/// clear gap at the cut.
pub(crate) fn forced_null<T>(x: &DMatrix<T>, dim: usize, what: &str) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    let n = x.ncols();
    if dim > n {
        return Err(Error::IllConditioned(format!("{what}: null space larger than the matrix")));
    }
    if dim == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let b = right_basis(x);
    let keep = n - dim;
    let kept = if keep == 0 { f64::INFINITY } else { b.singular.get(keep - 1).copied().unwrap_or(0.0) };
    let dropped = b.singular.get(keep).copied().unwrap_or(0.0);
    if !(kept > GAP * dropped) || kept == 0.0 {
        return Err(Error::IllConditioned(format!(
            "{what}: no gap between singular values {kept:.3e} and {dropped:.3e}"
        )));
    }
    Ok(b.v.columns(keep, dim).into_owned())
}

/// Orthonormal basis for the span of `cols`, which must be linearly independent.
pub(crate) fn independent_span<T>(n: usize, cols: &[DVector<T>], what: &str) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    let s = DMatrix::from_columns(cols);
    let b = left_basis(&s);
    let k = cols.len();
    let lo = b.singular.get(k - 1).copied().unwrap_or(0.0);
    let hi = b.singular.first().copied().unwrap_or(0.0);
    if !(lo > 1e-10 * hi) {
        return Err(Error::IllConditioned(format!("{what}: dependent basis vectors")));
    }
    Ok(b.v.columns(0, k).into_owned())
}

/// Weyr characteristic of `x` at zero: nullities of the successive compressions
/// onto the orthogonal complement of the kernel.
pub(crate) fn weyr<T>(x: &DMatrix<T>, tau: f64) -> Vec<usize>
where
    T: ComplexField<RealField = f64>,
{
    let mut cur = x.clone();
    let mut w = Vec::new();
    while cur.ncols() > 0 {
        let b = right_basis(&cur);
        let rank = b.singular.iter().filter(|&&s| s > tau).count();
        let null = cur.ncols() - rank;
        if null == 0 {
            break;
        }
        w.push(null);
        let v2 = b.v.columns(0, rank).into_owned();
        cur = v2.adjoint() * &cur * &v2;
    }
    w
}

#[cfg(test)]
/// Block sizes (descending) encoded by a Weyr characteristic.
pub(crate) fn weyr_sizes(w: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::new();
    for s in (1..=w.len()).rev() {
        let count = w[s - 1] - w.get(s).copied().unwrap_or(0);
        sizes.extend(std::iter::repeat_n(s, count));
    }
    sizes
}

pub(crate) fn weyr_is_partition(w: &[usize]) -> bool {
    w.windows(2).all(|p| p[0] >= p[1])
}

/// Jordan basis of a nilpotent `x` with known Weyr characteristic.
///
/// Returns `S` and chain lengths (descending) with `x S = S N`, `N` having ones
/// on the superdiagonal inside each chain. `S` has as many columns as the Weyr
/// characteristic sums to.
pub(crate) fn jordan_basis<T>(x: &DMatrix<T>, w: &[usize]) -> Result<(DMatrix<T>, Vec<usize>)>
where
    T: ComplexField<RealField = f64>,
{
    let n = x.nrows();
    let k = w.len();
    let mut dims = vec![0];
    for &wi in w {
        dims.push(dims.last().unwrap() + wi);
    }
    if dims[k] > n {
        return Err(Error::IllConditioned("Weyr characteristic exceeds the block".into()));
    }
    let mut kern = vec![DMatrix::<T>::zeros(n, 0)];
    let mut pow = DMatrix::<T>::identity(n, n);
    for &d in &dims[1..] {
        pow = &pow * x;
        kern.push(forced_null(&pow, d, "Jordan kernel")?);
    }

    // Each chain is stored top first: [v, Xv, ..., X^{s-1} v].
    let mut chains: Vec<Vec<DVector<T>>> = Vec::new();
    for s in (1..=k).rev() {
        let count = w[s - 1] - w.get(s).copied().unwrap_or(0);
        if count == 0 {
            continue;
        }
        let mut cols: Vec<DVector<T>> = kern[s - 1].column_iter().map(|c| c.into_owned()).collect();
        for ch in &chains {
            cols.push(ch[ch.len() - s].clone());
        }
        let span = independent_span(n, &cols, "Jordan chain")?;
        let c = &kern[s] - &span * (span.adjoint() * &kern[s]);
        let lb = left_basis(&c);
        if lb.singular.get(count - 1).copied().unwrap_or(0.0) <= 1e-8 {
            return Err(Error::IllConditioned("Jordan chain heads are dependent".into()));
        }
        for j in 0..count {
            let mut v = lb.v.column(j).into_owned();
            let mut chain = vec![v.clone()];
            for _ in 1..s {
                v = x * v;
                chain.push(v.clone());
            }
            chains.push(chain);
        }
    }

    let mut basis = DMatrix::<T>::zeros(n, dims[k]);
    let mut sizes = Vec::with_capacity(chains.len());
    let mut at = 0;
    for ch in &chains {
        for (i, v) in ch.iter().rev().enumerate() {
            basis.set_column(at + i, v);
        }
        at += ch.len();
        sizes.push(ch.len());
    }
    Ok((basis, sizes))
}
