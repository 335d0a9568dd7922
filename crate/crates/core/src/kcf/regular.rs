//! Real Jordan / nilpotent form of a regular square pencil.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::jordan::{forced_null, independent_span, jordan_basis, weyr, weyr_is_partition};
use crate::error::{Error, Result};
use crate::linalg::{self, block_diag};
use crate::pencil::{Eigenvalue, JordanBlock};

/// Largest regular part handled by chain extraction.
pub const MAX_REGULAR_DIM: usize = 32;

/// Clustering radii tried from coarse to fine; a radius is accepted once every
/// cluster is consistent with a single eigenvalue.
const CLUSTER_TOLS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

const SHIFTS: [f64; 5] = [0.5772156649, -1.2020569032, 1.6180339887, -std::f64::consts::FRAC_1_PI, std::f64::consts::E];

pub(crate) struct RegularForm {
    /// `p E q` is the block diagonal of `jordan` followed by `nilpotent`.
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub jordan: Vec<JordanBlock>,
    pub nilpotent: Vec<usize>,
}

#[derive(Debug, Clone)]
enum ClusterKind {
    Infinite,
    Real(f64),
    Complex(Complex64),
}

#[derive(Debug, Clone)]
struct Cluster {
    kind: ClusterKind,
    /// Algebraic multiplicity (a conjugate pair counts once).
    size: usize,
    weyr: Vec<usize>,
}

impl Cluster {
    fn dim(&self) -> usize {
        match self.kind {
            ClusterKind::Complex(_) => 2 * self.size,
            _ => self.size,
        }
    }
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn shifted(m: &DMatrix<f64>, mu: Complex64) -> DMatrix<Complex64> {
    to_complex(m) - DMatrix::<Complex64>::identity(m.nrows(), m.ncols()) * mu
}

fn single_linkage(eigs: &[Complex64], t: f64) -> Vec<Vec<usize>> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let radius = t * (1.0 + eigs[i].norm().max(eigs[j].norm()));
            if (eigs[i] - eigs[j]).norm() <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_of[r]].push(i);
    }
    groups
}

/// Group the eigenvalues of `m` at radius `t` and validate each group.
fn clusters_at(m: &DMatrix<f64>, eigs: &[Complex64], t: f64, tau: f64) -> Option<Vec<Cluster>> {
    let mut out = Vec::new();
    let mut lower = Vec::new();
    for g in single_linkage(eigs, t) {
        let mean = g.iter().map(|&i| eigs[i]).sum::<Complex64>() / g.len() as f64;
        let radius = t * (1.0 + mean.norm());
        if mean.im < -radius {
            lower.push((mean.conj(), g.len()));
            continue;
        }
        let complex = mean.im > radius;
        if !complex && mean.norm() <= radius {
            if let Some(w) = consistent(weyr(m, tau), g.len()) {
                out.push(Cluster { kind: ClusterKind::Infinite, size: g.len(), weyr: w });
                continue;
            }
        }
        let mu = if complex { mean } else { Complex64::new(mean.re, 0.0) };
        let w = consistent(weyr(&shifted(m, mu), tau), g.len())?;
        let kind = if complex { ClusterKind::Complex(mu) } else { ClusterKind::Real(mu.re) };
        out.push(Cluster { kind, size: g.len(), weyr: w });
    }
    // every upper complex cluster needs a conjugate partner of equal size
    let mut uppers: Vec<(Complex64, usize)> = out
        .iter()
        .filter_map(|c| match c.kind {
            ClusterKind::Complex(mu) => Some((mu, c.size)),
            _ => None,
        })
        .collect();
    if uppers.len() != lower.len() {
        return None;
    }
    for (mu, size) in lower {
        let pos = uppers
            .iter()
            .position(|&(u, s)| s == size && (u - mu).norm() <= t * (1.0 + u.norm()) * size as f64 * 4.0)?;
        uppers.swap_remove(pos);
    }
    Some(out)
}

fn consistent(w: Vec<usize>, size: usize) -> Option<Vec<usize>> {
    (w.iter().sum::<usize>() == size && weyr_is_partition(&w)).then_some(w)
}

/// Real orthonormal basis of the invariant subspace belonging to a cluster.
fn invariant_subspace(m: &DMatrix<f64>, c: &Cluster) -> Result<DMatrix<f64>> {
    let k = c.weyr.len();
    let n = m.nrows();
    match c.kind {
        ClusterKind::Infinite | ClusterKind::Real(_) => {
            let mu = match c.kind {
                ClusterKind::Real(v) => v,
                _ => 0.0,
            };
            let x = m - DMatrix::identity(n, n) * mu;
            let mut pow = DMatrix::identity(n, n);
            for _ in 0..k {
                pow = &pow * &x;
            }
            forced_null(&pow, c.size, "generalized eigenspace")
        }
        ClusterKind::Complex(mu) => {
            let x = shifted(m, mu);
            let mut pow = DMatrix::<Complex64>::identity(n, n);
            for _ in 0..k {
                pow = &pow * &x;
            }
            let z = forced_null(&pow, c.size, "generalized eigenspace")?;
            let cols: Vec<_> = z
                .column_iter()
                .flat_map(|col| [col.map(|v| v.re), col.map(|v| v.im)])
                .collect();
            independent_span(n, &cols, "real invariant subspace")
        }
    }
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    if linalg::cond(m) > 1e12 {
        return Err(Error::IllConditioned(format!("{what} is numerically singular")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned(format!("{what} is singular")))
}

enum Piece {
    Jordan(JordanBlock),
    Nilpotent(usize),
}

impl Piece {
    fn dim(&self) -> usize {
        match self {
            Piece::Jordan(b) => b.dim(),
            Piece::Nilpotent(s) => *s,
        }
    }
}

struct BlockForm {
    p: DMatrix<f64>,
    s: DMatrix<f64>,
    pieces: Vec<Piece>,
}

fn block_form(e: &DMatrix<f64>, a: &DMatrix<f64>, c: &Cluster) -> Result<BlockForm> {
    let d = e.nrows();
    match c.kind {
        ClusterKind::Infinite => {
            let a_inv = inverse(a, "infinite block")?;
            let x = &a_inv * e;
            let (s, sizes) = jordan_basis(&x, &c.weyr)?;
            let p = inverse(&s, "nilpotent basis")? * a_inv;
            Ok(BlockForm { p, s, pieces: sizes.into_iter().map(Piece::Nilpotent).collect() })
        }
        ClusterKind::Real(_) => {
            let e_inv = inverse(e, "finite block")?;
            let y = &e_inv * a;
            let lambda = y.trace() / d as f64;
            let x = &y - DMatrix::identity(d, d) * lambda;
            let (s, sizes) = jordan_basis(&x, &c.weyr)?;
            let p = inverse(&s, "Jordan basis")? * e_inv;
            let pieces = sizes
                .into_iter()
                .map(|n| Piece::Jordan(JordanBlock::new(n, Eigenvalue::Real(lambda))))
                .collect();
            Ok(BlockForm { p, s, pieces })
        }
        ClusterKind::Complex(_) => {
            let e_inv = inverse(e, "finite block")?;
            let y = &e_inv * a;
            let eigs = linalg::eigenvalues(&y)?;
            let upper: Vec<f64> = eigs.iter().filter(|z| z.im > 0.0).map(|z| z.im).collect();
            if upper.len() != c.size {
                return Err(Error::IllConditioned("complex eigenvalue pairs lost in block".into()));
            }
            let lambda = Complex64::new(y.trace() / d as f64, upper.iter().sum::<f64>() / c.size as f64);
            let x = shifted(&y, lambda);
            let (z, sizes) = jordan_basis(&x, &c.weyr)?;
            let mut s = DMatrix::zeros(d, d);
            for (j, col) in z.column_iter().enumerate() {
                s.set_column(2 * j, &col.map(|v| v.re));
                s.set_column(2 * j + 1, &col.map(|v| v.im));
            }
            let p = inverse(&s, "real Jordan basis")? * e_inv;
            let eig = Eigenvalue::ComplexPair { re: lambda.re, im: lambda.im };
            let pieces = sizes.into_iter().map(|n| Piece::Jordan(JordanBlock::new(n, eig))).collect();
            Ok(BlockForm { p, s, pieces })
        }
    }
}

/// Reduce a regular pencil `(e, a)` to `diag(J, N)` with sorted blocks.
pub(crate) fn regular_form(e: &DMatrix<f64>, a: &DMatrix<f64>, tol: f64) -> Result<RegularForm> {
    let n = e.nrows();
    if n == 0 {
        return Ok(RegularForm { p: e.clone(), q: e.clone(), jordan: Vec::new(), nilpotent: Vec::new() });
    }
    if n > MAX_REGULAR_DIM {
        return Err(Error::IllConditioned(format!(
            "regular part of dimension {n} exceeds the supported {MAX_REGULAR_DIM}"
        )));
    }
    let rcond = |w: &DMatrix<f64>| {
        let s = linalg::singular_values(w);
        s.last().copied().unwrap_or(0.0) / s.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE)
    };
    let c = SHIFTS
        .iter()
        .copied()
        .max_by(|&x, &y| rcond(&(a - e * x)).total_cmp(&rcond(&(a - e * y))))
        .unwrap();
    let w = a - e * c;
    if rcond(&w) < 1e-10 {
        return Err(Error::IllConditioned("regular part is close to singular".into()));
    }
    let w_inv = inverse(&w, "shifted pencil")?;
    let m = &w_inv * e;
    let eigs = linalg::eigenvalues(&m)?;
    let tau = (100.0 * tol).max(1e-12) * linalg::norm2(&m).max(1.0);

    let clusters = CLUSTER_TOLS
        .iter()
        .find_map(|&t| clusters_at(&m, &eigs, t, tau))
        .ok_or_else(|| Error::IllConditioned("eigenvalue clusters are inconsistent with a Jordan structure".into()))?;

    let bases = clusters.iter().map(|c| invariant_subspace(&m, c)).collect::<Result<Vec<_>>>()?;
    let cols: Vec<_> = bases.iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect();
    let v = DMatrix::from_columns(&cols);
    if v.ncols() != n {
        return Err(Error::IllConditioned("invariant subspaces do not span the regular part".into()));
    }
    let wv_inv = inverse(&(&w * &v), "cluster basis")?;
    let e1 = &wv_inv * e * &v;
    let a1 = &wv_inv * a * &v;

    let mut ps = Vec::new();
    let mut ss = Vec::new();
    let mut pieces = Vec::new();
    let mut at = 0;
    for c in &clusters {
        let d = c.dim();
        let eb = e1.view((at, at), (d, d)).into_owned();
        let ab = a1.view((at, at), (d, d)).into_owned();
        let f = block_form(&eb, &ab, c)?;
        ps.push(f.p);
        ss.push(f.s);
        pieces.extend(f.pieces);
        at += d;
    }
    let p = block_diag(&ps) * wv_inv;
    let q = v * block_diag(&ss);

    // canonical order: Jordan blocks sorted, then nilpotent blocks by size
    let mut offsets = Vec::with_capacity(pieces.len());
    let mut off = 0;
    for pc in &pieces {
        offsets.push(off);
        off += pc.dim();
    }
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&i, &j| match (&pieces[i], &pieces[j]) {
        (Piece::Jordan(x), Piece::Jordan(y)) => y
            .size
            .cmp(&x.size)
            .then(x.eigenvalue.re().total_cmp(&y.eigenvalue.re()))
            .then(x.eigenvalue.im().total_cmp(&y.eigenvalue.im())),
        (Piece::Jordan(_), Piece::Nilpotent(_)) => std::cmp::Ordering::Less,
        (Piece::Nilpotent(_), Piece::Jordan(_)) => std::cmp::Ordering::Greater,
        (Piece::Nilpotent(x), Piece::Nilpotent(y)) => y.cmp(x),
    });
    let mut perm = Vec::with_capacity(n);
    let mut jordan = Vec::new();
    let mut nilpotent = Vec::new();
    for &i in &order {
        perm.extend(offsets[i]..offsets[i] + pieces[i].dim());
        match &pieces[i] {
            Piece::Jordan(b) => jordan.push(*b),
            Piece::Nilpotent(s) => nilpotent.push(*s),
        }
    }
    let p = DMatrix::from_fn(n, n, |r, col| p[(perm[r], col)]);
    let q = DMatrix::from_fn(n, n, |r, col| q[(r, perm[col])]);
    Ok(RegularForm { p, q, jordan, nilpotent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::{canonical_matrices, KroneckerStructure};
    use nalgebra::dmatrix;

    fn check(s: &KroneckerStructure, t: &DMatrix<f64>, z: &DMatrix<f64>) {
        let (ec, ac) = canonical_matrices(s);
        let e = t * &ec * z;
        let a = t * &ac * z;
        let f = regular_form(&e, &a, 1e-10).unwrap();
        let got = KroneckerStructure { jordan: f.jordan.clone(), nilpotent: f.nilpotent.clone(), ..Default::default() };
        assert!(got.matches(s, 1e-6), "{got:?} vs {s:?}");
        let (ge, ga) = canonical_matrices(&got);
        assert!((&f.p * &e * &f.q - ge).amax() < 1e-8);
        assert!((&f.p * &a * &f.q - ga).amax() < 1e-8);
    }

    #[test]
    fn diagonal_and_defective() {
        let s = KroneckerStructure {
            jordan: vec![JordanBlock::new(2, Eigenvalue::Real(0.5)), JordanBlock::new(1, Eigenvalue::Real(-1.0))],
            nilpotent: vec![2],
            ..Default::default()
        };
        let t = dmatrix![1.0, 0.2, 0.0, 0.1, 0.0; 0.3, 1.0, 0.1, 0.0, 0.2; 0.0, 0.4, 1.0, 0.3, 0.0; 0.1, 0.0, 0.2, 1.0, 0.5; 0.0, 0.3, 0.0, 0.2, 1.0];
        let z = t.transpose() + DMatrix::identity(5, 5) * 0.5;
        check(&s, &t, &z);
    }

    #[test]
    fn complex_pair_block() {
        let s = KroneckerStructure {
            jordan: vec![
                JordanBlock::new(2, Eigenvalue::ComplexPair { re: 0.3, im: 0.8 }),
                JordanBlock::new(1, Eigenvalue::Real(0.0)),
            ],
            nilpotent: vec![1],
            ..Default::default()
        };
        let n = 6;
        let t = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { ((i * 7 + j * 3) % 5) as f64 * 0.1 });
        let z = DMatrix::from_fn(n, n, |i, j| if i == j { 1.5 } else { ((i * 2 + j * 5) % 7) as f64 * 0.07 });
        check(&s, &t, &z);
    }
}
