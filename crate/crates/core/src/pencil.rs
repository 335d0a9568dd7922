//! Matrix pencils `λE − A` and the four Kronecker block families.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// The pair `(E, A)` of equally shaped real matrices defining `λE − A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPencil {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl MatrixPencil {
    pub fn new(e: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        if e.shape() != a.shape() {
            return Err(Error::Dimension(format!(
                "E is {}x{} but A is {}x{}",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if e.nrows() == 0 || e.ncols() == 0 {
            return Err(Error::Dimension("pencil must have at least one row and one column".into()));
        }
        Ok(Self { e, a })
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Number of equations (rows).
    pub fn n_eq(&self) -> usize {
        self.e.nrows()
    }

    /// Number of unknowns (columns).
    pub fn n(&self) -> usize {
        self.e.ncols()
    }

    /// Evaluate `λE − A`.
    pub fn eval(&self, lambda: f64) -> DMatrix<f64> {
        &self.e * lambda - &self.a
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.e, self.a)
    }
}

/// Finite generalized eigenvalue attached to a Jordan block.
///
/// Conjugate pairs are stored once with a strictly positive imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eigenvalue {
    Real(f64),
    ComplexPair { re: f64, im: f64 },
}

impl Eigenvalue {
    pub fn re(&self) -> f64 {
        match *self {
            Eigenvalue::Real(v) => v,
            Eigenvalue::ComplexPair { re, .. } => re,
        }
    }

    pub fn im(&self) -> f64 {
        match *self {
            Eigenvalue::Real(_) => 0.0,
            Eigenvalue::ComplexPair { im, .. } => im,
        }
    }

    /// Columns occupied per unit of block size (1 for real, 2 for a pair).
    pub fn width(&self) -> usize {
        match self {
            Eigenvalue::Real(_) => 1,
            Eigenvalue::ComplexPair { .. } => 2,
        }
    }

    fn close_to(&self, other: &Eigenvalue, tol: f64) -> bool {
        if self.width() != other.width() {
            return false;
        }
        let scale = 1.0 + self.re().hypot(self.im()).max(other.re().hypot(other.im()));
        (self.re() - other.re()).hypot(self.im() - other.im()) <= tol * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JordanBlock {
    pub size: usize,
    pub eigenvalue: Eigenvalue,
}

impl JordanBlock {
    pub fn new(size: usize, eigenvalue: Eigenvalue) -> Self {
        Self { size, eigenvalue }
    }

    /// Row/column count of the real block.
    pub fn dim(&self) -> usize {
        self.size * self.eigenvalue.width()
    }
}

/// Kronecker indices of a pencil.
///
/// `eps0`/`eta0` count zero columns/rows; `eps`, `nilpotent` and `eta` hold the
/// sizes of the under-determined, nilpotent and over-determined blocks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KroneckerStructure {
    pub eps0: usize,
    pub eps: Vec<usize>,
    pub jordan: Vec<JordanBlock>,
    pub nilpotent: Vec<usize>,
    pub eta0: usize,
    pub eta: Vec<usize>,
}

fn cmp_jordan(x: &JordanBlock, y: &JordanBlock) -> Ordering {
    y.size
        .cmp(&x.size)
        .then(x.eigenvalue.re().total_cmp(&y.eigenvalue.re()))
        .then(x.eigenvalue.im().total_cmp(&y.eigenvalue.im()))
}

impl KroneckerStructure {
    /// Check block sizes and eigenvalue conventions.
    pub fn validate(&self) -> Result<()> {
        if self.eps.iter().chain(&self.nilpotent).chain(&self.eta).any(|&s| s == 0) {
            return Err(Error::InvalidArgument("block sizes must be at least 1".into()));
        }
        for b in &self.jordan {
            if b.size == 0 {
                return Err(Error::InvalidArgument("Jordan block size must be at least 1".into()));
            }
            match b.eigenvalue {
                Eigenvalue::Real(v) if !v.is_finite() => {
                    return Err(Error::InvalidArgument("eigenvalue must be finite".into()))
                }
                Eigenvalue::ComplexPair { re, im } if !(re.is_finite() && im.is_finite() && im > 0.0) => {
                    return Err(Error::InvalidArgument(
                        "complex pair needs finite parts and a positive imaginary part".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Columns taken by the zero columns and U-blocks.
    pub fn u_cols(&self) -> usize {
        self.eps0 + self.eps.iter().map(|e| e + 1).sum::<usize>()
    }

    pub fn u_rows(&self) -> usize {
        self.eps.iter().sum()
    }

    pub fn j_dim(&self) -> usize {
        self.jordan.iter().map(JordanBlock::dim).sum()
    }

    pub fn n_dim(&self) -> usize {
        self.nilpotent.iter().sum()
    }

    pub fn o_cols(&self) -> usize {
        self.eta.iter().sum()
    }

    pub fn o_rows(&self) -> usize {
        self.eta0 + self.eta.iter().map(|e| e + 1).sum::<usize>()
    }

    /// `(n_eq, n)` implied by the blocks.
    pub fn dims(&self) -> (usize, usize) {
        (
            self.u_rows() + self.j_dim() + self.n_dim() + self.o_rows(),
            self.u_cols() + self.j_dim() + self.n_dim() + self.o_cols(),
        )
    }

    /// Column offsets `[U, J, N, O, end]`.
    pub fn col_partition(&self) -> [usize; 5] {
        let u = self.u_cols();
        let j = u + self.j_dim();
        let n = j + self.n_dim();
        [0, u, j, n, n + self.o_cols()]
    }

    /// Row offsets `[U, J, N, O, end]`.
    pub fn row_partition(&self) -> [usize; 5] {
        let u = self.u_rows();
        let j = u + self.j_dim();
        let n = j + self.n_dim();
        [0, u, j, n, n + self.o_rows()]
    }

    pub fn has_u_blocks(&self) -> bool {
        self.eps0 > 0 || !self.eps.is_empty()
    }

    pub fn has_o_blocks(&self) -> bool {
        self.eta0 > 0 || !self.eta.is_empty()
    }

    /// Sort each family into canonical order: decreasing size, ties by
    /// eigenvalue real part then imaginary part.
    pub fn canonicalize(&mut self) {
        self.eps.sort_unstable_by(|a, b| b.cmp(a));
        self.nilpotent.sort_unstable_by(|a, b| b.cmp(a));
        self.eta.sort_unstable_by(|a, b| b.cmp(a));
        self.jordan.sort_by(cmp_jordan);
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// Equality of indices with eigenvalues compared to a relative tolerance.
    pub fn matches(&self, other: &KroneckerStructure, eig_tol: f64) -> bool {
        let a = self.clone().canonicalized();
        let b = other.clone().canonicalized();
        if a.eps0 != b.eps0 || a.eps != b.eps || a.nilpotent != b.nilpotent || a.eta0 != b.eta0 || a.eta != b.eta {
            return false;
        }
        if a.jordan.len() != b.jordan.len() {
            return false;
        }
        // Greedy matching tolerates near-ties that sort differently.
        let mut used = vec![false; b.jordan.len()];
        a.jordan.iter().all(|x| {
            let hit = b.jordan.iter().enumerate().position(|(i, y)| {
                !used[i] && x.size == y.size && x.eigenvalue.close_to(&y.eigenvalue, eig_tol)
            });
            match hit {
                Some(i) => {
                    used[i] = true;
                    true
                }
                None => false,
            }
        })
    }
}

/// Under-determined block: `ε×(ε+1)`, `E = [0 I]`, `A = [I 0]`.
pub fn make_u_block(eps: usize) -> Result<MatrixPencil> {
    if eps < 1 {
        return Err(Error::InvalidArgument("U-block size must be at least 1".into()));
    }
    let (e, a) = u_block(eps);
    MatrixPencil::new(e, a)
}

/// Real Jordan block of size `size` (doubled for a complex pair).
pub fn make_j_block(size: usize, eigenvalue: Eigenvalue) -> Result<MatrixPencil> {
    if size < 1 {
        return Err(Error::InvalidArgument("Jordan block size must be at least 1".into()));
    }
    if let Eigenvalue::ComplexPair { im, .. } = eigenvalue {
        if !(im > 0.0) {
            return Err(Error::InvalidArgument("complex pair needs a positive imaginary part".into()));
        }
    }
    let (e, a) = j_block(&JordanBlock::new(size, eigenvalue));
    MatrixPencil::new(e, a)
}

/// Nilpotent block: `E` is the upper shift, `A = I`.
pub fn make_n_block(size: usize) -> Result<MatrixPencil> {
    if size < 1 {
        return Err(Error::InvalidArgument("nilpotent block size must be at least 1".into()));
    }
    let (e, a) = n_block(size);
    MatrixPencil::new(e, a)
}

/// Over-determined block: `(η+1)×η`, `E = [I; 0]`, `A = [0; I]`.
pub fn make_o_block(eta: usize) -> Result<MatrixPencil> {
    if eta < 1 {
        return Err(Error::InvalidArgument("O-block size must be at least 1".into()));
    }
    let (e, a) = o_block(eta);
    MatrixPencil::new(e, a)
}

pub(crate) fn u_block(eps: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut e = DMatrix::zeros(eps, eps + 1);
    let mut a = DMatrix::zeros(eps, eps + 1);
    for i in 0..eps {
        e[(i, i + 1)] = 1.0;
        a[(i, i)] = 1.0;
    }
    (e, a)
}

pub(crate) fn j_block(block: &JordanBlock) -> (DMatrix<f64>, DMatrix<f64>) {
    let w = block.eigenvalue.width();
    let d = block.dim();
    let e = DMatrix::identity(d, d);
    let mut a = DMatrix::zeros(d, d);
    for k in 0..block.size {
        let o = k * w;
        match block.eigenvalue {
            Eigenvalue::Real(v) => a[(o, o)] = v,
            Eigenvalue::ComplexPair { re, im } => {
                a[(o, o)] = re;
                a[(o, o + 1)] = im;
                a[(o + 1, o)] = -im;
                a[(o + 1, o + 1)] = re;
            }
        }
        if k + 1 < block.size {
            for t in 0..w {
                a[(o + t, o + w + t)] = 1.0;
            }
        }
    }
    (e, a)
}

pub(crate) fn n_block(size: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut e = DMatrix::zeros(size, size);
    for i in 0..size.saturating_sub(1) {
        e[(i, i + 1)] = 1.0;
    }
    (e, DMatrix::identity(size, size))
}

pub(crate) fn o_block(eta: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut e = DMatrix::zeros(eta + 1, eta);
    let mut a = DMatrix::zeros(eta + 1, eta);
    for i in 0..eta {
        e[(i, i)] = 1.0;
        a[(i + 1, i)] = 1.0;
    }
    (e, a)
}

/// Canonical `(Ẽ, Ã)` for a structure; may have zero rows or columns.
pub(crate) fn canonical_matrices(s: &KroneckerStructure) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut es = Vec::new();
    let mut as_ = Vec::new();
    if s.eps0 > 0 {
        es.push(DMatrix::zeros(0, s.eps0));
        as_.push(DMatrix::zeros(0, s.eps0));
    }
    let mut push = |(e, a): (DMatrix<f64>, DMatrix<f64>)| {
        es.push(e);
        as_.push(a);
    };
    s.eps.iter().for_each(|&k| push(u_block(k)));
    s.jordan.iter().for_each(|b| push(j_block(b)));
    s.nilpotent.iter().for_each(|&k| push(n_block(k)));
    s.eta.iter().for_each(|&k| push(o_block(k)));
    if s.eta0 > 0 {
        push((DMatrix::zeros(s.eta0, 0), DMatrix::zeros(s.eta0, 0)));
    }
    (linalg::block_diag(&es), linalg::block_diag(&as_))
}

/// Block-diagonal pencil in the order U (zero columns first), J, N, O (zero rows last).
pub fn assemble_canonical(structure: &KroneckerStructure) -> Result<MatrixPencil> {
    structure.validate()?;
    let (e, a) = canonical_matrices(structure);
    MatrixPencil::new(e, a)
}

/// Strict equivalence `(P E Q, P A Q)`.
pub fn apply_equivalence(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    pencil: &MatrixPencil,
    tol: f64,
) -> Result<MatrixPencil> {
    if !p.is_square() || p.nrows() != pencil.n_eq() {
        return Err(Error::Dimension(format!(
            "P must be {0}x{0}, got {1}x{2}",
            pencil.n_eq(),
            p.nrows(),
            p.ncols()
        )));
    }
    if !q.is_square() || q.nrows() != pencil.n() {
        return Err(Error::Dimension(format!(
            "Q must be {0}x{0}, got {1}x{2}",
            pencil.n(),
            q.nrows(),
            q.ncols()
        )));
    }
    if linalg::rank(p, tol) < p.nrows() {
        return Err(Error::SingularTransform("P is singular".into()));
    }
    if linalg::rank(q, tol) < q.nrows() {
        return Err(Error::SingularTransform("Q is singular".into()));
    }
    MatrixPencil::new(p * pencil.e() * q, p * pencil.a() * q)
}

const PROBE_SEED: u64 = 0x5EED_0F9E_9C11;

/// Regularity test: square and `rank(λE − A) = n` at some probe `λ`.
///
/// Probes are `{0, 1, −1, 2, π}` plus three seeded pseudo-random values.
pub fn is_regular(pencil: &MatrixPencil, tol: f64) -> bool {
    if pencil.n_eq() != pencil.n() {
        return false;
    }
    let n = pencil.n();
    let mut rng = ChaCha20Rng::seed_from_u64(PROBE_SEED);
    let mut probes = vec![0.0, 1.0, -1.0, 2.0, std::f64::consts::PI];
    probes.extend((0..3).map(|_| rng.random_range(-3.0..3.0)));
    let scale = linalg::norm2(pencil.e()).max(linalg::norm2(pencil.a()));
    if scale == 0.0 {
        return false;
    }
    probes.iter().any(|&l| {
        let s = linalg::singular_values(&pencil.eval(l));
        let local = scale * (1.0 + l.abs());
        linalg::decide_rank(&s, local, tol, n).rank == n
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DVector};

    #[test]
    fn u_block_matches_pattern() {
        let p = make_u_block(1).unwrap();
        assert_eq!(p.e(), &dmatrix![0.0, 1.0]);
        assert_eq!(p.a(), &dmatrix![1.0, 0.0]);
        let p = make_u_block(2).unwrap();
        assert_eq!(p.e(), &dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0]);
        assert_eq!(p.a(), &dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0]);
        let v = DVector::from_vec(vec![4.0, 2.0, 1.0]);
        assert_eq!(p.eval(2.0) * v, DVector::zeros(2));
        assert!(make_u_block(0).is_err());
    }

    #[test]
    fn j_block_real_and_complex() {
        let p = make_j_block(1, Eigenvalue::Real(2.0)).unwrap();
        assert_eq!(p.e(), &dmatrix![1.0]);
        assert_eq!(p.a(), &dmatrix![2.0]);
        let alpha = -0.7;
        let p = make_j_block(2, Eigenvalue::Real(alpha)).unwrap();
        assert_eq!(p.a(), &dmatrix![alpha, 1.0; 0.0, alpha]);
        assert_eq!(p.e(), &DMatrix::identity(2, 2));
        let p = make_j_block(1, Eigenvalue::ComplexPair { re: 1.0, im: 3.0 }).unwrap();
        assert_eq!(p.e(), &DMatrix::identity(2, 2));
        assert_eq!(p.a(), &dmatrix![1.0, 3.0; -3.0, 1.0]);
        let p = make_j_block(2, Eigenvalue::ComplexPair { re: 1.0, im: 3.0 }).unwrap();
        assert_eq!(p.a().view((0, 2), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert!(make_j_block(0, Eigenvalue::Real(1.0)).is_err());
        assert!(make_j_block(1, Eigenvalue::ComplexPair { re: 1.0, im: 0.0 }).is_err());
        assert!(make_j_block(1, Eigenvalue::ComplexPair { re: 1.0, im: -2.0 }).is_err());
    }

    #[test]
    fn n_block_nilpotency() {
        let p = make_n_block(1).unwrap();
        assert_eq!(p.e(), &dmatrix![0.0]);
        assert_eq!(p.a(), &dmatrix![1.0]);
        let p = make_n_block(2).unwrap();
        assert_eq!(p.e(), &dmatrix![0.0, 1.0; 0.0, 0.0]);
        assert_eq!(p.a(), &DMatrix::identity(2, 2));
        assert!(p.e().amax() > 0.0);
        assert_eq!(p.e() * p.e(), DMatrix::zeros(2, 2));
        assert!(make_n_block(0).is_err());
    }

    #[test]
    fn o_block_matches_pattern() {
        let p = make_o_block(1).unwrap();
        assert_eq!(p.e(), &dmatrix![1.0; 0.0]);
        assert_eq!(p.a(), &dmatrix![0.0; 1.0]);
        let left = dmatrix![1.0, 5.0];
        assert_eq!(left * p.eval(5.0), DMatrix::zeros(1, 1));
        let p = make_o_block(2).unwrap();
        assert_eq!(p.e(), &dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0]);
        assert_eq!(p.a(), &dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0]);
        assert!(make_o_block(0).is_err());
    }

    #[test]
    fn assemble_examples() {
        let s = KroneckerStructure {
            jordan: vec![
                JordanBlock::new(1, Eigenvalue::Real(2.0)),
                JordanBlock::new(1, Eigenvalue::Real(3.0)),
            ],
            ..Default::default()
        };
        let p = assemble_canonical(&s).unwrap();
        assert_eq!(p.e(), &DMatrix::identity(2, 2));
        assert_eq!(p.a(), &dmatrix![2.0, 0.0; 0.0, 3.0]);

        let s = KroneckerStructure { eps0: 1, eta0: 1, ..Default::default() };
        let p = assemble_canonical(&s).unwrap();
        assert_eq!(p.e(), &dmatrix![0.0]);
        assert_eq!(p.a(), &dmatrix![0.0]);

        // diag(U_1, N_1) assembled by hand: rows [0 1 | 0], [0 0 | 0]; A rows [1 0 | 0], [0 0 | 1]
        let s = KroneckerStructure { eps: vec![1], nilpotent: vec![1], ..Default::default() };
        let p = assemble_canonical(&s).unwrap();
        assert_eq!(p.e(), &dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 0.0]);
        assert_eq!(p.a(), &dmatrix![1.0, 0.0, 0.0; 0.0, 0.0, 1.0]);
        assert_eq!(s.dims(), (2, 3));
    }

    #[test]
    fn equivalence_examples() {
        let p = MatrixPencil::new(dmatrix![1.0], dmatrix![3.0]).unwrap();
        let id = DMatrix::identity(1, 1);
        assert_eq!(apply_equivalence(&id, &id, &p, 1e-10).unwrap(), p);
        let out = apply_equivalence(&dmatrix![2.0], &id, &p, 1e-10).unwrap();
        assert_eq!(out.e(), &dmatrix![2.0]);
        assert_eq!(out.a(), &dmatrix![6.0]);
        assert!(matches!(
            apply_equivalence(&dmatrix![0.0], &id, &p, 1e-10),
            Err(Error::SingularTransform(_))
        ));
        assert!(matches!(
            apply_equivalence(&DMatrix::identity(2, 2), &id, &p, 1e-10),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn regularity_examples() {
        let p = MatrixPencil::new(DMatrix::identity(2, 2), dmatrix![2.0, 0.0; 0.0, 3.0]).unwrap();
        assert!(is_regular(&p, 1e-10));
        let z = MatrixPencil::new(dmatrix![0.0], dmatrix![0.0]).unwrap();
        assert!(!is_regular(&z, 1e-10));
        let u = make_u_block(1).unwrap();
        assert!(!is_regular(&u, 1e-10));
        // regular although A is singular at λ = 0
        let n = MatrixPencil::new(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 0.0; 0.0, 1.0]).unwrap();
        assert!(is_regular(&n, 1e-10));
    }

    #[test]
    fn structure_dims_and_validation() {
        let s = KroneckerStructure {
            eps0: 1,
            eps: vec![2],
            jordan: vec![JordanBlock::new(2, Eigenvalue::ComplexPair { re: 0.1, im: 0.5 })],
            nilpotent: vec![3],
            eta0: 2,
            eta: vec![1],
        };
        assert_eq!(s.dims(), (2 + 4 + 3 + 2 + 2, 1 + 3 + 4 + 3 + 1));
        let p = assemble_canonical(&s).unwrap();
        assert_eq!((p.n_eq(), p.n()), s.dims());
        let bad = KroneckerStructure { eps: vec![0], ..Default::default() };
        assert!(assemble_canonical(&bad).is_err());
    }

    #[test]
    fn mismatched_pencil_rejected() {
        assert!(MatrixPencil::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)).is_err());
        assert!(MatrixPencil::new(DMatrix::zeros(0, 2), DMatrix::zeros(0, 2)).is_err());
    }
}
