#![allow(dead_code, clippy::too_many_arguments)]

use descmap::{Eigenvalue, JordanBlock, KroneckerStructure};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha20Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn orthogonal(rng: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let q = qr.q();
    let r = qr.r();
    // fix signs so the distribution is Haar
    let mut out = q.clone();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    out
}

/// `U diag(σ) V` with singular values spread over `[1, cond]`.
pub fn conditioned(rng: &mut ChaCha20Rng, n: usize, cond: f64) -> DMatrix<f64> {
    let u = orthogonal(rng, n);
    let v = orthogonal(rng, n);
    let sig = DVector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            cond.powf(i as f64 / (n - 1) as f64)
        }
    });
    u * DMatrix::from_diagonal(&sig) * v
}

const REAL_EIGS: [f64; 6] = [-0.9, -0.5, 0.0, 0.3, 0.8, 1.5];
const PAIRS: [(f64, f64); 3] = [(-0.4, 0.5), (0.2, 1.0), (0.6, 0.7)];

/// Random structure with block sizes ≤ 3 and at most 12 rows and columns.
pub fn random_structure(rng: &mut ChaCha20Rng) -> KroneckerStructure {
    loop {
        let mut s = KroneckerStructure::default();
        if rng.random_bool(0.2) {
            s.eps0 = 1;
        }
        for _ in 0..rng.random_range(0..=2) {
            s.eps.push(rng.random_range(1..=3));
        }
        for _ in 0..rng.random_range(0..=3) {
            let size = rng.random_range(1..=3);
            let eig = if rng.random_bool(0.25) {
                let (re, im) = PAIRS[rng.random_range(0..PAIRS.len())];
                Eigenvalue::ComplexPair { re, im }
            } else {
                Eigenvalue::Real(REAL_EIGS[rng.random_range(0..REAL_EIGS.len())])
            };
            s.jordan.push(JordanBlock::new(size, eig));
        }
        for _ in 0..rng.random_range(0..=2) {
            s.nilpotent.push(rng.random_range(1..=3));
        }
        if rng.random_bool(0.2) {
            s.eta0 = 1;
        }
        for _ in 0..rng.random_range(0..=2) {
            s.eta.push(rng.random_range(1..=3));
        }
        let (m, n) = s.dims();
        if (1..=12).contains(&m) && (1..=12).contains(&n) {
            return s.canonicalized();
        }
    }
}

/// Roots of `det(λE − A)` for a square pencil with `n ≤ 4`, by interpolating
/// the determinant at `n + 1` points and taking companion-matrix eigenvalues.
pub fn det_roots(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Vec<Complex64> {
    let n = e.nrows();
    let pts: Vec<f64> = (0..=n).map(|i| -1.3 + 0.9 * i as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|&l| (e * l - a).determinant()).collect();
    let vand = DMatrix::from_fn(n + 1, n + 1, |i, j| pts[i].powi(j as i32));
    let coef = vand.lu().solve(&DVector::from_vec(vals)).unwrap();
    let scale = coef.amax();
    let mut deg = n;
    while deg > 0 && coef[deg].abs() <= 1e-9 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coef[i] / coef[deg];
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

/// A validated index-1 causal model with `n ≤ 4`, optionally with one
/// under-determined block, together with its generating structure.
pub struct Case {
    pub model: descmap::StochasticDescriptorModel,
    pub structure: KroneckerStructure,
}

fn spd(rng: &mut ChaCha20Rng, n: usize, cond: f64) -> DMatrix<f64> {
    let u = orthogonal(rng, n);
    let d = DVector::from_fn(n, |i, _| if n == 1 { 1.0 } else { cond.powf(i as f64 / (n - 1) as f64) });
    &u * DMatrix::from_diagonal(&d) * u.transpose()
}

pub fn random_case(rng: &mut ChaCha20Rng, with_u: bool) -> Case {
    loop {
        let mut s = KroneckerStructure::default();
        if with_u {
            if rng.random_bool(0.5) {
                s.eps.push(1);
            } else {
                s.eps0 = 1;
            }
        }
        let jd = rng.random_range(1..=2);
        if jd == 2 && rng.random_bool(0.3) {
            s.jordan.push(JordanBlock::new(1, Eigenvalue::ComplexPair { re: 0.4, im: 0.5 }));
        } else {
            for _ in 0..jd {
                s.jordan.push(JordanBlock::new(1, Eigenvalue::Real(rng.random_range(-0.9..0.9))));
            }
        }
        if rng.random_bool(0.6) {
            s.nilpotent.push(1);
        }
        let s = s.canonicalized();
        let (n_eq, n) = s.dims();
        if n > 4 {
            continue;
        }
        let pencil = descmap::assemble_canonical(&s).unwrap();
        let p0 = conditioned(rng, n_eq, 10.0);
        let q0 = conditioned(rng, n, 10.0);
        let (e, a) = descmap::apply_equivalence(&p0, &q0, &pencil, 1e-12).unwrap().into_parts();
        let rank_e = descmap::linalg::rank(&e, 1e-10);
        let m = (n - rank_e + rng.random_range(0..=1)).clamp(1, n);
        let h = gaussian(rng, m, n);
        let eh = descmap::linalg::stack_rows(&[e.clone(), h.clone()]);
        if descmap::linalg::rank(&eh, 1e-10) < n || descmap::linalg::cond(&eh) > 1e3 {
            continue;
        }
        let model = descmap::StochasticDescriptorModel::new(
            e,
            a,
            gaussian(rng, n_eq, 1),
            conditioned(rng, n_eq, 5.0) * 0.5,
            h,
            spd(rng, m, 4.0) * 0.2,
            gaussian_vec(rng, n_eq),
            spd(rng, n_eq, 4.0),
        )
        .unwrap();
        return Case { model, structure: s };
    }
}

pub fn inputs(rng: &mut ChaCha20Rng, j: usize, horizon: usize) -> Vec<DVector<f64>> {
    (0..=horizon).map(|_| gaussian_vec(rng, j)).collect()
}

/// Measurements from a simulated trajectory.
pub fn simulated(case: &Case, u: &[DVector<f64>], seed: u64) -> Vec<DVector<f64>> {
    let d = descmap::kcf::compute_kcf(&case.model.pencil(), 1e-10).unwrap();
    descmap::sim::simulate(&case.model, &d, u, seed, &descmap::sim::FreeStateSpec::default())
        .unwrap()
        .measurements
}

pub fn max_dev(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let scale = b.iter().map(|v| v.amax()).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max) / scale
}

/// Kalman filter and Rauch–Tung–Striebel smoother for `x_{k+1} = A x_k + B u_k + F w_k`,
/// `x_0 ~ N(r̄₀, P₀)`. Returns `(filtered, smoothed)`.
pub fn kalman_rts(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let qn = f * f.transpose();
    let mut xp = x0.clone();
    let mut pp = p0.clone();
    let (mut xf, mut pf, mut xps, mut pps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..y.len() {
        xps.push(xp.clone());
        pps.push(pp.clone());
        let s = h * &pp * h.transpose() + r;
        let gain = &pp * h.transpose() * s.try_inverse().unwrap();
        let x = &xp + &gain * (&y[k] - h * &xp);
        let n = x.len();
        let ikh = DMatrix::identity(n, n) - &gain * h;
        // Joseph form
        let p = &ikh * &pp * ikh.transpose() + &gain * r * gain.transpose();
        xp = a * &x + b * &u[k];
        pp = a * &p * a.transpose() + &qn;
        xf.push(x);
        pf.push(p);
    }
    let t = y.len() - 1;
    let mut xs = vec![xf[t].clone(); t + 1];
    for k in (0..t).rev() {
        let c = &pf[k] * a.transpose() * pps[k + 1].clone().try_inverse().unwrap();
        xs[k] = &xf[k] + c * (&xs[k + 1] - &xps[k + 1]);
    }
    (xf, xs)
}

/// Scrambled model with one Jordan state (eigenvalue 0.5) and a size-2 nilpotent
/// block. In canonical coordinates the disturbance and input enter the second
/// nilpotent row only when `noncausal` is set.
pub fn index_two(rng: &mut ChaCha20Rng, noncausal: bool) -> descmap::StochasticDescriptorModel {
    let et = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let at = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 1.0]));
    let last = if noncausal { 0.7 } else { 0.0 };
    let bt = DMatrix::from_column_slice(3, 1, &[1.0, 0.4, last]);
    let ft = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.3, 0.2, last, 0.0]);
    let p = conditioned(rng, 3, 5.0);
    let q = conditioned(rng, 3, 5.0);
    descmap::StochasticDescriptorModel::new(
        &p * et * &q,
        &p * at * &q,
        &p * bt,
        &p * ft,
        DMatrix::identity(3, 3),
        DMatrix::identity(3, 3) * 0.1,
        gaussian_vec(rng, 3),
        &p * p.transpose(),
    )
    .unwrap()
}
