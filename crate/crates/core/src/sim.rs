//! Consistent stochastic trajectories through the canonical subsystem recursions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kcf::{check_dims, free_columns, partition_transformed, KcfDecomposition};
use crate::linalg::{self, psd_factor};
use crate::model::{check_causality, StochasticDescriptorModel};

/// How the under-determined states `x̃¹_{U,k}` are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum FreeStateSpec {
    /// One vector per time step `0..=T`, each with one entry per free state.
    Given(Vec<DVector<f64>>),
    /// Independent draws from `N(mean, q² I)`; a missing mean is zero.
    Sampled { mean: Option<DVector<f64>>, q: f64 },
}

impl Default for FreeStateSpec {
    fn default() -> Self {
        FreeStateSpec::Sampled { mean: None, q: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0..x_T`.
    pub states: Vec<DVector<f64>>,
    /// `y_0..y_T`.
    pub measurements: Vec<DVector<f64>>,
    /// `u_0..u_T`.
    pub inputs: Vec<DVector<f64>>,
    /// `w_0..w_{T-1}`.
    pub disturbances: Vec<DVector<f64>>,
    /// `w_T`, which only enters the algebraic part of `x_T`.
    pub terminal_disturbance: DVector<f64>,
    /// `v_0..v_T`.
    pub measurement_noise: Vec<DVector<f64>>,
    /// `x̃¹_{U,k}` for `k = 0..T`; empty vectors when there are no free states.
    pub free_states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// `‖E x_{k+1} − A x_k − B u_k − F w_k‖∞` for `k = 0..T-1`.
    pub fn dynamics_residuals(&self, model: &StochasticDescriptorModel) -> Vec<f64> {
        (0..self.horizon())
            .map(|k| {
                let r = model.e() * &self.states[k + 1]
                    - model.a() * &self.states[k]
                    - model.b() * &self.inputs[k]
                    - model.f() * &self.disturbances[k];
                r.amax()
            })
            .collect()
    }

    /// `‖y_k − H x_k − v_k‖∞` for `k = 0..T`.
    pub fn measurement_residuals(&self, model: &StochasticDescriptorModel) -> Vec<f64> {
        (0..self.states.len())
            .map(|k| (&self.measurements[k] - model.h() * &self.states[k] - &self.measurement_noise[k]).amax())
            .collect()
    }
}

fn normals(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// One draw from `N(mean, cov)` through a symmetric factor of `cov`.
pub fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
    let n = mean.len();
    if cov.shape() != (n, n) {
        return Err(Error::Dimension(format!("covariance is {}x{}, expected {n}x{n}", cov.nrows(), cov.ncols())));
    }
    if !linalg::is_symmetric(cov, 1e-10) {
        return Err(Error::NotPsd("covariance is not symmetric".into()));
    }
    let l = psd_factor(cov, linalg::DEFAULT_TOL)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(mean + l * normals(&mut rng, n))
}

/// Simulate `T = u.len() − 1` steps of a causal model without over-determined blocks.
pub fn simulate(
    model: &StochasticDescriptorModel,
    decomp: &KcfDecomposition,
    u: &[DVector<f64>],
    seed: u64,
    free: &FreeStateSpec,
) -> Result<Trajectory> {
    let (n_eq, n) = (model.n_eq(), model.n());
    check_dims(decomp, n_eq, n)?;
    if u.len() < 2 {
        return Err(Error::InvalidArgument("horizon must be at least 1 (two input samples)".into()));
    }
    if let Some(k) = u.iter().position(|v| v.len() != model.n_inputs()) {
        return Err(Error::Dimension(format!(
            "input {k} has length {}, expected {}",
            u[k].len(),
            model.n_inputs()
        )));
    }
    let s = &decomp.structure;
    if s.has_o_blocks() {
        return Err(Error::ModelRejected(format!(
            "over-determined blocks (eta0 = {}, eta = {:?}) constrain the input",
            s.eta0, s.eta
        )));
    }
    let causality = check_causality(model, decomp, linalg::DEFAULT_TOL)?;
    if !causality.causal {
        return Err(Error::ModelRejected(
            "non-causal: the algebraic states depend on future inputs or disturbances".into(),
        ));
    }

    let horizon = u.len() - 1;
    let free_cols = free_columns(s);
    let nf = free_cols.len();
    match free {
        FreeStateSpec::Given(seq) => {
            if seq.len() != horizon + 1 || seq.iter().any(|v| v.len() != nf) {
                return Err(Error::Dimension(format!(
                    "free-state sequence must hold {} vectors of length {nf}",
                    horizon + 1
                )));
            }
        }
        FreeStateSpec::Sampled { mean, q } => {
            if !(q.is_finite() && *q >= 0.0) {
                return Err(Error::InvalidArgument("free-state spread q must be finite and non-negative".into()));
            }
            if mean.as_ref().is_some_and(|m| m.len() != nf) {
                return Err(Error::Dimension(format!("free-state mean must have length {nf}")));
            }
        }
    }

    let ts = partition_transformed(decomp, model.b(), model.f(), model.h())?;
    let c = decomp.col_partition;
    let r = decomp.row_partition;
    let (p, m) = (model.n_disturbances(), model.n_outputs());
    let p0_factor = psd_factor(model.p0(), linalg::DEFAULT_TOL)?;
    let r_factor = psd_factor(model.r(), linalg::DEFAULT_TOL)?;
    // row i of E_U selects the transformed state it determines
    let u_targets: Vec<usize> = (0..ts.e_u.nrows())
        .map(|i| (0..ts.e_u.ncols()).find(|&j| ts.e_u[(i, j)] != 0.0).expect("U rows have a unit entry"))
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let r0 = model.r0bar() + &p0_factor * normals(&mut rng, n_eq);
    let pr0 = &decomp.p * r0;

    let mut free_states = Vec::with_capacity(horizon + 1);
    let mut w = Vec::with_capacity(horizon + 1);
    let mut v = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        free_states.push(match free {
            FreeStateSpec::Given(seq) => seq[k].clone(),
            FreeStateSpec::Sampled { mean, q } => {
                let z = normals(&mut rng, nf) * *q;
                match mean {
                    Some(mu) => mu + z,
                    None => z,
                }
            }
        });
        w.push(normals(&mut rng, p));
        v.push(&r_factor * normals(&mut rng, m));
    }

    let nilpotent = |k: usize| -(&ts.b_n * &u[k]) - &ts.f_n * &w[k];
    let mut xt = DVector::zeros(n);
    for (i, &t) in u_targets.iter().enumerate() {
        xt[t] = pr0[r[0] + i];
    }
    xt.rows_mut(c[1], c[2] - c[1]).copy_from(&pr0.rows(r[1], r[2] - r[1]));
    let mut tilde = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        for (i, &col) in free_cols.iter().enumerate() {
            xt[col] = free_states[k][i];
        }
        xt.rows_mut(c[2], c[3] - c[2]).copy_from(&nilpotent(k));
        tilde.push(xt.clone());
        if k == horizon {
            break;
        }
        let mut next = DVector::zeros(n);
        let drive_u = &ts.a_u * xt.rows(c[0], c[1] - c[0]) + &ts.b_u * &u[k] + &ts.f_u * &w[k];
        for (i, &t) in u_targets.iter().enumerate() {
            next[t] = drive_u[i];
        }
        let xj = xt.rows(c[1], c[2] - c[1]);
        next.rows_mut(c[1], c[2] - c[1]).copy_from(&(&ts.a_j * xj + &ts.b_j * &u[k] + &ts.f_j * &w[k]));
        xt = next;
    }

    let states: Vec<DVector<f64>> = tilde.iter().map(|x| &decomp.q * x).collect();
    let measurements = states.iter().zip(&v).map(|(x, vk)| model.h() * x + vk).collect();
    let terminal_disturbance = w.pop().expect("horizon + 1 draws");
    Ok(Trajectory {
        states,
        measurements,
        inputs: u.to_vec(),
        disturbances: w,
        terminal_disturbance,
        measurement_noise: v,
        free_states,
    })
}
