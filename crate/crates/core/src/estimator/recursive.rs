use nalgebra::{DMatrix, DVector};

use super::{check_data, drive};
use crate::error::{Error, Result};
use crate::linalg::{self, spd_inverse};
use crate::model::StochasticDescriptorModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveEstimate {
    /// `x̂_{k|k}` for `k = 0..T`.
    pub filtered: Vec<DVector<f64>>,
    /// Information matrices `Ω_{k|k}`.
    pub information: Vec<DMatrix<f64>>,
    /// Largest condition number of the information matrices.
    pub condition: f64,
}

impl RecursiveEstimate {
    /// `x̂_{T|T}`, which equals the last state of the batch estimate.
    pub fn final_state(&self) -> &DVector<f64> {
        self.filtered.last().expect("at least one step")
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (&m + m.transpose())
}

/// Forward elimination of the block-tridiagonal normal equations in information
/// form: fuse `y_k`, then marginalize `x_k` against the dynamics to obtain the
/// prior information on `x_{k+1}`. The last measurement is fused on its own.
pub fn solve_recursive(model: &StochasticDescriptorModel, y: &[DVector<f64>], u: &[DVector<f64>]) -> Result<RecursiveEstimate> {
    let t = check_data(model, y, u)?;
    let (e, a, h) = (model.e(), model.a(), model.h());
    let p0_inv = spd_inverse(model.p0(), "P0")?;
    let r_inv = spd_inverse(model.r(), "R")?;
    let w = if t > 0 {
        spd_inverse(&model.process_covariance(), "F F^T")?
    } else {
        DMatrix::zeros(model.n_eq(), model.n_eq())
    };
    let ht_rinv = h.transpose() * &r_inv;
    let omega_meas = &ht_rinv * h;
    let at_w = a.transpose() * &w;
    let et_w = e.transpose() * &w;
    let at_w_a = &at_w * a;
    let et_w_e = &et_w * e;
    let et_w_a = &et_w * a;

    let mut omega = sym(e.transpose() * &p0_inv * e);
    let mut eta = e.transpose() * (&p0_inv * model.r0bar());
    let mut filtered = Vec::with_capacity(t + 1);
    let mut information = Vec::with_capacity(t + 1);
    let mut condition = 1.0_f64;
    for k in 0..=t {
        omega = sym(omega + &omega_meas);
        eta += &ht_rinv * &y[k];
        let chol = omega.clone().cholesky().ok_or_else(|| Error::LossOfInformation {
            step: k,
            message: "information matrix is singular; the state is not estimable".into(),
        })?;
        let c = linalg::cond(&omega);
        if !(c < 1e14) {
            return Err(Error::LossOfInformation { step: k, message: format!("information matrix condition {c:.3e}") });
        }
        condition = condition.max(c);
        filtered.push(chol.solve(&eta));
        information.push(omega.clone());
        if k == t {
            break;
        }
        let bu = drive(model, u, k);
        let s = sym(&omega + &at_w_a);
        let s_chol = s.cholesky().ok_or_else(|| Error::LossOfInformation {
            step: k,
            message: "joint information with the dynamics is singular".into(),
        })?;
        let gain = s_chol.solve(&et_w_a.transpose());
        let shifted = &eta - &at_w * &bu;
        omega = sym(&et_w_e - &et_w_a * &gain);
        eta = &et_w * &bu + gain.transpose() * shifted;
    }
    Ok(RecursiveEstimate { filtered, information, condition })
}
