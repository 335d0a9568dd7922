use nalgebra::{DMatrix, DVector};

use super::banded::{solve_banded, EdgeRows, NodeRows};
use super::{check_data, drive, finish, whiteners, MapEstimate, Method};
use crate::error::Result;
use crate::linalg;
use crate::model::StochasticDescriptorModel;

/// MAP estimate from the whitened block-bidiagonal least-squares system.
///
/// Needs `P₀`, `R` and (for `T > 0`) `F Fᵀ` positive definite; otherwise
/// [`Error::SingularWeight`](crate::Error::SingularWeight).
pub fn solve_map_batch(
    model: &StochasticDescriptorModel,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    tol: f64,
) -> Result<MapEstimate> {
    let t = check_data(model, y, u)?;
    let w = whiteners(model, t)?;
    let (e, a, h) = (model.e(), model.a(), model.h());
    let wr_h = &w.wr * h;
    let nodes: Vec<NodeRows> = (0..=t)
        .map(|k| {
            let meas = NodeRows { m: wr_h.clone(), d: &w.wr * &y[k] };
            if k == 0 {
                NodeRows {
                    m: linalg::stack_rows(&[&w.w0 * e, meas.m]),
                    d: linalg::stack(&[&w.w0 * model.r0bar(), meas.d]),
                }
            } else {
                meas
            }
        })
        .collect();
    let wf_a: DMatrix<f64> = -(&w.wf * a);
    let wf_e = &w.wf * e;
    let edges: Vec<EdgeRows> = (0..t)
        .map(|k| EdgeRows { c: wf_a.clone(), next: wf_e.clone(), d: &w.wf * drive(model, u, k) })
        .collect();
    let sol = solve_banded(model.n(), &nodes, &edges, tol)?;
    finish(model, sol.states, y, u, Method::Batch, sol.condition)
}
