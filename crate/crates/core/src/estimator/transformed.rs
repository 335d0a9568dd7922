use nalgebra::{DMatrix, DVector};

use super::banded::{solve_banded, EdgeRows, NodeRows};
use super::{check_data, drive, finish, MapEstimate, Method};
use crate::error::{Error, Result};
use crate::kcf::{check_dims, free_columns, KcfDecomposition};
use crate::linalg;
use crate::model::StochasticDescriptorModel;
use crate::pencil::canonical_matrices;

/// Default prior spread of the free states.
pub const DEFAULT_Q: f64 = 1e8;

/// MAP estimate in canonical coordinates `x = Q x̃`.
///
/// The prior is weighted by `P P₀ Pᵀ`, the dynamics by `P F Fᵀ Pᵀ`, and each
/// free state carries the proper prior `N(μ, q²)` (`μ` defaults to zero). As
/// `q → ∞` the result tends to [`solve_map_batch`](super::solve_map_batch).
pub fn solve_map_transformed(
    model: &StochasticDescriptorModel,
    decomp: &KcfDecomposition,
    y: &[DVector<f64>],
    u: &[DVector<f64>],
    q: f64,
    mu: Option<&DVector<f64>>,
    tol: f64,
) -> Result<MapEstimate> {
    let t = check_data(model, y, u)?;
    let n = model.n();
    check_dims(decomp, model.n_eq(), n)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument("q must be positive and finite".into()));
    }
    let s = &decomp.structure;
    if s.has_o_blocks() {
        return Err(Error::ModelRejected("over-determined blocks constrain the input".into()));
    }
    let free = free_columns(s);
    let mu = match mu {
        Some(m) if m.len() != free.len() => {
            return Err(Error::Dimension(format!("free-state mean must have length {}", free.len())))
        }
        Some(m) => m.clone(),
        None => DVector::zeros(free.len()),
    };

    let p = &decomp.p;
    let (e_t, a_t) = canonical_matrices(s);
    let h_t = model.h() * &decomp.q;
    let p0_t = p * model.p0() * p.transpose();
    let w0 = linalg::whitener(&(0.5 * (&p0_t + p0_t.transpose())), "P P0 P^T")?;
    let wr = linalg::whitener(model.r(), "R")?;
    let wf = if t > 0 {
        let f_t = p * model.f();
        linalg::whitener(&(&f_t * f_t.transpose()), "P F F^T P^T")?
    } else {
        DMatrix::zeros(0, model.n_eq())
    };

    let mut select = DMatrix::zeros(free.len(), n);
    for (i, &c) in free.iter().enumerate() {
        select[(i, c)] = 1.0 / q;
    }
    let mu_scaled = &mu / q;
    let wr_h = &wr * &h_t;
    let nodes: Vec<NodeRows> = (0..=t)
        .map(|k| {
            let mut ms = vec![wr_h.clone(), select.clone()];
            let mut ds = vec![&wr * &y[k], mu_scaled.clone()];
            if k == 0 {
                ms.insert(0, &w0 * &e_t);
                ds.insert(0, &w0 * (p * model.r0bar()));
            }
            NodeRows { m: linalg::stack_rows(&ms), d: linalg::stack(&ds) }
        })
        .collect();
    let wf_a: DMatrix<f64> = -(&wf * &a_t);
    let wf_e = &wf * &e_t;
    let edges: Vec<EdgeRows> = (0..t)
        .map(|k| EdgeRows { c: wf_a.clone(), next: wf_e.clone(), d: &wf * (p * drive(model, u, k)) })
        .collect();
    let sol = solve_banded(n, &nodes, &edges, tol)?;
    let states = sol.states.iter().map(|x| &decomp.q * x).collect();
    finish(model, states, y, u, Method::Transformed, sol.condition)
}
