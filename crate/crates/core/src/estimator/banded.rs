//! Least squares over a chain `x_0..x_T` whose residual rows touch one state
//! (`M_k x_k − d_k`) or two consecutive states (`C_k x_k + D_k x_{k+1} − d_k`),
//! solved by a sweep of Householder factorizations and back substitution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub(crate) struct NodeRows {
    pub m: DMatrix<f64>,
    pub d: DVector<f64>,
}

pub(crate) struct EdgeRows {
    pub c: DMatrix<f64>,
    pub next: DMatrix<f64>,
    pub d: DVector<f64>,
}

pub(crate) struct BandedSolution {
    pub states: Vec<DVector<f64>>,
    pub condition: f64,
}

/// `nodes` has one entry per state and `edges` one per transition.
pub(crate) fn solve_banded(n: usize, nodes: &[NodeRows], edges: &[EdgeRows], tol: f64) -> Result<BandedSolution> {
    let t = nodes.len() - 1;
    debug_assert_eq!(edges.len(), t);
    let scale = nodes
        .iter()
        .map(|r| r.m.norm())
        .chain(edges.iter().map(|r| r.c.norm().max(r.next.norm())))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut carry = DMatrix::<f64>::zeros(0, n + 1);
    let mut pivots: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(t + 1);
    let mut condition = 1.0_f64;
    for k in 0..=t {
        let edge = edges.get(k);
        let width = if edge.is_some() { 2 * n + 1 } else { n + 1 };
        let rhs_col = width - 1;
        let rows = carry.nrows() + nodes[k].m.nrows() + edge.map_or(0, |e| e.c.nrows());
        if rows < n {
            return Err(Error::Unestimable(format!("state {k} is not determined by the data")));
        }
        let mut aug = DMatrix::zeros(rows, width);
        let mut at = 0;
        aug.view_mut((at, 0), (carry.nrows(), n)).copy_from(&carry.columns(0, n));
        aug.view_mut((at, rhs_col), (carry.nrows(), 1)).copy_from(&carry.column(n));
        at += carry.nrows();
        let node = &nodes[k];
        aug.view_mut((at, 0), node.m.shape()).copy_from(&node.m);
        aug.view_mut((at, rhs_col), (node.d.len(), 1)).copy_from(&node.d);
        at += node.m.nrows();
        if let Some(e) = edge {
            aug.view_mut((at, 0), e.c.shape()).copy_from(&e.c);
            aug.view_mut((at, n), e.next.shape()).copy_from(&e.next);
            aug.view_mut((at, rhs_col), (e.d.len(), 1)).copy_from(&e.d);
        }

        let r = aug.qr().unpack_r();
        let rkk = r.view((0, 0), (n, n)).into_owned();
        let s = linalg::singular_values(&rkk);
        let (hi, lo) = (s[0], s[n - 1]);
        if !(lo > tol * scale) {
            return Err(Error::Unestimable(format!(
                "state {k} is not determined by the data (smallest pivot singular value {lo:.3e})"
            )));
        }
        condition = condition.max(hi / lo);
        let coupling = if edge.is_some() {
            r.view((0, n), (n, n)).into_owned()
        } else {
            DMatrix::zeros(n, 0)
        };
        let dk = r.view((0, rhs_col), (n, 1)).column(0).into_owned();
        if edge.is_some() {
            let extra = r.nrows() - n;
            let mut next = DMatrix::zeros(extra, n + 1);
            next.columns_mut(0, n).copy_from(&r.view((n, n), (extra, n)));
            next.column_mut(n).copy_from(&r.view((n, rhs_col), (extra, 1)));
            carry = next;
        }
        pivots.push((rkk, coupling, dk));
    }

    let mut states = vec![DVector::zeros(n); t + 1];
    for k in (0..=t).rev() {
        let (rkk, coupling, dk) = &pivots[k];
        let rhs = if k < t { dk - coupling * &states[k + 1] } else { dk.clone() };
        states[k] = rkk
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Unestimable(format!("state {k} is not determined by the data")))?;
    }
    Ok(BandedSolution { states, condition })
}
