//! Stochastic descriptor model `E x_{k+1} = A x_k + B u_k + F w_k`,
//! `y_k = H x_k + v_k`, `E x_0 ~ N(r̄₀, P₀)`, and its well-posedness checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kcf::{compute_kcf, nilpotency_index, partition_transformed, KcfDecomposition};
use crate::linalg::{self, is_symmetric, psd_factor, rank};
use crate::pencil::{KroneckerStructure, MatrixPencil};

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticDescriptorModel {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    r0bar: DVector<f64>,
    p0: DMatrix<f64>,
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl StochasticDescriptorModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        e: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        r0bar: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let (n_eq, n) = e.shape();
        if n_eq == 0 || n == 0 {
            return Err(Error::Dimension("E must have at least one row and one column".into()));
        }
        check_shape("A", &a, n_eq, n)?;
        check_shape("B", &b, n_eq, b.ncols())?;
        check_shape("F", &f, n_eq, f.ncols())?;
        check_shape("H", &h, h.nrows(), n)?;
        let m = h.nrows();
        check_shape("R", &r, m, m)?;
        check_shape("P0", &p0, n_eq, n_eq)?;
        if r0bar.len() != n_eq {
            return Err(Error::Dimension(format!("r0bar has length {}, expected {n_eq}", r0bar.len())));
        }
        if r0bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("r0bar has non-finite entries".into()));
        }
        if !is_symmetric(&r, 1e-10) {
            return Err(Error::NotPsd("R is not symmetric".into()));
        }
        if m > 0 && r.clone().cholesky().is_none() {
            return Err(Error::SingularWeight("R must be positive definite".into()));
        }
        if !is_symmetric(&p0, 1e-10) {
            return Err(Error::NotPsd("P0 is not symmetric".into()));
        }
        psd_factor(&p0, linalg::DEFAULT_TOL).map_err(|_| Error::NotPsd("P0 has a negative eigenvalue".into()))?;
        Ok(Self { e, a, b, f, h, r, r0bar, p0 })
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r0bar(&self) -> &DVector<f64> {
        &self.r0bar
    }

    pub fn p0(&self) -> &DMatrix<f64> {
        &self.p0
    }

    pub fn n_eq(&self) -> usize {
        self.e.nrows()
    }

    pub fn n(&self) -> usize {
        self.e.ncols()
    }

    /// Input dimension `j`.
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Disturbance dimension `p`.
    pub fn n_disturbances(&self) -> usize {
        self.f.ncols()
    }

    /// Measurement dimension `m`.
    pub fn n_outputs(&self) -> usize {
        self.h.nrows()
    }

    pub fn pencil(&self) -> MatrixPencil {
        MatrixPencil::new(self.e.clone(), self.a.clone()).expect("model dimensions are checked")
    }

    pub fn p0_definite(&self) -> bool {
        linalg::whitener(&self.p0, "P0").is_ok()
    }

    /// `F F^T`, the covariance of the dynamics residual.
    pub fn process_covariance(&self) -> DMatrix<f64> {
        &self.f * self.f.transpose()
    }

    /// Replace the disturbance map.
    pub fn with_f(&self, f: DMatrix<f64>) -> Result<Self> {
        check_shape("F", &f, self.n_eq(), f.ncols())?;
        Ok(Self { f, ..self.clone() })
    }

    /// Model in the coordinates `x = Q x̃` with equations premultiplied by `P`.
    pub fn transformed(&self, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Self> {
        check_shape("P", p, self.n_eq(), self.n_eq())?;
        check_shape("Q", q, self.n(), self.n())?;
        let p0 = p * &self.p0 * p.transpose();
        let p0 = 0.5 * (&p0 + p0.transpose());
        Self::new(
            p * &self.e * q,
            p * &self.a * q,
            p * &self.b,
            p * &self.f,
            &self.h * q,
            self.r.clone(),
            p * &self.r0bar,
            p0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityWitness {
    /// Power `i` of `E_N`.
    pub power: usize,
    pub norm_b: f64,
    pub norm_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityCheck {
    pub causal: bool,
    pub witnesses: Vec<CausalityWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `[E A]` has full row rank.
    pub row_rank_ok: bool,
    /// `[E; H]` has full column rank.
    pub estimable_global: bool,
    /// `[E_U; H_U]` has full column rank over the under-determined blocks.
    pub estimable_u_blocks: bool,
    pub f_full_col_rank: bool,
    pub index: usize,
    pub causal: bool,
    pub overdetermined_blocks_present: bool,
    pub p0_definite: bool,
    pub structure: KroneckerStructure,
    pub causality_witnesses: Vec<CausalityWitness>,
    pub diagnostics: Vec<String>,
}

impl ValidationReport {
    /// Whether the model defines a well-posed estimation problem.
    pub fn well_posed(&self) -> bool {
        self.row_rank_ok && !self.overdetermined_blocks_present && self.estimable_u_blocks && self.causal
    }
}

fn threshold(tol: f64, p: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    (100.0 * tol).max(1e-8) * (linalg::norm2(p) * linalg::norm2(x)).max(1.0)
}

/// Causality of the nilpotent subsystem: `E_N^i B_N` and `E_N^i F_N` must
/// vanish for `1 ≤ i < ν_d`. Index at most one is always causal.
pub fn check_causality(model: &StochasticDescriptorModel, decomp: &KcfDecomposition, tol: f64) -> Result<CausalityCheck> {
    let ts = partition_transformed(decomp, model.b(), model.f(), model.h())?;
    let index = nilpotency_index(decomp);
    let tb = threshold(tol, &decomp.p, model.b());
    let tf = threshold(tol, &decomp.p, model.f());
    let mut witnesses = Vec::new();
    let mut causal = true;
    let mut pow = ts.e_n.clone();
    for i in 1..index {
        let norm_b = linalg::norm2(&(&pow * &ts.b_n));
        let norm_f = linalg::norm2(&(&pow * &ts.f_n));
        if norm_b > tb || norm_f > tf {
            causal = false;
        }
        witnesses.push(CausalityWitness { power: i, norm_b, norm_f });
        pow = &pow * &ts.e_n;
    }
    Ok(CausalityCheck { causal, witnesses })
}

/// Well-posedness, estimableness and causality findings for a model.
pub fn validate(model: &StochasticDescriptorModel, tol: f64) -> Result<ValidationReport> {
    let decomp = compute_kcf(&model.pencil(), tol)?;
    validate_with(model, &decomp, tol)
}

/// As [`validate`], reusing a decomposition of `(E, A)`.
pub fn validate_with(model: &StochasticDescriptorModel, decomp: &KcfDecomposition, tol: f64) -> Result<ValidationReport> {
    let (n_eq, n) = (model.n_eq(), model.n());
    let s = &decomp.structure;
    let mut diagnostics = Vec::new();

    let ea = DMatrix::from_fn(n_eq, 2 * n, |i, j| if j < n { model.e[(i, j)] } else { model.a[(i, j - n)] });
    let row_rank = rank(&ea, tol);
    let row_rank_ok = row_rank == n_eq;
    if !row_rank_ok {
        diagnostics.push(format!("[E A] has rank {row_rank}, fewer than its {n_eq} rows"));
    }

    let eh = linalg::stack_rows(&[model.e.clone(), model.h.clone()]);
    let global_rank = rank(&eh, tol);
    let estimable_global = global_rank == n;
    if !estimable_global {
        diagnostics.push(format!("[E; H] has rank {global_rank}, fewer than its {n} columns"));
    }

    let ts = partition_transformed(decomp, model.b(), model.f(), model.h())?;
    let u_cols = s.u_cols();
    let estimable_u_blocks = if u_cols == 0 {
        true
    } else {
        let ok = rank(&linalg::stack_rows(&[ts.e_u.clone(), ts.h_u.clone()]), tol) == u_cols;
        if !ok {
            diagnostics.push(format!(
                "the {u_cols} under-determined states are not covered by measurements ([E_U; H_U] is column rank deficient)"
            ));
        }
        ok
    };

    let f_rank = rank(model.f(), tol);
    let f_full_col_rank = f_rank == model.n_disturbances();
    if !f_full_col_rank {
        diagnostics.push(format!(
            "F has rank {f_rank} with {} columns; reduce_f gives an equivalent full column rank map",
            model.n_disturbances()
        ));
    }

    let overdetermined_blocks_present = s.has_o_blocks();
    if overdetermined_blocks_present {
        let r = decomp.row_partition;
        diagnostics.push(format!(
            "transformed rows {}..{} form over-determined blocks (eta0 = {}, eta = {:?}); \
             each such row imposes a constraint on the input and disturbance",
            r[3],
            r[4],
            s.eta0,
            s.eta
        ));
    }

    let p0_definite = model.p0_definite();
    if !p0_definite {
        diagnostics.push("P0 is only positive semidefinite; its pseudo-inverse weights the prior".into());
    }

    let index = nilpotency_index(decomp);
    if index > 1 {
        diagnostics.push(format!("descriptor index is {index}"));
    }
    let causality = check_causality(model, decomp, tol)?;
    if !causality.causal {
        for w in &causality.witnesses {
            diagnostics.push(format!(
                "non-causal: |E_N^{} B_N| = {:.3e}, |E_N^{} F_N| = {:.3e}",
                w.power, w.norm_b, w.power, w.norm_f
            ));
        }
    }

    Ok(ValidationReport {
        row_rank_ok,
        estimable_global,
        estimable_u_blocks,
        f_full_col_rank,
        index,
        causal: causality.causal,
        overdetermined_blocks_present,
        p0_definite,
        structure: s.clone(),
        causality_witnesses: causality.witnesses,
        diagnostics,
    })
}

/// Replace `F` by a full column rank `F'` with `F' F'^T = F F^T`.
///
/// Returns the reduced model and the map `Q₁` (rows orthonormal) with
/// `F = F' Q₁`, so that `w' = Q₁ w` is again standard normal.
pub fn reduce_f(model: &StochasticDescriptorModel, tol: f64) -> (StochasticDescriptorModel, DMatrix<f64>) {
    let p = model.n_disturbances();
    let f = model.f();
    let r = rank(f, tol);
    if r == p {
        return (model.clone(), DMatrix::identity(p, p));
    }
    let svd = linalg::svd(f, false, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let vt = svd.v_t.as_ref().expect("right vectors requested");
    let mut fr = DMatrix::zeros(model.n_eq(), r);
    let mut q1 = DMatrix::zeros(r, p);
    for (c, &i) in order.iter().take(r).enumerate() {
        let mut row = vt.row(i).into_owned();
        let mut col = f * row.transpose();
        // sign convention: the largest entry of each column of F' is positive
        let big = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            col.neg_mut();
            row.neg_mut();
        }
        fr.set_column(c, &col);
        q1.set_row(c, &row);
    }
    let reduced = model.with_f(fr).expect("row count unchanged");
    (reduced, q1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::{make_n_block, make_o_block};
    use nalgebra::{dmatrix, dvector};

    fn scalar(e: f64, a: f64) -> StochasticDescriptorModel {
        StochasticDescriptorModel::new(
            dmatrix![e],
            dmatrix![a],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dvector![0.0],
            dmatrix![1.0],
        )
        .unwrap()
    }

    #[test]
    fn ordinary_state_space_passes() {
        let r = validate(&scalar(1.0, 0.9), 1e-10).unwrap();
        assert!(r.row_rank_ok && r.estimable_global && r.estimable_u_blocks && r.f_full_col_rank);
        assert!(r.causal && !r.overdetermined_blocks_present && r.well_posed());
        assert_eq!(r.index, 0);
    }

    #[test]
    fn o_block_is_rejected() {
        let (e, a) = make_o_block(1).unwrap().into_parts();
        let m = StochasticDescriptorModel::new(
            e,
            a,
            dmatrix![1.0; 0.0],
            dmatrix![1.0, 0.0; 0.0, 1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dvector![0.0, 0.0],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let r = validate(&m, 1e-10).unwrap();
        assert!(r.overdetermined_blocks_present);
        assert!(!r.well_posed());
    }

    #[test]
    fn unmeasured_algebraic_state_fails_global_rank_only() {
        let m = StochasticDescriptorModel::new(
            dmatrix![1.0, 0.0; 0.0, 0.0],
            dmatrix![0.0, 0.0; 0.0, 1.0],
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
            dmatrix![1.0, 0.0],
            dmatrix![1.0],
            dvector![0.0, 0.0],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let r = validate(&m, 1e-10).unwrap();
        assert!(!r.estimable_global);
        assert!(r.estimable_u_blocks);
        assert!(r.structure.eps.is_empty() && r.structure.eps0 == 0);
    }

    fn nilpotent_model(b: DMatrix<f64>, f: DMatrix<f64>) -> StochasticDescriptorModel {
        let (e, a) = make_n_block(2).unwrap().into_parts();
        StochasticDescriptorModel::new(
            e,
            a,
            b,
            f,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dvector![0.0, 0.0],
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn causality_from_products() {
        let m = nilpotent_model(dmatrix![0.0; 1.0], DMatrix::zeros(2, 1));
        let d = compute_kcf(&m.pencil(), 1e-10).unwrap();
        let c = check_causality(&m, &d, 1e-10).unwrap();
        assert!(!c.causal);
        assert_eq!(c.witnesses.len(), 1);
        assert!((c.witnesses[0].norm_b - 1.0).abs() < 1e-12);

        let m = nilpotent_model(dmatrix![1.0; 0.0], dmatrix![1.0; 0.0]);
        let d = compute_kcf(&m.pencil(), 1e-10).unwrap();
        assert!(check_causality(&m, &d, 1e-10).unwrap().causal);
    }

    #[test]
    fn index_one_is_always_causal() {
        let m = scalar(0.0, 1.0);
        let d = compute_kcf(&m.pencil(), 1e-10).unwrap();
        assert_eq!(nilpotency_index(&d), 1);
        let c = check_causality(&m, &d, 1e-10).unwrap();
        assert!(c.causal && c.witnesses.is_empty());
    }

    #[test]
    fn reduce_f_compresses_columns() {
        let m = scalar(1.0, 0.5).with_f(dmatrix![2.0]).unwrap();
        let (same, q) = reduce_f(&m, 1e-10);
        assert_eq!(same, m);
        assert_eq!(q, DMatrix::identity(1, 1));

        let m = StochasticDescriptorModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 0),
            dmatrix![1.0, 2.0; 0.0, 0.0],
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dvector![0.0, 0.0],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let (red, q1) = reduce_f(&m, 1e-10);
        assert_eq!(red.f().shape(), (2, 1));
        assert!((red.f()[(0, 0)] - 5f64.sqrt()).abs() < 1e-12);
        assert!(red.f()[(1, 0)].abs() < 1e-12);
        assert!((red.f() * &q1 - m.f()).amax() < 1e-12);
        assert!((red.process_covariance() - m.process_covariance()).amax() < 1e-12);

        let zero = m.with_f(DMatrix::zeros(2, 2)).unwrap();
        let (red, q1) = reduce_f(&zero, 1e-10);
        assert_eq!(red.f().ncols(), 0);
        assert_eq!(q1.shape(), (0, 2));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let bad = StochasticDescriptorModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 3),
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 2),
            dmatrix![1.0],
            dvector![0.0, 0.0],
            DMatrix::identity(2, 2),
        );
        assert!(matches!(bad, Err(Error::Dimension(_))));
        let not_pd = StochasticDescriptorModel::new(
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dvector![0.0],
            dmatrix![1.0],
        );
        assert!(not_pd.is_err());
    }
}
