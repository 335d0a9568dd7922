//! MAP state estimation for linear discrete-time stochastic descriptor systems.
//!
//! The pencil `λE − A` is reduced to Kronecker canonical form ([`kcf`]), the
//! model is checked for well-posedness and causality ([`model`]), trajectories
//! are simulated ([`sim`]) and the MAP state sequence is computed by several
//! interchangeable solvers ([`estimator`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod kcf;
pub mod model;
pub mod pencil;
pub mod sim;

pub use error::{Error, Result};
pub use pencil::{
    apply_equivalence, assemble_canonical, is_regular, make_j_block, make_n_block, make_o_block,
    make_u_block, Eigenvalue, JordanBlock, KroneckerStructure, MatrixPencil,
};
pub use model::{validate, StochasticDescriptorModel, ValidationReport};
