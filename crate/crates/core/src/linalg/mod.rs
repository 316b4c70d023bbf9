//! Sparse symmetric linear algebra used by the elasticity solver.

mod cg;
mod cholesky;
mod csr;

pub use cg::{conjugate_gradient, CgOutcome};
pub use cholesky::{nested_dissection, reverse_cuthill_mckee, SparseCholesky};
pub use csr::CsrMatrix;
