//! Generalized matrix functions `f◇(A) = U_r f(Σ_r) V_r^T` of sparse
//! rectangular matrices, estimated through Golub-Kahan bidiagonalization and
//! Gauss-type quadrature, with block variants and network measures built on
//! top.

pub mod block;
pub mod dense;
pub mod error;
pub mod functions;
pub mod gk;
pub mod network;
pub mod oracle;
pub mod quadrature;
pub mod sparse;

pub use error::{GmfError, Result};
pub use functions::{eval_g_matrix_arg, make_function, ScalarFunction};
pub use sparse::{CsrMatrix, DenseMatrix, DenseVector};
