use thiserror::Error;

pub type Result<T> = std::result::Result<T, GmfError>;

#[derive(Debug, Error)]
pub enum GmfError {
    #[error("construction error: {0}")]
    Construction(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("{0} did not converge")]
    NonConvergence(String),

    #[error("function `{function}` is undefined at {argument:e}")]
    FunctionDomain { function: String, argument: f64 },

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("start vector is zero")]
    ZeroStartVector,

    #[error("cannot extend a factorization that already broke down at step {0}")]
    ExtendAfterBreakdown(usize),

    #[error("Gauss-Radau node tau = {tau:e} coincides with a Ritz value; use a larger tau")]
    SingularShift { tau: f64 },

    #[error("invalid Gauss-Radau extension: {0}")]
    InvalidRadau(String),

    #[error("singular coupling matrix ({0}); augment the blocks with dense columns")]
    SingularCoupling(String),

    #[error("matrix function has imaginary residue {residue:e} above tolerance")]
    ComplexResidue { residue: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
