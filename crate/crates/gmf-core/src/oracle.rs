//! Dense reference implementation of generalized matrix functions.
//!
//! Everything here goes through a compact SVD and is meant as ground truth for
//! the Krylov methods, not for speed.

use nalgebra::DVector;

use crate::dense::jacobi_svd;
use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::sparse::{DenseMatrix, DenseVector};

/// Relative rank cutoff used when callers have no better idea.
pub const DEFAULT_RANK_TOL: f64 = f64::EPSILON;

/// The positive singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `Σ_i h(σ_i) u_i v_i^T`.
    pub fn apply(&self, h: impl Fn(f64) -> Result<f64>) -> Result<DenseMatrix> {
        let mut scaled = self.u.clone();
        for (i, &s) in self.sigma.iter().enumerate() {
            let hs = h(s)?;
            scaled.column_mut(i).scale_mut(hs);
        }
        Ok(scaled * self.v.transpose())
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.apply(Ok).expect("identity is total")
    }
}

/// Compact SVD keeping singular values above `rank_tol * σ_max * max(m, n)`.
pub fn compact_svd(a: &DenseMatrix, rank_tol: f64) -> Result<CompactSvd> {
    let (m, n) = a.shape();
    let (u, s, v) = jacobi_svd(a)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * smax * m.max(n) as f64;
    let r = s.iter().take_while(|&&x| x > cutoff && x > 0.0).count();
    Ok(CompactSvd {
        u: u.columns(0, r).into_owned(),
        sigma: s[..r].to_vec(),
        v: v.columns(0, r).into_owned(),
    })
}

/// `f◇(A) = U_r f(Σ_r) V_r^T`, an `m × n` matrix.
pub fn gmf_dense(a: &DenseMatrix, f: &ScalarFunction, rank_tol: f64) -> Result<DenseMatrix> {
    compact_svd(a, rank_tol)?.apply(|s| f.try_eval_f(s))
}

/// `z^T f◇(A) w` without forming the `m × n` result.
pub fn bilinear_exact(z: &DenseVector, a: &DenseMatrix, f: &ScalarFunction, w: &DenseVector) -> Result<f64> {
    check_len(z.len(), a.nrows(), "bilinear_exact z")?;
    check_len(w.len(), a.ncols(), "bilinear_exact w")?;
    let svd = compact_svd(a, DEFAULT_RANK_TOL)?;
    let zu = svd.u.transpose() * z;
    let vw = svd.v.transpose() * w;
    let mut total = 0.0;
    for (i, &s) in svd.sigma.iter().enumerate() {
        total += f.try_eval_f(s)? * zu[i] * vw[i];
    }
    Ok(total)
}

/// `Z^T f◇(A) W` for blocks.
pub fn block_bilinear_exact(z: &DenseMatrix, a: &DenseMatrix, f: &ScalarFunction, w: &DenseMatrix) -> Result<DenseMatrix> {
    check_len(z.nrows(), a.nrows(), "block_bilinear_exact Z")?;
    check_len(w.nrows(), a.ncols(), "block_bilinear_exact W")?;
    let svd = compact_svd(a, DEFAULT_RANK_TOL)?;
    let mut zu = z.transpose() * &svd.u;
    for (i, &s) in svd.sigma.iter().enumerate() {
        let fs = f.try_eval_f(s)?;
        zu.column_mut(i).scale_mut(fs);
    }
    Ok(zu * (svd.v.transpose() * w))
}

/// The symmetric embedding `[[0, A], [A^T, 0]]`.
pub fn embed_symmetric(a: &DenseMatrix) -> DenseMatrix {
    let (m, n) = a.shape();
    let mut out = DenseMatrix::zeros(m + n, m + n);
    out.view_mut((0, m), (m, n)).copy_from(a);
    out.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    out
}

/// Moore-Penrose pseudo-inverse, the transpose of `f◇(A)` for `f(t) = 1/t`.
pub fn pseudo_inverse(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let svd = compact_svd(a, rank_tol)?;
    Ok(svd.apply(|s| Ok(1.0 / s))?.transpose())
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix square root,
/// plus `h` of that root: returns `h(√S) (√S)^†` via an eigendecomposition,
/// treating eigenvalues below `rel_cut * λ_max` as zero.
pub fn sqrt_function_pinv(s: &DenseMatrix, h: impl Fn(f64) -> f64, rel_cut: f64) -> DenseMatrix {
    let eig = nalgebra::SymmetricEigen::new(s.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| {
            if l <= rel_cut * lmax || l <= 0.0 {
                0.0
            } else {
                let r = l.sqrt();
                h(r) / r
            }
        }),
    );
    &eig.eigenvectors * DenseMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn check_len(found: usize, expected: usize, context: &'static str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(GmfError::DimensionMismatch { expected, found, context })
    }
}
