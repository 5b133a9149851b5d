//! Partial Golub-Kahan bidiagonalization with full reorthogonalization.
//!
//! Columns are 1-based in the comments: `q_1 = w / |w|`, and after `l` steps
//! `A Q = P B` and `A^T P = Q B^T + gamma_l q_{l+1} e_l^T`, where the residual
//! vector is stored as `next_q`.

use crate::dense::tridiagonal_eigen;
use crate::error::{GmfError, Result};
use crate::sparse::{CsrMatrix, DenseMatrix, DenseVector};

pub const DEFAULT_BREAKDOWN_TOL: f64 = 1e-12;

/// Upper bidiagonal matrix with diagonal `omegas` and superdiagonal `gammas`.
#[derive(Debug, Clone, PartialEq)]
pub struct BidiagonalMatrix {
    pub omegas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl BidiagonalMatrix {
    pub fn new(omegas: Vec<f64>, gammas: Vec<f64>) -> Self {
        assert!(
            omegas.is_empty() && gammas.is_empty() || gammas.len() + 1 == omegas.len(),
            "a bidiagonal matrix of order l has l - 1 superdiagonal entries"
        );
        Self { omegas, gammas }
    }

    pub fn order(&self) -> usize {
        self.omegas.len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.order();
        let mut b = DenseMatrix::zeros(n, n);
        for (i, &w) in self.omegas.iter().enumerate() {
            b[(i, i)] = w;
        }
        for (i, &g) in self.gammas.iter().enumerate() {
            b[(i, i + 1)] = g;
        }
        b
    }

    /// Diagonal and off-diagonal of the tridiagonal matrix `B^T B`.
    pub fn normal_tridiagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.order();
        let mut diag = Vec::with_capacity(n);
        let mut off = Vec::with_capacity(n.saturating_sub(1));
        for j in 0..n {
            let g = if j == 0 { 0.0 } else { self.gammas[j - 1] };
            diag.push(self.omegas[j] * self.omegas[j] + g * g);
            if j + 1 < n {
                off.push(self.omegas[j] * self.gammas[j]);
            }
        }
        (diag, off)
    }

    /// `B x` for a vector of length `order`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut v = self.omegas[i] * x[i];
                if i + 1 < n {
                    v += self.gammas[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}

/// Why a factorization stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Breakdown {
    None,
    /// `A^T p_l - omega_l q_l` vanished: the row-space Krylov subspace is invariant.
    Gamma,
    /// `A q_{l+1} - gamma_l p_l` vanished: `q_{l+1}` maps into the span of `P`,
    /// which happens when the start vector has a null-space component.
    Omega,
}

/// State of a partial Golub-Kahan bidiagonalization.
#[derive(Debug, Clone)]
pub struct GkFactorization {
    pub p: DenseMatrix,
    pub q: DenseMatrix,
    pub b: BidiagonalMatrix,
    pub next_q: Option<DenseVector>,
    pub next_gamma: Option<f64>,
    pub steps: usize,
    pub breakdown: bool,
    pub breakdown_kind: Breakdown,
    pub breakdown_tol: f64,
    sigma_hat: f64,
}

impl GkFactorization {
    /// Largest coefficient seen so far, the scale for breakdown tests.
    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    /// Bidiagonal matrix whose normal matrix is the exact Jacobi matrix of the
    /// start vector's measure.
    ///
    /// Equals `B` unless the run stopped on a vanishing omega, in which case
    /// `B` gains the pending column `gamma_l e_l` and a zero diagonal entry.
    /// The zero singular value of that extension carries the measure's atom
    /// at the origin.
    pub fn effective_bidiagonal(&self) -> BidiagonalMatrix {
        match (self.breakdown_kind, self.next_gamma) {
            (Breakdown::Omega, Some(g)) => {
                let mut omegas = self.b.omegas.clone();
                let mut gammas = self.b.gammas.clone();
                omegas.push(0.0);
                gammas.push(g);
                BidiagonalMatrix::new(omegas, gammas)
            }
            (Breakdown::Omega, None) => BidiagonalMatrix::new(vec![0.0], Vec::new()),
            _ => self.b.clone(),
        }
    }

    /// `P` padded with a zero column to match [`Self::effective_bidiagonal`].
    pub fn effective_p(&self) -> DenseMatrix {
        let cols = self.effective_bidiagonal().order();
        if cols == self.p.ncols() {
            self.p.clone()
        } else {
            self.p.clone().resize_horizontally(cols, 0.0)
        }
    }
}

/// Steps after which the process has certainly broken down: `n`, or `m + 1`
/// when `A` is wide, since the last step then ends with a zero `omega`.
pub fn step_limit(a: &CsrMatrix) -> usize {
    a.ncols().min(a.nrows() + 1)
}

/// Runs `max_steps` Golub-Kahan steps on `A` from `w`.
///
/// A normalization coefficient at or below `breakdown_tol` times the running
/// largest coefficient stops the run early with `breakdown` set.
pub fn gk_run(a: &CsrMatrix, w: &DenseVector, max_steps: usize, breakdown_tol: f64) -> Result<GkFactorization> {
    if w.len() != a.ncols() {
        return Err(GmfError::DimensionMismatch {
            expected: a.ncols(),
            found: w.len(),
            context: "gk_run start vector",
        });
    }
    let nrm = w.norm();
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(GmfError::ZeroStartVector);
    }
    if max_steps > step_limit(a) {
        return Err(GmfError::InvalidParameter(format!(
            "max_steps = {max_steps} exceeds the step limit {}",
            step_limit(a)
        )));
    }
    let state = GkFactorization {
        p: DenseMatrix::zeros(a.nrows(), 0),
        q: DenseMatrix::zeros(a.ncols(), 0),
        b: BidiagonalMatrix::new(Vec::new(), Vec::new()),
        next_q: Some(w / nrm),
        next_gamma: None,
        steps: 0,
        breakdown: false,
        breakdown_kind: Breakdown::None,
        breakdown_tol,
        sigma_hat: 0.0,
    };
    gk_extend(state, a, max_steps)
}

/// Continues a factorization by `extra_steps`; identical to a fresh run with
/// the combined step count.
pub fn gk_extend(mut state: GkFactorization, a: &CsrMatrix, extra_steps: usize) -> Result<GkFactorization> {
    if extra_steps == 0 {
        return Ok(state);
    }
    if state.breakdown {
        return Err(GmfError::ExtendAfterBreakdown(state.steps));
    }
    let limit = step_limit(a);
    for _ in 0..extra_steps {
        if state.steps >= limit {
            break;
        }
        if !step(&mut state, a) {
            break;
        }
    }
    Ok(state)
}

/// One step; returns false on breakdown.
fn step(state: &mut GkFactorization, a: &CsrMatrix) -> bool {
    let (m, n) = (a.nrows(), a.ncols());
    let q = state.next_q.take().expect("a running factorization has a pending q");
    let tol = state.breakdown_tol;

    // p = A q_j - gamma_{j-1} p_{j-1}
    let mut p = DenseVector::zeros(m);
    a.matvec_into(q.as_slice(), p.as_mut_slice());
    let input_norm = p.norm();
    if let (Some(g), Some(prev)) = (state.next_gamma, state.p.ncols().checked_sub(1)) {
        p.axpy(-g, &state.p.column(prev), 1.0);
    }
    reorthogonalize(&mut p, &state.p);
    let omega = p.norm();
    if omega <= tol * state.sigma_hat.max(input_norm) || omega == 0.0 {
        state.next_q = Some(q);
        state.breakdown = true;
        state.breakdown_kind = Breakdown::Omega;
        return false;
    }
    p /= omega;
    state.sigma_hat = state.sigma_hat.max(omega);

    if let Some(g) = state.next_gamma {
        state.b.gammas.push(g);
    }
    state.b.omegas.push(omega);
    push_column(&mut state.q, &q);
    push_column(&mut state.p, &p);
    state.steps += 1;

    // q = A^T p_j - omega_j q_j
    let mut qn = DenseVector::zeros(n);
    a.matvec_transpose_into(p.as_slice(), qn.as_mut_slice());
    let input_norm = qn.norm();
    qn.axpy(-omega, &q, 1.0);
    reorthogonalize(&mut qn, &state.q);
    let gamma = qn.norm();
    if gamma <= tol * state.sigma_hat.max(input_norm) || gamma == 0.0 {
        state.next_gamma = None;
        state.next_q = None;
        state.breakdown = true;
        state.breakdown_kind = Breakdown::Gamma;
        return false;
    }
    state.sigma_hat = state.sigma_hat.max(gamma);
    state.next_gamma = Some(gamma);
    state.next_q = Some(qn / gamma);
    true
}

fn push_column(m: &mut DenseMatrix, v: &DenseVector) {
    let k = m.ncols();
    let taken = std::mem::replace(m, DenseMatrix::zeros(0, 0));
    *m = taken.resize_horizontally(k + 1, 0.0);
    m.set_column(k, v);
}

/// Two passes of classical Gram-Schmidt against the columns of `basis`.
pub(crate) fn reorthogonalize(v: &mut DenseVector, basis: &DenseMatrix) {
    if basis.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let coeffs = basis.tr_mul(v);
        v.gemv(-1.0, basis, &coeffs, 1.0);
    }
}

/// Singular value decomposition of a (small) bidiagonal matrix.
#[derive(Debug, Clone)]
pub struct SvdOfB {
    /// Nonincreasing singular values.
    pub thetas: Vec<f64>,
    pub left: DenseMatrix,
    pub right: DenseMatrix,
}

/// Full SVD of `B` through the eigendecomposition of `B^T B`, with left
/// vectors recovered as `B v / theta`. Left vectors for (numerically) zero
/// singular values are completed to an orthonormal basis.
pub fn bidiagonal_svd(b: &BidiagonalMatrix) -> Result<SvdOfB> {
    let n = b.order();
    let (diag, off) = b.normal_tridiagonal();
    let (vals, vecs) = tridiagonal_eigen(&diag, &off)?;

    let mut thetas = Vec::with_capacity(n);
    let mut right = DenseMatrix::zeros(n, n);
    for (k, i) in (0..n).rev().enumerate() {
        thetas.push(vals[i].max(0.0).sqrt());
        right.set_column(k, &vecs.column(i));
    }
    let theta_max = thetas.first().copied().unwrap_or(0.0);
    let cutoff = 1e-8 * theta_max;

    let mut left = DenseMatrix::zeros(n, n);
    let mut filled = vec![false; n];
    for k in 0..n {
        if thetas[k] > cutoff && thetas[k] > 0.0 {
            let bv = b.apply(right.column(k).as_slice());
            let mut u = DenseVector::from_vec(bv) / thetas[k];
            // Clean up against earlier columns; the loss grows like 1/theta.
            for j in 0..k {
                let c = left.column(j).dot(&u);
                u.axpy(-c, &left.column(j), 1.0);
            }
            let nrm = u.norm();
            left.set_column(k, &(u / nrm));
            filled[k] = true;
        }
    }
    for k in 0..n {
        if filled[k] {
            continue;
        }
        let mut best: Option<DenseVector> = None;
        for e in 0..n {
            let mut u = DenseVector::zeros(n);
            u[e] = 1.0;
            for _ in 0..2 {
                for j in 0..n {
                    if filled[j] {
                        let c = left.column(j).dot(&u);
                        u.axpy(-c, &left.column(j), 1.0);
                    }
                }
            }
            if best.as_ref().is_none_or(|b| u.norm() > b.norm()) {
                best = Some(u);
            }
        }
        let u = best.expect("n > 0");
        let nrm = u.norm();
        left.set_column(k, &(u / nrm));
        filled[k] = true;
    }
    Ok(SvdOfB { thetas, left, right })
}
