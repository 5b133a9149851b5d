//! Block estimates of `Z^T f◇(A) W`.
//!
//! Two routes: nonsymmetric block Lanczos on `X = A^T A` with block Gauss and
//! anti-Gauss rules, and block Golub-Kahan with the truncated action
//! `Z^T [P_1 .. P_l] f◇(B_l) E_1`.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{block_qr, jacobi_svd, matrix_function, max_abs, norm2};
use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::oracle::{compact_svd, DEFAULT_RANK_TOL};
use crate::quadrature::estimate_sigma_max;
use crate::sparse::{CsrMatrix, DenseMatrix};

/// Smallest coupling singular value accepted before declaring breakdown.
const COUPLING_TOL: f64 = 1e-12;
/// Residual blocks below this fraction of the running scale count as zero.
const BLOCK_BREAKDOWN_TOL: f64 = 1e-12;

/// Block tridiagonal `J_l`: `Omega_j` on the diagonal, `Gamma_j` below and
/// `Delta_j^T` above.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub k: usize,
    pub omegas: Vec<DenseMatrix>,
    pub gammas: Vec<DenseMatrix>,
    pub deltas: Vec<DenseMatrix>,
}

impl BlockTridiagonal {
    pub fn levels(&self) -> usize {
        self.omegas.len()
    }

    /// Dense `J_levels`.
    pub fn assemble(&self, levels: usize) -> DenseMatrix {
        self.assemble_scaled(levels, 1.0)
    }

    /// Dense `J~_levels`, the anti-Gauss matrix with the last off-diagonal
    /// pair scaled by `sqrt 2`.
    pub fn assemble_anti_gauss(&self, levels: usize) -> DenseMatrix {
        self.assemble_scaled(levels, std::f64::consts::SQRT_2)
    }

    fn assemble_scaled(&self, levels: usize, last_scale: f64) -> DenseMatrix {
        assert!(levels >= 1 && levels <= self.levels(), "level out of range");
        let k = self.k;
        let mut j = DenseMatrix::zeros(k * levels, k * levels);
        for i in 0..levels {
            j.view_mut((i * k, i * k), (k, k)).copy_from(&self.omegas[i]);
            if i + 1 < levels {
                let s = if i + 2 == levels { last_scale } else { 1.0 };
                j.view_mut(((i + 1) * k, i * k), (k, k)).copy_from(&(&self.gammas[i] * s));
                j.view_mut((i * k, (i + 1) * k), (k, k)).copy_from(&(self.deltas[i].transpose() * s));
            }
        }
        j
    }
}

/// Biorthonormal start blocks with `Z~ = Z1 C` and `W = W1 D`.
#[derive(Debug, Clone)]
pub struct Biorthonormalized {
    pub z1: DenseMatrix,
    pub w1: DenseMatrix,
    pub c: DenseMatrix,
    pub d: DenseMatrix,
}

/// Splits `Z~` and `W` into biorthonormal blocks through the SVD of `Z~^T W`.
pub fn biorthonormalize_blocks(zt: &DenseMatrix, w: &DenseMatrix) -> Result<Biorthonormalized> {
    if zt.shape() != w.shape() {
        return Err(GmfError::DimensionMismatch {
            expected: zt.ncols(),
            found: w.ncols(),
            context: "biorthonormalize_blocks widths",
        });
    }
    let m = zt.tr_mul(w);
    let (u, s, v) = jacobi_svd(&m)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if s.iter().any(|&x| x <= COUPLING_TOL * smax) || smax == 0.0 {
        return Err(GmfError::SingularCoupling(format!(
            "Z~^T W has singular values down to {:e}",
            s.last().copied().unwrap_or(0.0)
        )));
    }
    let inv_sqrt = DenseMatrix::from_diagonal(&s.iter().map(|x| 1.0 / x.sqrt()).collect::<Vec<_>>().into());
    let sqrt = DenseMatrix::from_diagonal(&s.iter().map(|x| x.sqrt()).collect::<Vec<_>>().into());
    Ok(Biorthonormalized {
        z1: zt * &u * &inv_sqrt,
        w1: w * &v * &inv_sqrt,
        c: &sqrt * u.transpose(),
        d: &sqrt * v.transpose(),
    })
}

/// Nonsymmetric block Lanczos state for `X = A^T A`.
#[derive(Debug, Clone)]
pub struct BlockLanczosState {
    pub zs: Vec<DenseMatrix>,
    pub ws: Vec<DenseMatrix>,
    pub tridiag: BlockTridiagonal,
    pub breakdown: bool,
}

/// Runs `steps` levels of nonsymmetric block Lanczos from biorthonormal
/// `Z1`, `W1` (`Z1^T W1 = I`), applying `X = A^T A` as two sparse products.
///
/// Each new residual pair gets one extra oblique projection against all
/// previous blocks. A coupling singular value below `1e-12`, or a vanishing
/// residual, stops the run with `breakdown` set.
pub fn nonsym_block_lanczos(a: &CsrMatrix, z1: &DenseMatrix, w1: &DenseMatrix, steps: usize) -> Result<BlockLanczosState> {
    let (n, k) = z1.shape();
    if w1.shape() != (n, k) || n != a.ncols() {
        return Err(GmfError::DimensionMismatch {
            expected: a.ncols(),
            found: n,
            context: "nonsym_block_lanczos blocks",
        });
    }
    let x_apply = |m: &DenseMatrix| -> Result<DenseMatrix> { a.matmul_transpose_dense(&a.matmul_dense(m)?) };

    let mut state = BlockLanczosState {
        zs: vec![z1.clone()],
        ws: vec![w1.clone()],
        tridiag: BlockTridiagonal {
            k,
            omegas: Vec::new(),
            gammas: Vec::new(),
            deltas: Vec::new(),
        },
        breakdown: false,
    };
    let mut scale: f64 = 0.0;
    for j in 0..steps {
        let zj = state.zs[j].clone();
        let wj = state.ws[j].clone();
        let mut r = x_apply(&zj)?;
        let mut s = x_apply(&wj)?;
        if j > 0 {
            r -= &state.zs[j - 1] * state.tridiag.deltas[j - 1].transpose();
            s -= &state.ws[j - 1] * state.tridiag.gammas[j - 1].transpose();
        }
        let omega = wj.tr_mul(&r);
        r -= &zj * &omega;
        s -= &wj * omega.transpose();
        for (zi, wi) in state.zs.iter().zip(&state.ws) {
            r -= zi * wi.tr_mul(&r);
            s -= wi * zi.tr_mul(&s);
        }
        scale = scale.max(max_abs(&omega));
        state.tridiag.omegas.push(omega);

        if j + 1 == steps {
            break;
        }
        if max_abs(&r) <= BLOCK_BREAKDOWN_TOL * scale || max_abs(&s) <= BLOCK_BREAKDOWN_TOL * scale {
            state.breakdown = true;
            break;
        }
        let (qr, rr, _) = block_qr(&r, &[], 0x51 + j as u64);
        let (qs, rs, _) = block_qr(&s, &[], 0x52 + j as u64);
        let (u, sig, v) = jacobi_svd(&qs.tr_mul(&qr))?;
        if sig.iter().any(|&x| x < COUPLING_TOL) {
            state.breakdown = true;
            break;
        }
        let half: Vec<f64> = sig.iter().map(|x| x.sqrt()).collect();
        let inv_half = DenseMatrix::from_diagonal(&half.iter().map(|x| 1.0 / x).collect::<Vec<_>>().into());
        let half = DenseMatrix::from_diagonal(&half.into());
        state.zs.push(&qr * &v * &inv_half);
        state.ws.push(&qs * &u * &inv_half);
        state.tridiag.gammas.push(&half * v.transpose() * rr);
        state.tridiag.deltas.push(&half * u.transpose() * rs);
    }
    Ok(state)
}

fn g_of(f: &ScalarFunction) -> impl Fn(Complex<f64>) -> Result<Complex<f64>> + '_ {
    move |z| {
        f.eval_g_complex(z).ok_or_else(|| GmfError::FunctionDomain {
            function: f.name().to_string(),
            argument: z.re,
        })
    }
}

/// Leading `k x k` block of `g(J_l)` for `levels = l`.
pub fn block_gauss_at(state: &BlockLanczosState, f: &ScalarFunction, levels: usize) -> Result<DenseMatrix> {
    let k = state.tridiag.k;
    let gj = matrix_function(&state.tridiag.assemble(levels), g_of(f))?;
    Ok(gj.view((0, 0), (k, k)).into_owned())
}

/// Block Gauss rule on all available levels.
pub fn block_gauss(state: &BlockLanczosState, f: &ScalarFunction) -> Result<DenseMatrix> {
    block_gauss_at(state, f, state.tridiag.levels())
}

/// Block anti-Gauss rule `E_1^T g(J~_{l+1}) E_1` on all available levels
/// (`l + 1` of them).
pub fn block_anti_gauss(state: &BlockLanczosState, f: &ScalarFunction) -> Result<DenseMatrix> {
    let levels = state.tridiag.levels();
    if levels < 2 {
        return Err(GmfError::InvalidParameter("anti-Gauss rule needs at least two levels".into()));
    }
    let k = state.tridiag.k;
    let gj = matrix_function(&state.tridiag.assemble_anti_gauss(levels), g_of(f))?;
    Ok(gj.view((0, 0), (k, k)).into_owned())
}

/// Options for [`block_pair_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    /// Append dense seeded columns to both start blocks to keep the coupling
    /// matrix nonsingular.
    pub augment_dense: bool,
    pub seed: u64,
    /// Upper estimate of `sigma_1` for the analyticity check; estimated when absent.
    pub sigma_max: Option<f64>,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            augment_dense: true,
            seed: 42,
            sigma_max: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockPairResult {
    /// `(G + H) / 2` mapped back to `Z^T f◇(A) W`.
    pub f: DenseMatrix,
    pub gauss: DenseMatrix,
    pub anti_gauss: DenseMatrix,
    /// `max|G - H| / max|G + H|`.
    pub distance: f64,
    pub levels: usize,
    pub breakdown: bool,
}

/// Block Gauss/anti-Gauss estimate of `Z^T f◇(A) W` at level `ell`.
///
/// Rules are computed for `W1^T g(X) Z1`, so the recovered matrices are
/// `C^T G^T D`. Zero columns of `A^T Z` are swapped for dense seeded columns
/// during the run and their rows zeroed afterwards. With `augment_dense`,
/// `p = max(1, k - rank(Z~^T W))` shared dense columns are appended to both
/// blocks and the extra rows and columns dropped from the result.
pub fn block_pair_estimate(
    a: &CsrMatrix,
    z: &DenseMatrix,
    w: &DenseMatrix,
    f: &ScalarFunction,
    ell: usize,
    opts: &PairOptions,
) -> Result<BlockPairResult> {
    let k = z.ncols();
    if w.ncols() != k || z.nrows() != a.nrows() || w.nrows() != a.ncols() {
        return Err(GmfError::DimensionMismatch {
            expected: k,
            found: w.ncols(),
            context: "block_pair_estimate blocks",
        });
    }
    if ell == 0 {
        return Err(GmfError::InvalidParameter("ell must be at least 1".into()));
    }
    if let Some(pole) = f.g_pole() {
        let s1 = match opts.sigma_max {
            Some(s) => s,
            None => estimate_sigma_max(a, 1e-8, 10_000)?.value,
        };
        if pole <= s1 * s1 {
            return Err(GmfError::InvalidParameter(format!(
                "g has a pole at {pole:e} inside the spectrum interval [0, {:e}]",
                s1 * s1
            )));
        }
    }

    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut dense = |cols: usize| DenseMatrix::from_fn(n, cols, |_, _| rng.gen_range(0.0..1.0));

    let mut zt = a.matmul_transpose_dense(z)?;
    let zero_cols: Vec<usize> = (0..k).filter(|&j| zt.column(j).iter().all(|&x| x == 0.0)).collect();
    if zero_cols.len() == k {
        let zero = DenseMatrix::zeros(k, k);
        return Ok(BlockPairResult {
            f: zero.clone(),
            gauss: zero.clone(),
            anti_gauss: zero,
            distance: 0.0,
            levels: 0,
            breakdown: true,
        });
    }
    if !zero_cols.is_empty() {
        let fill = dense(zero_cols.len());
        for (i, &j) in zero_cols.iter().enumerate() {
            zt.set_column(j, &fill.column(i));
        }
    }
    let (zt, w_aug) = if opts.augment_dense {
        let m = zt.tr_mul(w);
        let rank = compact_svd(&m, 1e-10)?.rank();
        let p = (k - rank.min(k)).max(1);
        let extra = dense(p);
        let mut za = zt.clone().resize_horizontally(k + p, 0.0);
        let mut wa = w.clone().resize_horizontally(k + p, 0.0);
        za.view_mut((0, k), (n, p)).copy_from(&extra);
        wa.view_mut((0, k), (n, p)).copy_from(&extra);
        (za, wa)
    } else {
        (zt, w.clone())
    };

    let bio = biorthonormalize_blocks(&zt, &w_aug)?;
    let kk = zt.ncols();
    let max_levels = (n / kk).max(1);
    let state = nonsym_block_lanczos(a, &bio.z1, &bio.w1, (ell + 1).min(max_levels))?;
    let levels = state.tridiag.levels();
    let (g, h) = if levels > ell {
        (block_gauss_at(&state, f, ell)?, block_anti_gauss(&state, f)?)
    } else {
        // the Krylov space closed early and the Gauss rule is exact
        let g = block_gauss(&state, f)?;
        (g.clone(), g)
    };
    let recover = |m: &DenseMatrix| {
        let full = bio.c.transpose() * m.transpose() * &bio.d;
        let mut out = full.view((0, 0), (k, k)).into_owned();
        for &j in &zero_cols {
            out.row_mut(j).fill(0.0);
        }
        out
    };
    let gauss = recover(&g);
    let anti_gauss = recover(&h);
    let f_mean = (&gauss + &anti_gauss) * 0.5;
    let denom = max_abs(&(&gauss + &anti_gauss));
    let distance = if denom == 0.0 { 0.0 } else { max_abs(&(&gauss - &anti_gauss)) / denom };
    Ok(BlockPairResult {
        f: f_mean,
        gauss,
        anti_gauss,
        distance,
        levels: levels.min(ell),
        breakdown: state.breakdown,
    })
}

/// Block Golub-Kahan state: `A [Q_1 .. Q_l] = [P_1 .. P_l] B_l` with `Omega_j`
/// on the block diagonal of `B_l` and `Gamma_j^T` above it.
#[derive(Debug, Clone)]
pub struct BlockGkState {
    pub ps: Vec<DenseMatrix>,
    pub qs: Vec<DenseMatrix>,
    pub omegas: Vec<DenseMatrix>,
    pub gammas: Vec<DenseMatrix>,
    /// `Q_{l+1}`, absent after breakdown.
    pub next_q: Option<DenseMatrix>,
    pub breakdown: bool,
    sigma_hat: f64,
}

impl BlockGkState {
    pub fn levels(&self) -> usize {
        self.omegas.len()
    }

    pub fn k(&self) -> usize {
        self.qs.first().map(|q| q.ncols()).unwrap_or(0)
    }

    /// Dense `B_l`. Blocks shrink once the Krylov space fills the whole
    /// row or column space, so `B_l` may be rectangular.
    pub fn b_matrix(&self) -> DenseMatrix {
        let l = self.levels();
        let rows: usize = self.ps[..l].iter().map(|p| p.ncols()).sum();
        let cols: usize = self.qs[..l].iter().map(|q| q.ncols()).sum();
        let mut b = DenseMatrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for j in 0..l {
            let om = &self.omegas[j];
            b.view_mut((r0, c0), om.shape()).copy_from(om);
            if j + 1 < l {
                let gt = self.gammas[j].transpose();
                b.view_mut((r0, c0 + om.ncols()), gt.shape()).copy_from(&gt);
            }
            r0 += om.nrows();
            c0 += om.ncols();
        }
        b
    }

    pub fn p_matrix(&self) -> DenseMatrix {
        hstack(&self.ps[..self.levels()], self.ps.first().map(|p| p.nrows()).unwrap_or(0))
    }

    pub fn q_matrix(&self) -> DenseMatrix {
        hstack(&self.qs[..self.levels()], self.qs.first().map(|q| q.nrows()).unwrap_or(0))
    }
}

fn hstack(blocks: &[DenseMatrix], rows: usize) -> DenseMatrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Runs `steps` block Golub-Kahan levels from `Q_1 = W` (orthonormal columns).
pub fn block_gk_run(a: &CsrMatrix, w: &DenseMatrix, steps: usize) -> Result<BlockGkState> {
    if w.nrows() != a.ncols() {
        return Err(GmfError::DimensionMismatch {
            expected: a.ncols(),
            found: w.nrows(),
            context: "block_gk_run start block",
        });
    }
    let k = w.ncols();
    if (w.tr_mul(w) - DenseMatrix::identity(k, k)).amax() > 1e-10 {
        return Err(GmfError::InvalidParameter("start block must have orthonormal columns".into()));
    }
    let state = BlockGkState {
        ps: Vec::new(),
        qs: Vec::new(),
        omegas: Vec::new(),
        gammas: Vec::new(),
        next_q: Some(w.clone()),
        breakdown: false,
        sigma_hat: 0.0,
    };
    block_gk_extend(state, a, steps)
}

/// Continues a block Golub-Kahan run by `extra` levels.
///
/// Rank-deficient residual blocks keep going with fresh orthogonal columns
/// at zero coefficient while there is room for them, and shrink once the
/// basis would outgrow the space; only a residual that vanishes entirely is
/// a breakdown.
pub fn block_gk_extend(mut state: BlockGkState, a: &CsrMatrix, extra: usize) -> Result<BlockGkState> {
    if extra > 0 && state.breakdown {
        return Err(GmfError::ExtendAfterBreakdown(state.levels()));
    }
    let (m, n) = (a.nrows(), a.ncols());
    for _ in 0..extra {
        let q = state.next_q.take().expect("running state has a pending block");
        let j = state.levels();
        let p_all = hstack(&state.ps, m);
        let q_all = hstack(&state.qs, n);

        let mut r = a.matmul_dense(&q)?;
        let input = max_abs(&r);
        if j > 0 {
            r -= &state.ps[j - 1] * state.gammas[j - 1].transpose();
        }
        project_out(&mut r, &p_all);
        if max_abs(&r) <= BLOCK_BREAKDOWN_TOL * state.sigma_hat.max(input) || max_abs(&r) == 0.0 {
            // A Q_{j+1} = P_j Gamma_j^T: keep Q_{j+1} with an empty Omega block
            let k = q.ncols();
            state.ps.push(DenseMatrix::zeros(m, 0));
            state.qs.push(q);
            state.omegas.push(DenseMatrix::zeros(0, k));
            state.breakdown = true;
            break;
        }
        let (p, omega) = shrink(block_qr(&r, &[&p_all], 0x61 + j as u64), m - p_all.ncols());
        state.sigma_hat = state.sigma_hat.max(max_abs(&omega));

        let mut s = a.matmul_transpose_dense(&p)?;
        let input = max_abs(&s);
        s -= &q * omega.transpose();
        let q_with = hstack(&[q_all, q.clone()], n);
        project_out(&mut s, &q_with);
        state.ps.push(p);
        state.qs.push(q);
        state.omegas.push(omega);
        if max_abs(&s) <= BLOCK_BREAKDOWN_TOL * state.sigma_hat.max(input) || max_abs(&s) == 0.0 {
            state.breakdown = true;
            break;
        }
        let (qn, gamma) = shrink(block_qr(&s, &[&q_with], 0x62 + j as u64), n - q_with.ncols());
        state.sigma_hat = state.sigma_hat.max(max_abs(&gamma));
        state.gammas.push(gamma);
        state.next_q = Some(qn);
    }
    Ok(state)
}

/// Drops the filler columns of a thin QR when they would not fit in `room`.
fn shrink((q, r, deficient): (DenseMatrix, DenseMatrix, usize), room: usize) -> (DenseMatrix, DenseMatrix) {
    if deficient == 0 || q.ncols() <= room {
        return (q, r);
    }
    let keep: Vec<usize> = (0..q.ncols()).filter(|&j| r[(j, j)] > 0.0).collect();
    (q.select_columns(&keep), r.select_rows(&keep))
}

fn project_out(block: &mut DenseMatrix, basis: &DenseMatrix) {
    if basis.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let coeffs = basis.tr_mul(block);
        *block -= basis * coeffs;
    }
}

/// `Z^T [P_1 .. P_l] f◇(B_l) E_1`.
pub fn block_gmf_action(state: &BlockGkState, z: &DenseMatrix, f: &ScalarFunction) -> Result<DenseMatrix> {
    let k = state.k();
    if state.levels() == 0 {
        return Ok(DenseMatrix::zeros(z.ncols(), k));
    }
    let b = state.b_matrix();
    let svd = compact_svd(&b, DEFAULT_RANK_TOL)?;
    let vt_e1 = svd.v.rows(0, k).transpose();
    let mut u = svd.u.clone();
    for (i, &s) in svd.sigma.iter().enumerate() {
        let fs = f.try_eval_f(s)?;
        u.column_mut(i).scale_mut(fs);
    }
    let zp = z.tr_mul(&state.p_matrix());
    Ok(zp * u * vt_e1)
}

#[derive(Debug, Clone)]
pub struct BlockGkResult {
    pub f: DenseMatrix,
    pub steps: usize,
    /// `|F_l - F_{l-1}|_2 / |F_{l-1}|_2` for every `l >= 2`.
    pub history: Vec<f64>,
    pub converged: bool,
    pub breakdown: bool,
}

/// Block Golub-Kahan estimate of `Z^T f◇(A) W`, iterated until
/// `|F_l - F_{l-1}|_2 < tol |F_{l-1}|_2`, breakdown, or `max_steps`.
/// `W` is orthonormalized first and its triangular factor applied at the end.
pub fn block_gk_estimate(
    a: &CsrMatrix,
    z: &DenseMatrix,
    w: &DenseMatrix,
    f: &ScalarFunction,
    tol: f64,
    max_steps: usize,
) -> Result<BlockGkResult> {
    if z.nrows() != a.nrows() {
        return Err(GmfError::DimensionMismatch {
            expected: a.nrows(),
            found: z.nrows(),
            context: "block_gk_estimate Z",
        });
    }
    let (q1, rw, _) = block_qr(w, &[], 0x71);
    let mut state = block_gk_run(a, &q1, 0)?;
    let mut prev: Option<DenseMatrix> = None;
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_steps {
        state = block_gk_extend(state, a, 1)?;
        let fl = block_gmf_action(&state, z, f)? * &rw;
        if let Some(p) = &prev {
            let denom = norm2(p);
            let r = if denom == 0.0 { norm2(&(&fl - p)) } else { norm2(&(&fl - p)) / denom };
            history.push(r);
            if r < tol {
                converged = true;
            }
        }
        prev = Some(fl);
        if converged || state.breakdown {
            converged |= state.breakdown;
            break;
        }
    }
    Ok(BlockGkResult {
        f: prev.unwrap_or_else(|| DenseMatrix::zeros(z.ncols(), w.ncols())),
        steps: state.levels(),
        history,
        converged,
        breakdown: state.breakdown,
    })
}
