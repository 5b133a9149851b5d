//! Gauss and Gauss-Radau rules for `z^T f◇(A) w` built on a Golub-Kahan
//! factorization, plus the truncated action `P f◇(B) e_1` and the driver
//! that iterates any of them to a relative-change tolerance.
//!
//! Rules assume a unit start vector; [`bilinear_estimate`] owns all scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{solve_shifted_tridiagonal, tridiagonal_eigen_rows};
use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::gk::{step_limit, bidiagonal_svd, gk_extend, gk_run, BidiagonalMatrix, GkFactorization, DEFAULT_BREAKDOWN_TOL};
use crate::sparse::{CsrMatrix, DenseVector};

/// Slack allowed for a Ritz value above the Radau node before it is an error.
const RITZ_SLACK: f64 = 1e-10;
/// Relative deviation below which `A^T z` counts as parallel to `w`.
const PARALLEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub steps: usize,
    /// Successive estimates, one per step.
    pub history: Vec<f64>,
    /// Last relative change, absent before a second estimate exists.
    pub residual: Option<f64>,
    pub converged: bool,
    pub breakdown_exact: bool,
}

/// The data that turns the Jacobi matrix `T_l` into its Gauss-Radau extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadauExtension {
    pub fixed_node_tau: f64,
    pub omega_hat: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    WSide,
    ZSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Tridiagonal,
    Bidiagonal,
    Action,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Tridiagonal, Approach::Bidiagonal, Approach::Action];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Tridiagonal => "tridiagonal",
            Approach::Bidiagonal => "bidiagonal",
            Approach::Action => "action",
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = GmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tridiagonal" | "1" => Ok(Approach::Tridiagonal),
            "bidiagonal" | "2" => Ok(Approach::Bidiagonal),
            "action" | "3" => Ok(Approach::Action),
            other => Err(GmfError::InvalidParameter(format!("unknown approach `{other}`"))),
        }
    }
}

/// `sum_i h(lambda_i) * weight_i`, where nodes below `zero_cut` take the limit
/// of `g` at the origin when it exists and are dropped otherwise.
fn apply_rule(
    nodes: &[f64],
    weights: impl Iterator<Item = f64>,
    zero_cut: f64,
    f: &ScalarFunction,
    h: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let g0 = f.g_at_zero();
    let mut total = 0.0;
    for (&lambda, weight) in nodes.iter().zip(weights) {
        if lambda <= zero_cut {
            if let Some(g0) = g0 {
                total += g0 * weight;
            }
        } else {
            total += h(lambda)? * weight;
        }
    }
    Ok(total)
}

fn zero_cut(nodes: &[f64], breakdown_tol: f64) -> f64 {
    let top = nodes.iter().fold(0.0f64, |a, &b| a.max(b));
    breakdown_tol * top
}

/// Gauss rule `sum_i g(theta_i^2) (e_1^T nu_i)^2` on the Jacobi matrix `T`.
fn gauss_on_tridiagonal(diag: &[f64], off: &[f64], f: &ScalarFunction, breakdown_tol: f64) -> Result<f64> {
    let (nodes, first) = tridiagonal_eigen_rows(diag, off, 1)?;
    let cut = zero_cut(&nodes, breakdown_tol);
    apply_rule(&nodes, first.row(0).iter().map(|x| x * x), cut, f, |t| f.try_eval_g(t))
}

/// `l`-point Gauss rule for `w^T g(A^T A) w` with `T_l = B^T B`.
pub fn gauss_tridiagonal(fact: &GkFactorization, f: &ScalarFunction) -> Result<f64> {
    let (diag, off) = fact.effective_bidiagonal().normal_tridiagonal();
    gauss_on_tridiagonal(&diag, &off, f, fact.breakdown_tol)
}

/// Builds the Gauss-Radau extension of `T_l` with prescribed node `tau`.
pub fn radau_extension(fact: &GkFactorization, tau: f64) -> Result<RadauExtension> {
    let gamma = match (fact.breakdown, fact.next_gamma, fact.steps) {
        (false, Some(g), l) if l >= 1 => g,
        _ => {
            return Err(GmfError::InvalidRadau(
                "needs at least one step and a pending gamma (after breakdown the Gauss rule is exact)".into(),
            ))
        }
    };
    let l = fact.steps;
    let (diag, off) = fact.b.normal_tridiagonal();
    let (ritz, _) = tridiagonal_eigen_rows(&diag, &off, 0)?;
    let largest = ritz.last().copied().unwrap_or(0.0);
    if largest > tau * (1.0 + RITZ_SLACK) {
        return Err(GmfError::InvalidRadau(format!(
            "Ritz value {largest:e} exceeds the fixed node {tau:e}"
        )));
    }
    let rho = fact.b.omegas[l - 1] * gamma;
    let mut rhs = vec![0.0; l];
    rhs[l - 1] = rho * rho;
    let x = solve_shifted_tridiagonal(&diag, &off, tau, &rhs).ok_or(GmfError::SingularShift { tau })?;
    Ok(RadauExtension {
        fixed_node_tau: tau,
        omega_hat: tau + x[l - 1],
        rho,
    })
}

/// `(l + 1)`-point Gauss-Radau rule with fixed node `tau` (normally `sigma_1^2`).
pub fn radau_tridiagonal(fact: &GkFactorization, f: &ScalarFunction, tau: f64) -> Result<f64> {
    let ext = radau_extension(fact, tau)?;
    let (mut diag, mut off) = fact.b.normal_tridiagonal();
    diag.push(ext.omega_hat);
    off.push(ext.rho);
    gauss_on_tridiagonal(&diag, &off, f, fact.breakdown_tol)
}

/// Bidiagonal form of the Gauss rule: `sum f(theta)/theta (e_1^T nu)^2` on the
/// `w` side, with the left singular vectors `upsilon` on the `z` side.
fn gauss_on_bidiagonal(b: &BidiagonalMatrix, f: &ScalarFunction, side: Side, breakdown_tol: f64) -> Result<f64> {
    let (diag, off) = b.normal_tridiagonal();
    let (nodes, lead) = tridiagonal_eigen_rows(&diag, &off, 2)?;
    let cut = zero_cut(&nodes, breakdown_tol);
    let h = |t: f64| {
        let theta = t.sqrt();
        Ok(f.try_eval_f(theta)? / theta)
    };
    match side {
        Side::WSide => apply_rule(&nodes, lead.row(0).iter().map(|x| x * x), cut, f, h),
        Side::ZSide => {
            // e_1^T upsilon_i = (omega_1 nu_i1 + gamma_1 nu_i2) / theta_i; the
            // zero nodes share whatever weight the others leave over.
            let n = nodes.len();
            let (w1, g1) = (b.omegas[0], b.gammas.first().copied().unwrap_or(0.0));
            let mut weights = vec![0.0; n];
            let mut used = 0.0;
            let mut zeros = 0usize;
            for i in 0..n {
                if nodes[i] > cut {
                    let nu2 = if n > 1 { lead[(1, i)] } else { 0.0 };
                    let u1 = (w1 * lead[(0, i)] + g1 * nu2) / nodes[i].sqrt();
                    weights[i] = u1 * u1;
                    used += weights[i];
                } else {
                    zeros += 1;
                }
            }
            if zeros > 0 {
                let rest = (1.0 - used).max(0.0) / zeros as f64;
                for i in 0..n {
                    if nodes[i] <= cut {
                        weights[i] = rest;
                    }
                }
            }
            apply_rule(&nodes, weights.into_iter(), cut, f, h)
        }
    }
}

/// Gauss rule `e_1^T B^† f◇(B) e_1` (or the transposed form on the `z` side).
pub fn gauss_bidiagonal(fact: &GkFactorization, f: &ScalarFunction, side: Side) -> Result<f64> {
    gauss_on_bidiagonal(&fact.effective_bidiagonal(), f, side, fact.breakdown_tol)
}

/// Extended bidiagonal `[[B, gamma_l e_l], [0, omega_hat]]` whose normal matrix
/// has `sigma1^2` as an eigenvalue.
pub fn radau_bidiagonal_matrix(fact: &GkFactorization, sigma1: f64) -> Result<BidiagonalMatrix> {
    let tau = sigma1 * sigma1;
    let ext = radau_extension(fact, tau)?;
    let gamma = fact.next_gamma.expect("checked by radau_extension");
    let radicand = ext.omega_hat - gamma * gamma;
    if radicand.is_nan() || radicand <= 0.0 {
        return Err(GmfError::InvalidRadau(format!(
            "sigma1^2 + e_l^T x - gamma_l^2 = {radicand:e} is not positive"
        )));
    }
    let mut omegas = fact.b.omegas.clone();
    let mut gammas = fact.b.gammas.clone();
    omegas.push(radicand.sqrt());
    gammas.push(gamma);
    Ok(BidiagonalMatrix::new(omegas, gammas))
}

/// Gauss-Radau rule in bidiagonal form with fixed singular value `sigma1`.
pub fn radau_bidiagonal(fact: &GkFactorization, f: &ScalarFunction, sigma1: f64, side: Side) -> Result<f64> {
    let b = radau_bidiagonal_matrix(fact, sigma1)?;
    gauss_on_bidiagonal(&b, f, side, fact.breakdown_tol)
}

/// Truncated action `P_l f◇(B_l) e_1` for the (unit) start vector of `fact`.
pub fn gmf_action(fact: &GkFactorization, f: &ScalarFunction) -> Result<DenseVector> {
    let coeffs = action_coefficients(fact, f)?;
    Ok(fact.effective_p() * coeffs)
}

/// `f◇(B_l) e_1`, the coordinates of the action in the basis `P`.
pub fn action_coefficients(fact: &GkFactorization, f: &ScalarFunction) -> Result<DenseVector> {
    let b = fact.effective_bidiagonal();
    let l = b.order();
    let svd = bidiagonal_svd(&b)?;
    let cut = svd.thetas.first().copied().unwrap_or(0.0) * fact.breakdown_tol.sqrt();
    let mut y = DenseVector::zeros(l);
    for (i, &theta) in svd.thetas.iter().enumerate() {
        if theta <= cut || theta == 0.0 {
            continue;
        }
        let c = f.try_eval_f(theta)? * svd.right[(0, i)];
        y.axpy(c, &svd.left.column(i), 1.0);
    }
    Ok(y)
}

/// Result of the power iteration behind [`estimate_sigma_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    /// Inflated estimate, intended as an upper bound for `sigma_1`.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value by power iteration on `A^T A`, inflated by
/// `1 + 10 tol`.
///
/// Convergence is declared when the observed change, extrapolated with the
/// observed contraction rate, falls below `tol` relative.
pub fn estimate_sigma_max(a: &CsrMatrix, tol: f64, max_iters: usize) -> Result<SigmaEstimate> {
    if a.nnz() == 0 {
        return Err(GmfError::InvalidParameter("sigma_max of a zero matrix".into()));
    }
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DenseVector::from_fn(n, |_, _| 1.0 + 0.1 * rng.gen_range(-1.0..1.0));
    x /= x.norm();
    let mut y = DenseVector::zeros(a.nrows());
    let mut sigma = 0.0f64;
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iters {
        a.matvec_into(x.as_slice(), y.as_mut_slice());
        let s = y.norm();
        if s == 0.0 {
            // start vector in the null space; try another
            x = DenseVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            x /= x.norm();
            continue;
        }
        a.matvec_transpose_into(y.as_slice(), x.as_mut_slice());
        let nx = x.norm();
        x /= nx;
        let change = (s - sigma).abs();
        sigma = s;
        let rate = if last_change.is_finite() && last_change > 0.0 {
            (change / last_change).min(0.999)
        } else {
            0.999
        };
        last_change = change;
        if it > 2 && change / (1.0 - rate) <= tol * sigma {
            return Ok(SigmaEstimate {
                value: sigma * (1.0 + 10.0 * tol),
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(SigmaEstimate {
        value: sigma * (1.0 + 10.0 * tol),
        converged: false,
        iterations: max_iters,
    })
}

/// Tuning knobs for [`bilinear_estimate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub approach: Approach,
    pub tol: f64,
    pub max_steps: usize,
    pub breakdown_tol: f64,
    /// Upper estimate of `sigma_1` for the Radau rules; estimated on demand.
    pub sigma_max: Option<f64>,
    /// For completely monotonic functions, average the Gauss rule with the
    /// Gauss-Radau rule and report the Gauss rule as a one-sided bound.
    pub bounds: bool,
    /// No convergence test passes before this many steps.
    pub min_steps: usize,
}

impl EstimateOptions {
    pub fn new(approach: Approach, tol: f64, max_steps: usize) -> Self {
        Self {
            approach,
            tol,
            max_steps,
            breakdown_tol: DEFAULT_BREAKDOWN_TOL,
            sigma_max: None,
            bounds: true,
            min_steps: 0,
        }
    }
}

/// Estimates `z^T f◇(A) w`; see [`bilinear_estimate_with`].
pub fn bilinear_estimate(
    z: &DenseVector,
    a: &CsrMatrix,
    f: &ScalarFunction,
    w: &DenseVector,
    approach: Approach,
    tol: f64,
    max_steps: usize,
) -> Result<QuadratureResult> {
    bilinear_estimate_with(z, a, f, w, &EstimateOptions::new(approach, tol, max_steps))
}

/// Estimates `z^T f◇(A) w`.
///
/// The quadrature approaches rewrite the target as `(A^T z)^T g(A^T A) w`. A
/// genuine quadratic form (`A^T z` parallel to `w`) is evaluated directly; for
/// completely monotonic `f` the value is the mean of the Gauss and Gauss-Radau
/// rules and the Gauss rule is reported as a one-sided bound. Anything else goes through
/// the polarization identity with two factorizations run in lockstep. The
/// action approach evaluates `z^T P_l f◇(B_l) e_1 |w|`.
///
/// Iteration stops once `|x_{l+1} - x_l| <= tol |x_l|`; when `x_l = 0` the
/// test becomes `|x_{l+1} - x_l| <= tol (1 + |x_{l+1}|)`. With `tol = 0` only breakdown
/// or `max_steps` ends the run.
pub fn bilinear_estimate_with(
    z: &DenseVector,
    a: &CsrMatrix,
    f: &ScalarFunction,
    w: &DenseVector,
    opts: &EstimateOptions,
) -> Result<QuadratureResult> {
    if z.len() != a.nrows() {
        return Err(GmfError::DimensionMismatch {
            expected: a.nrows(),
            found: z.len(),
            context: "bilinear_estimate z",
        });
    }
    if w.len() != a.ncols() {
        return Err(GmfError::DimensionMismatch {
            expected: a.ncols(),
            found: w.len(),
            context: "bilinear_estimate w",
        });
    }
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(GmfError::InvalidParameter("tol must be nonnegative".into()));
    }
    let wn = w.norm();
    if wn == 0.0 {
        return Err(GmfError::ZeroStartVector);
    }
    let max_steps = opts.max_steps.min(step_limit(a)).max(1);

    if opts.approach == Approach::Action {
        return action_estimate(z, a, f, w, wn, max_steps, opts);
    }

    let zt = a.matvec_transpose(z)?;
    let ztn = zt.norm();
    if ztn == 0.0 {
        return Ok(exact_zero());
    }
    let c = zt.dot(w) / (wn * wn);
    let deviation = (&zt - w * c).norm();
    let mut runs = Vec::new();
    let genuine = deviation <= PARALLEL_TOL * ztn;
    if genuine {
        runs.push((w / wn, c * wn * wn));
    } else {
        let v1 = &zt + w;
        let v2 = &zt - w;
        let (n1, n2) = (v1.norm(), v2.norm());
        runs.push((v1 / n1, n1 * n1 / 4.0));
        runs.push((v2 / n2, -n2 * n2 / 4.0));
    }

    let bounds = genuine && opts.bounds && f.completely_monotonic();
    let sigma1 = if bounds {
        Some(match opts.sigma_max {
            Some(s) => s,
            None => estimate_sigma_max(a, 1e-10, 10_000)?.value,
        })
    } else {
        None
    };

    let limit = step_limit(a);
    let mut facts: Vec<GkFactorization> = Vec::with_capacity(runs.len());
    for (v, _) in &runs {
        facts.push(gk_run(a, v, 0, opts.breakdown_tol)?);
    }

    let mut tracker = Tracker::with_min_steps(opts.tol, opts.min_steps);
    let mut bound = None;
    let mut midpoint = None;
    let mut exact = false;
    for step in 1..=max_steps {
        for fact in facts.iter_mut() {
            if !fact.breakdown && fact.steps < step {
                *fact = gk_extend(std::mem::replace(fact, placeholder()), a, 1)?;
            }
        }
        let done = |f: &GkFactorization| f.breakdown || f.steps >= limit;
        exact = facts.iter().all(done);

        let mut x = 0.0;
        let mut paired = 0.0;
        for (fact, (_, scale)) in facts.iter().zip(&runs) {
            let gauss = match opts.approach {
                Approach::Tridiagonal => gauss_tridiagonal(fact, f)?,
                _ => gauss_bidiagonal(fact, f, Side::WSide)?,
            };
            x += scale * gauss;
            if let Some(s1) = sigma1 {
                let radau = if done(fact) {
                    gauss
                } else {
                    match opts.approach {
                        Approach::Tridiagonal => radau_tridiagonal(fact, f, s1 * s1)?,
                        _ => radau_bidiagonal(fact, f, s1, Side::WSide)?,
                    }
                };
                paired += scale * radau;
            }
        }
        if sigma1.is_some() {
            bound = Some(x);
            midpoint = Some(0.5 * (x + paired));
        }
        let stop = tracker.push(x);
        if exact || stop {
            break;
        }
    }

    // Gauss sits below a completely monotonic quadratic form. The Radau rule
    // with its node at the top of the spectrum does too, so it tightens the
    // estimate but bounds nothing from the other side.
    let positive = runs.first().is_none_or(|r| r.1 > 0.0);
    let (lower, upper) = match bound {
        Some(b) if positive => (Some(b), None),
        Some(b) => (None, Some(b)),
        None => (None, None),
    };
    let value = midpoint.unwrap_or_else(|| tracker.last());
    Ok(QuadratureResult {
        value,
        lower,
        upper,
        steps: tracker.history.len(),
        residual: tracker.residual,
        converged: exact || tracker.converged,
        breakdown_exact: exact,
        history: tracker.history,
    })
}

fn action_estimate(
    z: &DenseVector,
    a: &CsrMatrix,
    f: &ScalarFunction,
    w: &DenseVector,
    wn: f64,
    max_steps: usize,
    opts: &EstimateOptions,
) -> Result<QuadratureResult> {
    let limit = step_limit(a);
    let mut fact = gk_run(a, &(w / wn), 0, opts.breakdown_tol)?;
    let mut tracker = Tracker::with_min_steps(opts.tol, opts.min_steps);
    let mut exact = false;
    for _ in 0..max_steps {
        fact = gk_extend(fact, a, 1)?;
        exact = fact.breakdown || fact.steps >= limit;
        let coeffs = action_coefficients(&fact, f)?;
        let zp = fact.effective_p().tr_mul(z);
        if tracker.push(wn * zp.dot(&coeffs)) || exact {
            break;
        }
    }
    Ok(QuadratureResult {
        value: tracker.last(),
        lower: None,
        upper: None,
        steps: tracker.history.len(),
        residual: tracker.residual,
        converged: exact || tracker.converged,
        breakdown_exact: exact,
        history: tracker.history,
    })
}

fn exact_zero() -> QuadratureResult {
    QuadratureResult {
        value: 0.0,
        lower: None,
        upper: None,
        steps: 0,
        history: Vec::new(),
        residual: None,
        converged: true,
        breakdown_exact: true,
    }
}

fn placeholder() -> GkFactorization {
    let a = CsrMatrix::zeros(1, 1);
    let mut f = gk_run(&a, &DenseVector::from_element(1, 1.0), 0, DEFAULT_BREAKDOWN_TOL)
        .expect("trivial factorization");
    f.breakdown = true;
    f
}

/// Relative-change stopping rule shared by the scalar drivers.
#[derive(Debug, Clone)]
pub struct Tracker {
    tol: f64,
    min_steps: usize,
    pub history: Vec<f64>,
    pub residual: Option<f64>,
    pub converged: bool,
}

impl Tracker {
    pub fn new(tol: f64) -> Self {
        Self::with_min_steps(tol, 0)
    }

    pub fn with_min_steps(tol: f64, min_steps: usize) -> Self {
        Self {
            tol,
            min_steps,
            history: Vec::new(),
            residual: None,
            converged: false,
        }
    }

    /// Records an estimate; true once the stopping rule is met. A zero
    /// tolerance never stops.
    pub fn push(&mut self, x: f64) -> bool {
        if let Some(&prev) = self.history.last() {
            let diff = (x - prev).abs();
            let (r, ok) = if prev != 0.0 {
                let r = diff / prev.abs();
                (r, r <= self.tol)
            } else {
                (diff, diff <= self.tol * (1.0 + x.abs()))
            };
            self.residual = Some(r);
            self.converged = ok && self.tol > 0.0 && self.history.len() + 1 >= self.min_steps;
        }
        self.history.push(x);
        self.converged
    }

    pub fn last(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}
