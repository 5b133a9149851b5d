//! Scalar functions `f` together with the quadrature integrand
//! `g(t) = f(sqrt t) / sqrt t` that turns `z^T f◇(A) w` into a bilinear form
//! in `A^T A`.
//!
//! Complete monotonicity is declared per function, never inferred; it decides
//! whether Gauss and Gauss-Radau values are reported as bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::Complex;

use crate::error::{GmfError, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Sinh,
    Resolvent { alpha: f64 },
    Power { p: f64 },
    ExpNeg,
    InvShift { c: f64 },
    /// `f(s) = s * sum_k c_k s^{2k}`, so that `g(t) = sum_k c_k t^k`.
    OddPolynomial(Vec<f64>),
    Custom(RealFn),
}

/// A registered scalar function.
#[derive(Clone)]
pub struct ScalarFunction {
    name: String,
    kind: Kind,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("name", &self.name)
            .field("params", &self.params())
            .finish()
    }
}

/// Looks a function up by name. `params` carries `alpha` for `resolvent`, `p`
/// for `power` and `c` for `inv_shift`.
pub fn make_function(name: &str, params: &[f64]) -> Result<ScalarFunction> {
    let first = |what: &str| {
        params.first().copied().ok_or_else(|| {
            GmfError::InvalidParameter(format!("`{name}` needs a {what} parameter"))
        })
    };
    match name {
        "sinh" => Ok(ScalarFunction::sinh()),
        "resolvent" => ScalarFunction::resolvent(first("alpha")?),
        "power" => ScalarFunction::power(first("exponent")?),
        "exp_neg" => Ok(ScalarFunction::exp_neg()),
        "inv_shift" => ScalarFunction::inv_shift(first("shift")?),
        other => Err(GmfError::UnknownFunction(other.to_string())),
    }
}

impl ScalarFunction {
    pub fn sinh() -> Self {
        Self {
            name: "sinh".into(),
            kind: Kind::Sinh,
        }
    }

    /// `f(s) = alpha s / (1 - (alpha s)^2)`, the off-diagonal block of
    /// `(I - alpha 𝒜)^{-1}`.
    pub fn resolvent(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GmfError::InvalidParameter(format!(
                "resolvent needs alpha > 0, got {alpha}"
            )));
        }
        Ok(Self {
            name: "resolvent".into(),
            kind: Kind::Resolvent { alpha },
        })
    }

    /// `f(s) = s^p`.
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(GmfError::InvalidParameter(format!("power needs a finite exponent, got {p}")));
        }
        Ok(Self {
            name: "power".into(),
            kind: Kind::Power { p },
        })
    }

    /// `f(s) = exp(-s)`.
    pub fn exp_neg() -> Self {
        Self {
            name: "exp_neg".into(),
            kind: Kind::ExpNeg,
        }
    }

    /// `f(s) = 1 / (s + c)` with `c > 0`.
    pub fn inv_shift(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(GmfError::InvalidParameter(format!(
                "inv_shift needs c > 0, got {c}"
            )));
        }
        Ok(Self {
            name: "inv_shift".into(),
            kind: Kind::InvShift { c },
        })
    }

    /// `f(s) = s p(s^2)` where `coeffs[k]` multiplies `s^{2k+1}`; the integrand
    /// is then the polynomial `g(t) = sum_k coeffs[k] t^k`.
    pub fn odd_polynomial(coeffs: Vec<f64>) -> Self {
        Self {
            name: "odd_polynomial".into(),
            kind: Kind::OddPolynomial(coeffs),
        }
    }

    /// Arbitrary real `f`; `g` is derived pointwise and has no value at zero.
    pub fn custom(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Custom(Arc::new(f)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Resolvent { alpha } => vec![*alpha],
            Kind::Power { p } => vec![*p],
            Kind::InvShift { c } => vec![*c],
            Kind::OddPolynomial(c) => c.clone(),
            _ => Vec::new(),
        }
    }

    /// Declared complete monotonicity of `f` on `(0, ∞)`.
    pub fn completely_monotonic(&self) -> bool {
        match &self.kind {
            Kind::ExpNeg | Kind::InvShift { .. } => true,
            Kind::Power { p } => *p <= 0.0,
            _ => false,
        }
    }

    /// Whether `g` extends to an entire function of `t`.
    pub fn g_entire_in_t(&self) -> bool {
        match &self.kind {
            Kind::Sinh | Kind::OddPolynomial(_) => true,
            Kind::Power { p } => is_odd_integer(*p) && *p >= 1.0,
            _ => false,
        }
    }

    /// Finite limit of `g` at `t = 0`, when one exists. Entire integrands have
    /// one, and so does the resolvent (`g(0) = alpha`).
    pub fn g_at_zero(&self) -> Option<f64> {
        match &self.kind {
            Kind::Sinh => Some(1.0),
            Kind::Resolvent { alpha } => Some(*alpha),
            Kind::OddPolynomial(c) => Some(c.first().copied().unwrap_or(0.0)),
            Kind::Power { p } if *p == 1.0 => Some(1.0),
            Kind::Power { p } if *p > 1.0 => Some(0.0),
            _ => None,
        }
    }

    /// Smallest positive singularity of `g` in `t`, if any.
    pub fn g_pole(&self) -> Option<f64> {
        match &self.kind {
            Kind::Resolvent { alpha } => Some(1.0 / (alpha * alpha)),
            _ => None,
        }
    }

    pub fn eval_f(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Sinh => s.sinh(),
            Kind::Resolvent { alpha } => {
                let a = alpha * s;
                a / (1.0 - a * a)
            }
            Kind::Power { p } => power(s, *p),
            Kind::ExpNeg => (-s).exp(),
            Kind::InvShift { c } => 1.0 / (s + c),
            Kind::OddPolynomial(c) => s * horner(c, s * s),
            Kind::Custom(f) => f(s),
        }
    }

    /// `g(t) = f(sqrt t) / sqrt t` for `t > 0`, using closed forms where they
    /// are more accurate than the quotient.
    pub fn eval_g(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Sinh => {
                if t == 0.0 {
                    1.0
                } else if t < 1e-8 {
                    1.0 + t / 6.0
                } else {
                    let s = t.sqrt();
                    s.sinh() / s
                }
            }
            Kind::Resolvent { alpha } => alpha / (1.0 - alpha * alpha * t),
            Kind::Power { p } => {
                if is_odd_integer(*p) && *p >= 1.0 {
                    t.powi(((*p - 1.0) / 2.0) as i32)
                } else {
                    t.powf((*p - 1.0) / 2.0)
                }
            }
            Kind::ExpNeg => {
                let s = t.sqrt();
                (-s).exp() / s
            }
            Kind::InvShift { c } => {
                let s = t.sqrt();
                1.0 / (s * (s + c))
            }
            Kind::OddPolynomial(c) => horner(c, t),
            Kind::Custom(f) => {
                let s = t.sqrt();
                f(s) / s
            }
        }
    }

    /// `f(s)` with a domain check: non-finite values and arguments on the far
    /// side of the resolvent pole are errors.
    pub fn try_eval_f(&self, s: f64) -> Result<f64> {
        if let Kind::Resolvent { alpha } = self.kind {
            if alpha * s.abs() >= 1.0 {
                return Err(self.domain_error(s));
            }
        }
        let v = self.eval_f(s);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain_error(s))
        }
    }

    /// `g(t)` for `t >= 0` with a domain check; `t = 0` uses [`Self::g_at_zero`].
    pub fn try_eval_g(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(self.domain_error(t));
        }
        if let Some(pole) = self.g_pole() {
            if t >= pole {
                return Err(self.domain_error(t));
            }
        }
        if t == 0.0 {
            return self.g_at_zero().ok_or_else(|| self.domain_error(t));
        }
        let v = self.eval_g(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain_error(t))
        }
    }

    /// Analytic continuation of `g` to complex arguments (principal branch of
    /// the square root). `None` for custom functions.
    pub fn eval_g_complex(&self, z: Complex<f64>) -> Option<Complex<f64>> {
        if z.im == 0.0 && z.re >= 0.0 {
            if let Ok(v) = self.try_eval_g(z.re) {
                return Some(Complex::new(v, 0.0));
            }
        }
        let one = Complex::new(1.0, 0.0);
        let value = match &self.kind {
            Kind::Sinh => {
                if z.norm() < 1e-8 {
                    one + z / 6.0
                } else {
                    let s = z.sqrt();
                    s.sinh() / s
                }
            }
            Kind::Resolvent { alpha } => Complex::new(*alpha, 0.0) / (one - z * (alpha * alpha)),
            Kind::Power { p } => {
                if is_odd_integer(*p) && *p >= 1.0 {
                    z.powi(((*p - 1.0) / 2.0) as i32)
                } else {
                    z.powf((*p - 1.0) / 2.0)
                }
            }
            Kind::ExpNeg => {
                let s = z.sqrt();
                (-s).exp() / s
            }
            Kind::InvShift { c } => {
                let s = z.sqrt();
                one / (s * (s + c))
            }
            Kind::OddPolynomial(c) => c.iter().rev().fold(Complex::new(0.0, 0.0), |acc, &ck| acc * z + ck),
            Kind::Custom(_) => return None,
        };
        (value.re.is_finite() && value.im.is_finite()).then_some(value)
    }

    fn domain_error(&self, argument: f64) -> GmfError {
        GmfError::FunctionDomain {
            function: self.name.clone(),
            argument,
        }
    }
}

/// Elementwise `g` at eigenvalues of a Jacobi matrix. Zero eigenvalues take the
/// finite limit of `g` when it exists and are an error otherwise, since they
/// signal a measure atom at the origin that the integrand cannot absorb.
pub fn eval_g_matrix_arg(function: &ScalarFunction, eigenvalues: &[f64]) -> Result<Vec<f64>> {
    eigenvalues.iter().map(|&t| function.try_eval_g(t)).collect()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn is_odd_integer(p: f64) -> bool {
    p.fract() == 0.0 && (p as i64).rem_euclid(2) == 1
}

fn power(s: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
        s.powi(p as i32)
    } else {
        s.powf(p)
    }
}
