#![allow(dead_code)]

use gmf_core::dense::{max_abs, symmetric_function};
use gmf_core::oracle::{compact_svd, gmf_dense, sqrt_function_pinv, DEFAULT_RANK_TOL};
use gmf_core::{CsrMatrix, DenseMatrix, DenseVector, ScalarFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries scaled so that the singular values stay O(1).
pub fn random_dense(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
    let s = 1.0 / (m.max(n) as f64).sqrt();
    DenseMatrix::from_fn(m, n, |_, _| s * rng.gen_range(-1.0..1.0))
}

/// Like [`random_dense`], but with every column zeroed with probability 1/4.
pub fn random_dense_maybe_deficient(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
    let mut a = random_dense(rng, m, n);
    if rng.gen_bool(0.3) {
        for j in 0..n {
            if rng.gen_bool(0.25) {
                a.column_mut(j).fill(0.0);
            }
        }
    }
    a
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

pub fn sparse(a: &DenseMatrix) -> CsrMatrix {
    CsrMatrix::from_dense(a)
}

/// `|a - b|_max <= tol * max(1, |b|_max)`.
pub fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64, what: &str) -> Result<(), String> {
    if a.shape() != b.shape() {
        return Err(format!("{what}: shapes {:?} vs {:?}", a.shape(), b.shape()));
    }
    let err = max_abs(&(a - b));
    let scale = max_abs(b).max(1.0);
    if err <= tol * scale {
        Ok(())
    } else {
        Err(format!("{what}: error {err:e} against scale {scale:e}"))
    }
}

pub fn close_scalar(a: f64, b: f64, rel: f64, what: &str) -> Result<(), String> {
    let err = (a - b).abs();
    if err <= rel * b.abs().max(f64::MIN_POSITIVE) || err == 0.0 {
        Ok(())
    } else {
        Err(format!("{what}: {a:e} vs {b:e} (relative error {:e})", err / b.abs()))
    }
}

pub fn inv1p() -> ScalarFunction {
    ScalarFunction::custom("inv1p", |t| 1.0 / (1.0 + t))
}

fn gmf(a: &DenseMatrix, f: &ScalarFunction) -> Result<DenseMatrix, String> {
    gmf_dense(a, f, DEFAULT_RANK_TOL).map_err(|e| e.to_string())
}

fn block_diag(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

/// Every algebraic identity of generalized matrix functions, checked on `a`.
pub fn check_oracle_properties(a: &DenseMatrix, rng: &mut ChaCha8Rng, tol: f64) -> Result<(), String> {
    let (m, n) = a.shape();
    let sinh = ScalarFunction::sinh();
    let inv = inv1p();
    let svd = compact_svd(a, DEFAULT_RANK_TOL).map_err(|e| e.to_string())?;
    let e = svd.apply(|_| Ok(1.0)).map_err(|e| e.to_string())?;

    let k = 2.5;
    close(&gmf(a, &ScalarFunction::custom("const", move |_| k))?, &(&e * k), tol, "constant")?;
    close(&gmf(a, &ScalarFunction::custom("id", |t| t))?, a, tol, "identity")?;

    let fa_sinh = gmf(a, &sinh)?;
    let fa_inv = gmf(a, &inv)?;
    let sum = ScalarFunction::custom("sum", |t| t.sinh() + 1.0 / (1.0 + t));
    close(&gmf(a, &sum)?, &(&fa_sinh + &fa_inv), tol, "sum rule")?;
    let prod = ScalarFunction::custom("prod", |t| t.sinh() / (1.0 + t));
    close(&gmf(a, &prod)?, &(&fa_sinh * e.transpose() * &fa_inv), tol, "product rule")?;

    close(&gmf(&a.transpose(), &sinh)?, &fa_sinh.transpose(), tol, "transpose")?;

    let x = random_orthogonal(rng, m);
    let y = random_orthogonal(rng, n);
    close(&gmf(&(&x * a * &y), &sinh)?, &(&x * &fa_sinh * &y), tol, "unitary invariance")?;

    let a2 = random_dense(rng, 1 + m / 2, 1 + n / 3);
    close(
        &gmf(&block_diag(a, &a2), &sinh)?,
        &block_diag(&fa_sinh, &gmf(&a2, &sinh)?),
        tol,
        "block diagonal",
    )?;
    let i2 = DenseMatrix::identity(2, 2);
    close(&gmf(&i2.kronecker(a), &sinh)?, &i2.kronecker(&fa_sinh), tol, "I (x) A")?;
    close(&gmf(&a.kronecker(&i2), &sinh)?, &fa_sinh.kronecker(&i2), tol, "A (x) I")?;

    let composite = ScalarFunction::custom("inv1p(sinh)", |t| 1.0 / (1.0 + t.sinh()));
    close(&gmf(a, &composite)?, &gmf(&fa_sinh, &inv)?, tol, "composite")?;

    let aat = a * a.transpose();
    let ata = a.transpose() * a;
    let cut = 1e-12;
    close(&(sqrt_function_pinv(&aat, |t| t.sinh(), cut) * a), &fa_sinh, tol, "left square-root form")?;
    close(&(a * sqrt_function_pinv(&ata, |t| t.sinh(), cut)), &fa_sinh, tol, "right square-root form")?;

    for (name, g) in [("exp", (|t: f64| t.exp()) as fn(f64) -> f64), ("inv1p", |t: f64| 1.0 / (1.0 + t))] {
        let left = symmetric_function(&aat, g) * &fa_sinh;
        let right = &fa_sinh * symmetric_function(&ata, g);
        close(&left, &right, tol, &format!("commutation with {name}"))?;
    }
    Ok(())
}

/// `|w|^2`-normalized quadratic form `w^T g(A^T A) w / |w|^2`, with the null
/// space of `A` weighted by `g(0)` when that exists.
pub fn quadratic_exact(a: &DenseMatrix, f: &ScalarFunction, w: &DenseVector) -> f64 {
    let w = w / w.norm();
    let svd = compact_svd(a, DEFAULT_RANK_TOL).unwrap();
    let vw = svd.v.tr_mul(&w);
    let mut total = 0.0;
    let mut captured = 0.0;
    for (i, &s) in svd.sigma.iter().enumerate() {
        total += f.eval_f(s) / s * vw[i] * vw[i];
        captured += vw[i] * vw[i];
    }
    if let Some(g0) = f.g_at_zero() {
        total += g0 * (1.0 - captured).max(0.0);
    }
    total
}

/// Random matrix with `m >= n`, full column rank almost surely.
pub fn random_tall(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let m = n + rng.gen_range(0..6);
    random_dense(rng, m, n)
}
