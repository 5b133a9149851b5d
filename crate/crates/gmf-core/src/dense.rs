//! Small dense kernels shared by the Krylov code: one-sided Jacobi SVD,
//! the implicit QL eigensolver for symmetric tridiagonal matrices, a pivoted
//! tridiagonal solve, and functions of small dense matrices.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{GmfError, Result};
use crate::sparse::{DenseMatrix, DenseVector};

const MAX_JACOBI_SWEEPS: usize = 80;
const MAX_QL_ITERATIONS: usize = 60;

/// Full thin SVD from one-sided (Hestenes) Jacobi rotations.
///
/// Returns `(u, sigma, v)` with `sigma` nonincreasing and `min(m, n)` entries;
/// columns of `u` belonging to exactly zero singular values are zero.
pub fn jacobi_svd(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    if a.nrows() < a.ncols() {
        let (u, s, v) = jacobi_svd(&a.transpose())?;
        return Ok((v, s, u));
    }
    let (m, n) = a.shape();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(GmfError::InvalidParameter("SVD input has non-finite entries".into()));
    }
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n, n);
    if n == 0 {
        return Ok((DenseMatrix::zeros(m, 0), Vec::new(), v));
    }

    let eps = f64::EPSILON;
    // pairs of columns that are both rounding noise are left alone
    let floor = eps * eps * a.norm_squared();
    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let (alpha, beta, gamma) = {
                    let wi = w.column(i);
                    let wj = w.column(j);
                    (wi.norm_squared(), wj.norm_squared(), wi.dot(&wj))
                };
                if gamma.abs() <= floor || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(w.as_mut_slice(), m, i, j, c, s);
                rotate_columns(v.as_mut_slice(), n, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(GmfError::NonConvergence("one-sided Jacobi SVD".into()));
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let mut u = DenseMatrix::zeros(m, n);
    let mut vs = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            u.set_column(k, &(w.column(j) / s));
        }
        vs.set_column(k, &v.column(j));
    }
    Ok((u, sigma, vs))
}

fn rotate_columns(data: &mut [f64], rows: usize, i: usize, j: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(j * rows);
    let ci = &mut head[i * rows..(i + 1) * rows];
    let cj = &mut tail[..rows];
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Eigenpairs of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (implicit QL with Wilkinson-type shifts).
///
/// Eigenvalues come back in ascending order; column `i` of the returned
/// matrix is the unit eigenvector for eigenvalue `i`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    tridiagonal_eigen_rows(diag, off, diag.len())
}

/// Like [`tridiagonal_eigen`] but only accumulates the leading `rows` rows of
/// the eigenvector matrix, which is all a Gauss rule needs.
pub fn tridiagonal_eigen_rows(diag: &[f64], off: &[f64], rows: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = diag.len();
    assert!(n == 0 || off.len() == n - 1, "off-diagonal length must be n - 1");
    let rows = rows.min(n);
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(off);
    let mut z = DenseMatrix::identity(rows, n);

    let mut shift_total = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > f64::EPSILON * tst1 {
            m += 1;
        }

        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > MAX_QL_ITERATIONS {
                    return Err(GmfError::NonConvergence("tridiagonal QL iteration".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_total += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_columns(z.as_mut_slice(), rows, i, i + 1, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= f64::EPSILON * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_total;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = DenseMatrix::zeros(rows, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &z.column(i));
    }
    Ok((values, vectors))
}

/// Solves `(T - shift I) x = rhs` for symmetric tridiagonal `T` by Gaussian
/// elimination with partial pivoting. `None` when the shifted matrix is
/// numerically singular.
pub fn solve_shifted_tridiagonal(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    // Row i keeps up to three entries after pivoting: columns i, i+1, i+2.
    let mut a: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut b: Vec<f64> = off.to_vec();
    b.push(0.0);
    let mut c = vec![0.0; n];
    let mut lower: Vec<f64> = off.to_vec();
    let mut x = rhs.to_vec();
    let scale = diag
        .iter()
        .map(|d| (d - shift).abs())
        .chain(off.iter().map(|o| o.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    for i in 0..n - 1 {
        if lower[i].abs() > a[i].abs() {
            // swap rows i and i+1
            let (ai, bi, ci) = (a[i], b[i], c[i]);
            a[i] = lower[i];
            b[i] = a[i + 1];
            c[i] = b[i + 1];
            lower[i] = ai;
            a[i + 1] = bi;
            b[i + 1] = ci;
            x.swap(i, i + 1);
        }
        if a[i].abs() <= f64::EPSILON * scale {
            return None;
        }
        let factor = lower[i] / a[i];
        a[i + 1] -= factor * b[i];
        if i + 1 < n - 1 {
            b[i + 1] -= factor * c[i];
        }
        x[i + 1] -= factor * x[i];
    }
    if a[n - 1].abs() <= f64::EPSILON * scale {
        return None;
    }
    for i in (0..n).rev() {
        let mut v = x[i];
        if i + 1 < n {
            v -= b[i] * x[i + 1];
        }
        if i + 2 < n {
            v -= c[i] * x[i + 2];
        }
        x[i] = v / a[i];
    }
    Some(x)
}

/// `h(S)` for a symmetric matrix through its eigendecomposition.
pub fn symmetric_function(s: &DenseMatrix, h: impl Fn(f64) -> f64) -> DenseMatrix {
    let eig = SymmetricEigen::new(s.clone());
    let vals = eig.eigenvalues.map(h);
    &eig.eigenvectors * DenseMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Largest absolute entry.
pub fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    jacobi_svd(m)
        .map(|(_, s, _)| s.first().copied().unwrap_or(0.0))
        .unwrap_or_else(|_| m.norm())
}

/// `g(J)` for a small, possibly nonsymmetric real matrix.
///
/// Symmetric input goes through a real symmetric eigendecomposition. Otherwise
/// the matrix is balanced, its eigenvalues come from a real Schur form and
/// eigenvectors from complex inverse iteration; `g` is then applied through
/// its complex extension and the imaginary residue (relative to the result)
/// must stay below `1e-10`.
pub fn matrix_function<F>(j: &DenseMatrix, g: F) -> Result<DenseMatrix>
where
    F: Fn(Complex<f64>) -> Result<Complex<f64>>,
{
    let n = j.nrows();
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let scale = max_abs(j).max(f64::MIN_POSITIVE);
    let asym = max_abs(&(j - j.transpose()));
    if asym <= 1e-14 * scale {
        let sym = (j + j.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut vals = DVector::zeros(n);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = g(Complex::new(lambda, 0.0))?;
            vals[k] = v.re;
        }
        return Ok(&eig.eigenvectors * DenseMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose());
    }

    let mut balanced = j.clone();
    let d = nalgebra::linalg::balancing::balance_parlett_reinsch(&mut balanced);
    let schur = Schur::try_new(balanced.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| GmfError::NonConvergence("real Schur decomposition".into()))?;
    let eigenvalues = schur.complex_eigenvalues();

    let jc: DMatrix<Complex<f64>> = balanced.map(|x| Complex::new(x, 0.0));
    let bnorm = max_abs(&balanced).max(f64::MIN_POSITIVE);
    let mut vectors = DMatrix::<Complex<f64>>::zeros(n, n);
    let mut gvals = Vec::with_capacity(n);
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        // conjugate pairs get exactly conjugate vectors and values, so the
        // imaginary parts cancel up to rounding
        let real = lambda.im.abs() <= 1e-14 * bnorm;
        let upper = if real { Complex::new(lambda.re, 0.0) } else { Complex::new(lambda.re, lambda.im.abs()) };
        let gv = g(upper)?;
        let perturb = if real {
            Complex::new(1e-13 * bnorm, 0.0)
        } else {
            Complex::new(1e-13 * bnorm, 1e-14 * bnorm)
        };
        let mut shifted = jc.clone();
        for i in 0..n {
            shifted[(i, i)] -= upper + perturb;
        }
        let lu = shifted.lu();
        let mut x = DVector::<Complex<f64>>::from_fn(n, |i, _| {
            let im = if real { 0.0 } else { 0.05 * (i as f64).cos() };
            Complex::new(1.0 + 0.1 * (i as f64).sin(), im)
        });
        for _ in 0..3 {
            x = lu
                .solve(&x)
                .ok_or_else(|| GmfError::NonConvergence("inverse iteration".into()))?;
            let nrm = x.norm();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(GmfError::NonConvergence("inverse iteration".into()));
            }
            x /= Complex::new(nrm, 0.0);
        }
        if real {
            x.iter_mut().for_each(|z| z.im = 0.0);
            gvals.push(Complex::new(gv.re, 0.0));
        } else if lambda.im < 0.0 {
            x.iter_mut().for_each(|z| *z = z.conj());
            gvals.push(gv.conj());
        } else {
            gvals.push(gv);
        }
        vectors.set_column(k, &x);
    }

    let inverse = vectors
        .clone()
        .try_inverse()
        .ok_or_else(|| GmfError::NonConvergence("eigenvector basis is singular".into()))?;
    let gdiag = DMatrix::from_diagonal(&DVector::from_vec(gvals));
    let result = &vectors * gdiag * inverse;

    let real = result.map(|z| z.re);
    let imag = max_abs(&result.map(|z| z.im));
    let size = max_abs(&real).max(f64::MIN_POSITIVE);
    if imag > 1e-10 * size.max(1.0) {
        return Err(GmfError::ComplexResidue { residue: imag / size.max(1.0) });
    }
    let mut out = real;
    nalgebra::linalg::balancing::unbalance(&mut out, &d);
    Ok(out)
}

/// Thin QR of `m` by modified Gram-Schmidt with one re-orthogonalization
/// pass. Diagonal of `R` is nonnegative; columns that vanish against the
/// preceding ones get a zero row in `R` and are replaced by unit vectors
/// orthogonal to everything in `basis` and the earlier columns.
pub fn block_qr(m: &DenseMatrix, basis: &[&DenseMatrix], rng_seed: u64) -> (DenseMatrix, DenseMatrix, usize) {
    use rand::{Rng, SeedableRng};
    let (rows, k) = m.shape();
    let mut q = DenseMatrix::zeros(rows, k);
    let mut r = DenseMatrix::zeros(k, k);
    let mut deficient = 0;
    let scale = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);

    for j in 0..k {
        let mut v: DenseVector = m.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                r[(i, j)] += c;
                v.axpy(-c, &q.column(i), 1.0);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-12 * scale.max(f64::MIN_POSITIVE) && nrm > 0.0 {
            r[(j, j)] = nrm;
            q.set_column(j, &(v / nrm));
        } else {
            deficient += 1;
            let mut fresh = DenseVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0));
            for _ in 0..2 {
                for b in basis {
                    let coeffs = b.transpose() * &fresh;
                    fresh -= *b * coeffs;
                }
                for i in 0..j {
                    let c = q.column(i).dot(&fresh);
                    fresh.axpy(-c, &q.column(i), 1.0);
                }
            }
            let fn_ = fresh.norm();
            q.set_column(j, &(fresh / fn_));
        }
    }
    (q, r, deficient)
}
