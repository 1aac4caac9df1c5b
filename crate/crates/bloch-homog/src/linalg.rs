//! Dense complex linear algebra helpers on top of faer.

use crate::error::{Error, Result};
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::{c64, Mat, Par, Side};

pub type CMat = Mat<c64>;

pub fn cz() -> c64 {
    c64::new(0.0, 0.0)
}

pub fn cr(re: f64) -> c64 {
    c64::new(re, 0.0)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { cr(1.0) } else { cz() })
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { cr(d[i]) } else { cz() })
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: &CMat, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// (A + A*)/2
pub fn hermitize(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Largest entrywise modulus of A - A*.
pub fn skew_residual(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

/// Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.
pub fn herm_eig(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitize(a);
    let e = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn herm_eigvals(a: &CMat) -> Result<Vec<f64>> {
    let h = hermitize(a);
    let v = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalues failed: {e:?}")))?;
    Ok(v)
}

/// Cholesky factor L with B = L L*.
pub fn cholesky(b: &CMat) -> Result<CMat> {
    let h = hermitize(b);
    let l = h
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Cholesky failed: {e:?}")))?;
    Ok(l.L().to_owned())
}

/// Generalized Hermitian problem A w = λ B w with B positive definite.
/// Returns ascending λ and W with W* B W = I.
pub fn gen_herm_eig(a: &CMat, b: &CMat) -> Result<(Vec<f64>, CMat)> {
    let l = cholesky(b)?;
    // C = L^{-1} A L^{-*}
    let mut x = hermitize(a);
    solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), Par::Seq);
    let mut c = adjoint(&x);
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let (vals, y) = herm_eig(&c)?;
    let mut w = y;
    solve_upper_triangular_in_place(l.adjoint(), w.as_mut(), Par::Seq);
    Ok((vals, w))
}

/// Function of a Hermitian matrix through its spectrum.
pub fn herm_fn(a: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, v) = herm_eig(a)?;
    let fv: Vec<f64> = vals.iter().map(|&x| f(x)).collect();
    let n = vals.len();
    let vd = Mat::from_fn(n, n, |i, j| v[(i, j)] * fv[j]);
    Ok(&vd * v.adjoint())
}

/// A^{1/2} for Hermitian positive semidefinite A.
pub fn sqrt_herm(a: &CMat) -> Result<CMat> {
    herm_fn(a, |x| x.max(0.0).sqrt())
}

/// A^{-1/2} for Hermitian positive definite A; eigenvalues below `floor` are rejected.
pub fn inv_sqrt_herm(a: &CMat, floor: f64) -> Result<CMat> {
    let vals = herm_eigvals(a)?;
    if vals.iter().any(|&x| x <= floor) {
        return Err(Error::Numerical(format!(
            "matrix not positive definite (min eigenvalue {:e})",
            vals.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    herm_fn(a, |x| 1.0 / x.sqrt())
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

/// e^{-i tau A} for Hermitian A.
pub fn expm_herm(a: &CMat, tau: f64) -> Result<CMat> {
    let (vals, v) = herm_eig(a)?;
    let n = vals.len();
    let vd = Mat::from_fn(n, n, |i, j| v[(i, j)] * c64::cis(-tau * vals[j]));
    Ok(&vd * v.adjoint())
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(vec![0.0]);
    }
    let s = a
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(s)
}

pub fn spectral_norm(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?.into_iter().fold(0.0, f64::max))
}

fn vnorm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(v: &mut [c64], basis: &[Vec<c64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let dot: c64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(q.iter()) {
                *x -= dot * y;
            }
        }
    }
}

/// Deterministic start vector.
fn start_vector(n: usize) -> Vec<c64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut v: Vec<c64> = (0..n).map(|_| c64::new(next(), next())).collect();
    let nv = vnorm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

/// Largest singular value of a matrix known only through products.
///
/// Golub-Kahan bidiagonalization with full reorthogonalization. `apply`
/// maps `cols`-vectors to `rows`-vectors and `apply_adj` is its adjoint.
pub fn top_singular_value(
    rows: usize,
    cols: usize,
    apply: impl Fn(&[c64]) -> Vec<c64>,
    apply_adj: impl Fn(&[c64]) -> Vec<c64>,
    rel_tol: f64,
) -> Result<f64> {
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }
    let max_iter = rows.min(cols).min(200);
    let mut vs: Vec<Vec<c64>> = Vec::with_capacity(max_iter + 1);
    let mut us: Vec<Vec<c64>> = Vec::with_capacity(max_iter + 1);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let v = start_vector(cols);
    let mut u = apply(&v);
    vs.push(v);
    let mut alpha = vnorm(&u);
    if alpha == 0.0 {
        // start vector in the null space: fall back to a dense probe
        return Ok(0.0_f64.max(power_fallback(rows, cols, &apply, &apply_adj)));
    }
    u.iter_mut().for_each(|x| *x /= alpha);
    us.push(u);
    alphas.push(alpha);

    let mut prev = 0.0;
    let mut stable = 0;
    let mut sigma = alpha;
    for _ in 1..max_iter {
        let j = us.len() - 1;
        let mut v = apply_adj(&us[j]);
        for (x, y) in v.iter_mut().zip(vs[j].iter()) {
            *x -= alpha * y;
        }
        orthogonalize(&mut v, &vs);
        let beta = vnorm(&v);
        if beta <= 1e-14 * sigma.max(f64::MIN_POSITIVE) {
            break;
        }
        v.iter_mut().for_each(|x| *x /= beta);
        let mut u = apply(&v);
        for (x, y) in u.iter_mut().zip(us[j].iter()) {
            *x -= beta * y;
        }
        orthogonalize(&mut u, &us);
        alpha = vnorm(&u);
        vs.push(v);
        betas.push(beta);
        if alpha <= 1e-14 * sigma.max(f64::MIN_POSITIVE) {
            alphas.push(0.0);
            sigma = bidiag_top(&alphas, &betas)?;
            break;
        }
        u.iter_mut().for_each(|x| *x /= alpha);
        us.push(u);
        alphas.push(alpha);
        sigma = bidiag_top(&alphas, &betas)?;
        if (sigma - prev).abs() <= rel_tol * sigma {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
        prev = sigma;
    }
    Ok(sigma)
}

fn power_fallback(
    rows: usize,
    cols: usize,
    apply: &impl Fn(&[c64]) -> Vec<c64>,
    _apply_adj: &impl Fn(&[c64]) -> Vec<c64>,
) -> f64 {
    let mut m = zeros(rows, cols);
    for j in 0..cols {
        let mut e = vec![cz(); cols];
        e[j] = cr(1.0);
        let col = apply(&e);
        for i in 0..rows {
            m[(i, j)] = col[i];
        }
    }
    spectral_norm(&m).unwrap_or(0.0)
}

fn bidiag_top(alphas: &[f64], betas: &[f64]) -> Result<f64> {
    let k = alphas.len();
    let b = Mat::from_fn(k, k, |i, j| {
        if i == j {
            cr(alphas[i])
        } else if j == i + 1 && i < betas.len() {
            cr(betas[i])
        } else {
            cz()
        }
    });
    spectral_norm(&b)
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Real least squares by normal equations on a small Vandermonde-type system.
pub fn real_lstsq(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let p = rows[0].len();
    let a = Mat::from_fn(rows.len(), p, |i, j| cr(rows[i][j]));
    let b = Mat::from_fn(rhs.len(), 1, |i, _| cr(rhs[i]));
    let qr = a.qr();
    let x = qr.solve_lstsq(&b);
    Ok((0..p).map(|i| x[(i, 0)].re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_herm(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = Mat::from_fn(n, n, |_, _| c64::new(next(), next()));
        hermitize(&a)
    }

    #[test]
    fn generalized_eigen_is_b_orthonormal() {
        let a = random_herm(6, 1);
        let c = random_herm(6, 2);
        let b = add(&(&c * &c), &identity(6));
        let (vals, w) = gen_herm_eig(&a, &b).unwrap();
        let g = &(w.adjoint() * &b) * &w;
        assert!(max_abs(&sub(&g, &identity(6))) < 1e-12);
        let r = sub(&(&a * &w), &(&(&b * &w) * diag_real(&vals)));
        assert!(max_abs(&r) < 1e-12);
    }

    #[test]
    fn inverse_square_root() {
        let c = random_herm(5, 3);
        let b = add(&(&c * &c), &identity(5));
        let s = inv_sqrt_herm(&b, 1e-12).unwrap();
        let p = &(&s * &b) * &s;
        assert!(max_abs(&sub(&p, &identity(5))) < 1e-12);
    }

    #[test]
    fn lanczos_matches_dense_svd() {
        let n = 90;
        let mut s = 7u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Mat::from_fn(n, n - 10, |_, _| c64::new(next(), next()));
        let dense = spectral_norm(&m).unwrap();
        let apply = |x: &[c64]| {
            (0..n)
                .map(|i| (0..n - 10).map(|j| m[(i, j)] * x[j]).sum())
                .collect::<Vec<c64>>()
        };
        let apply_adj = |y: &[c64]| {
            (0..n - 10)
                .map(|j| (0..n).map(|i| m[(i, j)].conj() * y[i]).sum())
                .collect::<Vec<c64>>()
        };
        let l = top_singular_value(n, n - 10, apply, apply_adj, 1e-13).unwrap();
        assert!((l - dense).abs() < 1e-10 * dense, "{l} vs {dense}");
    }

    #[test]
    fn slope_of_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, c) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
    }
}
