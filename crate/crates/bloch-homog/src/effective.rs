//! Cell problems and the effective objects built from them.

use crate::error::{Error, Result};
use crate::fields::PeriodicMatrixField;
use crate::lattice::FrequencySet;
use crate::linalg::{self, cr, cz, CMat};
use crate::model::OperatorModel;
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

/// Coefficient field resampled so that Toeplitz blocks of cutoff K are
/// represented without aliasing when the bandwidth is known.
pub fn working_field(field: &PeriodicMatrixField, k: usize) -> Result<PeriodicMatrixField> {
    if let Some(b) = field.bandwidth {
        if k < b {
            return Err(Error::Parameter(format!(
                "cutoff {k} is below the coefficient bandwidth {b}"
            )));
        }
        let need = 4 * k + 2;
        if field.grid.iter().any(|&n| n < need) {
            let grid: Vec<usize> = field.grid.iter().map(|&n| n.max(need)).collect();
            return field.resample(&grid);
        }
        return Ok(field.clone());
    }
    if field.grid.iter().any(|&n| n < 2 * k + 1) {
        return Err(Error::Parameter(format!(
            "grid {:?} cannot resolve cutoff {k}; need at least {} points per axis",
            field.grid,
            2 * k + 1
        )));
    }
    Ok(field.clone())
}

/// Difference of two integer frequency coordinates.
pub fn kdiff(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub freqs: FrequencySet,
    /// Frequencies coupled to the right-hand side; the solution vanishes
    /// elsewhere.
    pub active: Vec<usize>,
    /// n x m coefficient per frequency; zero at b = 0.
    pub lambda_hat: Vec<CMat>,
    pub residual: f64,
    pub condition: f64,
}

/// Relative size below which Fourier coefficients are treated as absent
/// when tracing which frequencies couple.
pub const SUPPORT_TOL: f64 = 1e-13;

/// Nonzero frequencies reachable from the coefficient support of g through
/// the coupling pattern of the Galerkin matrix.
pub fn active_set(g: &PeriodicMatrixField, freqs: &FrequencySet) -> Vec<usize> {
    let mask = g.support_mask(SUPPORT_TOL);
    let z = freqs.zero_index();
    let mut seen = vec![false; freqs.len()];
    let mut queue: Vec<usize> = Vec::new();
    for i in 0..freqs.len() {
        if i != z && mask[g.wrapped_index(&freqs.kappas[i])] {
            seen[i] = true;
            queue.push(i);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let b = queue[head];
        head += 1;
        for j in 0..freqs.len() {
            if !seen[j] && j != z && mask[g.wrapped_index(&kdiff(&freqs.kappas[j], &freqs.kappas[b]))] {
                seen[j] = true;
                queue.push(j);
            }
        }
    }
    queue.sort_unstable();
    queue
}

/// Zero-mean Galerkin solution of b(D)* g (b(D) Lambda + 1_m) = 0.
pub fn solve_cell_problem(model: &OperatorModel, k: usize) -> Result<CellSolution> {
    let g = working_field(&model.g, k)?;
    let freqs = model.lattice.frequency_set(k)?;
    let (m, n) = (model.m(), model.n());
    let idx = active_set(&g, &freqs);
    let dim = n * idx.len();
    if dim == 0 {
        return Ok(CellSolution {
            lambda_hat: vec![linalg::zeros(n, m); freqs.len()],
            freqs,
            active: idx,
            residual: 0.0,
            condition: 1.0,
        });
    }
    let bsym: Vec<CMat> = freqs.vectors.iter().map(|v| model.b.eval(v)).collect();
    let mut a = linalg::zeros(dim, dim);
    let mut rhs = linalg::zeros(dim, m);
    for (p, &bi) in idx.iter().enumerate() {
        let bp_adj = bsym[bi].adjoint().to_owned();
        for (q, &bj) in idx.iter().enumerate() {
            let gh = g.dft_coeff(&kdiff(&freqs.kappas[bi], &freqs.kappas[bj]));
            let blk = &(&bp_adj * &gh) * &bsym[bj];
            for r in 0..n {
                for c in 0..n {
                    a[(p * n + r, q * n + c)] = blk[(r, c)];
                }
            }
        }
        let gh0 = g.dft_coeff(&freqs.kappas[bi]);
        let blk = &bp_adj * &gh0;
        for r in 0..n {
            for c in 0..m {
                rhs[(p * n + r, c)] = -blk[(r, c)];
            }
        }
    }
    let a = linalg::hermitize(&a);
    let llt = a
        .llt(Side::Lower)
        .map_err(|_| Error::Numerical("cell-problem matrix is not positive definite".into()))?;
    let x = llt.solve(&rhs);
    let res = linalg::frobenius(&linalg::sub(&(&a * &x), &rhs));
    let scale = linalg::frobenius(&rhs).max(f64::MIN_POSITIVE);
    let residual = if linalg::frobenius(&rhs) == 0.0 { res } else { res / scale };
    let condition = if dim <= 1500 {
        let ev = linalg::herm_eigvals(&a)?;
        ev.last().unwrap() / ev[0]
    } else {
        let l = llt.L();
        let d: Vec<f64> = (0..dim).map(|i| l[(i, i)].re.powi(2)).collect();
        d.iter().cloned().fold(0.0, f64::max) / d.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    if condition > 1e12 {
        return Err(Error::Numerical(format!(
            "cell problem is ill-conditioned (condition {condition:.3e})"
        )));
    }
    let mut lambda_hat = vec![linalg::zeros(n, m); freqs.len()];
    for (p, &bi) in idx.iter().enumerate() {
        lambda_hat[bi] = Mat::from_fn(n, m, |r, c| x[(p * n + r, c)]);
    }
    Ok(CellSolution {
        freqs,
        active: idx,
        lambda_hat,
        residual,
        condition,
    })
}

#[derive(Clone, Debug)]
pub struct EffectiveData {
    pub cutoff: usize,
    pub freqs: FrequencySet,
    pub active: Vec<usize>,
    /// n x m per frequency.
    pub lambda_hat: Vec<CMat>,
    /// m x m Fourier coefficients of g~; filled on the active set and at zero.
    pub g_tilde_hat: Vec<CMat>,
    pub lambda: PeriodicMatrixField,
    pub g_tilde: PeriodicMatrixField,
    pub g0: CMat,
    pub lambda_q0: CMat,
    pub lambda_q: PeriodicMatrixField,
    pub f0: CMat,
    pub q_bar: CMat,
    pub cell_residual: f64,
    pub cell_condition: f64,
    pub q_constraint_residual: f64,
    pub g0_skew: f64,
}

/// g~ = g (b(D) Lambda + 1) and g0 = mean(g~).
pub fn effective_matrix(
    model: &OperatorModel,
    sol: &CellSolution,
) -> Result<(PeriodicMatrixField, Vec<CMat>, CMat, f64)> {
    let k = sol.freqs.cutoff;
    let g = working_field(&model.g, k)?;
    let m = model.m();
    let freqs = &sol.freqs;
    let bl: Vec<CMat> = freqs
        .vectors
        .iter()
        .zip(&sol.lambda_hat)
        .map(|(v, lh)| &model.b.eval(v) * lh)
        .collect();
    // g~ coefficients g_hat_kappa + sum_b g_hat_{kappa-b} (b Lambda)_b, filled
    // on the active set and at zero
    let mut gt_hat = vec![linalg::zeros(m, m); freqs.len()];
    let z = freqs.zero_index();
    for &i in sol.active.iter().chain(std::iter::once(&z)) {
        let kp = &freqs.kappas[i];
        let mut acc = g.dft_coeff(kp);
        for &j in &sol.active {
            acc = linalg::add(&acc, &(&g.dft_coeff(&kdiff(kp, &freqs.kappas[j])) * &bl[j]));
        }
        gt_hat[i] = acc;
    }
    let g0_raw = gt_hat[freqs.zero_index()].clone();
    let skew = linalg::skew_residual(&g0_raw);
    let scale = linalg::max_abs(&g0_raw).max(1.0);
    if skew > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "effective matrix has skew part {skew:.3e}; aliasing or assembly error"
        )));
    }
    let g0 = linalg::hermitize(&g0_raw);
    // field form for display and sample-wise checks
    let coeffs: Vec<(Vec<i64>, CMat)> = freqs.kappas.iter().cloned().zip(bl).collect();
    let one = linalg::identity(m);
    let bl_field = PeriodicMatrixField::from_fourier(&coeffs, &model.lattice, &g.grid)?;
    let g_tilde = g.zip_map(&bl_field, |gx, blx| gx * &linalg::add(blx, &one))?;
    Ok((g_tilde, gt_hat, g0, skew))
}

/// Lambda_Q = Lambda + Lambda_Q0 with Lambda_Q0 = -Q_bar^{-1} mean(Q Lambda).
pub fn solve_cell_problem_q(model: &OperatorModel, sol: &CellSolution) -> Result<(CMat, f64)> {
    let q = working_field(&model.q, sol.freqs.cutoff)?;
    let (n, m) = (model.n(), model.m());
    let mut mean_ql = linalg::zeros(n, m);
    for (kp, lh) in sol.freqs.kappas.iter().zip(&sol.lambda_hat) {
        let neg: Vec<i64> = kp.iter().map(|x| -x).collect();
        mean_ql = linalg::add(&mean_ql, &(&q.dft_coeff(&neg) * lh));
    }
    let lq0 = linalg::scale(&linalg::solve(&model.q_bar, &mean_ql), cr(-1.0));
    let check = linalg::add(&mean_ql, &(&model.q_bar * &lq0));
    Ok((lq0, linalg::max_abs(&check)))
}

pub fn compute(model: &OperatorModel, k: usize) -> Result<EffectiveData> {
    let sol = solve_cell_problem(model, k)?;
    let (g_tilde, g_tilde_hat, g0, g0_skew) = effective_matrix(model, &sol)?;
    let (lambda_q0, qres) = solve_cell_problem_q(model, &sol)?;
    let grid = g_tilde.grid.clone();
    let coeffs: Vec<(Vec<i64>, CMat)> = sol
        .freqs
        .kappas
        .iter()
        .cloned()
        .zip(sol.lambda_hat.iter().cloned())
        .collect();
    let grid_l: Vec<usize> = grid.iter().map(|&n| n.max(2 * k + 2)).collect();
    let lambda = PeriodicMatrixField::from_fourier(&coeffs, &model.lattice, &grid_l)?;
    let lq0 = lambda_q0.clone();
    let lambda_q = lambda.map(|x| linalg::add(x, &lq0))?;
    Ok(EffectiveData {
        cutoff: k,
        freqs: sol.freqs,
        active: sol.active,
        lambda_hat: sol.lambda_hat,
        g_tilde_hat,
        lambda,
        g_tilde,
        g0,
        lambda_q0,
        lambda_q,
        f0: model.f0.clone(),
        q_bar: model.q_bar.clone(),
        cell_residual: sol.residual,
        cell_condition: sol.condition,
        q_constraint_residual: qres,
        g0_skew,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoigtReuss {
    /// Smallest eigenvalue of mean(g) - g0.
    pub upper_gap: f64,
    /// Smallest eigenvalue of g0 - harmonic mean of g.
    pub lower_gap: f64,
    /// |g0 - harmonic mean| / |g0| when m = n.
    pub equality_residual: Option<f64>,
    pub passed: bool,
}

pub fn voigt_reuss_check(g0: &CMat, g: &PeriodicMatrixField, n: usize) -> Result<VoigtReuss> {
    let upper = linalg::hermitize(&g.mean());
    let lower = linalg::hermitize(&g.harmonic_mean()?);
    let ug = linalg::herm_eigvals(&linalg::sub(&upper, g0))?[0];
    let lg = linalg::herm_eigvals(&linalg::sub(g0, &lower))?[0];
    let eq = (g.rows == n).then(|| {
        linalg::spectral_norm(&linalg::sub(g0, &lower)).unwrap_or(f64::NAN)
            / linalg::spectral_norm(g0).unwrap_or(1.0)
    });
    let passed = ug >= -1e-9 && lg >= -1e-9 && eq.map(|e| e <= 1e-9).unwrap_or(true);
    Ok(VoigtReuss {
        upper_gap: ug,
        lower_gap: lg,
        equality_residual: eq,
        passed,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegenerateCases {
    pub g0_equals_upper: bool,
    pub g0_equals_lower: bool,
    pub upper_residual: f64,
    pub lower_residual: f64,
}

/// Upper test: b(D)* annihilates every column of g. Lower test: every column
/// of g^{-1} minus its mean lies in the range of b(D).
pub fn classify_degenerate_cases(model: &OperatorModel) -> Result<DegenerateCases> {
    let g = &model.g;
    let (m, n) = (model.m(), model.n());
    let mut up = 0.0;
    for (kp, gh) in g.coefficients() {
        if kp.iter().all(|&x| x == 0) {
            continue;
        }
        let v = model.lattice.dual_vector(&kp);
        let bb = model.b.eval(&v);
        up += linalg::frobenius(&(bb.adjoint() * &gh)).powi(2);
    }
    let upper_residual = up.sqrt() / model.g_norm.max(f64::MIN_POSITIVE);
    let gi = g.inverse()?;
    let mut lo = 0.0;
    for (kp, lh) in gi.coefficients() {
        if kp.iter().all(|&x| x == 0) {
            continue;
        }
        let v = model.lattice.dual_vector(&kp);
        let bb = model.b.eval(&v);
        // projection residual (I - b (b*b)^{-1} b*) l_hat
        let btb = bb.adjoint() * &bb;
        let coef = linalg::solve(&btb, &(bb.adjoint() * &lh));
        let r = linalg::sub(&lh, &(&bb * &coef));
        lo += linalg::frobenius(&r).powi(2);
    }
    let lower_residual = lo.sqrt() / gi.sup_norm().max(f64::MIN_POSITIVE);
    let _ = (m, n);
    Ok(DegenerateCases {
        g0_equals_upper: upper_residual < 1e-10,
        g0_equals_lower: lower_residual < 1e-10,
        upper_residual,
        lower_residual,
    })
}

/// Weak-form residual of the cell problem, tested against every plane wave
/// of the frequency set, relative to |g|.
pub fn weak_residual(model: &OperatorModel, eff: &EffectiveData) -> f64 {
    let mut worst: f64 = 0.0;
    for &i in &eff.active {
        let bb = model.b.eval(&eff.freqs.vectors[i]);
        let r = bb.adjoint() * &eff.g_tilde_hat[i];
        worst = worst.max(linalg::max_abs(&r));
    }
    worst / model.g_norm
}

pub fn mat_is_real(a: &CMat, tol: f64) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| a[(i, j)].im.abs() <= tol))
}

pub fn mat_is_imaginary(a: &CMat, tol: f64) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| a[(i, j)].re.abs() <= tol))
}

pub fn zero_mat(r: usize, c: usize) -> CMat {
    Mat::from_fn(r, c, |_, _| cz())
}

#[derive(Serialize)]
pub struct EffectiveSummary {
    pub cutoff: usize,
    pub g0: Vec<Vec<[f64; 2]>>,
    pub f0: Vec<Vec<[f64; 2]>>,
    pub q_bar: Vec<Vec<[f64; 2]>>,
    pub lambda_q0: Vec<Vec<[f64; 2]>>,
    pub lambda: Vec<crate::fields::FourierTerm>,
    pub cell_residual: f64,
    pub cell_condition: f64,
    pub q_constraint_residual: f64,
}

pub fn mat_json(a: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
        .collect()
}

impl EffectiveData {
    pub fn summary(&self) -> EffectiveSummary {
        EffectiveSummary {
            cutoff: self.cutoff,
            g0: mat_json(&self.g0),
            f0: mat_json(&self.f0),
            q_bar: mat_json(&self.q_bar),
            lambda_q0: mat_json(&self.lambda_q0),
            lambda: self.lambda.to_terms(1e-14),
            cell_residual: self.cell_residual,
            cell_condition: self.cell_condition,
            q_constraint_residual: self.q_constraint_residual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sr;
    use crate::lattice::Lattice;
    use crate::model::MatrixSymbol;
    use proptest::prelude::*;

    fn scalar_model(profile: impl Fn(f64) -> f64, grid: usize) -> OperatorModel {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::from_fn(&l, &[grid], 1, 1, |x| sr(profile(x[0]))).unwrap();
        OperatorModel::new("s", l, MatrixSymbol::gradient(1), g, None, 64).unwrap()
    }

    #[test]
    fn constant_coefficient_has_no_corrector() {
        let m = scalar_model(|_| 3.0, 32);
        let e = compute(&m, 4).unwrap();
        assert!(e.lambda_hat.iter().all(|x| linalg::max_abs(x) < 1e-15));
        assert!((e.g0[(0, 0)].re - 3.0).abs() < 1e-14);
    }

    #[test]
    fn two_plus_sine() {
        let m = scalar_model(|x| 2.0 + x.sin(), 128);
        let e = compute(&m, 28).unwrap();
        assert!((e.g0[(0, 0)].re - 3f64.sqrt()).abs() < 1e-10);
        // m = n: g~ is constant
        assert!(e.g_tilde.variation() < 1e-10);
        assert!(weak_residual(&m, &e) < 1e-10);
        // real coefficients: Lambda is purely imaginary
        for p in 0..e.lambda.num_points() {
            assert!(e.lambda.scalar(p).re.abs() < 1e-10);
        }
    }

    #[test]
    fn flux_stable_under_refinement() {
        let m = scalar_model(|x| 2.0 + x.sin() + 0.3 * (2.0 * x).cos(), 128);
        let a = compute(&m, 20).unwrap().g0[(0, 0)].re;
        let b = compute(&m, 24).unwrap().g0[(0, 0)].re;
        assert!((a - b).abs() <= 1e-9 * a, "{a} {b}");
    }

    #[test]
    fn voigt_reuss_equality_for_scalar() {
        let m = scalar_model(|x| 2.0 + x.sin(), 128);
        let e = compute(&m, 16).unwrap();
        let vr = voigt_reuss_check(&e.g0, &m.g, 1).unwrap();
        assert!(vr.passed, "{vr:?}");
        assert!(vr.upper_gap > 0.2);
    }

    #[test]
    fn constant_case_is_doubly_degenerate() {
        let m = scalar_model(|_| 2.0, 32);
        let c = classify_degenerate_cases(&m).unwrap();
        assert!(c.g0_equals_upper && c.g0_equals_lower);
        let m = scalar_model(|x| 2.0 + x.sin(), 64);
        let c = classify_degenerate_cases(&m).unwrap();
        assert!(!c.g0_equals_upper && c.g0_equals_lower);
    }

    #[test]
    fn cutoff_below_bandwidth_rejected() {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::from_fourier(
            &[(vec![0], sr(2.0)), (vec![3], sr(0.5)), (vec![-3], sr(0.5))],
            &l,
            &[32],
        )
        .unwrap();
        let m = OperatorModel::new("b", l, MatrixSymbol::gradient(1), g, None, 64).unwrap();
        assert!(matches!(solve_cell_problem(&m, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn constant_f_leaves_lambda_q_unchanged() {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::from_fn(&l, &[64], 1, 1, |x| sr(2.0 + x[0].cos())).unwrap();
        let f = PeriodicMatrixField::constant(&l, &[64], &sr(1.7)).unwrap();
        let m = OperatorModel::new("c", l, MatrixSymbol::gradient(1), g, Some(f), 64).unwrap();
        let e = compute(&m, 12).unwrap();
        assert!(linalg::max_abs(&e.lambda_q0) < 1e-14);
    }

    proptest! {
        #[test]
        fn scalar_effective_is_harmonic_mean(a in 0.0f64..0.8, b in 0.0f64..0.5, ph in 0.0f64..6.0) {
            let m = scalar_model(|x| 2.0 + a * (x + ph).sin() + b * (2.0 * x).cos(), 128);
            let e = compute(&m, 20).unwrap();
            // oracle: harmonic mean by independent trapezoid quadrature
            let n = 4096;
            let inv: f64 = (0..n).map(|i| {
                let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                1.0 / (2.0 + a * (x + ph).sin() + b * (2.0 * x).cos())
            }).sum::<f64>() / n as f64;
            prop_assert!((e.g0[(0, 0)].re - 1.0 / inv).abs() < 1e-9);
        }
    }
}
