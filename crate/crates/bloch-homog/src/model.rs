//! The operator triple (b, g, f) with its lattice and derived bounds.

use crate::error::{Error, Result};
use crate::fields::PeriodicMatrixField;
use crate::lattice::Lattice;
use crate::linalg::{self, cr, CMat};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// First-order symbol b(xi) = sum_l xi_l b_l with constant m x n matrices.
#[derive(Clone, Debug)]
pub struct MatrixSymbol {
    pub mats: Vec<CMat>,
    pub m: usize,
    pub n: usize,
}

impl MatrixSymbol {
    pub fn new(mats: Vec<CMat>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::Shape("symbol needs at least one matrix".into()))?;
        let (m, n) = (first.nrows(), first.ncols());
        if mats.iter().any(|b| b.nrows() != m || b.ncols() != n) {
            return Err(Error::Shape("symbol matrices differ in shape".into()));
        }
        Ok(MatrixSymbol { mats, m, n })
    }

    /// b(D) = D for scalar functions: m = d, n = 1.
    pub fn gradient(d: usize) -> Self {
        let mats = (0..d)
            .map(|l| Mat::from_fn(d, 1, |i, _| if i == l { cr(1.0) } else { linalg::cz() }))
            .collect();
        MatrixSymbol { mats, m: d, n: 1 }
    }

    pub fn dim(&self) -> usize {
        self.mats.len()
    }

    pub fn eval(&self, xi: &[f64]) -> CMat {
        let mut out = linalg::zeros(self.m, self.n);
        for (b, &x) in self.mats.iter().zip(xi) {
            for i in 0..self.m {
                for j in 0..self.n {
                    out[(i, j)] += b[(i, j)] * x;
                }
            }
        }
        out
    }

    pub fn is_real(&self) -> bool {
        self.mats
            .iter()
            .all(|b| (0..self.m).all(|i| (0..self.n).all(|j| b[(i, j)].im == 0.0)))
    }
}

/// Deterministic points on the unit sphere in R^d.
pub fn sphere_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * j as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            // Halton points pushed through Box-Muller and normalized
            let primes = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            let halton = |mut i: u64, b: u64| {
                let mut f = 1.0;
                let mut r = 0.0;
                while i > 0 {
                    f /= b as f64;
                    r += f * (i % b) as f64;
                    i /= b;
                }
                r
            };
            (1..=count as u64)
                .map(|j| {
                    let mut v: Vec<f64> = (0..d)
                        .map(|c| {
                            let u1 = halton(j, primes[(2 * c) % primes.len()]).max(1e-12);
                            let u2 = halton(j, primes[(2 * c + 1) % primes.len()]);
                            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
                        })
                        .collect();
                    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= nv);
                    v
                })
                .collect()
        }
    }
}

pub fn default_sphere_count(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 512,
        _ => 2048,
    }
}

/// Sampled extrema of the spectrum of b(theta)* b(theta) over the sphere.
pub fn alpha_bounds(b: &MatrixSymbol, n_theta: usize) -> Result<(f64, f64)> {
    let d = b.dim();
    if d >= 2 && n_theta < 64 {
        return Err(Error::Parameter("at least 64 sphere samples are required".into()));
    }
    let mut a0 = f64::INFINITY;
    let mut a1: f64 = 0.0;
    for th in sphere_points(d, n_theta) {
        let bt = b.eval(&th);
        let v = linalg::herm_eigvals(&(bt.adjoint() * &bt))?;
        a0 = a0.min(v[0]);
        a1 = a1.max(*v.last().unwrap());
    }
    Ok((a0, a1))
}

#[derive(Clone, Debug)]
pub struct OperatorModel {
    pub name: String,
    pub lattice: Lattice,
    pub b: MatrixSymbol,
    pub g: PeriodicMatrixField,
    /// None stands for the identity.
    pub f: Option<PeriodicMatrixField>,
    pub q: PeriodicMatrixField,
    pub q_bar: CMat,
    pub f0: CMat,
    pub alpha0: f64,
    pub alpha1: f64,
    pub g_norm: f64,
    pub g_inv_norm: f64,
    pub f_norm: f64,
    pub f_inv_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub c_star: f64,
    pub delta: f64,
    pub t0: f64,
    pub c_hat_star: f64,
    pub delta_hat: f64,
    pub t_hat0: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl OperatorModel {
    pub fn new(
        name: &str,
        lattice: Lattice,
        b: MatrixSymbol,
        g: PeriodicMatrixField,
        f: Option<PeriodicMatrixField>,
        n_theta: usize,
    ) -> Result<Self> {
        if b.dim() != lattice.dim {
            return Err(Error::Shape(format!(
                "symbol has {} matrices for a {}-dimensional lattice",
                b.dim(),
                lattice.dim
            )));
        }
        if g.rows != b.m || g.cols != b.m {
            return Err(Error::Shape(format!(
                "g is {}x{}, symbol needs {}x{}",
                g.rows, g.cols, b.m, b.m
            )));
        }
        if let Some(f) = &f {
            if f.rows != b.n || f.cols != b.n {
                return Err(Error::Shape(format!(
                    "f is {}x{}, symbol needs {}x{}",
                    f.rows, f.cols, b.n, b.n
                )));
            }
        }
        let (alpha0, alpha1) = alpha_bounds(&b, n_theta)?;
        let g_norm = g.sup_norm();
        let g_inv_norm = match g.inverse() {
            Ok(gi) => gi.sup_norm(),
            Err(_) => f64::INFINITY,
        };
        let (q, f_norm, f_inv_norm) = match &f {
            None => (
                PeriodicMatrixField::identity(&lattice, &g.grid, b.n)?,
                1.0,
                1.0,
            ),
            Some(f) => {
                let fi = f.inverse()?;
                let ffs = f.map(|m| m * m.adjoint())?;
                (ffs.inverse()?, f.sup_norm(), fi.sup_norm())
            }
        };
        let q_bar = linalg::hermitize(&q.mean());
        let f0 = linalg::inv_sqrt_herm(&q_bar, 1e-12)?;
        Ok(OperatorModel {
            name: name.to_string(),
            lattice,
            b,
            g,
            f,
            q,
            q_bar,
            f0,
            alpha0,
            alpha1,
            g_norm,
            g_inv_norm,
            f_norm,
            f_inv_norm,
        })
    }

    pub fn d(&self) -> usize {
        self.lattice.dim
    }

    pub fn m(&self) -> usize {
        self.b.m
    }

    pub fn n(&self) -> usize {
        self.b.n
    }

    pub fn has_f(&self) -> bool {
        self.f.is_some()
    }

    /// b, g and Q all have real entries.
    pub fn is_real(&self) -> bool {
        self.b.is_real() && self.g.is_real(1e-14) && self.q.is_real(1e-14)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let (m, n) = (self.m(), self.n());
        checks.push(Check {
            name: "m >= n".into(),
            passed: m >= n,
            detail: format!("m = {m}, n = {n}"),
        });
        checks.push(Check {
            name: "rank condition".into(),
            passed: self.alpha0 > 1e-10,
            detail: format!("sampled alpha0 = {:.6e}", self.alpha0),
        });
        let herm = self.g.is_hermitian(1e-12);
        checks.push(Check {
            name: "g Hermitian".into(),
            passed: herm,
            detail: String::new(),
        });
        match self.g.min_eigenvalue() {
            Ok((v, at)) => checks.push(Check {
                name: "g positive".into(),
                passed: v > 0.0,
                detail: format!("min eigenvalue {v:.6e} at grid point {at:?}"),
            }),
            Err(e) => checks.push(Check {
                name: "g positive".into(),
                passed: false,
                detail: e.to_string(),
            }),
        }
        if let Some(f) = &self.f {
            match f.inverse() {
                Ok(_) => checks.push(Check {
                    name: "f invertible".into(),
                    passed: true,
                    detail: String::new(),
                }),
                Err(e) => checks.push(Check {
                    name: "f invertible".into(),
                    passed: false,
                    detail: e.to_string(),
                }),
            }
        }
        let passed = checks.iter().all(|c| c.passed);
        ValidationReport { passed, checks }
    }

    pub fn threshold_params(&self) -> ThresholdParams {
        let r0 = self.lattice.r0;
        let c_star = self.alpha0 / (self.g_inv_norm * self.f_inv_norm.powi(2));
        let delta = c_star * r0 * r0 / 4.0;
        let h = self.g_norm.sqrt();
        let hi = self.g_inv_norm.sqrt();
        let t0 = r0 / 2.0 * (self.alpha0 / self.alpha1).sqrt()
            / (h * hi * self.f_norm * self.f_inv_norm);
        let c_hat_star = self.alpha0 / self.g_inv_norm;
        let delta_hat = c_hat_star * r0 * r0 / 4.0;
        let t_hat0 = r0 / 2.0 * (self.alpha0 / self.alpha1).sqrt() / (h * hi);
        ThresholdParams {
            c_star,
            delta,
            t0,
            c_hat_star,
            delta_hat,
            t_hat0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sr;
    use faer::c64;
    use proptest::prelude::*;

    fn example_8_7_symbol() -> MatrixSymbol {
        let b1 = Mat::from_fn(3, 2, |i, j| match (i, j) {
            (0, 0) => cr(1.0),
            (1, 1) => cr(0.5),
            _ => cr(0.0),
        });
        let b2 = Mat::from_fn(3, 2, |i, j| match (i, j) {
            (1, 0) => cr(0.5),
            (2, 1) => cr(1.0),
            _ => cr(0.0),
        });
        MatrixSymbol::new(vec![b1, b2]).unwrap()
    }

    fn pauli_symbol() -> MatrixSymbol {
        let b1 = Mat::from_fn(2, 2, |i, j| if i != j { cr(1.0) } else { cr(0.0) });
        let b2 = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => c64::new(0.0, -1.0),
            (1, 0) => c64::new(0.0, 1.0),
            _ => cr(0.0),
        });
        MatrixSymbol::new(vec![b1, b2]).unwrap()
    }

    #[test]
    fn gradient_alpha_bounds() {
        for d in 1..=3 {
            let (a0, a1) = alpha_bounds(&MatrixSymbol::gradient(d), 128).unwrap();
            assert!((a0 - 1.0).abs() < 1e-12 && (a1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pauli_alpha_bounds() {
        let (a0, a1) = alpha_bounds(&pauli_symbol(), 512).unwrap();
        assert!((a0 - 1.0).abs() < 1e-12 && (a1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example_symbol_alpha_bounds() {
        // oracle: eigenvalues (5/4 +- sqrt(9/16 - 2 s^2))/2 with s = theta1 theta2,
        // s^2 ranges over [0, 1/4]
        let lo = (1.25 - (0.5625f64).sqrt()) / 2.0;
        let hi = (1.25 + (0.5625f64).sqrt()) / 2.0;
        let (a0, a1) = alpha_bounds(&example_8_7_symbol(), 512).unwrap();
        assert!((lo - 0.25).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        assert!((a0 - lo).abs() < 1e-12, "{a0}");
        assert!((a1 - hi).abs() < 1e-12, "{a1}");
    }

    #[test]
    fn identity_thresholds() {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::constant(&l, &[32], &sr(1.0)).unwrap();
        let m = OperatorModel::new("free", l, MatrixSymbol::gradient(1), g, None, 64).unwrap();
        let t = m.threshold_params();
        assert!((t.c_hat_star - 1.0).abs() < 1e-14);
        assert!((t.delta_hat - 1.0 / 16.0).abs() < 1e-14);
        assert!((t.t_hat0 - 0.25).abs() < 1e-14);
        assert!((t.c_star - t.c_hat_star).abs() < 1e-15);
    }

    #[test]
    fn scalar_thresholds() {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::from_fn(&l, &[64], 1, 1, |x| sr(2.0 + x[0].sin())).unwrap();
        let m = OperatorModel::new("s", l, MatrixSymbol::gradient(1), g, None, 64).unwrap();
        let t = m.threshold_params();
        assert!((t.c_hat_star - 1.0).abs() < 1e-12);
        assert!(t.t0 <= m.lattice.r0 / 2.0);
    }

    #[test]
    fn validation_catches_failures() {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::from_fn(&l, &[16], 1, 1, |x| sr(x[0].sin() + 1.0)).unwrap();
        let m = OperatorModel::new("bad", l.clone(), MatrixSymbol::gradient(1), g, None, 64).unwrap();
        let r = m.validate();
        assert!(!r.passed);
        let witness = r.checks.iter().find(|c| c.name == "g positive").unwrap();
        assert!(!witness.passed);
        assert!(witness.detail.contains("[12]"));

        // m < n
        let b = MatrixSymbol::new(vec![Mat::from_fn(1, 2, |_, j| cr(1.0 + j as f64))]).unwrap();
        let g = PeriodicMatrixField::constant(&l, &[16], &sr(1.0)).unwrap();
        let m = OperatorModel::new("mn", l, b, g, None, 64).unwrap();
        let r = m.validate();
        assert!(!r.passed);
        assert!(!r.checks[0].passed);
    }

    #[test]
    fn f0_of_constant_f() {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::constant(&l, &[16], &sr(1.0)).unwrap();
        let f = PeriodicMatrixField::constant(&l, &[16], &sr(2.0)).unwrap();
        let m = OperatorModel::new("c", l, MatrixSymbol::gradient(1), g, Some(f), 64).unwrap();
        assert!((m.q_bar[(0, 0)].re - 0.25).abs() < 1e-14);
        assert!((m.f0[(0, 0)].re - 2.0).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn alpha_bounds_unitary_invariant(phi in 0.0f64..6.28, psi in 0.0f64..6.28) {
            let b = example_8_7_symbol();
            // unitary on C^3: a Givens rotation with phases
            let (c, s) = (phi.cos(), phi.sin());
            let u = Mat::from_fn(3, 3, |i, j| match (i, j) {
                (0, 0) => cr(c),
                (0, 1) => c64::cis(psi) * (-s),
                (1, 0) => c64::cis(-psi) * s,
                (1, 1) => cr(c),
                (2, 2) => c64::cis(psi),
                _ => cr(0.0),
            });
            let rotated = MatrixSymbol::new(b.mats.iter().map(|m| &u * m).collect()).unwrap();
            let (a0, a1) = alpha_bounds(&b, 256).unwrap();
            let (r0, r1) = alpha_bounds(&rotated, 256).unwrap();
            prop_assert!(a0 <= a1);
            prop_assert!((a0 - r0).abs() < 1e-12 && (a1 - r1).abs() < 1e-12);
        }
    }
}
