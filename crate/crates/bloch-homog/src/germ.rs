//! Spectral germ, third-order correctors and the condition taxonomy.

use crate::effective::EffectiveData;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{sphere_points, MatrixSymbol, OperatorModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const CLUSTER_TOL: f64 = 1e-8;
pub const ZERO_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GermData {
    pub theta: Vec<f64>,
    pub s_hat: CMat,
    pub gamma: Vec<f64>,
    /// Columns are Q_bar-orthonormal eigenvectors.
    pub vectors: CMat,
    pub clusters: Vec<Vec<usize>>,
    /// Some gap sits within a factor 10 of the cluster tolerance.
    pub ambiguous: bool,
}

#[derive(Clone, Debug)]
pub struct CorrectorData {
    pub l: CMat,
    pub n_hat: CMat,
    pub n0: CMat,
    pub nstar: CMat,
    pub mu: Vec<f64>,
}

pub fn germ_matrix(g0: &CMat, b: &MatrixSymbol, theta: &[f64]) -> CMat {
    let bt = b.eval(theta);
    linalg::hermitize(&(&(bt.adjoint() * g0) * &bt))
}

/// Groups ascending values whose relative gap is below `tol`.
pub fn cluster(values: &[f64], tol: f64) -> (Vec<Vec<usize>>, bool) {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut ambiguous = false;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            let gap = (v - values[i - 1]).abs() / scale;
            if gap <= tol {
                out.last_mut().unwrap().push(i);
                continue;
            }
            if gap <= 10.0 * tol {
                ambiguous = true;
            }
        }
        out.push(vec![i]);
    }
    (out, ambiguous)
}

pub fn germ_eigen(s_hat: &CMat, q_bar: &CMat, theta: &[f64], tol: f64) -> Result<GermData> {
    let (gamma, vectors) = linalg::gen_herm_eig(s_hat, q_bar)?;
    let (clusters, ambiguous) = cluster(&gamma, tol);
    Ok(GermData {
        theta: theta.to_vec(),
        s_hat: s_hat.clone(),
        gamma,
        vectors,
        clusters,
        ambiguous,
    })
}

/// Columns `idx` of `v`.
fn columns(v: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(v.nrows(), idx.len(), |i, j| v[(i, idx[j])])
}

/// Skew projection sum_{l in idx} zeta_l zeta_l* Q_bar.
pub fn projection(germ: &GermData, q_bar: &CMat, idx: &[usize]) -> CMat {
    let z = columns(&germ.vectors, idx);
    &(&z * z.adjoint()) * q_bar
}

/// N0 = sum_j P_j* N P_j and mu from the cluster blocks Z_j* N Z_j.
pub fn split_n(n_hat: &CMat, germ: &GermData, q_bar: &CMat) -> Result<(CMat, CMat, Vec<f64>)> {
    let n = n_hat.nrows();
    let mut n0 = linalg::zeros(n, n);
    let mut mu = vec![0.0; n];
    for c in &germ.clusters {
        let p = projection(germ, q_bar, c);
        n0 = linalg::add(&n0, &(&(p.adjoint() * n_hat) * &p));
        let z = columns(&germ.vectors, c);
        let blk = &(z.adjoint() * n_hat) * &z;
        let ev = linalg::herm_eigvals(&blk)?;
        for (slot, v) in c.iter().zip(ev) {
            mu[*slot] = v;
        }
    }
    let nstar = linalg::sub(n_hat, &n0);
    Ok((n0, nstar, mu))
}

/// Precomputed direction-independent data of the germ and its correctors.
#[derive(Clone, Debug)]
pub struct GermContext {
    pub b: MatrixSymbol,
    pub g0: CMat,
    pub q_bar: CMat,
    /// L(theta) = sum_l theta_l l_mats[l].
    pub l_mats: Vec<CMat>,
    pub cluster_tol: f64,
}

impl GermContext {
    pub fn new(model: &OperatorModel, eff: &EffectiveData) -> Result<Self> {
        let d = model.d();
        let mut l_mats = Vec::with_capacity(d);
        for l in 0..d {
            let bl = &model.b.mats[l];
            // mean(Lambda_Q* b_l* g~ + h.c.) by Parseval over the frequency set
            let mut acc = linalg::zeros(model.m(), model.m());
            for (lh, gh) in eff.lambda_hat.iter().zip(&eff.g_tilde_hat) {
                if linalg::max_abs(lh) == 0.0 {
                    continue;
                }
                acc = linalg::add(&acc, &(&(lh.adjoint() * bl.adjoint()) * gh));
            }
            acc = linalg::add(
                &acc,
                &(&(eff.lambda_q0.adjoint() * bl.adjoint()) * &eff.g0),
            );
            let full = linalg::add(&acc, &linalg::adjoint(&acc));
            l_mats.push(full);
        }
        Ok(Self {
            b: model.b.clone(),
            g0: eff.g0.clone(),
            q_bar: eff.q_bar.clone(),
            l_mats,
            cluster_tol: CLUSTER_TOL,
        })
    }

    pub fn d(&self) -> usize {
        self.b.dim()
    }

    pub fn germ(&self, theta: &[f64]) -> Result<GermData> {
        germ_eigen(
            &germ_matrix(&self.g0, &self.b, theta),
            &self.q_bar,
            theta,
            self.cluster_tol,
        )
    }

    pub fn l_matrix(&self, theta: &[f64]) -> CMat {
        let m = self.l_mats[0].nrows();
        let mut acc = linalg::zeros(m, m);
        for (t, l) in theta.iter().zip(&self.l_mats) {
            acc = linalg::add(&acc, &linalg::scale(l, linalg::cr(*t)));
        }
        acc
    }

    pub fn n_hat(&self, theta: &[f64]) -> CMat {
        let bt = self.b.eval(theta);
        linalg::hermitize(&(&(bt.adjoint() * self.l_matrix(theta)) * &bt))
    }

    pub fn correctors(&self, theta: &[f64]) -> Result<(GermData, CorrectorData)> {
        let germ = self.germ(theta)?;
        let n_hat = self.n_hat(theta);
        let (n0, nstar, mu) = split_n(&n_hat, &germ, &self.q_bar)?;
        Ok((
            germ,
            CorrectorData {
                l: self.l_matrix(theta),
                n_hat,
                n0,
                nstar,
                mu,
            },
        ))
    }

    /// Coefficients of the cubic matrix polynomial N(theta), keyed by the
    /// sorted index triple of the monomial.
    pub fn n_hat_coefficients(&self) -> BTreeMap<[usize; 3], CMat> {
        let d = self.d();
        let n = self.b.n;
        let mut out: BTreeMap<[usize; 3], CMat> = BTreeMap::new();
        for l in 0..d {
            for p in 0..d {
                for q in 0..d {
                    let c = &(self.b.mats[p].adjoint() * &self.l_mats[l]) * &self.b.mats[q];
                    let mut key = [l, p, q];
                    key.sort();
                    let e = out.entry(key).or_insert_with(|| linalg::zeros(n, n));
                    *e = linalg::add(e, &c);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub weighted: bool,
    pub n_theta: usize,
    /// Pairs of sorted branch indices that meet somewhere on the sphere.
    pub crossing_pairs: Vec<(usize, usize)>,
    pub crossing_points: Vec<Vec<f64>>,
    /// Pairs (k, r), k != r, whose block of N is not identically zero.
    pub k_set: Vec<(usize, usize)>,
    pub n_hat_coeff_max: f64,
    pub n_hat_zero: bool,
    pub n0_max: f64,
    pub n0_zero: bool,
    pub constant_multiplicity: bool,
    /// N0 vanishes and no nonzero block joins two crossing branches.
    pub condition_crossing: bool,
    /// N0 vanishes and cluster multiplicities are constant on the sphere.
    pub condition_multiplicity: bool,
    pub c_star: f64,
    pub c_circ: f64,
    /// Threshold with the absolute constant set to 1.
    pub t_circ: f64,
    pub t_circ_note: String,
    pub min_gamma: f64,
    pub ambiguous_clusters: bool,
    pub degraded: Vec<String>,
    pub sweep: Vec<SweepRow>,
}

struct Sample {
    theta: Vec<f64>,
    germ: GermData,
    corr: CorrectorData,
    blocks: Vec<Vec<f64>>,
}

fn sample(ctx: &GermContext, theta: &[f64]) -> Result<Sample> {
    let (germ, corr) = ctx.correctors(theta)?;
    let n = germ.gamma.len();
    // projection onto the eigenspace holding the sorted index k
    let mut proj_of = Vec::with_capacity(n);
    for k in 0..n {
        let c = germ.clusters.iter().find(|c| c.contains(&k)).unwrap();
        proj_of.push(projection(&germ, &ctx.q_bar, c));
    }
    let mut blocks = vec![vec![0.0; n]; n];
    for k in 0..n {
        for r in 0..n {
            if k != r {
                let blk = &(proj_of[k].adjoint() * &corr.n_hat) * &proj_of[r];
                blocks[k][r] = linalg::max_abs(&blk);
            }
        }
    }
    Ok(Sample {
        theta: theta.to_vec(),
        germ,
        corr,
        blocks,
    })
}

fn angle_point(a: f64) -> Vec<f64> {
    vec![a.cos(), a.sin()]
}

/// Sweep over the sphere, crossings located by golden-section refinement
/// between adjacent samples when d = 2.
pub fn condition_check(model: &OperatorModel, eff: &EffectiveData, n_theta: usize) -> Result<ConditionReport> {
    let ctx = GermContext::new(model, eff)?;
    condition_check_ctx(model, &ctx, n_theta)
}

pub fn condition_check_ctx(model: &OperatorModel, ctx: &GermContext, n_theta: usize) -> Result<ConditionReport> {
    let d = model.d();
    let n = model.n();
    let weighted = model.has_f();
    let tp = model.threshold_params();
    let c_star = if weighted { tp.c_star } else { tp.c_hat_star };
    let mut degraded = Vec::new();
    let dirs = sphere_points(d, n_theta);
    let samples: Vec<Sample> = dirs
        .par_iter()
        .map(|t| sample(ctx, t))
        .collect::<Result<Vec<_>>>()?;
    let gscale = samples
        .iter()
        .map(|s| s.germ.gamma.last().unwrap().abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let cross_tol = 1e-7 * gscale;

    // crossings
    let mut crossing_pairs: Vec<(usize, usize)> = Vec::new();
    let mut crossing_points: Vec<Vec<f64>> = Vec::new();
    let mut extra: Vec<Sample> = Vec::new();
    for k in 0..n.saturating_sub(1) {
        let gap = |s: &Sample| s.germ.gamma[k + 1] - s.germ.gamma[k];
        let mut found = false;
        for s in &samples {
            if gap(s) <= cross_tol {
                found = true;
                crossing_points.push(s.theta.clone());
            }
        }
        if d == 2 && samples.len() >= 3 {
            let m = samples.len();
            for j in 0..m {
                let (a, b, c) = (&samples[(j + m - 1) % m], &samples[j], &samples[(j + 1) % m]);
                if gap(b) <= gap(a) && gap(b) <= gap(c) && gap(b) > cross_tol {
                    let step = 2.0 * std::f64::consts::PI / m as f64;
                    let a0 = b.theta[1].atan2(b.theta[0]);
                    let f = |x: f64| -> f64 {
                        ctx.germ(&angle_point(x))
                            .map(|g| g.gamma[k + 1] - g.gamma[k])
                            .unwrap_or(f64::INFINITY)
                    };
                    let (xa, xb) = golden_min(f, a0 - step, a0 + step, 80);
                    if xb <= cross_tol {
                        found = true;
                        let p = angle_point(xa);
                        extra.push(sample(ctx, &p)?);
                        crossing_points.push(p);
                    }
                }
            }
        } else if d > 2 {
            degraded.push("crossing refinement is only performed for d = 2".into());
        }
        if found {
            // every pair of sorted indices sharing an eigenvalue at the point
            for s in samples.iter().chain(extra.iter()) {
                if gap(s) <= cross_tol {
                    for c in &s.germ.clusters {
                        for &x in c {
                            for &y in c {
                                if x < y && !crossing_pairs.contains(&(x, y)) {
                                    crossing_pairs.push((x, y));
                                }
                            }
                        }
                    }
                }
            }
            if !crossing_pairs.contains(&(k, k + 1)) {
                crossing_pairs.push((k, k + 1));
            }
        }
    }
    crossing_pairs.sort();

    let all: Vec<&Sample> = samples.iter().chain(extra.iter()).collect();
    // blocks that are not identically zero, judged away from crossing points
    let mut k_set = Vec::new();
    for k in 0..n {
        for r in 0..n {
            if k == r {
                continue;
            }
            let mx = all.iter().map(|s| s.blocks[k][r]).fold(0.0, f64::max);
            if mx > ZERO_TOL {
                k_set.push((k, r));
            }
        }
    }
    let coeffs = ctx.n_hat_coefficients();
    let n_hat_coeff_max = coeffs.values().map(linalg::max_abs).fold(0.0, f64::max);
    let n_hat_zero = n_hat_coeff_max <= ZERO_TOL;
    let n0_max = all.iter().map(|s| linalg::max_abs(&s.corr.n0)).fold(0.0, f64::max);
    let n0_zero = n0_max <= ZERO_TOL;
    let sizes0: Vec<usize> = samples[0].germ.clusters.iter().map(|c| c.len()).collect();
    let constant_multiplicity = all
        .iter()
        .all(|s| s.germ.clusters.iter().map(|c| c.len()).collect::<Vec<_>>() == sizes0);
    let crossing_blocks_zero = crossing_pairs
        .iter()
        .all(|&(k, r)| !k_set.contains(&(k, r)) && !k_set.contains(&(r, k)));
    let condition_crossing = n0_zero && crossing_blocks_zero;
    let condition_multiplicity = n0_zero && constant_multiplicity;

    let mut c_circ = c_star;
    for &(k, r) in &k_set {
        for s in &all {
            let v = c_star.min((s.germ.gamma[k] - s.germ.gamma[r]).abs() / n as f64);
            c_circ = c_circ.min(v);
        }
    }
    if !condition_crossing {
        c_circ = 0.0;
    }
    let r0 = model.lattice.r0;
    let mut t_circ = r0 / 8.0
        * model.alpha1.powf(-1.5)
        * model.alpha0.sqrt()
        * model.g_norm.powf(-1.5)
        * model.g_inv_norm.powf(-0.5)
        * c_circ;
    if weighted {
        t_circ *= model.f_norm.powi(-3) / model.f_inv_norm;
    }
    let min_gamma = all.iter().map(|s| s.germ.gamma[0]).fold(f64::INFINITY, f64::min);
    let ambiguous_clusters = all.iter().any(|s| s.germ.ambiguous);
    let sweep = samples
        .iter()
        .map(|s| SweepRow {
            theta: s.theta.clone(),
            gamma: s.germ.gamma.clone(),
            mu: s.corr.mu.clone(),
            cluster_sizes: s.germ.clusters.iter().map(|c| c.len()).collect(),
        })
        .collect();
    Ok(ConditionReport {
        weighted,
        n_theta,
        crossing_pairs,
        crossing_points,
        k_set,
        n_hat_coeff_max,
        n_hat_zero,
        n0_max,
        n0_zero,
        constant_multiplicity,
        condition_crossing,
        condition_multiplicity,
        c_star,
        c_circ,
        t_circ,
        t_circ_note: "up to an absolute constant (taken as 1)".into(),
        min_gamma,
        ambiguous_clusters,
        degraded,
        sweep,
    })
}

/// Golden-section minimization on [a, b]; returns (argmin, min).
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

pub fn validate_theta(theta: &[f64], d: usize) -> Result<Vec<f64>> {
    if theta.len() != d {
        return Err(Error::Shape(format!("direction has {} coordinates, expected {d}", theta.len())));
    }
    let nv = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv == 0.0 {
        return Err(Error::Parameter("direction must be nonzero".into()));
    }
    Ok(theta.iter().map(|x| x / nv).collect())
}

/// Quadratic form of N on real unit vectors, maximized over the real
/// eigenbasis of its real part.
pub fn real_quadratic_form_max(nh: &CMat) -> f64 {
    let n = nh.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        worst = worst.max(nh[(i, i)].re.abs());
        for j in 0..n {
            if i < j {
                // (e_i + e_j)/sqrt2
                let v = 0.5 * (nh[(i, i)] + nh[(j, j)] + nh[(i, j)] + nh[(j, i)]);
                worst = worst.max(v.re.abs());
            }
        }
    }
    worst
}
