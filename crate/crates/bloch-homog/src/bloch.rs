//! Plane-wave Galerkin fibers, band functions and the threshold-expansion oracle.
//!
//! For u in the trial space f^{-1} span{e^{i<b,x>} : b in F} write w = f u.
//! The fiber form a(k)[u,u] = |g^{1/2} b(D+k) w|^2 and the norm
//! |u|^2 = (Q w, w) give the pencil (A_hat(k), Q_K). A_hat has blocks
//! b(p+k)* g_hat_{p-q} b(q+k) and Q_K is the Toeplitz matrix of Q = (ff*)^{-1}.
//! Without f the pencil is the plain Hermitian problem.
//!
//! Unknowns (frequency, component) split into blocks that no coefficient of
//! g, Q, g0 or Q_bar couples; every operator here is block diagonal.

use crate::effective::{working_field, SUPPORT_TOL};
use crate::error::{Error, Result};
use crate::lattice::FrequencySet;
use crate::linalg::{self, cz, CMat};
use crate::model::{MatrixSymbol, OperatorModel};
use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Offset table for frequency differences in [-2K, 2K]^d.
#[derive(Clone, Debug)]
struct OffsetTable {
    k2: i64,
    side: i64,
    /// Row-major r x c entries per offset.
    data: Vec<Vec<c64>>,
}

impl OffsetTable {
    fn index(&self, delta: &[i64]) -> usize {
        let mut idx = 0i64;
        let mut stride = 1i64;
        for &x in delta {
            idx += (x + self.k2) * stride;
            stride *= self.side;
        }
        idx as usize
    }

    fn get(&self, delta: &[i64]) -> &[c64] {
        &self.data[self.index(delta)]
    }
}

fn offset_table(field: &crate::fields::PeriodicMatrixField, d: usize, k: usize) -> OffsetTable {
    let k2 = 2 * k as i64;
    let side = 2 * k2 + 1;
    let total = side.pow(d as u32) as usize;
    let mut data = Vec::with_capacity(total);
    for mut idx in 0..total as i64 {
        let mut delta = vec![0i64; d];
        for x in delta.iter_mut() {
            *x = idx % side - k2;
            idx /= side;
        }
        let c = field.dft_coeff(&delta);
        let mut v = Vec::with_capacity(field.rows * field.cols);
        for i in 0..field.rows {
            for j in 0..field.cols {
                v.push(c[(i, j)]);
            }
        }
        data.push(v);
    }
    OffsetTable {
        k2,
        side,
        data,
    }
}

fn kdiff(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = x;
    while parent[c] != r {
        let nx = parent[c];
        parent[c] = r;
        c = nx;
    }
    r
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// One decoupled set of (frequency, component) unknowns.
#[derive(Debug)]
pub struct FiberBlock {
    /// (frequency index, component), sorted.
    pub nodes: Vec<(usize, usize)>,
    /// Distinct frequencies of the block, sorted.
    pub freqs: Vec<usize>,
    /// Per frequency of the block: positions of its nodes.
    pub by_freq: Vec<Vec<usize>>,
    pub q: CMat,
    q_chol: Option<CMat>,
    g_root: OnceLock<CMat>,
}

impl FiberBlock {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// k-independent data of a discretized model.
#[derive(Debug)]
pub struct FiberContext {
    pub lattice: crate::lattice::Lattice,
    pub cutoff: usize,
    pub freqs: FrequencySet,
    pub b: MatrixSymbol,
    pub n: usize,
    pub m: usize,
    pub weighted: bool,
    pub g0: Option<CMat>,
    pub q_bar: CMat,
    pub blocks: Vec<FiberBlock>,
    ghat: OffsetTable,
}

/// Lowest eigenpairs of one block at one k.
#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    pub energies: Vec<f64>,
    /// Columns w_j with W* Q W = I.
    pub w: CMat,
}

/// Effective fiber on one block: per frequency of the block, the
/// generalized eigenpairs of (S(b+k), Q_bar) on the block's components.
#[derive(Clone, Debug)]
pub struct EffectiveBlockSpectrum {
    pub parts: Vec<EffectivePart>,
}

#[derive(Clone, Debug)]
pub struct EffectivePart {
    pub positions: Vec<usize>,
    pub energies: Vec<f64>,
    /// Z with Z* Q_bar Z = I.
    pub z: CMat,
    pub q_bar: CMat,
}

impl FiberContext {
    /// `g0` is needed only for effective fibers; when given, its coupling
    /// pattern joins the block partition.
    pub fn new(model: &OperatorModel, k: usize, g0: Option<&CMat>) -> Result<Self> {
        let d = model.d();
        let (n, m) = (model.n(), model.m());
        let g = working_field(&model.g, k)?;
        let freqs = model.lattice.frequency_set(k)?;
        let ghat = offset_table(&g, d, k);
        let weighted = model.has_f();
        let qhat = if weighted {
            let q = working_field(&model.q, k)?;
            Some(offset_table(&q, d, k))
        } else {
            None
        };
        let nf = freqs.len();
        // coupling pattern per offset
        let gmax = ghat
            .data
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |a, z| a.max(z.norm()));
        let qmax = qhat
            .as_ref()
            .map(|t| t.data.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, z| a.max(z.norm())))
            .unwrap_or(1.0);
        let bl = &model.b.mats;
        let pattern = |gv: &[c64], qv: Option<&[c64]>| -> Vec<bool> {
            let mut p = vec![false; n * n];
            for r in 0..n {
                for c in 0..n {
                    let mut on = false;
                    if let Some(qv) = qv {
                        on |= qv[r * n + c].norm() > SUPPORT_TOL * qmax;
                    }
                    'outer: for b1 in bl {
                        for b2 in bl {
                            let mut acc = cz();
                            for i in 0..m {
                                for j in 0..m {
                                    acc += b1[(i, r)].conj() * gv[i * m + j] * b2[(j, c)];
                                }
                            }
                            if acc.norm() > SUPPORT_TOL * gmax {
                                on = true;
                                break 'outer;
                            }
                        }
                    }
                    p[r * n + c] = on;
                }
            }
            p
        };
        let total = ghat.data.len();
        let mut patterns: Vec<Option<Vec<bool>>> = Vec::with_capacity(total);
        for o in 0..total {
            let gv = &ghat.data[o];
            let qv = qhat.as_ref().map(|t| t.data[o].as_slice());
            let any_g = gv.iter().any(|z| z.norm() > SUPPORT_TOL * gmax);
            let any_q = qv.map(|v| v.iter().any(|z| z.norm() > SUPPORT_TOL * qmax)).unwrap_or(false);
            patterns.push(if any_g || any_q { Some(pattern(gv, qv)) } else { None });
        }
        let mut parent: Vec<usize> = (0..nf * n).collect();
        // effective couplings at equal frequency
        let mut same = vec![false; n * n];
        for r in 0..n {
            same[r * n + r] = true;
        }
        let q_bar = model.q_bar.clone();
        if let Some(g0) = g0 {
            let gv: Vec<c64> = (0..m * m).map(|x| g0[(x / m, x % m)]).collect();
            let qv: Vec<c64> = (0..n * n).map(|x| q_bar[(x / n, x % n)]).collect();
            let p = pattern(&gv, Some(&qv));
            for (s, v) in same.iter_mut().zip(p) {
                *s |= v;
            }
        }
        for p in 0..nf {
            for r in 0..n {
                for c in 0..n {
                    if same[r * n + c] {
                        union(&mut parent, p * n + r, p * n + c);
                    }
                }
            }
        }
        for p in 0..nf {
            for q in 0..nf {
                let delta = kdiff(&freqs.kappas[p], &freqs.kappas[q]);
                if let Some(pat) = &patterns[ghat.index(&delta)] {
                    for r in 0..n {
                        for c in 0..n {
                            if pat[r * n + c] {
                                union(&mut parent, p * n + r, q * n + c);
                            }
                        }
                    }
                }
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
        for node in 0..nf * n {
            let r = find(&mut parent, node);
            let pos = match roots.iter().position(|&x| x == r) {
                Some(p) => p,
                None => {
                    roots.push(r);
                    members.push(Vec::new());
                    roots.len() - 1
                }
            };
            members[pos].push((node / n, node % n));
        }
        let mut blocks = Vec::with_capacity(members.len());
        for nodes in members {
            let mut fl: Vec<usize> = nodes.iter().map(|x| x.0).collect();
            fl.dedup();
            let by_freq: Vec<Vec<usize>> = fl
                .iter()
                .map(|&f| (0..nodes.len()).filter(|&i| nodes[i].0 == f).collect())
                .collect();
            let dim = nodes.len();
            let (q, q_chol) = match &qhat {
                None => (linalg::identity(dim), None),
                Some(t) => {
                    let q = Mat::from_fn(dim, dim, |a, b| {
                        let (p, r) = nodes[a];
                        let (qq, c) = nodes[b];
                        t.get(&kdiff(&freqs.kappas[p], &freqs.kappas[qq]))[r * n + c]
                    });
                    let q = linalg::hermitize(&q);
                    let l = linalg::cholesky(&q)?;
                    (q, Some(l))
                }
            };
            blocks.push(FiberBlock {
                nodes,
                freqs: fl,
                by_freq,
                q,
                q_chol,
                g_root: OnceLock::new(),
            });
        }
        Ok(FiberContext {
            lattice: model.lattice.clone(),
            cutoff: k,
            freqs,
            b: model.b.clone(),
            n,
            m,
            weighted,
            g0: g0.cloned(),
            q_bar,
            blocks,
            ghat,
        })
    }

    pub fn dim(&self) -> usize {
        self.freqs.len() * self.n
    }

    fn symbol_at(&self, p: usize, k: &[f64]) -> CMat {
        let v: Vec<f64> = self.freqs.vectors[p].iter().zip(k).map(|(a, b)| a + b).collect();
        self.b.eval(&v)
    }

    /// The Hermitian form A_hat(k) on one block.
    pub fn block_form(&self, blk: &FiberBlock, k: &[f64]) -> CMat {
        let (n, m) = (self.n, self.m);
        let syms: Vec<CMat> = blk.freqs.iter().map(|&p| self.symbol_at(p, k)).collect();
        let dim = blk.len();
        let mut a = linalg::zeros(dim, dim);
        let mut tmp = vec![cz(); m * n];
        for (fa, pa) in blk.freqs.iter().enumerate() {
            for (fb, pb) in blk.freqs.iter().enumerate() {
                let gv = self.ghat.get(&kdiff(&self.freqs.kappas[*pa], &self.freqs.kappas[*pb]));
                if gv.iter().all(|z| *z == cz()) {
                    continue;
                }
                let bq = &syms[fb];
                // tmp = g_hat * b(q+k)
                for i in 0..m {
                    for c in 0..n {
                        let mut acc = cz();
                        for j in 0..m {
                            acc += gv[i * m + j] * bq[(j, c)];
                        }
                        tmp[i * n + c] = acc;
                    }
                }
                let bp = &syms[fa];
                for &ia in &blk.by_freq[fa] {
                    let r = blk.nodes[ia].1;
                    for &ib in &blk.by_freq[fb] {
                        let c = blk.nodes[ib].1;
                        let mut acc = cz();
                        for i in 0..m {
                            acc += bp[(i, r)].conj() * tmp[i * n + c];
                        }
                        a[(ia, ib)] = acc;
                    }
                }
            }
        }
        linalg::hermitize(&a)
    }

    /// Standard-form matrix L^{-1} A_hat L^{-*} (A_hat itself without f).
    pub fn block_matrix(&self, blk: &FiberBlock, k: &[f64]) -> CMat {
        let a = self.block_form(blk, k);
        match &blk.q_chol {
            None => a,
            Some(l) => {
                let li = linalg::inverse(l);
                linalg::hermitize(&(&(&li * &a) * li.adjoint()))
            }
        }
    }

    pub fn block_spectrum(&self, blk: &FiberBlock, k: &[f64]) -> Result<BlockSpectrum> {
        let a = self.block_form(blk, k);
        let (energies, w) = if self.weighted {
            linalg::gen_herm_eig(&a, &blk.q)?
        } else {
            linalg::herm_eig(&a)?
        };
        Ok(BlockSpectrum { energies, w })
    }

    /// Upper triangular R with R* R = G_T on the block's frequencies.
    fn g_root(&self, blk: &FiberBlock) -> Result<CMat> {
        if let Some(r) = blk.g_root.get() {
            return Ok(r.clone());
        }
        let m = self.m;
        let nf = blk.freqs.len();
        let gt = Mat::from_fn(m * nf, m * nf, |a, b| {
            let (fa, i) = (a / m, a % m);
            let (fb, j) = (b / m, b % m);
            let delta = kdiff(&self.freqs.kappas[blk.freqs[fa]], &self.freqs.kappas[blk.freqs[fb]]);
            self.ghat.get(&delta)[i * m + j]
        });
        let l = linalg::cholesky(&linalg::hermitize(&gt))?;
        let r = l.adjoint().to_owned();
        let _ = blk.g_root.set(r.clone());
        Ok(r)
    }

    /// X(k) = R B(k) L^{-*}, so that X* X is the standard-form fiber matrix.
    pub fn block_factor(&self, blk: &FiberBlock, k: &[f64]) -> Result<CMat> {
        let m = self.m;
        let r = self.g_root(blk)?;
        let nf = blk.freqs.len();
        let mut bmat = linalg::zeros(m * nf, blk.len());
        for (fa, &p) in blk.freqs.iter().enumerate() {
            let s = self.symbol_at(p, k);
            for &ia in &blk.by_freq[fa] {
                let c = blk.nodes[ia].1;
                for i in 0..m {
                    bmat[(fa * m + i, ia)] = s[(i, c)];
                }
            }
        }
        let x = &r * &bmat;
        Ok(match &blk.q_chol {
            None => x,
            Some(l) => {
                let li = linalg::inverse(l);
                &x * li.adjoint()
            }
        })
    }

    pub fn effective_spectrum(&self, blk: &FiberBlock, k: &[f64]) -> Result<EffectiveBlockSpectrum> {
        let g0 = self
            .g0
            .as_ref()
            .ok_or_else(|| Error::Parameter("effective fiber requires g0".into()))?;
        let mut parts = Vec::with_capacity(blk.freqs.len());
        for (fa, &p) in blk.freqs.iter().enumerate() {
            let s = self.symbol_at(p, k);
            let full = &(s.adjoint() * g0) * &s;
            let pos = blk.by_freq[fa].clone();
            let comps: Vec<usize> = pos.iter().map(|&i| blk.nodes[i].1).collect();
            let sub = Mat::from_fn(comps.len(), comps.len(), |a, b| full[(comps[a], comps[b])]);
            let qb = Mat::from_fn(comps.len(), comps.len(), |a, b| self.q_bar[(comps[a], comps[b])]);
            let (energies, z) = if self.weighted {
                linalg::gen_herm_eig(&sub, &qb)?
            } else {
                linalg::herm_eig(&sub)?
            };
            parts.push(EffectivePart {
                positions: pos,
                energies,
                z,
                q_bar: qb,
            });
        }
        Ok(EffectiveBlockSpectrum { parts })
    }

    /// Global position of each block node, in (frequency, component) order.
    pub fn global_index(&self, node: (usize, usize)) -> usize {
        node.0 * self.n + node.1
    }

    /// Full standard-form fiber matrix in (frequency, component) order.
    pub fn full_matrix(&self, k: &[f64]) -> CMat {
        let dim = self.dim();
        let mut a = linalg::zeros(dim, dim);
        for blk in &self.blocks {
            let ab = self.block_matrix(blk, k);
            for (i, &ni) in blk.nodes.iter().enumerate() {
                for (j, &nj) in blk.nodes.iter().enumerate() {
                    a[(self.global_index(ni), self.global_index(nj))] = ab[(i, j)];
                }
            }
        }
        a
    }

    /// All eigenvalues at k, ascending.
    pub fn energies(&self, k: &[f64]) -> Result<Vec<f64>> {
        let mut all = Vec::with_capacity(self.dim());
        for blk in &self.blocks {
            all.extend(self.block_spectrum(blk, k)?.energies);
        }
        all.sort_by(|a, b| a.total_cmp(b));
        Ok(all)
    }

    /// Lowest `count` eigenvalues from singular values of the factor X(k);
    /// small eigenvalues keep full relative accuracy.
    pub fn accurate_lowest(&self, k: &[f64], count: usize) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for blk in &self.blocks {
            let x = self.block_factor(blk, k)?;
            let mut s = linalg::singular_values(&x)?;
            s.sort_by(|a, b| a.total_cmp(b));
            all.extend(s.into_iter().take(count).map(|v| v * v));
        }
        all.sort_by(|a, b| a.total_cmp(b));
        all.truncate(count);
        Ok(all)
    }

    /// Effective fiber eigenvalues at k, ascending.
    pub fn effective_energies(&self, k: &[f64]) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for blk in &self.blocks {
            for p in self.effective_spectrum(blk, k)?.parts {
                all.extend(p.energies);
            }
        }
        all.sort_by(|a, b| a.total_cmp(b));
        Ok(all)
    }

    /// Rank-n spectral projection for eigenvalues up to `upper`, in the
    /// coordinates w = f u, as a full matrix.
    pub fn spectral_projection(&self, k: &[f64], upper: f64) -> Result<CMat> {
        let dim = self.dim();
        let mut proj = linalg::zeros(dim, dim);
        let mut rank = 0;
        for blk in &self.blocks {
            let sp = self.block_spectrum(blk, k)?;
            let idx: Vec<usize> = (0..sp.energies.len()).filter(|&j| sp.energies[j] <= upper).collect();
            rank += idx.len();
            if idx.is_empty() {
                continue;
            }
            let wl = Mat::from_fn(blk.len(), idx.len(), |i, j| sp.w[(i, idx[j])]);
            let pb = &(&wl * wl.adjoint()) * &blk.q;
            for (i, &ni) in blk.nodes.iter().enumerate() {
                for (j, &nj) in blk.nodes.iter().enumerate() {
                    proj[(self.global_index(ni), self.global_index(nj))] = pb[(i, j)];
                }
            }
        }
        if rank != self.n {
            return Err(Error::Numerical(format!(
                "spectral projection has rank {rank}, expected {}; k is outside the threshold regime",
                self.n
            )));
        }
        Ok(proj)
    }

    /// Orthogonal projection onto constants (the zero frequency).
    pub fn constants_projection(&self) -> CMat {
        let dim = self.dim();
        let z = self.freqs.zero_index();
        let mut p = linalg::zeros(dim, dim);
        for c in 0..self.n {
            let i = self.global_index((z, c));
            p[(i, i)] = linalg::cr(1.0);
        }
        p
    }
}

/// Band table: lowest `count` eigenvalues at every k, in parallel.
pub fn band_functions(ctx: &FiberContext, k_points: &[Vec<f64>], count: usize) -> Result<Vec<Vec<f64>>> {
    if count > ctx.dim() {
        return Err(Error::Parameter(format!(
            "requested {count} bands of a {}-dimensional fiber",
            ctx.dim()
        )));
    }
    k_points
        .par_iter()
        .map(|k| {
            let mut e = ctx.energies(k)?;
            e.truncate(count);
            Ok(e)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchFit {
    pub gamma: f64,
    pub mu: f64,
    pub higher: Vec<f64>,
    /// Relative least-squares residual of the fit.
    pub residual: f64,
    pub flagged: bool,
}

/// Quartic fits with a larger relative residual are redone with a t^5 term.
pub const QUARTIC_RESIDUAL: f64 = 1e-9;

fn fit_powers(t: &[f64], rhs: &[f64], powers: &[i32]) -> Result<BranchFit> {
    // rows scaled by t^-2
    let rows: Vec<Vec<f64>> = t
        .iter()
        .map(|&t| powers.iter().map(|&p| t.powi(p - 2)).collect())
        .collect();
    let c = linalg::real_lstsq(&rows, rhs)?;
    let res: f64 = rows
        .iter()
        .zip(rhs)
        .map(|(r, y)| (r.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let residual = res / scale;
    Ok(BranchFit {
        gamma: c[0],
        mu: c[1],
        higher: c[2..].to_vec(),
        residual,
        flagged: residual > 1e-6,
    })
}

/// Default ladder t0/64 * 2^j up to t0/4.
pub fn default_t_ladder(t0: f64) -> Vec<f64> {
    (0..5).map(|j| t0 / 64.0 * 2f64.powi(j)).collect()
}

/// Fits the lowest n eigenvalues along k = t theta to
/// gamma t^2 + mu t^3 + nu t^4, with a t^5 term when the quartic fit is poor. Eigenvalues are taken sorted; for
/// small t this follows the analytic branches ordered by (gamma, mu).
pub fn extract_threshold_coeffs(ctx: &FiberContext, theta: &[f64], t_samples: &[f64]) -> Result<Vec<BranchFit>> {
    let n = ctx.n;
    if t_samples.len() < 5 {
        return Err(Error::Parameter("band fit needs at least five t samples".into()));
    }
    let vals: Vec<Vec<f64>> = t_samples
        .par_iter()
        .map(|&t| {
            let k: Vec<f64> = theta.iter().map(|x| x * t).collect();
            ctx.accurate_lowest(&k, n)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let rhs: Vec<f64> = t_samples.iter().zip(&vals).map(|(&t, v)| v[l] / (t * t)).collect();
        let mut fit = fit_powers(t_samples, &rhs, &[2, 3, 4])?;
        if fit.residual > QUARTIC_RESIDUAL {
            fit = fit_powers(t_samples, &rhs, &[2, 3, 4, 5])?;
        }
        out.push(fit);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdResiduals {
    /// max over t of |F(t) - P| / t.
    pub projection_ratio: f64,
    /// max over t of |A(t) F(t) - t^2 S P| / t^3.
    pub operator_ratio: f64,
    pub per_t: Vec<(f64, f64, f64)>,
}

pub fn threshold_residuals(
    ctx: &FiberContext,
    germ_s: &CMat,
    theta: &[f64],
    t_samples: &[f64],
    upper: f64,
) -> Result<ThresholdResiduals> {
    if ctx.weighted {
        return Err(Error::Parameter("threshold residuals are defined for f = 1".into()));
    }
    let p = ctx.constants_projection();
    let z = ctx.freqs.zero_index();
    let dim = ctx.dim();
    // t^2 S P in (frequency, component) order
    let mut sp = linalg::zeros(dim, dim);
    for r in 0..ctx.n {
        for c in 0..ctx.n {
            sp[(ctx.global_index((z, r)), ctx.global_index((z, c)))] = germ_s[(r, c)];
        }
    }
    let mut per_t = Vec::new();
    let (mut pr, mut or) = (0.0f64, 0.0f64);
    for &t in t_samples {
        let k: Vec<f64> = theta.iter().map(|x| x * t).collect();
        let f = ctx.spectral_projection(&k, upper)?;
        let a = ctx.full_matrix(&k);
        let r1 = linalg::spectral_norm(&linalg::sub(&f, &p))? / t;
        let diff = linalg::sub(&(&a * &f), &linalg::scale(&sp, linalg::cr(t * t)));
        let r2 = linalg::spectral_norm(&diff)? / t.powi(3);
        pr = pr.max(r1);
        or = or.max(r2);
        per_t.push((t, r1, r2));
    }
    Ok(ThresholdResiduals {
        projection_ratio: pr,
        operator_ratio: or,
        per_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective;
    use crate::fields::{sr, PeriodicMatrixField};
    use crate::lattice::Lattice;

    fn scalar(profile: impl Fn(f64) -> f64) -> OperatorModel {
        let l = Lattice::square(1);
        let g = PeriodicMatrixField::from_fn(&l, &[64], 1, 1, |x| sr(profile(x[0]))).unwrap();
        OperatorModel::new("s", l, MatrixSymbol::gradient(1), g, None, 2).unwrap()
    }

    #[test]
    fn free_fiber_is_diagonal() {
        let m = scalar(|_| 1.0);
        let ctx = FiberContext::new(&m, 4, None).unwrap();
        assert_eq!(ctx.blocks.len(), 9);
        let e = ctx.energies(&[0.25]).unwrap();
        for (a, b) in e.iter().zip([1.0 / 16.0, 9.0 / 16.0, 25.0 / 16.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_at_zero_and_psd() {
        let m = scalar(|x| 2.0 + x.sin());
        let ctx = FiberContext::new(&m, 8, None).unwrap();
        let e = ctx.energies(&[0.0]).unwrap();
        assert!(e[0].abs() < 1e-10 && e[1] > 0.1);
        let a = ctx.full_matrix(&[0.3]);
        assert!(linalg::skew_residual(&a) < 1e-12);
        assert!(linalg::herm_eigvals(&a).unwrap()[0] > -1e-9);
    }

    #[test]
    fn accurate_lowest_matches_eig() {
        let m = scalar(|x| 2.0 + x.sin());
        let ctx = FiberContext::new(&m, 8, None).unwrap();
        let a = ctx.accurate_lowest(&[0.1], 1).unwrap()[0];
        let b = ctx.energies(&[0.1]).unwrap()[0];
        assert!((a - b).abs() < 1e-12 * b.max(1e-3));
    }

    #[test]
    fn band_fit_recovers_harmonic_mean() {
        let m = scalar(|x| 2.0 + x.sin());
        let ctx = FiberContext::new(&m, 12, None).unwrap();
        let t0 = m.threshold_params().t_hat0;
        let fit = extract_threshold_coeffs(&ctx, &[1.0], &default_t_ladder(t0)).unwrap();
        assert!((fit[0].gamma - 3f64.sqrt()).abs() < 1e-6, "{:?}", fit);
        assert!(fit[0].mu.abs() < 1e-5);
    }

    #[test]
    fn effective_fiber_matches_germ() {
        let m = scalar(|x| 2.0 + x.sin());
        let e = effective::compute(&m, 16).unwrap();
        let ctx = FiberContext::new(&m, 8, Some(&e.g0)).unwrap();
        let ee = ctx.effective_energies(&[0.05]).unwrap();
        assert!((ee[0] - e.g0[(0, 0)].re * 0.0025).abs() < 1e-15);
    }

    #[test]
    fn projection_at_zero_is_constants() {
        let m = scalar(|x| 2.0 + x.cos());
        let ctx = FiberContext::new(&m, 6, None).unwrap();
        let f = ctx.spectral_projection(&[0.0], 0.1).unwrap();
        let p = ctx.constants_projection();
        assert!(linalg::max_abs(&linalg::sub(&f, &p)) < 1e-10);
    }
}
