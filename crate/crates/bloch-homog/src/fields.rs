//! Periodic matrix-valued coefficient fields held both as cell-grid samples
//! and as discrete Fourier coefficients.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{self, cr, cz, CMat};
use faer::{c64, Mat};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct PeriodicMatrixField {
    pub rows: usize,
    pub cols: usize,
    pub grid: Vec<usize>,
    /// Basis of the periodicity lattice, used to place sample points.
    pub basis: Vec<Vec<f64>>,
    /// Point-major, then row-major entries. Last axis varies fastest.
    samples: Vec<c64>,
    /// Same layout, indexed by kappa mod N. Coefficient 0 is the cell mean.
    fourier: Vec<c64>,
    /// Largest |kappa_i| of a nonzero coefficient when the field is a known
    /// trigonometric polynomial.
    pub bandwidth: Option<usize>,
}

/// A Fourier record as it appears in config files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub kappa: Vec<i64>,
    /// Row-major complex entries as [re, im] pairs.
    pub value: Vec<[f64; 2]>,
}

fn npoints(grid: &[usize]) -> usize {
    grid.iter().product()
}

fn multi_index(mut idx: usize, grid: &[usize]) -> Vec<usize> {
    let mut out = vec![0; grid.len()];
    for i in (0..grid.len()).rev() {
        out[i] = idx % grid[i];
        idx /= grid[i];
    }
    out
}

fn flat_index(ix: &[i64], grid: &[usize]) -> usize {
    let mut idx = 0usize;
    for (i, &c) in ix.iter().enumerate() {
        let n = grid[i] as i64;
        idx = idx * grid[i] + (((c % n) + n) % n) as usize;
    }
    idx
}

/// In-place multidimensional FFT over a scalar array laid out on `grid`.
fn fft_nd(data: &mut [c64], grid: &[usize], inverse: bool, planner: &mut FftPlanner<f64>) {
    let d = grid.len();
    let total = npoints(grid);
    for axis in 0..d {
        let n = grid[axis];
        let stride: usize = grid[axis + 1..].iter().product();
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let mut line = vec![cz(); n];
        let outer = total / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (t, l) in line.iter_mut().enumerate() {
                    *l = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, l) in line.iter().enumerate() {
                    data[base + t * stride] = *l;
                }
            }
        }
    }
}

impl PeriodicMatrixField {
    fn check_grid(grid: &[usize], lattice: &Lattice) -> Result<()> {
        if grid.len() != lattice.dim {
            return Err(Error::Shape(format!(
                "grid has {} axes for a {}-dimensional lattice",
                grid.len(),
                lattice.dim
            )));
        }
        if grid.contains(&0) {
            return Err(Error::Parameter("grid sizes must be positive".into()));
        }
        Ok(())
    }

    fn from_samples_raw(
        rows: usize,
        cols: usize,
        grid: Vec<usize>,
        basis: Vec<Vec<f64>>,
        samples: Vec<c64>,
        bandwidth: Option<usize>,
    ) -> Self {
        let np = npoints(&grid);
        let rc = rows * cols;
        let mut fourier = vec![cz(); samples.len()];
        let mut planner = FftPlanner::new();
        let mut buf = vec![cz(); np];
        for e in 0..rc {
            for p in 0..np {
                buf[p] = samples[p * rc + e];
            }
            fft_nd(&mut buf, &grid, false, &mut planner);
            for p in 0..np {
                fourier[p * rc + e] = buf[p] / np as f64;
            }
        }
        PeriodicMatrixField {
            rows,
            cols,
            grid,
            basis,
            samples,
            fourier,
            bandwidth,
        }
    }

    /// Field from Fourier coefficients v(x) = sum v_b e^{i<b,x>}.
    pub fn from_fourier(
        coeffs: &[(Vec<i64>, CMat)],
        lattice: &Lattice,
        grid: &[usize],
    ) -> Result<Self> {
        Self::check_grid(grid, lattice)?;
        let (rows, cols) = match coeffs.first() {
            Some((_, m)) => (m.nrows(), m.ncols()),
            None => return Err(Error::Shape("empty coefficient list".into())),
        };
        let np = npoints(grid);
        let rc = rows * cols;
        let mut fourier = vec![cz(); np * rc];
        let mut band = 0usize;
        for (kappa, m) in coeffs {
            if kappa.len() != lattice.dim {
                return Err(Error::Shape(format!(
                    "coefficient index {:?} has wrong dimension",
                    kappa
                )));
            }
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Shape("coefficient matrices differ in shape".into()));
            }
            for (i, &k) in kappa.iter().enumerate() {
                if 2 * k.unsigned_abs() as usize >= grid[i] {
                    return Err(Error::Aliasing(format!(
                        "coefficient {:?} is at or above the Nyquist bound of grid {:?}",
                        kappa, grid
                    )));
                }
                band = band.max(k.unsigned_abs() as usize);
            }
            let p = flat_index(kappa, grid);
            for r in 0..rows {
                for c in 0..cols {
                    fourier[p * rc + r * cols + c] += m[(r, c)];
                }
            }
        }
        let mut samples = vec![cz(); np * rc];
        let mut planner = FftPlanner::new();
        let mut buf = vec![cz(); np];
        for e in 0..rc {
            for p in 0..np {
                buf[p] = fourier[p * rc + e];
            }
            fft_nd(&mut buf, grid, true, &mut planner);
            for p in 0..np {
                samples[p * rc + e] = buf[p];
            }
        }
        Ok(PeriodicMatrixField {
            rows,
            cols,
            grid: grid.to_vec(),
            basis: lattice.basis.clone(),
            samples,
            fourier,
            bandwidth: Some(band),
        })
    }

    /// Field from config records.
    pub fn from_terms(
        terms: &[FourierTerm],
        rows: usize,
        cols: usize,
        lattice: &Lattice,
        grid: &[usize],
    ) -> Result<Self> {
        let coeffs = terms
            .iter()
            .map(|t| {
                if t.value.len() != rows * cols {
                    return Err(Error::Shape(format!(
                        "term {:?} has {} entries, expected {}",
                        t.kappa,
                        t.value.len(),
                        rows * cols
                    )));
                }
                let m = Mat::from_fn(rows, cols, |i, j| {
                    let v = t.value[i * cols + j];
                    c64::new(v[0], v[1])
                });
                Ok((t.kappa.clone(), m))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_fourier(&coeffs, lattice, grid)
    }

    /// Field sampled from a closed-form generator of the physical point x.
    pub fn from_fn(
        lattice: &Lattice,
        grid: &[usize],
        rows: usize,
        cols: usize,
        f: impl Fn(&[f64]) -> CMat,
    ) -> Result<Self> {
        Self::check_grid(grid, lattice)?;
        let np = npoints(grid);
        let rc = rows * cols;
        let mut samples = vec![cz(); np * rc];
        for p in 0..np {
            let ix = multi_index(p, grid);
            let frac: Vec<f64> = ix
                .iter()
                .zip(grid)
                .map(|(&i, &n)| i as f64 / n as f64)
                .collect();
            let x = lattice.point(&frac);
            let m = f(&x);
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Shape("generator returned wrong shape".into()));
            }
            for r in 0..rows {
                for c in 0..cols {
                    samples[p * rc + r * cols + c] = m[(r, c)];
                }
            }
        }
        Ok(Self::from_samples_raw(
            rows,
            cols,
            grid.to_vec(),
            lattice.basis.clone(),
            samples,
            None,
        ))
    }

    pub fn constant(lattice: &Lattice, grid: &[usize], value: &CMat) -> Result<Self> {
        let zero = vec![0i64; lattice.dim];
        Self::from_fourier(&[(zero, value.clone())], lattice, grid)
    }

    pub fn identity(lattice: &Lattice, grid: &[usize], n: usize) -> Result<Self> {
        Self::constant(lattice, grid, &linalg::identity(n))
    }

    pub fn num_points(&self) -> usize {
        npoints(&self.grid)
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn sample(&self, p: usize) -> CMat {
        let rc = self.rows * self.cols;
        Mat::from_fn(self.rows, self.cols, |r, c| {
            self.samples[p * rc + r * self.cols + c]
        })
    }

    pub fn grid_index(&self, p: usize) -> Vec<usize> {
        multi_index(p, &self.grid)
    }

    pub fn samples(&self) -> Vec<CMat> {
        (0..self.num_points()).map(|p| self.sample(p)).collect()
    }

    /// Discrete Fourier coefficient at kappa, indices taken modulo the grid.
    /// This is the grid-quadrature value of the cell average of v e^{-i<b,x>}.
    pub fn dft_coeff(&self, kappa: &[i64]) -> CMat {
        let p = flat_index(kappa, &self.grid);
        let rc = self.rows * self.cols;
        Mat::from_fn(self.rows, self.cols, |r, c| {
            self.fourier[p * rc + r * self.cols + c]
        })
    }

    /// Flat position of kappa (taken modulo the grid) in the coefficient array.
    pub fn wrapped_index(&self, kappa: &[i64]) -> usize {
        flat_index(kappa, &self.grid)
    }

    /// Per wrapped grid frequency: does the coefficient exceed rel_tol times
    /// the largest one?
    pub fn support_mask(&self, rel_tol: f64) -> Vec<bool> {
        let rc = self.rows * self.cols;
        let norms: Vec<f64> = (0..self.num_points())
            .map(|p| {
                self.fourier[p * rc..(p + 1) * rc]
                    .iter()
                    .fold(0.0f64, |a, z| a.max(z.norm()))
            })
            .collect();
        let top = norms.iter().cloned().fold(0.0, f64::max);
        norms.iter().map(|&v| v > rel_tol * top).collect()
    }

    /// Fourier coefficient at kappa; zero at or beyond the Nyquist bound.
    pub fn coeff(&self, kappa: &[i64]) -> CMat {
        let inside = kappa
            .iter()
            .zip(&self.grid)
            .all(|(&k, &n)| 2 * (k.unsigned_abs() as usize) < n);
        if inside {
            self.dft_coeff(kappa)
        } else {
            linalg::zeros(self.rows, self.cols)
        }
    }

    /// All coefficients with |kappa_i| < N_i/2.
    pub fn coefficients(&self) -> Vec<(Vec<i64>, CMat)> {
        (0..self.num_points())
            .filter_map(|p| {
                let ix = multi_index(p, &self.grid);
                let kappa: Vec<i64> = ix
                    .iter()
                    .zip(&self.grid)
                    .map(|(&i, &n)| if 2 * i < n { i as i64 } else { i as i64 - n as i64 })
                    .collect();
                let inside = kappa
                    .iter()
                    .zip(&self.grid)
                    .all(|(&k, &n)| 2 * (k.unsigned_abs() as usize) < n);
                inside.then(|| (kappa.clone(), self.dft_coeff(&kappa)))
            })
            .collect()
    }

    pub fn mean(&self) -> CMat {
        self.dft_coeff(&vec![0; self.dim()])
    }

    /// Pointwise inverse; errors name the first singular sample.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Shape("inverse of a non-square field".into()));
        }
        let n = self.rows;
        let mut out = Vec::with_capacity(self.samples.len());
        for p in 0..self.num_points() {
            let s = self.sample(p);
            let sv = linalg::singular_values(&s)?;
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if smax == 0.0 || smin <= 1e-14 * smax {
                return Err(Error::SingularSample {
                    index: self.grid_index(p),
                });
            }
            let inv = linalg::inverse(&s);
            for r in 0..n {
                for c in 0..n {
                    out.push(inv[(r, c)]);
                }
            }
        }
        Ok(Self::from_samples_raw(
            n,
            n,
            self.grid.clone(),
            self.basis.clone(),
            out,
            None,
        ))
    }

    pub fn harmonic_mean(&self) -> Result<CMat> {
        Ok(linalg::inverse(&self.inverse()?.mean()))
    }

    /// Sample-wise map; the result keeps the grid. A constant stays band-limited.
    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Result<Self> {
        let mut rows = 0;
        let mut cols = 0;
        let mut out = Vec::new();
        for p in 0..self.num_points() {
            let m = f(&self.sample(p));
            if p == 0 {
                rows = m.nrows();
                cols = m.ncols();
                out.reserve(self.num_points() * rows * cols);
            } else if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Shape("map produced inconsistent shapes".into()));
            }
            for r in 0..rows {
                for c in 0..cols {
                    out.push(m[(r, c)]);
                }
            }
        }
        Ok(Self::from_samples_raw(
            rows,
            cols,
            self.grid.clone(),
            self.basis.clone(),
            out,
            (self.bandwidth == Some(0)).then_some(0),
        ))
    }

    /// Trigonometric resampling onto a finer grid (zero padding).
    pub fn resample(&self, grid: &[usize]) -> Result<Self> {
        if grid.len() != self.grid.len() || grid.iter().zip(&self.grid).any(|(a, b)| a < b) {
            return Err(Error::Parameter(format!(
                "cannot resample grid {:?} onto {:?}",
                self.grid, grid
            )));
        }
        if grid == self.grid.as_slice() {
            return Ok(self.clone());
        }
        let lattice_like = Lattice {
            dim: self.dim(),
            basis: self.basis.clone(),
            dual_basis: vec![],
            cell_volume: 0.0,
            dual_cell_volume: 0.0,
            r0: 0.0,
        };
        let coeffs = self.coefficients();
        let mut f = Self::from_fourier(&coeffs, &lattice_like, grid)?;
        f.bandwidth = self.bandwidth;
        Ok(f)
    }

    /// Sample-wise binary operation. Band-limited operands are first moved to
    /// a grid holding the product bandwidth so nothing aliases.
    pub fn zip_map(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Result<Self> {
        if self.grid.len() != other.grid.len() {
            return Err(Error::Shape("fields live on different lattices".into()));
        }
        let mut grid: Vec<usize> = self
            .grid
            .iter()
            .zip(&other.grid)
            .map(|(a, b)| *a.max(b))
            .collect();
        let band = match (self.bandwidth, other.bandwidth) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        if let Some(b) = band {
            for n in grid.iter_mut() {
                if 2 * b >= *n {
                    *n = 2 * b + 2;
                }
            }
        }
        let a = self.resample(&grid)?;
        let c = other.resample(&grid)?;
        let mut rows = 0;
        let mut cols = 0;
        let mut out = Vec::new();
        for p in 0..a.num_points() {
            let m = f(&a.sample(p), &c.sample(p));
            if p == 0 {
                rows = m.nrows();
                cols = m.ncols();
            } else if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Shape("zip_map produced inconsistent shapes".into()));
            }
            for r in 0..rows {
                for cc in 0..cols {
                    out.push(m[(r, cc)]);
                }
            }
        }
        Ok(Self::from_samples_raw(
            rows,
            cols,
            grid,
            self.basis.clone(),
            out,
            band,
        ))
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        self.zip_map(other, |a, b| a * b)
    }

    /// Max over samples of the spectral norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.num_points())
            .map(|p| linalg::spectral_norm(&self.sample(p)).unwrap_or(f64::NAN))
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.num_points()).all(|p| linalg::skew_residual(&self.sample(p)) <= tol)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.samples.iter().all(|z| z.im.abs() <= tol)
    }

    /// Min over samples of the smallest eigenvalue, with the grid point.
    pub fn min_eigenvalue(&self) -> Result<(f64, Vec<usize>)> {
        let mut best = (f64::INFINITY, vec![]);
        for p in 0..self.num_points() {
            let v = linalg::herm_eigvals(&self.sample(p))?;
            if v[0] < best.0 {
                best = (v[0], self.grid_index(p));
            }
        }
        Ok(best)
    }

    /// Sum over coefficients of squared Frobenius norms.
    pub fn fourier_energy(&self) -> f64 {
        self.fourier.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Grid mean of squared Frobenius norms of samples.
    pub fn sample_energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.num_points() as f64
    }

    /// Largest Frobenius deviation of samples from the mean.
    pub fn variation(&self) -> f64 {
        let m = self.mean();
        (0..self.num_points())
            .map(|p| linalg::frobenius(&linalg::sub(&self.sample(p), &m)))
            .fold(0.0, f64::max)
    }

    /// Max entrywise difference between two fields on the same grid.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Entry (r, c) as a scalar field.
    pub fn entry(&self, r: usize, c: usize) -> Result<Self> {
        self.map(|m| Mat::from_fn(1, 1, |_, _| m[(r, c)]))
    }

    pub fn scalar(&self, p: usize) -> c64 {
        self.samples[p * self.rows * self.cols]
    }

    /// Cell mean of a * b, both scalar-like products evaluated sample-wise.
    pub fn mean_of_product(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Result<CMat> {
        Ok(self.zip_map(other, f)?.mean())
    }

    pub fn to_terms(&self, tol: f64) -> Vec<FourierTerm> {
        self.coefficients()
            .into_iter()
            .filter(|(_, m)| linalg::max_abs(m) > tol)
            .map(|(kappa, m)| FourierTerm {
                kappa,
                value: (0..m.nrows())
                    .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                    .map(|(r, c)| [m[(r, c)].re, m[(r, c)].im])
                    .collect(),
            })
            .collect()
    }
}

/// Scalar 1x1 matrix.
pub fn s(x: c64) -> CMat {
    Mat::from_fn(1, 1, |_, _| x)
}

/// Real scalar 1x1 matrix.
pub fn sr(x: f64) -> CMat {
    s(cr(x))
}

/// Default grid for a band-limited field: 4x bandwidth per axis, at least 32.
pub fn default_grid(dim: usize, bandwidth: usize) -> Vec<usize> {
    vec![(4 * bandwidth).max(32); dim]
}
