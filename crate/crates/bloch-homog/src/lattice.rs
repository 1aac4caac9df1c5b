//! Lattices, dual lattices, truncated frequency sets and k-point grids.

use crate::error::{Error, Result};
use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lattice {
    pub dim: usize,
    /// Rows are the basis vectors a_i.
    pub basis: Vec<Vec<f64>>,
    /// Rows are the dual vectors b^i with <b^i, a_j> = 2 pi delta.
    pub dual_basis: Vec<Vec<f64>>,
    pub cell_volume: f64,
    pub dual_cell_volume: f64,
    pub r0: f64,
}

fn to_mat(rows: &[Vec<f64>]) -> Mat<f64> {
    let d = rows.len();
    Mat::from_fn(d, d, |i, j| rows[i][j])
}

/// Dual basis b^i = 2 pi (A^{-1})^T, A having the a_i as rows.
pub fn dual_basis(basis: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = basis.len();
    if d == 0 || basis.iter().any(|r| r.len() != d) {
        return Err(Error::DegenerateLattice(format!(
            "basis must be a square d x d array, got {} rows",
            d
        )));
    }
    if basis.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateLattice("non-finite basis entry".into()));
    }
    let a = to_mat(basis);
    let sv = a
        .singular_values()
        .map_err(|e| Error::DegenerateLattice(format!("{e:?}")))?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= 1e-13 * smax {
        return Err(Error::DegenerateLattice(
            "basis vectors are linearly dependent".into(),
        ));
    }
    let inv = a.partial_piv_lu().inverse();
    Ok((0..d)
        .map(|i| (0..d).map(|j| 2.0 * PI * inv[(j, i)]).collect())
        .collect())
}

fn abs_det(rows: &[Vec<f64>]) -> f64 {
    to_mat(rows).determinant().abs()
}

fn smallest_singular(rows: &[Vec<f64>]) -> f64 {
    to_mat(rows)
        .singular_values()
        .map(|s| s.into_iter().fold(f64::INFINITY, f64::min))
        .unwrap_or(0.0)
}

/// Half the shortest nonzero vector of the lattice spanned by `dual`.
///
/// Shells max|kappa_i| = R are scanned outward; every vector of shell R has
/// length at least sigma_min * R, so the scan stops once that bound passes
/// the best length found.
pub fn r0_of_dual(dual: &[Vec<f64>]) -> f64 {
    let d = dual.len();
    let smin = smallest_singular(dual);
    let mut best = f64::INFINITY;
    let mut shell: i64 = 1;
    loop {
        for kappa in cube(d, shell) {
            if kappa.iter().map(|k| k.abs()).max() != Some(shell) {
                continue;
            }
            let v = combine(dual, &kappa);
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            best = best.min(len);
        }
        if smin * (shell + 1) as f64 > best || shell > 10_000 {
            break;
        }
        shell += 1;
    }
    best / 2.0
}

fn cube(d: usize, k: i64) -> Vec<Vec<i64>> {
    let side = (2 * k + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut kappa = vec![0i64; d];
            for i in (0..d).rev() {
                kappa[i] = (idx % side) as i64 - k;
                idx /= side;
            }
            kappa
        })
        .collect()
}

/// Sum of kappa_i * rows_i.
pub fn combine(rows: &[Vec<f64>], kappa: &[i64]) -> Vec<f64> {
    let d = rows[0].len();
    let mut v = vec![0.0; d];
    for (r, &k) in rows.iter().zip(kappa) {
        for j in 0..d {
            v[j] += k as f64 * r[j];
        }
    }
    v
}

impl Lattice {
    pub fn new(basis: Vec<Vec<f64>>) -> Result<Self> {
        let dual = dual_basis(&basis)?;
        let dim = basis.len();
        let cell_volume = abs_det(&basis);
        let dual_cell_volume = abs_det(&dual);
        let r0 = r0_of_dual(&dual);
        Ok(Lattice {
            dim,
            basis,
            dual_basis: dual,
            cell_volume,
            dual_cell_volume,
            r0,
        })
    }

    /// Gamma = (2 pi Z)^d.
    pub fn square(dim: usize) -> Self {
        let basis = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 2.0 * PI } else { 0.0 }).collect())
            .collect();
        Lattice::new(basis).expect("square lattice")
    }

    pub fn dual_vector(&self, kappa: &[i64]) -> Vec<f64> {
        combine(&self.dual_basis, kappa)
    }

    pub fn biorthogonality_residual(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let dot: f64 = (0..self.dim)
                    .map(|l| self.dual_basis[i][l] * self.basis[j][l])
                    .sum();
                let target = if i == j { 2.0 * PI } else { 0.0 };
                m = m.max((dot - target).abs());
            }
        }
        m
    }

    pub fn frequency_set(&self, k: usize) -> Result<FrequencySet> {
        FrequencySet::new(self, k)
    }

    /// Midpoint grid on the dual parallelepiped centered at the origin.
    pub fn k_grid(&self, n: usize) -> Result<KGrid> {
        if n == 0 {
            return Err(Error::Parameter("k-grid size must be at least 1".into()));
        }
        let d = self.dim;
        let total = n.pow(d as u32);
        let w = self.dual_cell_volume / total as f64;
        let mut points = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut frac = vec![0.0; d];
            for i in (0..d).rev() {
                let ni = idx % n;
                idx /= n;
                frac[i] = (ni as f64 + 0.5) / n as f64 - 0.5;
            }
            let mut k = vec![0.0; d];
            for (i, f) in frac.iter().enumerate() {
                for j in 0..d {
                    k[j] += f * self.dual_basis[i][j];
                }
            }
            points.push(KPoint { k, weight: w });
        }
        Ok(KGrid { points })
    }

    /// Coordinates of a Cartesian k with respect to the dual basis.
    pub fn dual_coordinates(&self, k: &[f64]) -> Vec<f64> {
        // k = sum c_i b^i and <b^i, a_j> = 2 pi delta give c_j = <k, a_j>/(2 pi)
        (0..self.dim)
            .map(|j| {
                (0..self.dim).map(|l| k[l] * self.basis[j][l]).sum::<f64>() / (2.0 * PI)
            })
            .collect()
    }

    /// Physical point x = sum f_i a_i for fractional coordinates f.
    pub fn point(&self, frac: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        for (i, f) in frac.iter().enumerate() {
            for j in 0..d {
                x[j] += f * self.basis[i][j];
            }
        }
        x
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencySet {
    pub cutoff: usize,
    pub dim: usize,
    /// Integer coordinates, lexicographic.
    pub kappas: Vec<Vec<i64>>,
    /// Cartesian dual vectors.
    pub vectors: Vec<Vec<f64>>,
}

impl FrequencySet {
    pub fn new(lattice: &Lattice, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("frequency cutoff must be at least 1".into()));
        }
        let kappas = cube(lattice.dim, k as i64);
        let vectors = kappas.iter().map(|kp| lattice.dual_vector(kp)).collect();
        Ok(FrequencySet {
            cutoff: k,
            dim: lattice.dim,
            kappas,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    pub fn index_of(&self, kappa: &[i64]) -> Option<usize> {
        let k = self.cutoff as i64;
        let side = 2 * k + 1;
        let mut idx: i64 = 0;
        for &c in kappa {
            if c.abs() > k {
                return None;
            }
            idx = idx * side + (c + k);
        }
        Some(idx as usize)
    }

    pub fn zero_index(&self) -> usize {
        self.index_of(&vec![0; self.dim]).expect("zero frequency")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KPoint {
    pub k: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KGrid {
    pub points: Vec<KPoint>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_dual() {
        let l = Lattice::square(2);
        assert!((l.dual_basis[0][0] - 1.0).abs() < 1e-14);
        assert!(l.dual_basis[0][1].abs() < 1e-14);
        assert!((l.dual_basis[1][1] - 1.0).abs() < 1e-14);
        assert!((l.r0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional() {
        let l = Lattice::new(vec![vec![3.0]]).unwrap();
        assert!((l.dual_basis[0][0] - 2.0 * PI / 3.0).abs() < 1e-14);
        let z = Lattice::new(vec![vec![1.0]]).unwrap();
        assert!((z.r0 - PI).abs() < 1e-13);
    }

    #[test]
    fn hexagonal() {
        let s3 = 3f64.sqrt();
        let l = Lattice::new(vec![vec![1.0, 0.0], vec![0.5, s3 / 2.0]]).unwrap();
        // oracle: direct formula for the inverse transpose of a 2x2 matrix
        let (a, b, c, d) = (1.0, 0.0, 0.5, s3 / 2.0);
        let det = a * d - b * c;
        let b1 = [2.0 * PI * d / det, -2.0 * PI * c / det];
        let b2 = [-2.0 * PI * b / det, 2.0 * PI * a / det];
        assert!((l.dual_basis[0][0] - b1[0]).abs() < 1e-12);
        assert!((l.dual_basis[0][1] - b1[1]).abs() < 1e-12);
        assert!((l.dual_basis[1][0] - b2[0]).abs() < 1e-12);
        assert!((l.dual_basis[1][1] - b2[1]).abs() < 1e-12);
        assert!((l.dual_basis[0][1] + 2.0 * PI / s3).abs() < 1e-12);
        assert!((l.r0 - 2.0 * PI / s3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_basis_rejected() {
        assert!(matches!(
            Lattice::new(vec![vec![1.0, 2.0], vec![2.0, 4.0]]),
            Err(Error::DegenerateLattice(_))
        ));
    }

    #[test]
    fn frequency_sets() {
        let l1 = Lattice::square(1);
        let f = l1.frequency_set(1).unwrap();
        assert_eq!(f.kappas, vec![vec![-1], vec![0], vec![1]]);
        let l2 = Lattice::square(2);
        assert_eq!(l2.frequency_set(1).unwrap().len(), 9);
        let f8 = l2.frequency_set(8).unwrap();
        assert_eq!(f8.len(), 289);
        for (i, k) in f8.kappas.iter().enumerate() {
            assert_eq!(f8.index_of(k), Some(i));
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            assert!(f8.index_of(&neg).is_some());
        }
        assert_eq!(f8.kappas[f8.zero_index()], vec![0, 0]);
    }

    #[test]
    fn midpoint_grid() {
        let l = Lattice::square(1);
        let g = l.k_grid(4).unwrap();
        let ks: Vec<f64> = g.points.iter().map(|p| p.k[0]).collect();
        let expect = [-0.375, -0.125, 0.125, 0.375];
        for (a, b) in ks.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let l2 = Lattice::square(2);
        let g2 = l2.k_grid(8).unwrap();
        assert_eq!(g2.points.len(), 64);
        let w: f64 = g2.points.iter().map(|p| p.weight).sum();
        assert!((w - l2.dual_cell_volume).abs() < 1e-12);
    }

    #[test]
    fn grid_points_in_parallelepiped() {
        let s3 = 3f64.sqrt();
        let l = Lattice::new(vec![vec![1.0, 0.0], vec![0.5, s3 / 2.0]]).unwrap();
        for p in l.k_grid(5).unwrap().points {
            for c in l.dual_coordinates(&p.k) {
                assert!((-0.5 - 1e-12..=0.5 + 1e-12).contains(&c));
            }
        }
    }

    fn brute_r0(l: &Lattice, r: i64) -> f64 {
        cube(l.dim, r)
            .into_iter()
            .filter(|k| k.iter().any(|&x| x != 0))
            .map(|k| {
                let v = l.dual_vector(&k);
                v.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .fold(f64::INFINITY, f64::min)
            / 2.0
    }

    proptest! {
        #[test]
        fn biorthogonal_and_volume(a in 0.5f64..3.0, b in -2.0f64..2.0, c in 0.5f64..3.0, s in -1.0f64..1.0) {
            let l = Lattice::new(vec![vec![a, s], vec![b, c]]);
            prop_assume!(l.is_ok());
            let l = l.unwrap();
            prop_assume!((a * c - s * b).abs() > 0.2);
            prop_assert!(l.biorthogonality_residual() < 1e-12 * (1.0 + a + c + b.abs()));
            let prod = l.cell_volume * l.dual_cell_volume;
            prop_assert!((prod - 4.0 * PI * PI).abs() < 1e-10 * 4.0 * PI * PI);
        }

        #[test]
        fn r0_matches_brute_force(a in 0.5f64..2.0, b in -3.0f64..3.0, c in 0.3f64..2.0) {
            let l = Lattice::new(vec![vec![a, 0.0], vec![b, c]]).unwrap();
            // generous brute-force radius for these skews
            let brute = brute_r0(&l, 25);
            prop_assert!((l.r0 - brute).abs() < 1e-10 * brute);
        }

        #[test]
        fn frequency_set_negation_closed(k in 1usize..5, d in 1usize..4) {
            let l = Lattice::square(d);
            let f = l.frequency_set(k).unwrap();
            prop_assert_eq!(f.len(), (2 * k + 1).pow(d as u32));
            for kp in &f.kappas {
                let neg: Vec<i64> = kp.iter().map(|x| -x).collect();
                prop_assert!(f.index_of(&neg).is_some());
            }
        }
    }
}
