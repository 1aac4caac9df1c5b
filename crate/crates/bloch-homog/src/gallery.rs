//! Worked examples with closed-form reference values.

use crate::effective::{self, EffectiveData};
use crate::error::{Error, Result};
use crate::fields::{sr, PeriodicMatrixField};
use crate::germ::GermContext;
use crate::lattice::Lattice;
use crate::linalg::{self, cr, cz, CMat};
use crate::model::{default_sphere_count, MatrixSymbol, OperatorModel};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

const GRID: usize = 64;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Quantity {
    /// Entries of g0, row-major, real and imaginary parts interleaved.
    G0,
    QBar,
    F0,
    GermEigenvalues(Vec<f64>),
    NHatEigenvalues(Vec<f64>),
    /// Entry (r, c) of L(theta) as [re, im].
    LEntry(Vec<f64>, usize, usize),
    Mu(Vec<f64>),
    /// Largest coefficient of the cubic polynomial N(theta).
    NHatCoefficientMax,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reference {
    pub name: String,
    pub quantity: Quantity,
    pub values: Vec<f64>,
    pub tol: f64,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct GalleryEntry {
    pub name: String,
    pub description: String,
    pub model: OperatorModel,
    /// Cutoff at which the references are reproduced.
    pub cutoff: usize,
    pub references: Vec<Reference>,
    /// Constructor parameters, for config emission.
    pub params: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub name: String,
    pub expected: Vec<f64>,
    pub computed: Vec<f64>,
    pub error: f64,
    pub tol: f64,
    pub passed: bool,
}

fn cm(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

fn mat_re_im(a: &CMat) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)].re);
            out.push(a[(i, j)].im);
        }
    }
    out
}

fn diag_re_im(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            out.push(if i == j { d[i] } else { 0.0 });
            out.push(0.0);
        }
    }
    out
}

fn reference(name: &str, q: Quantity, values: Vec<f64>, tol: f64, note: &str) -> Reference {
    Reference {
        name: name.into(),
        quantity: q,
        values,
        tol,
        note: note.into(),
    }
}

fn evaluate(q: &Quantity, eff: &EffectiveData, ctx: &GermContext) -> Result<Vec<f64>> {
    Ok(match q {
        Quantity::G0 => mat_re_im(&eff.g0),
        Quantity::QBar => mat_re_im(&eff.q_bar),
        Quantity::F0 => mat_re_im(&eff.f0),
        Quantity::GermEigenvalues(t) => ctx.germ(t)?.gamma,
        Quantity::NHatEigenvalues(t) => linalg::herm_eigvals(&ctx.n_hat(t))?,
        Quantity::LEntry(t, r, c) => {
            let l = ctx.l_matrix(t);
            vec![l[(*r, *c)].re, l[(*r, *c)].im]
        }
        Quantity::Mu(t) => {
            let mut mu = ctx.correctors(t)?.1.mu;
            mu.sort_by(|a, b| a.total_cmp(b));
            mu
        }
        Quantity::NHatCoefficientMax => vec![ctx
            .n_hat_coefficients()
            .values()
            .map(linalg::max_abs)
            .fold(0.0, f64::max)],
    })
}

/// Recomputes every reference value through the generic pipeline.
pub fn verify(entry: &GalleryEntry) -> Result<Vec<ReferenceCheck>> {
    let eff = effective::compute(&entry.model, entry.cutoff)?;
    let ctx = GermContext::new(&entry.model, &eff)?;
    entry
        .references
        .iter()
        .map(|r| {
            let computed = evaluate(&r.quantity, &eff, &ctx)?;
            let error = if computed.len() == r.values.len() {
                computed
                    .iter()
                    .zip(&r.values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            Ok(ReferenceCheck {
                name: r.name.clone(),
                expected: r.values.clone(),
                computed,
                error,
                tol: r.tol,
                passed: error <= r.tol,
            })
        })
        .collect()
}

pub fn names() -> Vec<&'static str> {
    vec![
        "example_8_7",
        "example_15_1",
        "scalar_1d",
        "schrodinger_1d",
        "schrodinger_2d",
        "pauli_free",
        "pauli_16_2",
        "magnetic_schrodinger",
    ]
}

/// Entry by name with optional parameter overrides (`c`, `alpha`).
pub fn by_name(name: &str, params: &[(String, f64)]) -> Result<GalleryEntry> {
    let get = |k: &str, d: f64| params.iter().find(|(n, _)| n == k).map(|p| p.1).unwrap_or(d);
    match name {
        "example_8_7" => example_8_7(),
        "example_15_1" => example_15_1(get("c", 0.2)),
        "scalar_1d" => scalar_1d_two_plus_sine(),
        "schrodinger_1d" => schrodinger_1d(),
        "schrodinger_2d" => schrodinger_2d(),
        "pauli_free" => pauli_free(),
        "pauli_16_2" => pauli_example_16_2(get("alpha", 1.0 / 16.0)),
        "magnetic_schrodinger" => magnetic_schrodinger(),
        _ => Err(Error::Config(format!(
            "unknown gallery entry '{name}'; known: {}",
            names().join(", ")
        ))),
    }
}

pub fn example_8_7() -> Result<GalleryEntry> {
    let l = Lattice::square(2);
    let b1 = Mat::from_fn(3, 2, |i, j| match (i, j) {
        (0, 0) => cr(1.0),
        (1, 1) => cr(0.5),
        _ => cz(),
    });
    let b2 = Mat::from_fn(3, 2, |i, j| match (i, j) {
        (1, 0) => cr(0.5),
        (2, 1) => cr(1.0),
        _ => cz(),
    });
    let b = MatrixSymbol::new(vec![b1, b2])?;
    let g = PeriodicMatrixField::from_fn(&l, &[GRID, GRID], 3, 3, |x| {
        let g2 = 4.0 / (1.0 + 0.5 * x[0].sin());
        let g3 = 1.0 + 0.5 * x[0].cos();
        linalg::diag_real(&[1.0, g2, g3])
    })?;
    let model = OperatorModel::new("example_8_7", l, b, g, None, default_sphere_count(2))?;
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let refs = vec![
        reference("g0", Quantity::G0, diag_re_im(&[1.0, 4.0, 1.0]), 1e-8, "diag(1, 4, 1)"),
        reference(
            "germ eigenvalues at (1/sqrt2, 1/sqrt2)",
            Quantity::GermEigenvalues(vec![diag, diag]),
            vec![0.5, 1.5],
            1e-8,
            "1 -+ theta1 theta2",
        ),
        reference(
            "germ eigenvalues at (0, 1)",
            Quantity::GermEigenvalues(vec![0.0, 1.0]),
            vec![1.0, 1.0],
            1e-8,
            "double eigenvalue at the crossing",
        ),
        reference(
            "L_23 at (0, 1)",
            Quantity::LEntry(vec![0.0, 1.0], 1, 2),
            vec![0.0, 0.25],
            1e-8,
            "theta2 mean(Lambda22* g3) = i/4",
        ),
        reference(
            "N eigenvalues at (0, 1)",
            Quantity::NHatEigenvalues(vec![0.0, 1.0]),
            vec![-0.125, 0.125],
            1e-8,
            "+-|mean(Lambda22 g3)|/2",
        ),
        reference(
            "mu at (0, 1)",
            Quantity::Mu(vec![0.0, 1.0]),
            vec![-0.125, 0.125],
            1e-8,
            "cluster values",
        ),
        reference(
            "N eigenvalues at (1, 0)",
            Quantity::NHatEigenvalues(vec![1.0, 0.0]),
            vec![0.0, 0.0],
            1e-8,
            "N vanishes",
        ),
    ];
    Ok(GalleryEntry {
        name: "example_8_7".into(),
        description: "d=2, n=2, m=3 real model with crossing germ branches".into(),
        model,
        cutoff: 8,
        references: refs,
        params: vec![],
    })
}

/// beta(x1) = c (sin x1 + cos 2x1); g = [[1, i beta'], [-i beta', 1]].
pub fn example_15_1(c: f64) -> Result<GalleryEntry> {
    if !(c > 0.0 && c < 1.0 / 3.0) {
        return Err(Error::Parameter(format!("c = {c} must lie in (0, 1/3)")));
    }
    let l = Lattice::square(2);
    // i beta' = i c (cos x1 - 2 sin 2x1); as Fourier terms
    let off = |k: i64| -> c64 {
        match k {
            1 | -1 => cm(0.0, 0.5 * c),
            2 => cm(-c, 0.0),
            -2 => cm(c, 0.0),
            _ => cz(),
        }
    };
    let mut coeffs = vec![(vec![0, 0], linalg::identity(2))];
    for k in [-2i64, -1, 1, 2] {
        let v = off(k);
        // the (1,0) entry is the conjugate of the (0,1) entry
        let w = off(-k).conj();
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => v,
            (1, 0) => w,
            _ => cz(),
        });
        coeffs.push((vec![k, 0], m));
    }
    let g = PeriodicMatrixField::from_fourier(&coeffs, &l, &[GRID, GRID])?;
    let min_det = (0..g.num_points())
        .map(|p| {
            let x = g.sample(p);
            1.0 - x[(0, 1)].norm_sqr()
        })
        .fold(f64::INFINITY, f64::min);
    if min_det <= 0.0 {
        return Err(Error::Validation(format!(
            "1 - beta'^2 is not positive on the grid (min {min_det:.3e})"
        )));
    }
    let model = OperatorModel::new(
        "example_15_1",
        l,
        MatrixSymbol::gradient(2),
        g,
        None,
        default_sphere_count(2),
    )?;
    let n = 1.5 * c.powi(3);
    let refs = vec![
        reference(
            "N at (0, 1)",
            Quantity::NHatEigenvalues(vec![0.0, 1.0]),
            vec![n],
            1e-8,
            "(3/2) c^3 theta2^3",
        ),
        reference(
            "N at (0.6, 0.8)",
            Quantity::NHatEigenvalues(vec![0.6, 0.8]),
            vec![n * 0.512],
            1e-8,
            "(3/2) c^3 theta2^3",
        ),
        reference(
            "mu at (0, 1)",
            Quantity::Mu(vec![0.0, 1.0]),
            vec![n],
            1e-8,
            "n = 1 so mu = N",
        ),
        reference(
            "mu at (1, 0)",
            Quantity::Mu(vec![1.0, 0.0]),
            vec![0.0],
            1e-8,
            "vanishes at (+-1, 0)",
        ),
    ];
    Ok(GalleryEntry {
        name: "example_15_1".into(),
        description: "scalar d=2 model with complex Hermitian g and nonzero mu".into(),
        model,
        cutoff: 24,
        references: refs,
        params: vec![("c".into(), c)],
    })
}

/// Scalar model D* g D in one dimension from a positive profile.
pub fn scalar_1d(name: &str, profile: impl Fn(f64) -> f64) -> Result<OperatorModel> {
    let l = Lattice::square(1);
    let g = PeriodicMatrixField::from_fn(&l, &[GRID], 1, 1, |x| sr(profile(x[0])))?;
    OperatorModel::new(name, l, MatrixSymbol::gradient(1), g, None, 2)
}

pub fn scalar_1d_two_plus_sine() -> Result<GalleryEntry> {
    let model = scalar_1d("scalar_1d", |x| 2.0 + x.sin())?;
    let r3 = 3f64.sqrt();
    Ok(GalleryEntry {
        name: "scalar_1d".into(),
        description: "g = 2 + sin x on the line".into(),
        model,
        cutoff: 24,
        references: vec![
            reference("g0", Quantity::G0, vec![r3, 0.0], 1e-8, "harmonic mean sqrt(3)"),
            reference(
                "germ",
                Quantity::GermEigenvalues(vec![1.0]),
                vec![r3],
                1e-8,
                "g0 theta^2",
            ),
            reference(
                "N coefficients",
                Quantity::NHatCoefficientMax,
                vec![0.0],
                1e-10,
                "real scalar case",
            ),
        ],
        params: vec![],
    })
}

/// Spectral application of a symbol p(xi) to a scalar field.
fn apply_symbol(
    field: &PeriodicMatrixField,
    lattice: &Lattice,
    p: impl Fn(&[f64]) -> c64,
) -> Result<PeriodicMatrixField> {
    let coeffs: Vec<(Vec<i64>, CMat)> = field
        .coefficients()
        .into_iter()
        .map(|(k, c)| {
            let xi = lattice.dual_vector(&k);
            let v = p(&xi);
            (k, linalg::scale(&c, v))
        })
        .collect();
    let mut out = PeriodicMatrixField::from_fourier(&coeffs, lattice, &field.grid)?;
    out.bandwidth = field.bandwidth;
    Ok(out)
}

/// H = w^{-1} D* w^2 g D w^{-1} with w normalized to mean(w^2) = 1.
pub fn schrodinger_factorized(
    name: &str,
    lattice: Lattice,
    omega: PeriodicMatrixField,
    g_check: PeriodicMatrixField,
) -> Result<OperatorModel> {
    let (minw, at) = omega.min_eigenvalue()?;
    if minw <= 0.0 {
        return Err(Error::Validation(format!(
            "omega is not positive (min {minw:.3e} at grid index {at:?})"
        )));
    }
    let norm = omega.map(|w| w * w)?.mean()[(0, 0)].re.sqrt();
    let w = omega.map(|x| linalg::scale(x, cr(1.0 / norm)))?;
    let f = w.inverse()?;
    let g = w.zip_map(&g_check, |wx, gx| linalg::scale(gx, wx[(0, 0)] * wx[(0, 0)]))?;
    let d = lattice.dim;
    OperatorModel::new(name, lattice, MatrixSymbol::gradient(d), g, Some(f), default_sphere_count(d))
}

/// V = -w^{-1} D* g D w for display.
pub fn schrodinger_potential(
    lattice: &Lattice,
    omega: &PeriodicMatrixField,
    g_check: &PeriodicMatrixField,
) -> Result<PeriodicMatrixField> {
    let d = lattice.dim;
    let mut flux: Vec<PeriodicMatrixField> = Vec::new();
    let grads: Vec<PeriodicMatrixField> = (0..d)
        .map(|j| apply_symbol(omega, lattice, |xi| cr(xi[j])))
        .collect::<Result<_>>()?;
    for i in 0..d {
        let mut acc = omega.map(|_| linalg::zeros(1, 1))?;
        for (j, gj) in grads.iter().enumerate() {
            let gij = g_check.entry(i, j)?;
            let t = gij.zip_map(gj, |a, b| a * b)?;
            let t = t.resample(&acc.grid).unwrap_or(t);
            acc = acc.zip_map(&t, linalg::add)?;
        }
        flux.push(acc);
    }
    let mut div = omega.map(|_| linalg::zeros(1, 1))?;
    for (i, fl) in flux.iter().enumerate() {
        let t = apply_symbol(fl, lattice, |xi| cr(xi[i]))?;
        div = div.zip_map(&t, linalg::add)?;
    }
    div.zip_map(omega, |a, w| linalg::scale(a, cr(-1.0) / w[(0, 0)]))
}

pub fn schrodinger_1d() -> Result<GalleryEntry> {
    let l = Lattice::square(1);
    let w = PeriodicMatrixField::from_fn(&l, &[GRID], 1, 1, |x| sr((0.3 * x[0].sin()).exp()))?;
    let gc = PeriodicMatrixField::constant(&l, &[GRID], &sr(1.0))?;
    let model = schrodinger_factorized("schrodinger_1d", l, w, gc)?;
    Ok(GalleryEntry {
        name: "schrodinger_1d".into(),
        description: "factorized Schroedinger operator, omega = exp(0.3 sin x)".into(),
        model,
        cutoff: 16,
        references: vec![
            reference("Q_bar", Quantity::QBar, vec![1.0, 0.0], 1e-12, "normalization"),
            reference("f0", Quantity::F0, vec![1.0, 0.0], 1e-12, "normalization"),
            reference(
                "N_Q coefficients",
                Quantity::NHatCoefficientMax,
                vec![0.0],
                1e-10,
                "real metric",
            ),
        ],
        params: vec![],
    })
}

pub fn schrodinger_2d() -> Result<GalleryEntry> {
    let l = Lattice::square(2);
    let grid = [GRID, GRID];
    let w = PeriodicMatrixField::from_fn(&l, &grid, 1, 1, |x| {
        sr((0.3 * x[0].sin() + 0.2 * x[1].cos()).exp())
    })?;
    let gc = PeriodicMatrixField::from_fn(&l, &grid, 2, 2, |x| {
        let a = 1.5 + 0.3 * x[1].cos();
        let c = 0.2 * x[0].sin();
        let e = 1.2 + 0.1 * (x[0] + x[1]).sin();
        Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => cr(a),
            (1, 1) => cr(e),
            _ => cr(c),
        })
    })?;
    let model = schrodinger_factorized("schrodinger_2d", l, w, gc)?;
    Ok(GalleryEntry {
        name: "schrodinger_2d".into(),
        description: "factorized Schroedinger operator with a real anisotropic metric".into(),
        model,
        cutoff: 10,
        references: vec![
            reference("Q_bar", Quantity::QBar, vec![1.0, 0.0], 1e-12, "normalization"),
            reference("f0", Quantity::F0, vec![1.0, 0.0], 1e-12, "normalization"),
            reference(
                "N_Q coefficients",
                Quantity::NHatCoefficientMax,
                vec![0.0],
                1e-10,
                "real metric",
            ),
        ],
        params: vec![],
    })
}

/// Symbol [[0, xi1 - i xi2], [xi1 + i xi2, 0]].
pub fn pauli_symbol() -> MatrixSymbol {
    let b1 = Mat::from_fn(2, 2, |i, j| if i != j { cr(1.0) } else { cz() });
    let b2 = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => cm(0.0, -1.0),
        (1, 0) => cm(0.0, 1.0),
        _ => cz(),
    });
    MatrixSymbol::new(vec![b1, b2]).expect("valid symbol")
}

/// The spin operator f b g b f with f = diag(w+, w-), g = f^2, w+- = e^{+-phi}.
pub fn pauli(name: &str, lattice: &Lattice, phi: &PeriodicMatrixField) -> Result<OperatorModel> {
    let mean = phi.mean()[(0, 0)];
    let scale = phi.sup_norm().max(1.0);
    if mean.norm() > 1e-12 * scale {
        return Err(Error::Parameter(format!(
            "phi must have zero mean (mean {:.3e})",
            mean.re
        )));
    }
    pauli_unchecked(name, lattice, phi)
}

fn pauli_unchecked(name: &str, lattice: &Lattice, phi: &PeriodicMatrixField) -> Result<OperatorModel> {
    if lattice.dim != 2 {
        return Err(Error::Shape("the spin operator is two-dimensional".into()));
    }
    if !phi.is_real(1e-12) {
        return Err(Error::Validation("phi must be real".into()));
    }
    let f = phi.map(|p| {
        let v = p[(0, 0)].re;
        linalg::diag_real(&[v.exp(), (-v).exp()])
    })?;
    let g = f.map(|x| x * x)?;
    OperatorModel::new(name, lattice.clone(), pauli_symbol(), g, Some(f), default_sphere_count(2))
}

/// One spin block: sign +1 gives P+ (b = D1 - iD2, g = w+^2, f = w-),
/// sign -1 gives P-.
pub fn pauli_component(lattice: &Lattice, phi: &PeriodicMatrixField, sign: f64) -> Result<OperatorModel> {
    let b1 = Mat::from_fn(1, 1, |_, _| cr(1.0));
    let b2 = Mat::from_fn(1, 1, |_, _| cm(0.0, -sign));
    let b = MatrixSymbol::new(vec![b1, b2])?;
    let g = phi.map(|p| sr((2.0 * sign * p[(0, 0)].re).exp()))?;
    let f = phi.map(|p| sr((-sign * p[(0, 0)].re).exp()))?;
    let nm = if sign > 0.0 { "pauli_plus" } else { "pauli_minus" };
    OperatorModel::new(nm, lattice.clone(), b, g, Some(f), default_sphere_count(2))
}

pub fn pauli_free() -> Result<GalleryEntry> {
    let l = Lattice::square(2);
    let phi = PeriodicMatrixField::constant(&l, &[GRID, GRID], &sr(0.0))?;
    let model = pauli("pauli_free", &l, &phi)?;
    Ok(GalleryEntry {
        name: "pauli_free".into(),
        description: "free spin operator, phi = 0".into(),
        model,
        cutoff: 2,
        references: vec![
            reference(
                "germ",
                Quantity::GermEigenvalues(vec![0.6, 0.8]),
                vec![1.0, 1.0],
                1e-12,
                "gamma = 1",
            ),
            reference("N_Q coefficients", Quantity::NHatCoefficientMax, vec![0.0], 1e-12, "free"),
        ],
        params: vec![],
    })
}

/// Example data w-^2 = 1 + alpha (sin x2 + 4 sin 2x2), phi = -log(w-^2)/2.
/// The profile is taken as given; phi is not re-centred.
pub fn pauli_16_2_phi(lattice: &Lattice, alpha: f64) -> Result<PeriodicMatrixField> {
    let phi = PeriodicMatrixField::from_fn(lattice, &[GRID, GRID], 1, 1, |x| {
        let w2 = 1.0 + alpha * (x[1].sin() + 4.0 * (2.0 * x[1]).sin());
        sr(-0.5 * w2.ln())
    })?;
    let (mn, _) = phi.map(|p| sr((-2.0 * p[(0, 0)].re).exp()))?.min_eigenvalue()?;
    if mn <= 0.0 {
        return Err(Error::Validation("w-^2 is not positive".into()));
    }
    Ok(phi)
}

pub fn pauli_example_16_2(alpha: f64) -> Result<GalleryEntry> {
    if !(alpha > 0.0 && alpha < 0.2) {
        return Err(Error::Parameter(format!("alpha = {alpha} must lie in (0, 0.2)")));
    }
    let l = Lattice::square(2);
    let phi = pauli_16_2_phi(&l, alpha)?;
    let model = pauli_unchecked("pauli_16_2", &l, &phi)?;
    let cf = pauli_closed_forms(&l, &phi)?;
    let th = [0.6, 0.8];
    let mut mu = vec![cf.mu_minus(&th), cf.mu_plus(&th)];
    mu.sort_by(|a, b| a.total_cmp(b));
    Ok(GalleryEntry {
        name: "pauli_16_2".into(),
        description: "spin operator with w-^2 = 1 + alpha (sin x2 + 4 sin 2x2)".into(),
        model,
        cutoff: 24,
        references: vec![
            reference(
                "germ",
                Quantity::GermEigenvalues(th.to_vec()),
                vec![cf.gamma, cf.gamma],
                1e-8,
                "gamma = g0+ g0-",
            ),
            reference("mu at (0.6, 0.8)", Quantity::Mu(th.to_vec()), mu, 1e-8, "dedicated formulas"),
        ],
        params: vec![("alpha".into(), alpha)],
    })
}

pub fn magnetic_schrodinger() -> Result<GalleryEntry> {
    Err(Error::Parameter(
        "the magnetic Schroedinger entry needs an external factorization of the operator and is not provided"
            .into(),
    ))
}

/// Closed-form effective data of the spin blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PauliClosedForm {
    pub g0_plus: f64,
    pub g0_minus: f64,
    pub gamma: f64,
    /// mean(w+^2 v+) and mean(w-^2 v-) as [re, im].
    pub m_plus: [f64; 2],
    pub m_minus: [f64; 2],
}

impl PauliClosedForm {
    fn nq(&self, m: [f64; 2], sign: f64, th: &[f64]) -> f64 {
        -2.0 * self.gamma * (th[0] * m[0] + sign * th[1] * m[1])
    }
    pub fn n_q_plus(&self, th: &[f64]) -> f64 {
        self.nq(self.m_plus, 1.0, th)
    }
    pub fn n_q_minus(&self, th: &[f64]) -> f64 {
        self.nq(self.m_minus, -1.0, th)
    }
    pub fn mu_plus(&self, th: &[f64]) -> f64 {
        self.g0_minus * self.n_q_plus(th)
    }
    pub fn mu_minus(&self, th: &[f64]) -> f64 {
        self.g0_plus * self.n_q_minus(th)
    }
}

pub fn pauli_closed_forms(lattice: &Lattice, phi: &PeriodicMatrixField) -> Result<PauliClosedForm> {
    let wp2 = phi.map(|p| sr((2.0 * p[(0, 0)].re).exp()))?;
    let wm2 = phi.map(|p| sr((-2.0 * p[(0, 0)].re).exp()))?;
    let g0_plus = 1.0 / wm2.mean()[(0, 0)].re;
    let g0_minus = 1.0 / wp2.mean()[(0, 0)].re;
    let gamma = g0_plus * g0_minus;
    // (D1 -+ i D2) v = g0 w-+^2 - 1, then mean(w+-^2 v) by Parseval
    let solve = |sign: f64, g0: f64, rhs_w: &PeriodicMatrixField, w: &PeriodicMatrixField| -> [f64; 2] {
        let mut acc = cz();
        for (k, c) in rhs_w.coefficients() {
            if k.iter().all(|&x| x == 0) {
                continue;
            }
            let xi = lattice.dual_vector(&k);
            let sym = cm(xi[0], -sign * xi[1]);
            let vk = c[(0, 0)] * g0 / sym;
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            acc += w.dft_coeff(&neg)[(0, 0)] * vk;
        }
        [acc.re, acc.im]
    };
    let m_plus = solve(1.0, g0_plus, &wm2, &wp2);
    let m_minus = solve(-1.0, g0_minus, &wp2, &wm2);
    Ok(PauliClosedForm {
        g0_plus,
        g0_minus,
        gamma,
        m_plus,
        m_minus,
    })
}
