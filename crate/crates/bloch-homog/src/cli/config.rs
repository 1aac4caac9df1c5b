//! Run configuration: TOML schema, defaults, overrides and model assembly.

use crate::error::{Error, Result};
use crate::fields::{default_grid, FourierTerm, PeriodicMatrixField};
use crate::gallery::{self, GalleryEntry};
use crate::lattice::Lattice;
use crate::model::{default_sphere_count, MatrixSymbol, OperatorModel};
use crate::propagate::{default_eps_ladder, ErrorForm};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Validate,
    Effective,
    GermSweep,
    Bands,
    ErrorSweep,
    Sharpness,
    Cauchy,
    Gallery,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Effective => "effective",
            Task::GermSweep => "germ-sweep",
            Task::Bands => "bands",
            Task::ErrorSweep => "error-sweep",
            Task::Sharpness => "sharpness",
            Task::Cauchy => "cauchy",
            Task::Gallery => "gallery",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub task: Task,
    /// Gallery entry checked by the gallery task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub svg: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            task: Task::default(),
            name: None,
            output_dir: default_output_dir(),
            threads: 0,
            svg: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Use a gallery model instead of explicit data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// d x d basis, rows are the periods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<SymbolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<FieldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FieldSection>,
    /// Sphere samples for the rank constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSection {
    pub m: usize,
    pub n: usize,
    /// One m x n matrix per direction, row-major [re, im] entries.
    pub matrices: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    /// The terms are the complete field; false marks a truncated expansion
    /// of a smooth field, whose bandwidth is then treated as unknown.
    #[serde(default = "yes")]
    pub exact: bool,
    pub terms: Vec<FourierTerm>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Cell-problem cutoff K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// Fiber cutoff for bands and propagators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_cutoff: Option<usize>,
    /// k-grid points per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_k: Option<usize>,
    /// Directions of the germ sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<ErrorForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrich: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Component vector of the Cauchy data, [re, im] per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cell_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_tol: Option<f64>,
}

/// Parses a config, applying `--set`-style overrides (dotted key, TOML value).
pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, overrides).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    if overrides.is_empty() {
        // direct parse keeps line context for schema errors too
        return toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.to_string()));
    }
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for (key, value) in overrides {
        set_key(&mut table, key, value)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    Ok(cfg)
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_key(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// A model together with what the gallery knows about it.
pub struct BuiltModel {
    pub model: OperatorModel,
    pub entry: Option<GalleryEntry>,
}

fn cmat(m: usize, n: usize, entries: &[[f64; 2]], what: &str) -> Result<crate::linalg::CMat> {
    if entries.len() != m * n {
        return Err(Error::Shape(format!("{what} has {} entries, expected {}", entries.len(), m * n)));
    }
    Ok(Mat::from_fn(m, n, |i, j| {
        let v = entries[i * n + j];
        c64::new(v[0], v[1])
    }))
}

fn field_from(sec: &FieldSection, lattice: &Lattice, size: usize, what: &str) -> Result<PeriodicMatrixField> {
    let band = sec
        .terms
        .iter()
        .flat_map(|t| t.kappa.iter().map(|k| k.unsigned_abs() as usize))
        .max()
        .unwrap_or(0);
    let grid = sec.grid.clone().unwrap_or_else(|| default_grid(lattice.dim, band));
    if sec.terms.is_empty() {
        return Err(Error::Config(format!("{what} has no terms")));
    }
    let mut f = PeriodicMatrixField::from_terms(&sec.terms, size, size, lattice, &grid)?;
    if !sec.exact {
        f.bandwidth = None;
    }
    Ok(f)
}

pub fn build_model(sec: &ModelSection) -> Result<BuiltModel> {
    let explicit = sec.lattice.is_some() || sec.symbol.is_some() || sec.g.is_some();
    if let Some(name) = &sec.gallery {
        if explicit {
            return Err(Error::Config("model: give either 'gallery' or explicit data, not both".into()));
        }
        let params: Vec<(String, f64)> = sec.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let entry = gallery::by_name(name, &params)?;
        return Ok(BuiltModel {
            model: entry.model.clone(),
            entry: Some(entry),
        });
    }
    let lattice = Lattice::new(
        sec.lattice
            .clone()
            .ok_or_else(|| Error::Config("model.lattice is missing".into()))?,
    )?;
    let sym = sec
        .symbol
        .as_ref()
        .ok_or_else(|| Error::Config("model.symbol is missing".into()))?;
    let mats = sym
        .matrices
        .iter()
        .enumerate()
        .map(|(l, e)| cmat(sym.m, sym.n, e, &format!("symbol matrix {l}")))
        .collect::<Result<Vec<_>>>()?;
    let b = MatrixSymbol::new(mats)?;
    let g = field_from(
        sec.g.as_ref().ok_or_else(|| Error::Config("model.g is missing".into()))?,
        &lattice,
        sym.m,
        "model.g",
    )?;
    let f = match &sec.f {
        Some(fs) => {
            let f = field_from(fs, &lattice, sym.n, "model.f")?;
            if f.grid != g.grid {
                return Err(Error::Config(format!(
                    "model.f grid {:?} differs from model.g grid {:?}",
                    f.grid, g.grid
                )));
            }
            Some(f)
        }
        None => None,
    };
    let n_theta = sec.n_theta.unwrap_or_else(|| default_sphere_count(lattice.dim));
    let name = sec.name.clone().unwrap_or_else(|| "model".into());
    let model = OperatorModel::new(&name, lattice, b, g, f, n_theta)?;
    Ok(BuiltModel { model, entry: None })
}

fn field_section(f: &PeriodicMatrixField) -> FieldSection {
    let exact = f.bandwidth.is_some();
    let tol = if exact { 1e-13 } else { 1e-16 } * f.sup_norm().max(1.0);
    FieldSection {
        grid: Some(f.grid.clone()),
        exact,
        terms: f.to_terms(tol),
    }
}

/// Explicit model section reproducing a model.
pub fn model_section(model: &OperatorModel) -> ModelSection {
    let b = &model.b;
    ModelSection {
        gallery: None,
        params: BTreeMap::new(),
        name: Some(model.name.clone()),
        lattice: Some(model.lattice.basis.clone()),
        symbol: Some(SymbolSection {
            m: b.m,
            n: b.n,
            matrices: b
                .mats
                .iter()
                .map(|m| {
                    (0..b.m)
                        .flat_map(|i| (0..b.n).map(move |j| (i, j)))
                        .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
                        .collect()
                })
                .collect(),
        }),
        g: Some(field_section(&model.g)),
        f: model.f.as_ref().map(field_section),
        n_theta: None,
    }
}

/// Standalone config for a gallery entry.
pub fn emit_gallery_config(entry: &GalleryEntry) -> Result<String> {
    let cfg = RunConfig {
        run: RunSection {
            task: Task::Effective,
            name: Some(entry.name.clone()),
            ..RunSection::default()
        },
        model: model_section(&entry.model),
        numerics: Numerics {
            cutoff: Some(entry.cutoff),
            ..Numerics::default()
        },
    };
    let body = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!("# gallery entry {}: {}\n{body}", entry.name, entry.description))
}

/// Fills every numeric default so the summary records the values used.
pub fn resolve(cfg: &mut RunConfig, built: &BuiltModel) {
    let d = built.model.d();
    let n = built.model.n();
    let nm = &mut cfg.numerics;
    let gallery_cutoff = built.entry.as_ref().map(|e| e.cutoff);
    nm.cutoff.get_or_insert(gallery_cutoff.unwrap_or(16));
    nm.fiber_cutoff.get_or_insert(8);
    nm.n_k.get_or_insert(if d == 1 { 32 } else { 16 });
    nm.n_theta.get_or_insert(default_sphere_count(d));
    nm.eps.get_or_insert_with(default_eps_ladder);
    nm.tau.get_or_insert(1.0);
    nm.s.get_or_insert(3.0);
    nm.form
        .get_or_insert(if built.model.has_f() { ErrorForm::Sandwiched } else { ErrorForm::Plain });
    nm.enrich.get_or_insert(true);
    nm.theta0.get_or_insert_with(|| {
        let mut t = vec![0.0; d];
        t[d - 1] = 1.0;
        t
    });
    nm.bands.get_or_insert(2 * n + 2);
    nm.xi_max.get_or_insert(6.0);
    nm.xi_points.get_or_insert(if d == 1 { 121 } else { 41 });
    nm.width.get_or_insert(1.0);
    nm.profile.get_or_insert_with(|| {
        let v = 1.0 / (n as f64).sqrt();
        vec![[v, 0.0]; n]
    });
    nm.cluster_tol.get_or_insert(crate::germ::CLUSTER_TOL);
    nm.max_cell_residual.get_or_insert(1e-8);
    nm.slope_tol.get_or_insert(0.15);
}
