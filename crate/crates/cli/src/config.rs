//! Run configuration: a TOML file (`[run]` and `[geometry]` sections)
//! merged with command-line flags, then validated.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ucp_core::hypotheses::{TOL_CHAR, TOL_POS, TOL_ZERO};
use ucp_core::{BoxRegion, Expr, GeometrySpec, MetricField, ScalarField};

/// Default output directory.
pub const DEFAULT_OUT: &str = "ucp-out";

/// Default seed for randomized test corpora.
pub const DEFAULT_SEED: u64 = 2024;

/// Invalid configuration; the driver exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Check,
    Certify,
    Rays,
    Corner,
    Carleman,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Certify => "certify",
            Command::Rays => "rays",
            Command::Corner => "corner",
            Command::Carleman => "carleman",
            Command::All => "all",
        }
    }
}

/// A metric entry: a number or a closed-form expression in `x0, x1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Expr(String),
}

/// Inline geometry. `metric` holds the rows of `Q`; with
/// `family = "flat"` it defaults to `diag(−1, 1, …, 1)`, and with
/// `family = "conformal"` the constant `metric` (or the flat form) is
/// multiplied by `e^sigma`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    pub family: Option<String>,
    pub metric: Option<Vec<Vec<Entry>>>,
    pub sigma: Option<String>,
    pub phi_plus: String,
    pub phi_minus: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub x0: Option<Vec<f64>>,
}

/// Parameters of a run; every field may come from the file or a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub command: Option<Command>,
    pub model: Option<String>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol_zero: Option<f64>,
    pub tol_char: Option<f64>,
    pub tol_pos: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub run: RunSection,
    pub geometry: Option<GeometryConfig>,
}

impl ConfigFile {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        if src.trim().is_empty() {
            return Err(invalid("config is empty"));
        }
        toml::from_str(src).map_err(|e| invalid(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }
}

/// Validated configuration. Stage-specific defaults (grid sizes, sample
/// counts) stay `None` here and are filled by each stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: Option<String>,
    pub geometry: Option<GeometryConfig>,
    pub lambda: Option<f64>,
    pub mu: f64,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub tol_zero: f64,
    pub tol_char: f64,
    pub tol_pos: f64,
}

impl RunConfig {
    /// Overlays `flags` on `file` (flags win) and validates the result.
    pub fn resolve(file: ConfigFile, flags: RunSection) -> Result<Self, ConfigError> {
        let r = file.run;
        let command = flags
            .command
            .or(r.command)
            .ok_or_else(|| invalid("no command given"))?;
        let cfg = RunConfig {
            command,
            model: flags.model.or(r.model),
            geometry: file.geometry,
            lambda: flags.lambda.or(r.lambda),
            mu: flags.mu.or(r.mu).unwrap_or(1.0),
            grid: flags.grid.or(r.grid),
            samples: flags.samples.or(r.samples),
            seed: flags.seed.or(r.seed).unwrap_or(DEFAULT_SEED),
            out: flags.out.or(r.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            tol_zero: flags.tol_zero.or(r.tol_zero).unwrap_or(TOL_ZERO),
            tol_char: flags.tol_char.or(r.tol_char).unwrap_or(TOL_CHAR),
            tol_pos: flags.tol_pos.or(r.tol_pos).unwrap_or(TOL_POS),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration for a library model with default parameters.
    pub fn for_model(command: Command, model: &str) -> Self {
        RunConfig {
            command,
            model: Some(model.to_string()),
            geometry: None,
            lambda: None,
            mu: 1.0,
            grid: None,
            samples: None,
            seed: DEFAULT_SEED,
            out: PathBuf::from(DEFAULT_OUT),
            tol_zero: TOL_ZERO,
            tol_char: TOL_CHAR,
            tol_pos: TOL_POS,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.model, &self.geometry) {
            (None, None) => return Err(invalid("give either a model name or a [geometry] section")),
            (Some(_), Some(_)) => return Err(invalid("a model name and a [geometry] section are exclusive")),
            _ => {}
        }
        for (name, v) in [("tol_zero", self.tol_zero), ("tol_char", self.tol_char), ("tol_pos", self.tol_pos), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if let Some(g) = self.grid {
            if g < 8 || !g.is_multiple_of(2) {
                return Err(invalid(format!("grid must be an even number of intervals >= 8, got {g}")));
            }
        }
        if self.samples == Some(0) {
            return Err(invalid("samples must be positive"));
        }
        if let Some(g) = &self.geometry {
            g.build(self)?;
        }
        Ok(())
    }

    /// Name recorded in reports.
    pub fn model_name(&self) -> &str {
        self.model.as_deref().unwrap_or("inline")
    }
}

fn parse_expr(src: &str, dim: usize, what: &str) -> Result<Expr, ConfigError> {
    let e = Expr::parse(src).map_err(|e| invalid(format!("{what}: {e}")))?;
    if let Some(k) = e.max_var() {
        if k >= dim {
            return Err(invalid(format!("{what} uses x{k} but dim = {dim}")));
        }
    }
    Ok(e)
}

fn flat(dim: usize) -> DMatrix<f64> {
    let mut q = DMatrix::identity(dim, dim);
    q[(0, 0)] = -1.0;
    q
}

impl GeometryConfig {
    fn metric(&self) -> Result<MetricField, ConfigError> {
        let n = self.dim;
        let rows = match &self.metric {
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!("metric must be {n} x {n}")));
                }
                let mut entries = Vec::with_capacity(n);
                for (i, row) in rows.iter().enumerate() {
                    let mut out = Vec::with_capacity(n);
                    for (j, e) in row.iter().enumerate() {
                        out.push(match e {
                            Entry::Number(v) => Expr::constant(*v),
                            Entry::Expr(s) => parse_expr(s, n, &format!("metric[{i}][{j}]"))?,
                        });
                    }
                    entries.push(out);
                }
                for i in 0..n {
                    for j in 0..i {
                        if entries[i][j] != entries[j][i] {
                            return Err(invalid(format!("metric[{i}][{j}] and metric[{j}][{i}] differ")));
                        }
                    }
                }
                Some(entries)
            }
            None => None,
        };
        let constant = |rows: &Vec<Vec<Expr>>| -> Option<DMatrix<f64>> {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    match &rows[i][j] {
                        Expr::Const(c) => m[(i, j)] = *c,
                        _ => return None,
                    }
                }
            }
            Some(m)
        };
        match (self.family.as_deref(), rows) {
            (None, Some(rows)) => Ok(match constant(&rows) {
                Some(m) => MetricField::constant(m),
                None => MetricField::from_exprs(rows),
            }),
            (None, None) => Err(invalid("geometry needs `metric` or `family`")),
            (Some("flat"), None) => Ok(MetricField::constant(flat(n))),
            (Some("flat"), Some(_)) => Err(invalid("family = \"flat\" takes no metric")),
            (Some("conformal"), rows) => {
                let sigma = self
                    .sigma
                    .as_deref()
                    .ok_or_else(|| invalid("family = \"conformal\" needs sigma"))?;
                let base = match rows {
                    Some(r) => constant(&r).ok_or_else(|| invalid("a conformal base metric must be constant"))?,
                    None => flat(n),
                };
                Ok(MetricField::conformal(parse_expr(sigma, n, "sigma")?, base))
            }
            (Some(f), _) => Err(invalid(format!("unknown metric family `{f}` (known: flat, conformal)"))),
        }
    }

    /// Geometry spec with the run's tolerances applied.
    pub fn build(&self, cfg: &RunConfig) -> Result<GeometrySpec, ConfigError> {
        let n = self.dim;
        if n < 2 {
            return Err(invalid("dim must be at least 2"));
        }
        if self.family.is_none() && self.sigma.is_some() {
            return Err(invalid("sigma needs family = \"conformal\""));
        }
        if self.lo.len() != n || self.hi.len() != n {
            return Err(invalid(format!("lo and hi must have {n} entries")));
        }
        if !self.lo.iter().zip(&self.hi).all(|(a, b)| a < b) {
            return Err(invalid("lo must be below hi on every axis"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(invalid(format!("x0 must have {n} entries")));
            }
        }
        let metric = self.metric()?;
        let pp = ScalarField::from_expr(n, parse_expr(&self.phi_plus, n, "phi_plus")?);
        let pm = ScalarField::from_expr(n, parse_expr(&self.phi_minus, n, "phi_minus")?);
        let mut spec = GeometrySpec::new(metric, pp, pm, BoxRegion::new(self.lo.clone(), self.hi.clone()))
            .with_tol_zero(cfg.tol_zero)
            .with_tol_char(cfg.tol_char)
            .with_tol_pos(cfg.tol_pos);
        if let Some(s) = cfg.samples {
            spec = spec.with_samples(s);
        }
        Ok(spec)
    }

    pub fn base_point(&self) -> Option<DVector<f64>> {
        self.x0.as_ref().map(|x| DVector::from_column_slice(x))
    }
}
