//! Stages of a run and the pipeline that chains them.
//!
//! Every stage returns its result with a list of [`Verdict`]s and the CSV
//! tables it produces; a stage passes iff all of its verdicts pass.

use std::path::PathBuf;

use nalgebra::DVector;
use serde::Serialize;

use ucp_core::bump::bump_corpus;
use ucp_core::carleman::{bump_superpositions, build_weight, lambda_sweep, DEFAULT_LAMBDAS};
use ucp_core::certifier::{certify, EPS_C};
use ucp_core::corner::{detect_layer, u_corpus, verify_lemma21, verify_lemma23, LayerReport, Lemma21Report, Lemma23Report};
use ucp_core::hypotheses::{build_psi, check_assumptions, sample_surface, verify_lemma26, Lemma26Report, Surface};
use ucp_core::mollifier::{commutator_report, constant_case, kink_corpus, smooth_case, CommutatorReport, DEFAULT_EPS};
use ucp_core::models::{by_name, designated_failure, KnownConstant};
use ucp_core::rays::contact_at;
use ucp_core::report::{write_csv, write_json, Report};
use ucp_core::{
    BMatrixField, CarlemanReport, Certificate, ContactReport, CornerField, Error, GeometrySpec, Grid, HypothesisReport,
    LowerOrder, MetricField, PhasePoint, Point, ScalarField, Side,
};

use crate::config::{Command, ConfigError, RunConfig};

/// Sphere seeds and surface samples when `samples` is not given.
pub const DEFAULT_SAMPLES: usize = 200;
/// Corner-lab grid intervals per axis on `[−1, 1]²`.
pub const DEFAULT_CORNER_GRID: usize = 512;
/// Carleman-lab grid intervals per axis.
pub const DEFAULT_CARLEMAN_GRID: usize = 256;
pub const CORNER_TESTS: usize = 20;
pub const LEMMA23_POINTS: usize = 10_000;
pub const CARLEMAN_TESTS: usize = 50;
/// Layer probe: relative mismatch between the defect and the face integral.
pub const LAYER_TOL: f64 = 0.01;
/// Mollifier: the smallest-ε commutator is at most this fraction of the largest.
pub const COMMUTATOR_DECAY: f64 = 0.25;
pub const CONSTANT_COMMUTATOR_TOL: f64 = 1e-12;
/// Carleman: λ from which `r_min` must stay positive.
pub const CARLEMAN_LAMBDA_FROM: f64 = 4.0;
pub const SLOPE_TOL: f64 = 0.05;
/// Rays: fitted against predicted `½H_p²ψ`.
pub const RAY_REL_TOL: f64 = 0.05;

/// One pass/fail comparison `value <relation> bound`.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub relation: &'static str,
    pub bound: f64,
}

impl Verdict {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        Verdict { name: name.to_string(), pass: value <= bound, value, relation: "<=", bound }
    }

    pub fn gt(name: &str, value: f64, bound: f64) -> Self {
        Verdict { name: name.to_string(), pass: value > bound, value, relation: ">", bound }
    }

    /// `|value − target| ≤ tol`.
    pub fn near(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Verdict {
            name: name.to_string(),
            pass: (value - target).abs() <= tol,
            value,
            relation: "~",
            bound: target,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Verdict { name: name.to_string(), pass: ok, value: ok as u8 as f64, relation: "==", bound: 1.0 }
    }
}

fn all_pass(v: &[Verdict]) -> bool {
    v.iter().all(|c| c.pass)
}

/// Numeric CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Geometry of a run, with the configured tolerances applied.
pub struct Setup {
    pub name: String,
    pub spec: GeometrySpec,
    pub known: Vec<KnownConstant>,
    /// Base point from the model or the config; `None` means the first
    /// intersection sample is used.
    pub x0: Option<Point>,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self, ConfigError> {
        if let Some(g) = &cfg.geometry {
            return Ok(Setup {
                name: "inline".to_string(),
                spec: g.build(cfg)?,
                known: Vec::new(),
                x0: g.base_point(),
            });
        }
        let name = cfg.model.as_deref().expect("validated config has a model or a geometry");
        let m = by_name(name).map_err(|e| ConfigError(e.to_string()))?;
        let mut spec = m
            .geometry
            .with_tol_zero(cfg.tol_zero)
            .with_tol_char(cfg.tol_char)
            .with_tol_pos(cfg.tol_pos);
        if let Some(s) = cfg.samples {
            spec = spec.with_samples(s);
        }
        Ok(Setup { name: m.name, spec, known: m.known_constants, x0: Some(m.x0) })
    }

    /// The configured base point, else the first intersection sample.
    pub fn base_point(&self) -> ucp_core::Result<Point> {
        if let Some(x) = &self.x0 {
            return Ok(x.clone());
        }
        sample_surface(&self.spec, Surface::Intersection)
            .points
            .into_iter()
            .next()
            .ok_or_else(|| Error::InsufficientSamples("no intersection points in the box".into()))
    }

    fn known(&self, name: &str) -> Option<&KnownConstant> {
        self.known.iter().find(|k| k.name == name)
    }
}

// ---- check ----

#[derive(Debug, Clone, Serialize)]
pub struct CheckStage {
    pub hypotheses: HypothesisReport,
    /// Failed hypotheses (`manifold`, `transverse`, `bothcar`, `sign`).
    pub failed: Vec<&'static str>,
    pub designated_failure: Option<&'static str>,
    pub lemma26: Option<Lemma26Report>,
    pub lemma26_error: Option<String>,
    pub checks: Vec<Verdict>,
    /// Intersection samples, first one used as base point downstream.
    #[serde(skip)]
    pub intersection: Vec<Point>,
    #[serde(skip)]
    pub sign_values: Vec<f64>,
}

pub fn run_check(setup: &Setup) -> ucp_core::Result<CheckStage> {
    let spec = &setup.spec;
    let hypotheses = check_assumptions(spec)?;
    let (lemma26, lemma26_error) = match verify_lemma26(spec) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let intersection = sample_surface(spec, Surface::Intersection).points;
    let sign_values = intersection
        .iter()
        .map(|x| spec.phi_plus.grad(x).dot(&(spec.metric.at(x) * spec.phi_minus.grad(x))))
        .collect();
    let mut checks: Vec<Verdict> = hypotheses
        .checks
        .iter()
        .chain(&hypotheses.derived)
        .map(|c| Verdict::gt(&c.name, c.margin, 0.0))
        .collect();
    checks.push(Verdict::holds("lemma26", lemma26.as_ref().is_some_and(|r| r.all_pass())));
    if let (Some(k), Some(c)) = (setup.known("sign"), hypotheses.check("sign")) {
        let dev = (c.min_value - k.value).abs().max((c.max_value - k.value).abs());
        checks.push(Verdict::le("sign_constant", dev, k.tol));
    }
    Ok(CheckStage {
        failed: hypotheses.failed_hypotheses(),
        designated_failure: designated_failure(&setup.name),
        hypotheses,
        lemma26,
        lemma26_error,
        checks,
        intersection,
        sign_values,
    })
}

impl CheckStage {
    pub fn passed(&self) -> bool {
        all_pass(&self.checks)
    }

    fn tables(&self) -> Vec<Table> {
        let n = self.intersection.first().map_or(0, |x| x.len());
        let mut h = indexed("x", n);
        h.push("sign".into());
        let rows = self
            .intersection
            .iter()
            .zip(&self.sign_values)
            .map(|(x, s)| {
                let mut r = x.as_slice().to_vec();
                r.push(*s);
                r
            })
            .collect();
        vec![Table { file: "check_intersection.csv".into(), header: h, rows }]
    }
}

// ---- certify ----

#[derive(Debug, Clone, Serialize)]
pub struct CertifyStage {
    pub certificate: Certificate,
    pub checks: Vec<Verdict>,
}

pub fn run_certify(setup: &Setup, x0: &Point, lambda: Option<f64>, n: usize) -> ucp_core::Result<CertifyStage> {
    let certificate = certify(&setup.spec, x0, lambda, n, EPS_C)?;
    let mut checks = vec![Verdict::holds("certified", certificate.is_certified())];
    let mut compare = |name: &str, v: Option<f64>| {
        if let (Some(k), Some(v)) = (setup.known(name), v) {
            checks.push(Verdict::near(name, v, k.value, k.tol));
        }
    };
    compare("m0", certificate.m0);
    compare("lambda0", certificate.lambda0);
    if certificate.lambda_used == Some(2.0) {
        compare("margin_lambda2", certificate.worst_margin);
    }
    Ok(CertifyStage { certificate, checks })
}

impl CertifyStage {
    pub fn passed(&self) -> bool {
        all_pass(&self.checks)
    }

    fn tables(&self) -> Vec<Table> {
        let (header, rows) = self.certificate.sample_table();
        vec![Table { file: "certify_samples.csv".into(), header, rows }]
    }
}

// ---- rays ----

#[derive(Debug, Clone, Serialize)]
pub struct RayRow {
    pub xi: Vec<f64>,
    /// Contact with `{ψ₁ − λψ₀² = 0}`.
    pub psi: ContactReport,
    /// Contact with `{ψ₁ = 0}`.
    pub control: ContactReport,
    pub p_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RaysStage {
    pub lambda: f64,
    pub x0: Vec<f64>,
    pub rows: Vec<RayRow>,
    pub checks: Vec<Verdict>,
    #[serde(skip)]
    trajectory: Option<(Vec<String>, Vec<Vec<f64>>)>,
}

/// Traces the null ray through every constraint sample of `cert`.
pub fn run_rays(setup: &Setup, cert: &Certificate) -> ucp_core::Result<RaysStage> {
    let lambda = cert
        .lambda_used
        .ok_or_else(|| Error::Hypothesis("the certificate has no margin samples".into()))?;
    let q = &setup.spec.metric;
    let (psi0, psi1) = build_psi(&setup.spec);
    let psi = psi1.minus_scaled_square(lambda, &psi0);
    let x0 = DVector::from_column_slice(&cert.x0);
    let mut rows = Vec::with_capacity(cert.samples.len());
    let mut trajectory = None;
    for s in &cert.samples {
        let start = PhasePoint::new(x0.clone(), DVector::from_column_slice(&s.xi));
        let (traj, contact) = contact_at(q, &psi, &start)?;
        let (_, control) = contact_at(q, &psi1, &start)?;
        if trajectory.is_none() {
            trajectory = Some(traj.table());
        }
        rows.push(RayRow { xi: s.xi.clone(), psi: contact, control, p_drift: traj.p_drift() });
    }
    let count = |f: &dyn Fn(&RayRow) -> bool| rows.iter().filter(|r| !f(r)).count() as f64;
    let checks = vec![
        Verdict::gt("n_rays", rows.len() as f64, 0.0),
        Verdict::le("not_tangent", count(&|r| r.psi.tangency), 0.0),
        Verdict::le("not_below", count(&|r| r.psi.side == Side::Below), 0.0),
        Verdict::le("control_not_above", count(&|r| r.control.side == Side::Above), 0.0),
        Verdict::le(
            "max_rel_error",
            rows.iter().map(|r| r.psi.rel_error.max(r.control.rel_error)).fold(0.0, f64::max),
            RAY_REL_TOL,
        ),
    ];
    Ok(RaysStage { lambda, x0: cert.x0.clone(), rows, checks, trajectory })
}

impl RaysStage {
    pub fn passed(&self) -> bool {
        all_pass(&self.checks)
    }

    fn tables(&self) -> Vec<Table> {
        let n = self.x0.len();
        let mut h = indexed("xi", n);
        h.extend(header(&["linear_coeff", "fitted_c2", "predicted_c2", "control_c2", "control_predicted_c2", "p_drift"]));
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut v = r.xi.clone();
                v.extend([
                    r.psi.linear_coeff,
                    r.psi.fitted_c2,
                    r.psi.predicted_c2,
                    r.control.fitted_c2,
                    r.control.predicted_c2,
                    r.p_drift,
                ]);
                v
            })
            .collect();
        let mut out = vec![Table { file: "rays.csv".into(), header: h, rows }];
        if let Some((header, rows)) = &self.trajectory {
            out.push(Table { file: "rays_trajectory.csv".into(), header: header.clone(), rows: rows.clone() });
        }
        out
    }
}

// ---- corner ----

#[derive(Debug, Clone, Serialize)]
pub struct CornerStage {
    pub grid: usize,
    pub h: f64,
    /// `⟨Qdφ_a, dφ_b⟩` at the base point, the principal part in the
    /// coordinates `(φ₊, φ₋)`.
    pub b_matrix: Vec<Vec<f64>>,
    pub lemma21: Vec<Lemma21Report>,
    pub layer: LayerReport,
    pub lemma23: Vec<Lemma23Report>,
    pub lemma23_error: Option<String>,
    pub mollifier: Vec<CommutatorReport>,
    pub checks: Vec<Verdict>,
}

/// Gram matrix of `dφ₊, dφ₋` under `Q(x₀)`.
pub fn corner_b_matrix(spec: &GeometrySpec, x0: &Point) -> [[f64; 2]; 2] {
    let q = spec.metric.at(x0);
    let g = [spec.phi_plus.grad(x0), spec.phi_minus.grad(x0)];
    let f = |a: usize, b: usize| g[a].dot(&(&q * &g[b]));
    [[f(0, 0), f(0, 1)], [f(1, 0), f(1, 1)]]
}

pub fn run_corner(setup: &Setup, x0: &Point, n: usize, seed: u64) -> ucp_core::Result<CornerStage> {
    let grid = Grid::cube(2, n);
    let tests = bump_corpus(2, CORNER_TESTS, seed);
    let fields: Vec<CornerField> = u_corpus(2).into_iter().map(|(name, u)| CornerField::new(name, u, &grid)).collect();
    let lemma21 = fields
        .iter()
        .map(|u| verify_lemma21(u, &tests, &grid, false))
        .collect::<ucp_core::Result<Vec<_>>>()?;
    let y1y2 = fields.iter().find(|u| u.name == "y1y2").expect("corpus contains y1y2");
    let layer = detect_layer(y1y2, None, &tests, &grid, false)?;

    let b = corner_b_matrix(&setup.spec, x0);
    let bfield = BMatrixField::constant(&[&b[0], &b[1]]);
    let (lemma23, lemma23_error) = match fields
        .iter()
        .map(|u| verify_lemma23(u, &bfield, None, LEMMA23_POINTS, seed, &grid))
        .collect::<ucp_core::Result<Vec<_>>>()
    {
        Ok(r) => (r, None),
        Err(Error::Hypothesis(msg)) => (Vec::new(), Some(msg)),
        Err(e) => return Err(e),
    };

    let mut cases = kink_corpus(&grid);
    cases.push(smooth_case(&grid));
    let constant = constant_case(&grid);
    let mollifier = cases
        .iter()
        .chain(std::iter::once(&constant))
        .map(|c| commutator_report(c, &DEFAULT_EPS))
        .collect::<ucp_core::Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    for r in &lemma21 {
        for f in &r.families {
            checks.push(Verdict::le(&format!("lemma21/{}/{}", r.u, f.family), f.max_residual, f.bound));
        }
    }
    checks.push(Verdict::gt("layer/magnitude", layer.layer_magnitude, 0.0));
    checks.push(Verdict::le("layer/rel_mismatch", layer.rel_mismatch, LAYER_TOL));
    checks.push(Verdict::holds("lemma23/face_diagonal", lemma23_error.is_none()));
    for r in &lemma23 {
        checks.push(Verdict::le(&format!("lemma23/{}", r.u), r.n_violations as f64, 0.0));
    }
    for r in mollifier.iter().filter(|r| r.name.starts_with("kink")) {
        checks.push(Verdict::holds(&format!("mollifier/{}/monotone", r.name), r.monotone));
        checks.push(Verdict::le(&format!("mollifier/{}/decay", r.name), r.decay, COMMUTATOR_DECAY));
    }
    let c = mollifier.last().expect("constant case is last");
    checks.push(Verdict::le(
        &format!("mollifier/{}/max", c.name),
        c.norms.iter().cloned().fold(0.0, f64::max),
        CONSTANT_COMMUTATOR_TOL,
    ));
    Ok(CornerStage {
        grid: n,
        h: grid.h(0),
        b_matrix: b.iter().map(|r| r.to_vec()).collect(),
        lemma21,
        layer,
        lemma23,
        lemma23_error,
        mollifier,
        checks,
    })
}

fn family_code(f: &str) -> f64 {
    f.parse().expect("identity families are numeric codes")
}

impl CornerStage {
    pub fn passed(&self) -> bool {
        all_pass(&self.checks)
    }

    fn tables(&self) -> Vec<Table> {
        let rows = self
            .lemma21
            .iter()
            .enumerate()
            .flat_map(|(u, r)| {
                r.rows.iter().map(move |p| {
                    let mut v = vec![u as f64, family_code(&p.family)];
                    v.extend(p.alpha.iter().map(|&a| a as f64));
                    v.extend([p.test as f64, p.weak, p.strong, p.residual]);
                    v
                })
            })
            .collect();
        let layer = self
            .layer
            .rows
            .iter()
            .map(|r| vec![r.test as f64, r.delta, r.surface])
            .collect();
        let moll = self
            .mollifier
            .iter()
            .enumerate()
            .flat_map(|(c, r)| r.eps.iter().zip(&r.norms).map(move |(&e, &v)| vec![c as f64, e, v]))
            .collect();
        vec![
            Table {
                file: "corner_residuals.csv".into(),
                header: header(&["u", "family", "alpha0", "alpha1", "test", "weak", "strong", "residual"]),
                rows,
            },
            Table { file: "corner_layer.csv".into(), header: header(&["test", "delta", "surface"]), rows: layer },
            Table { file: "mollifier.csv".into(), header: header(&["case", "eps", "norm"]), rows: moll },
        ]
    }
}

// ---- carleman ----

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanStage {
    /// Convexification `λ` of `ψ = ψ₁ − λψ₀²`.
    pub lambda_psi: f64,
    pub mu: f64,
    pub grid: usize,
    /// The lab runs on the `(x0, x1)` plane through this point.
    pub x0: Vec<f64>,
    pub r_star: f64,
    pub sweep: CarlemanReport,
    pub checks: Vec<Verdict>,
}

/// `Q` and `ψ` restricted to the `(x0, x1)` plane through `x0`.
pub fn carleman_slice(spec: &GeometrySpec, x0: &Point, lambda: f64) -> (MetricField, ScalarField) {
    let (psi0, psi1) = build_psi(spec);
    let psi = psi1.minus_scaled_square(lambda, &psi0);
    if spec.dim() == 2 {
        return (spec.metric.clone(), psi);
    }
    let base = x0.clone();
    let embed = move |p: &Point| {
        let mut x = base.clone();
        x[0] = p[0];
        x[1] = p[1];
        x
    };
    let e1 = embed.clone();
    let q = spec.metric.clone();
    let metric = MetricField::from_fn(2, move |p| q.at(&e1(p)).view((0, 0), (2, 2)).into_owned());
    let field = ScalarField::from_fn(2, move |p| psi.value(&embed(p)));
    (metric, field)
}

pub fn run_carleman(
    setup: &Setup,
    x0: &Point,
    lambda: f64,
    mu: f64,
    n: usize,
    seed: u64,
) -> ucp_core::Result<CarlemanStage> {
    let (q, psi) = carleman_slice(&setup.spec, x0, lambda);
    let b = &setup.spec.bbox;
    let grid = Grid::new(b.lo[..2].to_vec(), b.hi[..2].to_vec(), vec![n, n]);
    let weight = build_weight(&psi, mu);
    let corpus = bump_superpositions(&grid, CARLEMAN_TESTS, seed);
    let sweep = lambda_sweep(&q, &LowerOrder::none(), &weight, &corpus, &DEFAULT_LAMBDAS)?;
    let r_star = sweep.r_star(CARLEMAN_LAMBDA_FROM);
    let checks = vec![
        Verdict::gt("r_star", r_star, 0.0),
        Verdict::near("slope_rhs1", sweep.slope_rhs1, 0.5, SLOPE_TOL),
        Verdict::near("slope_rhs2", sweep.slope_rhs2, 1.5, SLOPE_TOL),
    ];
    Ok(CarlemanStage { lambda_psi: lambda, mu, grid: n, x0: x0.as_slice().to_vec(), r_star, sweep, checks })
}

impl CarlemanStage {
    pub fn passed(&self) -> bool {
        all_pass(&self.checks)
    }

    fn tables(&self) -> Vec<Table> {
        let rows = self
            .sweep
            .rows
            .iter()
            .map(|r| {
                let s = &r.sample;
                vec![r.test as f64, s.lambda, s.lhs, s.rhs1, s.rhs2, s.ratio, s.grad_norm, s.w_norm]
            })
            .collect();
        let rmin = self.sweep.lambdas.iter().zip(&self.sweep.r_min).map(|(&l, &r)| vec![l, r]).collect();
        vec![
            Table {
                file: "carleman.csv".into(),
                header: header(&["test", "lambda", "lhs", "rhs1", "rhs2", "ratio", "grad_norm", "w_norm"]),
                rows,
            },
            Table { file: "carleman_rmin.csv".into(), header: header(&["lambda", "r_min"]), rows: rmin },
        ]
    }
}

// ---- pipeline ----

/// Results of `all`; stages after the first failing one are not run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Pipeline {
    pub check: Option<CheckStage>,
    pub certify: Option<CertifyStage>,
    pub rays: Option<RaysStage>,
    pub corner: Option<CornerStage>,
    pub carleman: Option<CarlemanStage>,
    pub stopped_at: Option<&'static str>,
}

/// Output of one command. Built once per run, so the variant size gap is
/// not worth boxing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum StageOutput {
    Check(CheckStage),
    Certify(CertifyStage),
    Rays(RaysStage),
    Corner(CornerStage),
    Carleman(CarlemanStage),
    All(Pipeline),
}

impl StageOutput {
    pub fn passed(&self) -> bool {
        match self {
            StageOutput::Check(s) => s.passed(),
            StageOutput::Certify(s) => s.passed(),
            StageOutput::Rays(s) => s.passed(),
            StageOutput::Corner(s) => s.passed(),
            StageOutput::Carleman(s) => s.passed(),
            StageOutput::All(p) => {
                p.stopped_at.is_none()
                    && [
                        p.check.as_ref().map(CheckStage::passed),
                        p.certify.as_ref().map(CertifyStage::passed),
                        p.rays.as_ref().map(RaysStage::passed),
                        p.corner.as_ref().map(CornerStage::passed),
                        p.carleman.as_ref().map(CarlemanStage::passed),
                    ]
                    .iter()
                    .all(|s| *s == Some(true))
            }
        }
    }

    pub fn tables(&self) -> Vec<Table> {
        match self {
            StageOutput::Check(s) => s.tables(),
            StageOutput::Certify(s) => s.tables(),
            StageOutput::Rays(s) => s.tables(),
            StageOutput::Corner(s) => s.tables(),
            StageOutput::Carleman(s) => s.tables(),
            StageOutput::All(p) => {
                let mut t = Vec::new();
                t.extend(p.check.iter().flat_map(CheckStage::tables));
                t.extend(p.certify.iter().flat_map(CertifyStage::tables));
                t.extend(p.rays.iter().flat_map(RaysStage::tables));
                t.extend(p.corner.iter().flat_map(CornerStage::tables));
                t.extend(p.carleman.iter().flat_map(CarlemanStage::tables));
                t
            }
        }
    }
}

fn samples(cfg: &RunConfig) -> usize {
    cfg.samples.unwrap_or(DEFAULT_SAMPLES)
}

fn certificate_for(setup: &Setup, cfg: &RunConfig) -> ucp_core::Result<CertifyStage> {
    run_certify(setup, &setup.base_point()?, cfg.lambda, samples(cfg))
}

fn run_all(setup: &Setup, cfg: &RunConfig) -> ucp_core::Result<Pipeline> {
    let mut p = Pipeline::default();
    let check = run_check(setup)?;
    let ok = check.passed();
    let x0 = match &setup.x0 {
        Some(x) => Some(x.clone()),
        None => check.intersection.first().cloned(),
    };
    p.check = Some(check);
    let x0 = match (ok, x0) {
        (true, Some(x0)) => x0,
        _ => {
            p.stopped_at = Some("check");
            return Ok(p);
        }
    };
    let cert = run_certify(setup, &x0, cfg.lambda, samples(cfg))?;
    let ok = cert.passed();
    p.certify = Some(cert);
    if !ok {
        p.stopped_at = Some("certify");
        return Ok(p);
    }
    let cert = &p.certify.as_ref().expect("set above").certificate;
    let x0 = DVector::from_column_slice(&cert.x0);
    let lambda = cert.lambda_used.expect("certified certificates carry lambda");
    let rays = run_rays(setup, cert)?;
    let ok = rays.passed();
    p.rays = Some(rays);
    if !ok {
        p.stopped_at = Some("rays");
        return Ok(p);
    }
    let corner = run_corner(setup, &x0, cfg.grid.unwrap_or(DEFAULT_CORNER_GRID), cfg.seed)?;
    let ok = corner.passed();
    p.corner = Some(corner);
    if !ok {
        p.stopped_at = Some("corner");
        return Ok(p);
    }
    let carleman = run_carleman(setup, &x0, lambda, cfg.mu, cfg.grid.unwrap_or(DEFAULT_CARLEMAN_GRID), cfg.seed)?;
    p.carleman = Some(carleman);
    Ok(p)
}

/// Runs the configured command without writing anything.
pub fn execute(setup: &Setup, cfg: &RunConfig) -> ucp_core::Result<StageOutput> {
    Ok(match cfg.command {
        Command::Check => StageOutput::Check(run_check(setup)?),
        Command::Certify => StageOutput::Certify(certificate_for(setup, cfg)?),
        Command::Rays => StageOutput::Rays(run_rays(setup, &certificate_for(setup, cfg)?.certificate)?),
        Command::Corner => StageOutput::Corner(run_corner(
            setup,
            &setup.base_point()?,
            cfg.grid.unwrap_or(DEFAULT_CORNER_GRID),
            cfg.seed,
        )?),
        Command::Carleman => {
            let x0 = setup.base_point()?;
            let lambda = match cfg.lambda {
                Some(l) => l,
                None => certificate_for(setup, cfg)?
                    .certificate
                    .lambda_used
                    .ok_or_else(|| Error::Hypothesis("no convexification lambda could be certified".into()))?,
            };
            StageOutput::Carleman(run_carleman(
                setup,
                &x0,
                lambda,
                cfg.mu,
                cfg.grid.unwrap_or(DEFAULT_CARLEMAN_GRID),
                cfg.seed,
            )?)
        }
        Command::All => StageOutput::All(run_all(setup, cfg)?),
    })
}

/// Report body: the resolved configuration and the stage output, or the
/// error that stopped the run.
#[derive(Debug, Clone, Serialize)]
pub struct Body {
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<StageOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Errors that end a run with status 2.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(ucp_core::Error),
}

/// Completed run: `passed` selects exit status 0 or 1.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub report: Report<Body>,
    pub files: Vec<PathBuf>,
}

/// Computational errors are reported as check failures; malformed input,
/// too coarse a grid and I/O failures are usage errors.
fn is_usage_error(e: &Error) -> bool {
    matches!(e, Error::Parse(_) | Error::Resolution { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_))
}

/// Runs `cfg`, writing `report.json` and the CSV tables into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let (result, error) = match execute(&setup, cfg) {
        Ok(r) => (Some(r), None),
        Err(e) if is_usage_error(&e) => return Err(RunError::Core(e)),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = result.as_ref().is_some_and(StageOutput::passed);
    let tables = result.as_ref().map(StageOutput::tables).unwrap_or_default();
    let mut files = Vec::new();
    for t in &tables {
        let path = cfg.out.join(&t.file);
        write_csv(&path, &t.header, &t.rows).map_err(RunError::Core)?;
        files.push(path);
    }
    let report = Report::new(
        cfg.command.name(),
        &setup.name,
        cfg.seed,
        passed,
        Body { config: cfg.clone(), result, error },
    );
    let path = cfg.out.join("report.json");
    write_json(&path, &report).map_err(RunError::Core)?;
    files.push(path);
    Ok(Outcome { passed, report, files })
}
