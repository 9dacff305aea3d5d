//! Standing assumptions on the pair of hypersurfaces `Σ± = {φ± = 0}`,
//! checked pointwise on sampled surface points.
//!
//! Checked assumptions: nondegenerate differentials, transversality of the
//! intersection, both surfaces characteristic, and positivity of
//! `⟨Q dφ₊, dφ₋⟩` on the intersection. The derived sign facts for
//! `ψ₁ = ½(φ₊+φ₋)`, `ψ₀ = ½(φ₋−φ₊)` and the inclusion of the corner region
//! in `{ψ₁ > λψ₀²}` are verified separately.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{BoxRegion, MetricField, Point, ScalarField};
use crate::sphere::gaussian;

pub const TOL_ZERO: f64 = 1e-10;
pub const TOL_CHAR: f64 = 1e-8;
pub const TOL_POS: f64 = 1e-6;
pub const TOL_ID: f64 = 1e-8;

/// Newton steps allowed when projecting a seed onto a surface.
pub const MAX_PROJECTION_STEPS: usize = 20;

/// Largest scan grid (node count) used by [`sample_surface`].
const MAX_SCAN_NODES: usize = 400_000;

#[derive(Debug, Clone)]
pub struct GeometrySpec {
    pub metric: MetricField,
    pub phi_plus: ScalarField,
    pub phi_minus: ScalarField,
    pub bbox: BoxRegion,
    pub n_surface_samples: usize,
    pub tol_zero: f64,
    /// Threshold on the unit-normalized characteristic residual.
    pub tol_char: f64,
    /// Strict-positivity threshold of the manifold, transversality and
    /// sign checks.
    pub tol_pos: f64,
}

impl GeometrySpec {
    pub fn new(
        metric: MetricField,
        phi_plus: ScalarField,
        phi_minus: ScalarField,
        bbox: BoxRegion,
    ) -> Self {
        let n = metric.dim();
        assert_eq!(phi_plus.dim(), n, "phi_plus dimension mismatch");
        assert_eq!(phi_minus.dim(), n, "phi_minus dimension mismatch");
        assert_eq!(bbox.dim(), n, "box dimension mismatch");
        GeometrySpec {
            metric,
            phi_plus,
            phi_minus,
            bbox,
            n_surface_samples: 200,
            tol_zero: TOL_ZERO,
            tol_char: TOL_CHAR,
            tol_pos: TOL_POS,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        assert!(n >= 1, "n_surface_samples must be positive");
        self.n_surface_samples = n;
        self
    }

    pub fn with_tol_zero(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "tol_zero must be positive");
        self.tol_zero = tol;
        self
    }

    pub fn with_tol_char(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "tol_char must be positive");
        self.tol_char = tol;
        self
    }

    pub fn with_tol_pos(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "tol_pos must be positive");
        self.tol_pos = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Plus,
    Minus,
    Intersection,
}

#[derive(Debug, Clone, Default)]
pub struct SurfaceSamples {
    pub points: Vec<Point>,
    /// Seeds whose Newton projection failed or left the box.
    pub discarded: usize,
    /// `n_surface_samples − points.len()` when positive.
    pub shortfall: usize,
}

fn scan_resolutions(dim: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut r = 4usize;
    while (r + 1).pow(dim as u32) <= MAX_SCAN_NODES {
        out.push(r);
        r *= 2;
    }
    if out.is_empty() {
        out.push(2);
    }
    out
}

/// Linear-interpolation seeds on grid edges where `f` changes sign.
fn sign_change_seeds(f: &ScalarField, bbox: &BoxRegion, res: usize) -> Vec<Point> {
    let n = bbox.dim();
    let per = res + 1;
    let total = per.pow(n as u32);
    let node = |mut k: usize| -> Point {
        let mut x = Point::zeros(n);
        for a in 0..n {
            let i = k % per;
            k /= per;
            x[a] = bbox.lo[a] + (bbox.hi[a] - bbox.lo[a]) * i as f64 / res as f64;
        }
        x
    };
    let values: Vec<f64> = (0..total).into_par_iter().map(|k| f.value(&node(k))).collect();
    let mut seeds = Vec::new();
    for k in 0..total {
        let v0 = values[k];
        if v0 == 0.0 {
            seeds.push(node(k));
            continue;
        }
        let mut stride = 1;
        let mut rem = k;
        for _ in 0..n {
            let i = rem % per;
            rem /= per;
            if i + 1 < per {
                let v1 = values[k + stride];
                if v0 * v1 < 0.0 {
                    let s = v0 / (v0 - v1);
                    seeds.push(node(k) * (1.0 - s) + node(k + stride) * s);
                }
            }
            stride *= per;
        }
    }
    seeds
}

fn newton_single(f: &ScalarField, mut x: Point, tol: f64) -> Option<Point> {
    for _ in 0..MAX_PROJECTION_STEPS {
        let v = f.value(&x);
        if v.abs() <= tol {
            return Some(x);
        }
        let g = f.grad(&x);
        let g2 = g.norm_squared();
        if g2 < 1e-300 {
            return None;
        }
        x -= g * (v / g2);
    }
    (f.value(&x).abs() <= tol).then_some(x)
}

fn newton_joint(a: &ScalarField, b: &ScalarField, mut x: Point, tol: f64) -> Option<Point> {
    let n = x.len();
    for _ in 0..=MAX_PROJECTION_STEPS {
        let fa = a.value(&x);
        let fb = b.value(&x);
        if fa.abs() <= tol && fb.abs() <= tol {
            return Some(x);
        }
        let mut j = DMatrix::zeros(2, n);
        j.set_row(0, &a.grad(&x).transpose());
        j.set_row(1, &b.grad(&x).transpose());
        let pinv = j.pseudo_inverse(1e-12).ok()?;
        x -= pinv * DVector::from_vec(vec![fa, fb]);
    }
    None
}

fn quantize(x: &Point, scale: f64) -> Vec<i64> {
    x.iter().map(|v| (v / scale).round() as i64).collect()
}

/// Samples `Σ₊`, `Σ₋` or `Σ₊∩Σ₋` inside the box.
///
/// Scan grids of increasing resolution are processed until enough points
/// are found; points from coarser passes are kept, so a larger request
/// always returns a superset of a smaller one.
pub fn sample_surface(spec: &GeometrySpec, which: Surface) -> SurfaceSamples {
    let (primary, secondary) = match which {
        Surface::Plus => (&spec.phi_plus, None),
        Surface::Minus => (&spec.phi_minus, None),
        Surface::Intersection => (&spec.phi_plus, Some(&spec.phi_minus)),
    };
    let merge_scale = 1e-9 * spec.bbox.diameter();
    let mut seen = BTreeSet::new();
    let mut out = SurfaceSamples::default();
    for res in scan_resolutions(spec.dim()) {
        let seeds = sign_change_seeds(primary, &spec.bbox, res);
        let projected: Vec<Option<Point>> = seeds
            .into_par_iter()
            .map(|s| {
                let p = match secondary {
                    None => newton_single(primary, s, spec.tol_zero),
                    Some(sec) => newton_joint(primary, sec, s, spec.tol_zero),
                };
                p.filter(|p| spec.bbox.contains(p))
            })
            .collect();
        for p in projected {
            match p {
                Some(p) => {
                    if seen.insert(quantize(&p, merge_scale)) {
                        out.points.push(p);
                    }
                }
                None => out.discarded += 1,
            }
        }
        if out.points.len() >= spec.n_surface_samples {
            break;
        }
    }
    out.shortfall = spec.n_surface_samples.saturating_sub(out.points.len());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// Outcome of one pointwise check over a sample set.
///
/// `margin` is the signed slack at the worst point (positive means the
/// check holds there); `witness` is that worst point.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub margin: f64,
    pub witness: Option<Vec<f64>>,
    pub n_points: usize,
    pub min_value: f64,
    pub max_value: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Evaluates `value` at every point; `slack(value)` must be positive.
    fn evaluate(
        name: &str,
        points: &[Point],
        value: impl Fn(&Point) -> f64 + Sync,
        slack: impl Fn(f64) -> f64,
    ) -> Self {
        let values: Vec<f64> = points.par_iter().map(&value).collect();
        let mut worst: Option<(usize, f64)> = None;
        for (i, &v) in values.iter().enumerate() {
            let s = slack(v);
            if worst.is_none_or(|(_, w)| s < w) {
                worst = Some((i, s));
            }
        }
        let (min_value, max_value) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (status, margin, witness) = match worst {
            Some((i, s)) => (
                if s > 0.0 { Status::Pass } else { Status::Fail },
                s,
                Some(points[i].as_slice().to_vec()),
            ),
            None => (Status::Pass, f64::INFINITY, None),
        };
        CheckResult {
            name: name.to_string(),
            status,
            margin,
            witness,
            n_points: points.len(),
            min_value,
            max_value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    /// `manifold_plus`, `manifold_minus`, `transverse`, `characteristic_plus`,
    /// `characteristic_minus`, `sign`.
    pub checks: Vec<CheckResult>,
    /// Sign facts for `ψ₀`, `ψ₁` implied by the assumptions.
    pub derived: Vec<CheckResult>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_intersection: usize,
    pub discarded: usize,
    pub shortfall: usize,
}

impl HypothesisReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().chain(&self.derived).find(|c| c.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().chain(&self.derived).all(CheckResult::passed)
    }

    /// Names of the failed assumptions, grouped per hypothesis
    /// (`manifold`, `transverse`, `bothcar`, `sign`).
    pub fn failed_hypotheses(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (group, names) in [
            ("manifold", &["manifold_plus", "manifold_minus"][..]),
            ("transverse", &["transverse"][..]),
            ("bothcar", &["characteristic_plus", "characteristic_minus"][..]),
            ("sign", &["sign"][..]),
        ] {
            if names.iter().any(|n| self.check(n).is_some_and(|c| !c.passed())) {
                out.push(group);
            }
        }
        out
    }
}

fn unit_char_residual(q: &MetricField, f: &ScalarField, x: &Point) -> f64 {
    let g = f.grad(x);
    let n = g.norm();
    if n == 0.0 {
        return f64::INFINITY;
    }
    let u = g / n;
    u.dot(&(q.at(x) * &u)).abs()
}

fn bilinear(q: &MetricField, a: &DVector<f64>, x: &Point, b: &DVector<f64>) -> f64 {
    a.dot(&(q.at(x) * b))
}

/// Evaluates every assumption at every sampled point.
pub fn check_assumptions(spec: &GeometrySpec) -> Result<HypothesisReport> {
    let plus = sample_surface(spec, Surface::Plus);
    let minus = sample_surface(spec, Surface::Minus);
    let inter = sample_surface(spec, Surface::Intersection);
    for (name, s) in [("plus", &plus), ("minus", &minus), ("intersection", &inter)] {
        if s.points.is_empty() {
            return Err(Error::InsufficientSamples(format!("no {name} surface points in the box")));
        }
    }
    let q = &spec.metric;
    let (fp, fm) = (&spec.phi_plus, &spec.phi_minus);
    let (tol_char, tol_pos) = (spec.tol_char, spec.tol_pos);
    let checks = vec![
        CheckResult::evaluate("manifold_plus", &plus.points, |x| fp.grad(x).norm(), |v| v - tol_pos),
        CheckResult::evaluate("manifold_minus", &minus.points, |x| fm.grad(x).norm(), |v| v - tol_pos),
        CheckResult::evaluate(
            "transverse",
            &inter.points,
            |x| {
                let mut j = DMatrix::zeros(2, x.len());
                j.set_row(0, &fp.grad(x).transpose());
                j.set_row(1, &fm.grad(x).transpose());
                j.singular_values().min()
            },
            |v| v - tol_pos,
        ),
        CheckResult::evaluate(
            "characteristic_plus",
            &plus.points,
            |x| unit_char_residual(q, fp, x),
            |v| tol_char - v,
        ),
        CheckResult::evaluate(
            "characteristic_minus",
            &minus.points,
            |x| unit_char_residual(q, fm, x),
            |v| tol_char - v,
        ),
        CheckResult::evaluate(
            "sign",
            &inter.points,
            |x| bilinear(q, &fp.grad(x), x, &fm.grad(x)),
            |v| v - tol_pos,
        ),
    ];
    let derived = lemma26_checks(spec, &inter.points);
    Ok(HypothesisReport {
        checks,
        derived,
        n_plus: plus.points.len(),
        n_minus: minus.points.len(),
        n_intersection: inter.points.len(),
        discarded: plus.discarded + minus.discarded + inter.discarded,
        shortfall: plus.shortfall.max(minus.shortfall).max(inter.shortfall),
    })
}

/// `(ψ₀, ψ₁) = (½(φ₋−φ₊), ½(φ₊+φ₋))`.
pub fn build_psi(spec: &GeometrySpec) -> (ScalarField, ScalarField) {
    let psi0 = ScalarField::lin_comb(&[(-0.5, &spec.phi_plus), (0.5, &spec.phi_minus)]);
    let psi1 = ScalarField::lin_comb(&[(0.5, &spec.phi_plus), (0.5, &spec.phi_minus)]);
    (psi0, psi1)
}

fn lemma26_checks(spec: &GeometrySpec, points: &[Point]) -> Vec<CheckResult> {
    let (psi0, psi1) = build_psi(spec);
    let q = &spec.metric;
    let form = |a: &ScalarField, b: &ScalarField, x: &Point| bilinear(q, &a.grad(x), x, &b.grad(x));
    vec![
        CheckResult::evaluate("psi1_spacelike", points, |x| form(&psi1, &psi1, x), |v| v - TOL_POS),
        CheckResult::evaluate("psi0_timelike", points, |x| form(&psi0, &psi0, x), |v| -v - TOL_POS),
        CheckResult::evaluate(
            "norm_sum_zero",
            points,
            |x| form(&psi1, &psi1, x) + form(&psi0, &psi0, x),
            |v| TOL_ID - v.abs(),
        ),
        CheckResult::evaluate("cross_term_zero", points, |x| form(&psi1, &psi0, x), |v| TOL_ID - v.abs()),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma26Report {
    pub checks: Vec<CheckResult>,
    pub n_points: usize,
}

impl Lemma26Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `⟨Qdψ₁,dψ₁⟩ > 0 > ⟨Qdψ₀,dψ₀⟩`, their sum and `⟨Qdψ₁,dψ₀⟩` vanishing,
/// at every intersection sample.
pub fn verify_lemma26(spec: &GeometrySpec) -> Result<Lemma26Report> {
    let inter = sample_surface(spec, Surface::Intersection);
    if inter.points.is_empty() {
        return Err(Error::InsufficientSamples("no intersection points in the box".into()));
    }
    Ok(Lemma26Report {
        checks: lemma26_checks(spec, &inter.points),
        n_points: inter.points.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InclusionReport {
    pub holds: bool,
    /// `min(ψ₁ − λψ₀²)` over the sampled corner points.
    pub worst_margin: f64,
    pub witness: Vec<f64>,
    pub n_samples: usize,
    pub lambda: f64,
    pub radius: f64,
    /// The sampled neighborhood reaches `|ψ₀| ≥ 1/λ`, where the inclusion
    /// is no longer guaranteed.
    pub radius_exceeds_inverse_lambda: bool,
}

/// Checks `ψ₁ > λψ₀²` at points of `{φ₊ > 0, φ₋ > 0}` within `radius` of an
/// intersection sample.
pub fn verify_inclusion(
    spec: &GeometrySpec,
    lambda: f64,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<InclusionReport> {
    assert!(lambda > 0.0, "lambda must be positive");
    assert!(radius > 0.0, "radius must be positive");
    let centers = sample_surface(spec, Surface::Intersection).points;
    if centers.is_empty() {
        return Err(Error::InsufficientSamples("no intersection points in the box".into()));
    }
    let (psi0, psi1) = build_psi(spec);
    let n = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut witness = Vec::new();
    let mut count = 0;
    let mut max_abs_psi0: f64 = 0.0;
    for attempt in 0..n_samples.saturating_mul(50) {
        if count == n_samples {
            break;
        }
        let c = &centers[attempt % centers.len()];
        let dir = DVector::from_fn(n, |_, _| gaussian(&mut rng)).normalize();
        let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
        let x = c + dir * r;
        if !spec.bbox.contains(&x) || spec.phi_plus.value(&x) <= 0.0 || spec.phi_minus.value(&x) <= 0.0 {
            continue;
        }
        count += 1;
        let p0 = psi0.value(&x);
        max_abs_psi0 = max_abs_psi0.max(p0.abs());
        let m = psi1.value(&x) - lambda * p0 * p0;
        if m < worst {
            worst = m;
            witness = x.as_slice().to_vec();
        }
    }
    if count == 0 {
        return Err(Error::InsufficientSamples("no corner-region points near the intersection".into()));
    }
    Ok(InclusionReport {
        holds: worst > 0.0,
        worst_margin: worst,
        witness,
        n_samples: count,
        lambda,
        radius,
        radius_exceeds_inverse_lambda: radius >= 1.0 / lambda || max_abs_psi0 >= 1.0 / lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn flat_spec(phi_minus: &str) -> GeometrySpec {
        let q = MetricField::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0])));
        GeometrySpec::new(
            q,
            ScalarField::from_expr(3, Expr::parse("norm(y1,y2) - 1 - t").unwrap()),
            ScalarField::from_expr(3, Expr::parse(phi_minus).unwrap()),
            BoxRegion::new(vec![-0.5, 0.5, -0.5], vec![0.5, 1.5, 0.5]),
        )
        .with_samples(100)
    }

    fn model() -> GeometrySpec {
        flat_spec("norm(y1,y2) - 1 + t")
    }

    #[test]
    fn intersection_samples_lie_on_circle() {
        let s = sample_surface(&model(), Surface::Intersection);
        assert!(s.points.len() >= 100);
        for p in &s.points {
            assert!(p[0].abs() <= 1e-10);
            assert!(((p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn plus_samples_satisfy_equation() {
        let s = sample_surface(&model(), Surface::Plus);
        assert!(s.points.len() >= 100);
        for p in &s.points {
            assert!(((p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0 - p[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn disjoint_box_gives_no_samples() {
        let mut spec = model();
        spec.bbox = BoxRegion::new(vec![-0.5, 3.0, -0.5], vec![0.5, 4.0, 0.5]);
        assert!(sample_surface(&spec, Surface::Intersection).points.is_empty());
        assert!(matches!(check_assumptions(&spec), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn model_passes_all() {
        let r = check_assumptions(&model()).unwrap();
        assert!(r.all_pass(), "{r:#?}");
        let sign = r.check("sign").unwrap();
        assert!((sign.min_value - 2.0).abs() < 1e-8 && (sign.max_value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn noncharacteristic_minus_fails_bothcar() {
        let r = check_assumptions(&flat_spec("norm(y1,y2) - 1 - 2*t")).unwrap();
        let c = r.check("characteristic_minus").unwrap();
        assert!(!c.passed());
        assert!(c.witness.is_some());
        assert!(r.check("characteristic_plus").unwrap().passed());
    }

    #[test]
    fn equal_surfaces_fail_transversality() {
        let r = check_assumptions(&flat_spec("norm(y1,y2) - 1 - t")).unwrap();
        assert!(!r.check("transverse").unwrap().passed());
    }

    #[test]
    fn psi_of_model() {
        let (psi0, psi1) = build_psi(&model());
        let x = Point::from_vec(vec![0.3, 0.8, -0.4]);
        assert!((psi0.value(&x) - 0.3).abs() < 1e-15);
        assert!((psi1.value(&x) - ((0.64f64 + 0.16).sqrt() - 1.0)).abs() < 1e-15);
        let (p0, _) = build_psi(&flat_spec("norm(y1,y2) - 1 - t"));
        assert_eq!(p0.value(&x), 0.0);
    }

    #[test]
    fn lemma26_on_model() {
        let r = verify_lemma26(&model()).unwrap();
        assert!(r.all_pass());
        let s1 = r.check("psi1_spacelike").unwrap();
        assert!((s1.min_value - 1.0).abs() < 1e-10);
        let s0 = r.check("psi0_timelike").unwrap();
        assert!((s0.max_value + 1.0).abs() < 1e-10);
    }

    #[test]
    fn inclusion_on_model() {
        let spec = model();
        let r = verify_inclusion(&spec, 2.0, 0.1, 500, 7).unwrap();
        assert!(r.holds && !r.radius_exceeds_inverse_lambda);
        let tiny = verify_inclusion(&spec, 1e-6, 0.4, 500, 7).unwrap();
        assert!(tiny.holds);
    }
}
