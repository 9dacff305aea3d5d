//! Ready-made geometries: the flat model with `φ± = |y| − 1 ∓ t` in `d`
//! space dimensions, a conformal perturbation, the flattening chart and
//! the negative controls.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::certifier::{certify, Certificate, EPS_C};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{BoxRegion, MetricField, Point, ScalarField};
use crate::geometry::{pullback_metric, Chart};
use crate::hypotheses::GeometrySpec;

/// A closed-form value the toolkit must reproduce.
#[derive(Debug, Clone, Serialize)]
pub struct KnownConstant {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    /// Space dimension; the manifold has dimension `d + 1`.
    pub d: usize,
    pub geometry: GeometrySpec,
    /// Base point on `Σ₊∩Σ₋`.
    pub x0: Point,
    pub known_constants: Vec<KnownConstant>,
}

impl ModelSpec {
    pub fn known(&self, name: &str) -> Option<f64> {
        self.known_constants.iter().find(|k| k.name == name).map(|k| k.value)
    }
}

/// Names accepted by [`by_name`].
pub const MODEL_NAMES: [&str; 6] = ["ik2", "ik3", "ik2-conformal", "ctrl-a", "ctrl-b", "ctrl-c"];

pub fn by_name(name: &str) -> Result<ModelSpec> {
    let ctrl = |i: usize| negative_controls().swap_remove(i);
    Ok(match name {
        "ik2" => ik_model(2),
        "ik3" => ik_model(3),
        "ik2-conformal" => ik_conformal(),
        "ctrl-a" => ctrl(0),
        "ctrl-b" => ctrl(1),
        "ctrl-c" => ctrl(2),
        _ => {
            return Err(Error::Parse(format!(
                "unknown model `{name}` (known: {})",
                MODEL_NAMES.join(", ")
            )))
        }
    })
}

fn radius(d: usize) -> Expr {
    Expr::norm_of_vars(1..d + 1)
}

fn flat(d: usize) -> DMatrix<f64> {
    let mut q = DMatrix::identity(d + 1, d + 1);
    q[(0, 0)] = -1.0;
    q
}

/// `t ∈ [−0.5, 0.5]`, `y₁ ∈ [0.5, 1.5]`, other `y_k ∈ [−0.5, 0.5]`.
fn model_box(d: usize) -> BoxRegion {
    let mut lo = vec![-0.5; d + 1];
    let mut hi = vec![0.5; d + 1];
    lo[1] = 0.5;
    hi[1] = 1.5;
    BoxRegion::new(lo, hi)
}

fn base_point(d: usize) -> Point {
    let mut x = DVector::zeros(d + 1);
    x[1] = 1.0;
    x
}

fn phi_pm(d: usize) -> (Expr, Expr) {
    let t = Expr::var(0);
    (radius(d) - 1.0 - t.clone(), radius(d) - 1.0 + t)
}

fn model_constants() -> Vec<KnownConstant> {
    vec![
        KnownConstant { name: "sign", value: 2.0, tol: 1e-8 },
        KnownConstant { name: "m0", value: std::f64::consts::SQRT_2, tol: 1e-6 },
        KnownConstant { name: "lambda0", value: 1.0, tol: 1e-3 },
        KnownConstant { name: "margin_lambda2", value: -6.0, tol: 1e-3 },
    ]
}

/// Flat `Q = diag(−1, I_d)` with `φ± = |y| − 1 ∓ t`.
pub fn ik_model(d: usize) -> ModelSpec {
    assert!(d >= 2, "the model needs at least two space dimensions");
    let n = d + 1;
    let (pp, pm) = phi_pm(d);
    ModelSpec {
        name: format!("ik{d}"),
        d,
        geometry: GeometrySpec::new(
            MetricField::constant(flat(d)),
            ScalarField::from_expr(n, pp),
            ScalarField::from_expr(n, pm),
            model_box(d),
        ),
        x0: base_point(d),
        known_constants: model_constants(),
    }
}

/// `e^σ·diag(−1, 1, 1)` with `σ = 0.3 sin(t + y₁) + 0.2 y₂²`. A conformal
/// factor keeps `Σ±` characteristic; the brackets pick up `∂σ` terms.
pub fn ik_conformal() -> ModelSpec {
    let d = 2;
    let sigma = Expr::parse("0.3*sin(t + y1) + 0.2*y2^2").expect("sigma parses");
    let (pp, pm) = phi_pm(d);
    ModelSpec {
        name: "ik2-conformal".to_string(),
        d,
        geometry: GeometrySpec::new(
            MetricField::conformal(sigma, flat(d)),
            ScalarField::from_expr(d + 1, pp),
            ScalarField::from_expr(d + 1, pm),
            model_box(d),
        ),
        x0: base_point(d),
        known_constants: vec![KnownConstant { name: "sign", value: 2.0, tol: 1e-8 }],
    }
}

/// Specs failing one hypothesis each:
/// - `ctrl-a`: `φ₋ = |y| − 1 + t/2` is not characteristic;
/// - `ctrl-b`: `φ₋ = −φ₊`, so `dφ₊ ∧ dφ₋ = 0`;
/// - `ctrl-c`: `Q = diag(1, I − 2ŷŷᵀ)`, which keeps both surfaces
///   characteristic but makes `⟨Qdφ₊, dφ₋⟩ = −2`.
pub fn negative_controls() -> Vec<ModelSpec> {
    let d = 2;
    let n = d + 1;
    let t = || Expr::var(0);
    let (pp, _) = phi_pm(d);
    let mk = |name: &str, metric: MetricField, pm: Expr| ModelSpec {
        name: name.to_string(),
        d,
        geometry: GeometrySpec::new(
            metric,
            ScalarField::from_expr(n, pp.clone()),
            ScalarField::from_expr(n, pm),
            model_box(d),
        ),
        x0: base_point(d),
        known_constants: Vec::new(),
    };
    let a = mk("ctrl-a", MetricField::constant(flat(d)), radius(d) - 1.0 + 0.5 * t());
    let b = mk("ctrl-b", MetricField::constant(flat(d)), -pp.clone());
    // I − 2ŷŷᵀ = I − 2 y yᵀ/|y|²
    let r2 = || Expr::var(1) * Expr::var(1) + Expr::var(2) * Expr::var(2);
    let refl = |i: usize, j: usize| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - 2.0 * (Expr::var(i) * Expr::var(j)) / r2()
    };
    let off = refl(1, 2);
    let entries = vec![
        vec![Expr::constant(1.0), Expr::constant(0.0), Expr::constant(0.0)],
        vec![Expr::constant(0.0), refl(1, 1), off.clone()],
        vec![Expr::constant(0.0), off, refl(2, 2)],
    ];
    let c = mk("ctrl-c", MetricField::from_exprs(entries), radius(d) - 1.0 + t());
    vec![a, b, c]
}

/// The check each control is designed to fail, in the grouping of
/// `HypothesisReport::failed_hypotheses`.
pub fn designated_failure(name: &str) -> Option<&'static str> {
    match name {
        "ctrl-a" => Some("bothcar"),
        "ctrl-b" => Some("transverse"),
        "ctrl-c" => Some("sign"),
        _ => None,
    }
}

/// Chart `κ: (φ₊, φ₋, θ) ↦ (t, y)` for the flat model near a point of
/// `Σ₊∩Σ₋`: `t = (φ₋ − φ₊)/2`, `|y| = 1 + (φ₊ + φ₋)/2`, and `θ` are
/// gnomonic coordinates of `ŷ` about the direction of `x₀`'s `y`.
pub fn flattening_chart(model: &ModelSpec, x0: &Point) -> Chart {
    let d = model.d;
    let n = d + 1;
    let (fp, fm) = (model.geometry.phi_plus.value(x0), model.geometry.phi_minus.value(x0));
    assert!(
        fp.abs() <= 1e-8 && fm.abs() <= 1e-8,
        "flattening chart base point must lie on the intersection"
    );
    let y0 = x0.rows(1, d).normalize();
    // orthonormal frame with e₀ = ŷ₀
    let frame = {
        let mut m = DMatrix::zeros(d, d);
        m.set_column(0, &y0);
        let mut k = 1;
        for e in 0..d {
            if k == d {
                break;
            }
            let mut v = DVector::zeros(d);
            v[e] = 1.0;
            for j in 0..k {
                let c = m.column(j).dot(&v);
                v -= m.column(j) * c;
            }
            if v.norm() > 1e-6 {
                m.set_column(k, &v.normalize());
                k += 1;
            }
        }
        m
    };
    let (f1, f2, f3) = (frame.clone(), frame.clone(), frame);
    let forward = move |y: &Point| -> Point {
        let (a, b) = (y[0], y[1]);
        let mut u = DVector::from_element(d, 1.0);
        u.rows_mut(1, d - 1).copy_from(&y.rows(2, d - 1));
        let r = 1.0 + 0.5 * (a + b);
        let s = &f1 * u.normalize() * r;
        let mut x = DVector::zeros(n);
        x[0] = 0.5 * (b - a);
        x.rows_mut(1, d).copy_from(&s);
        x
    };
    let jacobian = move |y: &Point| -> DMatrix<f64> {
        let (a, b) = (y[0], y[1]);
        let mut u = DVector::from_element(d, 1.0);
        u.rows_mut(1, d - 1).copy_from(&y.rows(2, d - 1));
        let un = u.norm();
        let hat = &u / un;
        let r = 1.0 + 0.5 * (a + b);
        let mut j = DMatrix::zeros(n, n);
        j[(0, 0)] = -0.5;
        j[(0, 1)] = 0.5;
        let half = &f2 * &hat * 0.5;
        j.view_mut((1, 0), (d, 1)).copy_from(&half);
        j.view_mut((1, 1), (d, 1)).copy_from(&half);
        // ∂(u/|u|)/∂u_k = (e_k − û û_k)/|u| for k ≥ 1
        for k in 1..d {
            let mut col = -&hat * hat[k];
            col[k] += 1.0;
            let col = &f2 * col * (r / un);
            j.view_mut((1, k + 1), (d, 1)).copy_from(&col);
        }
        j
    };
    let inverse = move |x: &Point| -> Point {
        let s = f3.transpose() * x.rows(1, d);
        let rad = s.norm();
        let mut y = DVector::zeros(n);
        y[0] = rad - 1.0 - x[0];
        y[1] = rad - 1.0 + x[0];
        for k in 1..d {
            y[k + 1] = s[k] / s[0];
        }
        y
    };
    Chart::new(n, forward, jacobian, inverse)
}

/// The model in flattened coordinates: pulled-back metric,
/// `φ₊ = y₀`, `φ₋ = y₁`, box `±0.3` around the origin.
pub fn flattened_geometry(model: &ModelSpec, chart: &Chart) -> GeometrySpec {
    let n = model.d + 1;
    let unit = |k: usize| {
        let mut c = DVector::zeros(n);
        c[k] = 1.0;
        ScalarField::linear(c, 0.0)
    };
    GeometrySpec::new(
        chart.pull_metric(&model.geometry.metric),
        unit(0),
        unit(1),
        BoxRegion::around(&vec![0.0; n], 0.3),
    )
}

/// `max |b₁₁|, |b₂₂|` of the pulled-back metric over an `m`-point-per-axis
/// lattice in `[−r, r]ⁿ`.
pub fn flattened_diagonal_max(model: &ModelSpec, chart: &Chart, r: f64, m: usize) -> Result<f64> {
    let n = model.d + 1;
    let mut worst: f64 = 0.0;
    let total = m.pow(n as u32);
    for k in 0..total {
        let mut rem = k;
        let y = DVector::from_fn(n, |_, _| {
            let i = rem % m;
            rem /= m;
            -r + 2.0 * r * i as f64 / (m - 1) as f64
        });
        let b = pullback_metric(&model.geometry.metric, chart, &y)?;
        worst = worst.max(b[(0, 0)].abs()).max(b[(1, 1)].abs());
    }
    Ok(worst)
}

/// Certification redone in flattened coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct ChartCertificate {
    pub certificate: Certificate,
    /// Largest margin over the samples with each covector `η` rescaled so
    /// that the corresponding original covector `κ'⁻ᵀη` is a unit vector;
    /// comparable with the margin of the original certificate.
    pub worst_margin_transported: Option<f64>,
    pub diagonal_max: f64,
}

pub fn certify_in_chart(model: &ModelSpec, lambda: Option<f64>, n: usize) -> Result<ChartCertificate> {
    let chart = flattening_chart(model, &model.x0);
    let geo = flattened_geometry(model, &chart);
    let y0 = chart.inverse(&model.x0);
    let cert = certify(&geo, &y0, lambda, n, EPS_C)?;
    let jinv_t = chart
        .jacobian(&y0)
        .try_inverse()
        .ok_or_else(|| Error::Chart("flattening chart is singular at the base point".into()))?
        .transpose();
    let transported = cert
        .samples
        .iter()
        .map(|s| {
            let xi = &jinv_t * DVector::from_column_slice(&s.xi);
            s.margin_key / xi.norm_squared()
        })
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(ChartCertificate {
        certificate: cert,
        worst_margin_transported: transported,
        diagonal_max: flattened_diagonal_max(model, &chart, 0.2, 7)?,
    })
}

/// Setup for the Carleman lab: the `(t, y₁)` section of `ik2` with
/// `Q = diag(−1, 1)` and the certified `ψ = y₁ − 1 − 2t²` (that is,
/// `ψ₁ − 2ψ₀²` restricted to `y₂ = 0`), on `[−0.5, 0.5] × [0.5, 1.5]`.
pub struct CarlemanSetup {
    pub metric: MetricField,
    pub psi: ScalarField,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn carleman_section(lambda: f64) -> CarlemanSetup {
    let psi = Expr::var(1) - 1.0 - lambda * Expr::var(0) * Expr::var(0);
    CarlemanSetup {
        metric: MetricField::constant(flat(1)),
        psi: ScalarField::from_expr(2, psi),
        lo: vec![-0.5, 0.5],
        hi: vec![0.5, 1.5],
    }
}

/// Same weight on the full three-dimensional `ik2` box, with
/// `ψ = |y| − 1 − λt²`.
pub fn carleman_full(lambda: f64) -> CarlemanSetup {
    let psi = radius(2) - 1.0 - lambda * Expr::var(0) * Expr::var(0);
    let b = model_box(2);
    CarlemanSetup {
        metric: MetricField::constant(flat(2)),
        psi: ScalarField::from_expr(3, psi),
        lo: b.lo.clone(),
        hi: b.hi.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::check_assumptions;

    #[test]
    fn model_is_characteristic_and_signed() {
        for d in [2, 3] {
            let m = ik_model(d);
            let r = check_assumptions(&m.geometry).unwrap();
            assert!(r.all_pass(), "{:?}", r.failed_hypotheses());
            let sign = r.check("sign").unwrap();
            assert!((sign.min_value - 2.0).abs() < 1e-8 && (sign.max_value - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    #[should_panic]
    fn one_space_dimension_is_rejected() {
        ik_model(1);
    }

    #[test]
    fn controls_fail_their_hypothesis() {
        for m in negative_controls() {
            let r = check_assumptions(&m.geometry).unwrap();
            let failed = r.failed_hypotheses();
            assert!(failed.contains(&designated_failure(&m.name).unwrap()), "{}: {failed:?}", m.name);
        }
    }

    #[test]
    fn chart_roundtrip_and_flatness() {
        for d in [2, 3] {
            let m = ik_model(d);
            let chart = flattening_chart(&m, &m.x0);
            let y0 = chart.inverse(&m.x0);
            assert!(y0.norm() < 1e-14);
            for k in 0..20 {
                let y = DVector::from_fn(d + 1, |i, _| 0.15 * ((k * 7 + i * 3) as f64).sin());
                assert!(chart.roundtrip_error(&y) < 1e-12);
                assert!(chart.condition_number(&y).is_finite());
                // forward then φ± recovers the first two coordinates
                let x = chart.forward(&y);
                assert!((m.geometry.phi_plus.value(&x) - y[0]).abs() < 1e-12);
                assert!((m.geometry.phi_minus.value(&x) - y[1]).abs() < 1e-12);
            }
            assert!(flattened_diagonal_max(&m, &chart, 0.2, 5).unwrap() < 1e-8);
        }
    }

    #[test]
    fn chart_jacobian_matches_differences() {
        let m = ik_model(3);
        let chart = flattening_chart(&m, &m.x0);
        let y = DVector::from_vec(vec![0.1, -0.05, 0.2, -0.1]);
        let j = chart.jacobian(&y);
        let h = 1e-6;
        for k in 0..4 {
            let mut e = DVector::zeros(4);
            e[k] = h;
            let fd = (chart.forward(&(&y + &e)) - chart.forward(&(&y - &e))) / (2.0 * h);
            assert!((fd - j.column(k)).norm() < 1e-8);
        }
    }

    #[test]
    fn lookup_by_name() {
        for name in MODEL_NAMES {
            assert_eq!(by_name(name).unwrap().name, name);
        }
        assert!(matches!(by_name("ik9"), Err(Error::Parse(_))));
    }
}
