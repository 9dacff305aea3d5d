//! Pointwise pseudo-convexity certification of `ψ₁ − λψ₀²`.
//!
//! At a point `x₀` of `Σ₊∩Σ₋` the constraint set is
//! `{ξ ∈ 𝕊ⁿ⁻¹ : p(x₀,ξ) = 0, H_pψ₁(x₀,ξ) = 0}`. Since `ψ₀(x₀) = 0`,
//! `H_p²(ψ₁−λψ₀²) = H_p²ψ₁ − 2λ(H_pψ₀)²` there, so the surface is
//! pseudo-convex as soon as `λ > max_{𝕊ⁿ⁻¹} H_p²ψ₁ / (2m₀²) = λ₀` with
//! `m₀ = min |H_pψ₀|` over the constraint set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{MetricField, Point, ScalarField};
use crate::geometry::{hp, hp2, hp2_form, PhasePoint};
use crate::hypotheses::{build_psi, GeometrySpec, TOL_POS};
use crate::sphere::{push_unique, sphere_seeds, QuadricSection};

/// Default residual bound for constraint samples.
pub const EPS_C: f64 = 1e-10;

/// Relative agreement required between the two margin evaluations.
pub const KEY_IDENTITY_TOL: f64 = 1e-6;

/// Membership tolerance for `x₀ ∈ Σ₊∩Σ₋` in [`certify`].
pub const TOL_BASE_POINT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSample {
    pub xi: Vec<f64>,
    pub res_p: f64,
    pub res_hp: f64,
}

impl ConstraintSample {
    pub fn covector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.xi)
    }
}

/// The constraint set at `x₀` for the level function `psi1`, with the
/// linear condition `H_pψ₁ = ⟨2Q(x₀)dψ₁(x₀), ξ⟩ = 0`.
fn section_for(q: &MetricField, psi1: &ScalarField, x0: &Point) -> (QuadricSection, DVector<f64>) {
    let q0 = q.at(x0);
    let ell = &q0 * psi1.grad(x0) * 2.0;
    (QuadricSection::new(q0, std::slice::from_ref(&ell)), ell)
}

fn to_sample(q0: &DMatrix<f64>, ell: &DVector<f64>, xi: &DVector<f64>) -> ConstraintSample {
    ConstraintSample {
        xi: xi.as_slice().to_vec(),
        res_p: xi.dot(&(q0 * xi)).abs(),
        res_hp: ell.dot(xi).abs(),
    }
}

/// Unit covectors with `p(x₀,ξ) = H_pψ₁(x₀,ξ) = 0` to `eps_c`, from `n`
/// sphere seeds refined by projected Newton. Samples closer than 1e−3 rad
/// are merged, so isolated constraint points are returned once each.
pub fn constraint_samples(
    q: &MetricField,
    psi1: &ScalarField,
    x0: &Point,
    n: usize,
    eps_c: f64,
) -> Result<Vec<ConstraintSample>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let q0 = q.at(x0);
    let g = psi1.grad(x0);
    let s = g.dot(&(&q0 * &g));
    if s <= TOL_POS {
        return Err(Error::DegenerateConstraintSet(format!(
            "<Q dpsi1, dpsi1> = {s:e} at x0; the surface is not non-characteristic"
        )));
    }
    let (section, ell) = section_for(q, psi1, x0);
    if section.is_empty() {
        return Err(Error::DegenerateConstraintSet("null cone misses the hyperplane".into()));
    }
    let samples: Vec<ConstraintSample> = section
        .sample(&sphere_seeds(q.dim(), n), eps_c)
        .iter()
        .map(|xi| to_sample(&q0, &ell, xi))
        .filter(|c| c.res_p <= eps_c && c.res_hp <= eps_c)
        .collect();
    if samples.is_empty() {
        return Err(Error::DegenerateConstraintSet("no seed converged onto the constraint set".into()));
    }
    Ok(samples)
}

/// Seeds for local refinement: the `k` best samples under `score`.
fn best_k(samples: &[DVector<f64>], score: impl Fn(&DVector<f64>) -> f64, k: usize) -> Vec<DVector<f64>> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| score(&samples[a]).total_cmp(&score(&samples[b])));
    idx.into_iter().take(k).map(|i| samples[i].clone()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct M0 {
    pub m0: f64,
    pub argmin: Vec<f64>,
}

/// `m₀ = min |H_pψ₀(x₀,ξ)|` over the constraint set: the sample minimum
/// polished by local refinement on the set.
pub fn compute_m0(
    q: &MetricField,
    psi0: &ScalarField,
    psi1: &ScalarField,
    x0: &Point,
    samples: &[ConstraintSample],
) -> Result<M0> {
    assert!(!samples.is_empty(), "compute_m0 needs constraint samples");
    let (section, _) = section_for(q, psi1, x0);
    let c = q.at(x0) * psi0.grad(x0) * 2.0;
    let b = &c * c.transpose();
    let xis: Vec<DVector<f64>> = samples.iter().map(ConstraintSample::covector).collect();
    let f = |xi: &DVector<f64>| c.dot(xi).abs();
    let mut best = xis[0].clone();
    for s in best_k(&xis, f, 8) {
        let r = section.refine(&s, &b, true, EPS_C);
        for cand in [s, r] {
            if f(&cand) < f(&best) {
                best = cand;
            }
        }
    }
    let m0 = f(&best);
    if m0 <= TOL_POS {
        return Err(Error::NondegeneracyViolation { m0, tol: TOL_POS });
    }
    Ok(M0 {
        m0,
        argmin: best.as_slice().to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Lambda0 {
    pub lambda0: f64,
    /// `max_{𝕊ⁿ⁻¹} H_p²ψ₁(x₀,·)`.
    pub sphere_max: f64,
    pub argmax: Vec<f64>,
}

/// `λ₀ = max_{𝕊ⁿ⁻¹} H_p²ψ₁(x₀,ξ) / (2m₀²)`.
///
/// `ξ ↦ H_p²ψ₁(x₀,ξ)` is a quadratic form, so its sphere maximum is the
/// largest eigenvalue of the polarized matrix.
pub fn compute_lambda0(q: &MetricField, psi1: &ScalarField, x0: &Point, m0: f64) -> Lambda0 {
    assert!(m0 > 0.0, "m0 must be positive");
    let a = hp2_form(q, psi1, x0);
    let eig = SymmetricEigen::new(a);
    let k = eig.eigenvalues.imax();
    let sphere_max = eig.eigenvalues[k];
    Lambda0 {
        lambda0: sphere_max / (2.0 * m0 * m0),
        sphere_max,
        argmax: eig.eigenvectors.column(k).iter().copied().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateStatus {
    Certified,
    Failed,
    Degenerate,
}

/// Per-sample evaluation of the margin.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    pub xi: Vec<f64>,
    pub res_p: f64,
    pub res_hp: f64,
    pub hp2_psi1: f64,
    pub hp_psi0: f64,
    /// `H_p²ψ₁ − 2λ(H_pψ₀)²`.
    pub margin_key: f64,
    /// `H_p²(ψ₁ − λψ₀²)` evaluated directly.
    pub margin_direct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub x0: Vec<f64>,
    pub m0: Option<f64>,
    pub lambda0: Option<f64>,
    pub lambda_used: Option<f64>,
    /// Largest margin over the constraint samples.
    pub worst_margin: Option<f64>,
    pub n_samples: usize,
    pub status: CertificateStatus,
    /// `lambda_used > lambda0`.
    pub lambda_above_lambda0: bool,
    /// `max H_p²ψ₁` restricted to the constraint samples.
    pub constraint_max_hp2_psi1: Option<f64>,
    pub sphere_max_hp2_psi1: Option<f64>,
    #[serde(skip)]
    pub samples: Vec<SampleRecord>,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }

    /// Header and rows for the per-sample CSV table.
    pub fn sample_table(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let n = self.x0.len();
        let mut header: Vec<String> = (0..n).map(|i| format!("xi{i}")).collect();
        header.extend(
            ["res_p", "res_hp", "hp2_psi1", "hp_psi0", "margin_key", "margin_direct"].map(String::from),
        );
        let rows = self
            .samples
            .iter()
            .map(|s| {
                let mut r = s.xi.clone();
                r.extend([s.res_p, s.res_hp, s.hp2_psi1, s.hp_psi0, s.margin_key, s.margin_direct]);
                r
            })
            .collect();
        (header, rows)
    }
}

/// Default `λ` when none is given: `2·max(λ₀, 0) + 1`.
pub fn default_lambda(lambda0: f64) -> f64 {
    2.0 * lambda0.max(0.0) + 1.0
}

/// Certifies pseudo-convexity of `{ψ₁ − λψ₀² = 0}` at `x₀`.
///
/// The status is `certified` iff the largest margin over the constraint set
/// is below `−tol_pos` of the spec; whether `λ > λ₀` is reported separately.
pub fn certify(
    spec: &GeometrySpec,
    x0: &Point,
    lambda: Option<f64>,
    n: usize,
    eps_c: f64,
) -> Result<Certificate> {
    let q = &spec.metric;
    let (psi0, psi1) = build_psi(spec);
    let (fp, fm) = (spec.phi_plus.value(x0), spec.phi_minus.value(x0));
    if fp.abs() > TOL_BASE_POINT || fm.abs() > TOL_BASE_POINT {
        return Err(Error::Hypothesis(format!(
            "x0 is not on the intersection: phi+ = {fp:e}, phi- = {fm:e}"
        )));
    }
    let mut cert = Certificate {
        x0: x0.as_slice().to_vec(),
        m0: None,
        lambda0: None,
        lambda_used: lambda,
        worst_margin: None,
        n_samples: 0,
        status: CertificateStatus::Degenerate,
        lambda_above_lambda0: false,
        constraint_max_hp2_psi1: None,
        sphere_max_hp2_psi1: None,
        samples: Vec::new(),
    };
    let g1 = psi1.grad(x0);
    if g1.dot(&(q.at(x0) * &g1)) <= spec.tol_pos {
        return Ok(cert);
    }
    let samples = constraint_samples(q, &psi1, x0, n, eps_c)?;
    let m0 = compute_m0(q, &psi0, &psi1, x0, &samples)?;
    let l0 = compute_lambda0(q, &psi1, x0, m0.m0);
    let lam = lambda.unwrap_or_else(|| default_lambda(l0.lambda0));
    let psi = psi1.minus_scaled_square(lam, &psi0);

    // the constraint-set maximum of the margin form, polished from the worst sample
    let (section, ell) = section_for(q, &psi1, x0);
    let q0 = q.at(x0);
    let c = &q0 * psi0.grad(x0) * 2.0;
    let form = hp2_form(q, &psi1, x0) - &c * c.transpose() * (2.0 * lam);
    let mut xis: Vec<DVector<f64>> = samples.iter().map(ConstraintSample::covector).collect();
    let score = |xi: &DVector<f64>| -xi.dot(&(&form * xi));
    for s in best_k(&xis.clone(), score, 4) {
        let r = section.refine(&s, &form, false, eps_c);
        let cs = to_sample(&q0, &ell, &r);
        if cs.res_p <= eps_c && cs.res_hp <= eps_c {
            push_unique(&mut xis, r);
        }
    }

    let records: Vec<SampleRecord> = xis
        .par_iter()
        .map(|xi| {
            let pp = PhasePoint::new(x0.clone(), xi.clone());
            let h2 = hp2(q, &psi1, &pp);
            let h0 = hp(q, &psi0, &pp);
            let cs = to_sample(&q0, &ell, xi);
            SampleRecord {
                xi: cs.xi,
                res_p: cs.res_p,
                res_hp: cs.res_hp,
                hp2_psi1: h2,
                hp_psi0: h0,
                margin_key: h2 - 2.0 * lam * h0 * h0,
                margin_direct: hp2(q, &psi, &pp),
            }
        })
        .collect();
    for r in &records {
        if (r.margin_key - r.margin_direct).abs() > KEY_IDENTITY_TOL * (1.0 + r.margin_key.abs()) {
            return Err(Error::InternalInconsistency(format!(
                "margin {} via the key identity differs from direct evaluation {} at xi = {:?}",
                r.margin_key, r.margin_direct, r.xi
            )));
        }
    }
    let worst = records.iter().map(|r| r.margin_key).fold(f64::NEG_INFINITY, f64::max);
    let cmax = records.iter().map(|r| r.hp2_psi1).fold(f64::NEG_INFINITY, f64::max);
    cert.m0 = Some(m0.m0);
    cert.lambda0 = Some(l0.lambda0);
    cert.lambda_used = Some(lam);
    cert.worst_margin = Some(worst);
    cert.n_samples = records.len();
    cert.status = if worst < -spec.tol_pos {
        CertificateStatus::Certified
    } else {
        CertificateStatus::Failed
    };
    cert.lambda_above_lambda0 = lam > l0.lambda0;
    cert.constraint_max_hp2_psi1 = Some(cmax);
    cert.sphere_max_hp2_psi1 = Some(l0.sphere_max);
    cert.samples = records;
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    Pass,
    Fail,
    /// The constraint set is empty.
    VacuousPass,
}

impl ConditionStatus {
    pub fn passed(self) -> bool {
        self != ConditionStatus::Fail
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HormanderReport {
    pub status: ConditionStatus,
    /// `max H_p²ψ` over `{p = H_pψ = 0} ∩ 𝕊ⁿ⁻¹`.
    pub max_hp2: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub n_samples: usize,
}

fn require_nonzero_gradient(psi: &ScalarField, x0: &Point) -> Result<DVector<f64>> {
    let g = psi.grad(x0);
    if g.norm() == 0.0 {
        return Err(Error::Hypothesis("d psi vanishes at x0".into()));
    }
    Ok(g)
}

/// `p = H_pψ = 0, ξ ≠ 0 ⟹ H_p²ψ < 0` at `x₀`.
pub fn check_hormander(
    q: &MetricField,
    psi: &ScalarField,
    x0: &Point,
    n: usize,
    eps_c: f64,
) -> Result<HormanderReport> {
    require_nonzero_gradient(psi, x0)?;
    let (section, _) = section_for(q, psi, x0);
    if section.is_empty() {
        return Ok(HormanderReport {
            status: ConditionStatus::VacuousPass,
            max_hp2: None,
            witness: None,
            n_samples: 0,
        });
    }
    let form = hp2_form(q, psi, x0);
    let mut xis = section.sample(&sphere_seeds(q.dim(), n), eps_c);
    if xis.is_empty() {
        return Err(Error::DegenerateConstraintSet("no seed converged onto the constraint set".into()));
    }
    let score = |xi: &DVector<f64>| -hp2(q, psi, &PhasePoint::new(x0.clone(), xi.clone()));
    for s in best_k(&xis.clone(), score, 4) {
        let r = section.refine(&s, &form, false, eps_c);
        if section.residual(&r) <= eps_c {
            push_unique(&mut xis, r);
        }
    }
    let (witness, max) = xis
        .iter()
        .map(|xi| (xi, -score(xi)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty samples");
    Ok(HormanderReport {
        status: if max < -TOL_POS { ConditionStatus::Pass } else { ConditionStatus::Fail },
        max_hp2: Some(max),
        witness: Some(witness.as_slice().to_vec()),
        n_samples: xis.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalderonReport {
    pub status: ConditionStatus,
    /// `min |H_pψ|` over unit null covectors.
    pub min_abs_hp: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub n_samples: usize,
}

/// `H_pψ(x₀,ξ) ≠ 0` for every unit null covector `ξ`.
pub fn check_calderon(q: &MetricField, psi: &ScalarField, x0: &Point, n: usize) -> Result<CalderonReport> {
    let g = require_nonzero_gradient(psi, x0)?;
    let q0 = q.at(x0);
    let ell = &q0 * g * 2.0;
    let section = QuadricSection::new(q0, &[]);
    if section.is_empty() {
        return Ok(CalderonReport {
            status: ConditionStatus::VacuousPass,
            min_abs_hp: None,
            witness: None,
            n_samples: 0,
        });
    }
    let mut xis = section.sample(&sphere_seeds(q.dim(), n), EPS_C);
    if xis.is_empty() {
        return Err(Error::InsufficientSamples("no seed converged onto the null cone".into()));
    }
    let b = &ell * ell.transpose();
    let f = |xi: &DVector<f64>| ell.dot(xi).abs();
    for s in best_k(&xis.clone(), f, 4) {
        let r = section.refine(&s, &b, true, EPS_C);
        if section.residual(&r) <= EPS_C {
            push_unique(&mut xis, r);
        }
    }
    let (witness, min) = xis
        .iter()
        .map(|xi| (xi, f(xi)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty samples");
    Ok(CalderonReport {
        status: if min > TOL_POS { ConditionStatus::Pass } else { ConditionStatus::Fail },
        min_abs_hp: Some(min),
        witness: Some(witness.as_slice().to_vec()),
        n_samples: xis.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::field::BoxRegion;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn flat(d: usize) -> MetricField {
        let mut v = vec![1.0; d + 1];
        v[0] = -1.0;
        MetricField::constant(DMatrix::from_diagonal(&DVector::from_vec(v)))
    }

    fn model(d: usize) -> GeometrySpec {
        let r = if d == 2 { "norm(y1,y2)" } else { "norm(y1,y2,y3)" };
        let mut lo = vec![-0.5; d + 1];
        let mut hi = vec![0.5; d + 1];
        lo[1] = 0.5;
        hi[1] = 1.5;
        GeometrySpec::new(
            flat(d),
            ScalarField::from_expr(d + 1, Expr::parse(&format!("{r} - 1 - t")).unwrap()),
            ScalarField::from_expr(d + 1, Expr::parse(&format!("{r} - 1 + t")).unwrap()),
            BoxRegion::new(lo, hi),
        )
    }

    fn x0(d: usize) -> Point {
        let mut x = Point::zeros(d + 1);
        x[1] = 1.0;
        x
    }

    #[test]
    fn constraint_samples_of_model() {
        let spec = model(2);
        let (_, psi1) = build_psi(&spec);
        let s = constraint_samples(&spec.metric, &psi1, &x0(2), 400, 1e-10).unwrap();
        assert_eq!(s.len(), 4);
        for c in &s {
            assert!((c.xi[0].abs() - FRAC_1_SQRT_2).abs() < 1e-9);
            assert!((c.xi[2].abs() - FRAC_1_SQRT_2).abs() < 1e-9);
            assert!(c.res_p <= 1e-10 && c.res_hp <= 1e-10);
        }
        assert!(constraint_samples(&spec.metric, &psi1, &x0(2), 0, 1e-10).unwrap().is_empty());
    }

    #[test]
    fn m0_and_lambda0_of_model() {
        for d in [2, 3] {
            let spec = model(d);
            let (psi0, psi1) = build_psi(&spec);
            let s = constraint_samples(&spec.metric, &psi1, &x0(d), 400, EPS_C).unwrap();
            let m0 = compute_m0(&spec.metric, &psi0, &psi1, &x0(d), &s).unwrap().m0;
            assert!((m0 - SQRT_2).abs() < 1e-6);
            let l0 = compute_lambda0(&spec.metric, &psi1, &x0(d), m0);
            assert!((l0.lambda0 - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn doubled_metric_doubles_m0() {
        let spec = model(2);
        let (psi0, psi1) = build_psi(&spec);
        let q2 = spec.metric.scaled(2.0);
        let s = constraint_samples(&q2, &psi1, &x0(2), 200, EPS_C).unwrap();
        let m0 = compute_m0(&q2, &psi0, &psi1, &x0(2), &s).unwrap().m0;
        assert!((m0 - 2.0 * SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn linear_psi1_gives_nonpositive_lambda0() {
        let q = flat(2);
        let psi1 = ScalarField::linear(DVector::from_vec(vec![0.0, 1.0, 0.0]), -1.0);
        assert!(compute_lambda0(&q, &psi1, &x0(2), SQRT_2).lambda0 <= 0.0);
    }

    #[test]
    fn certify_examples() {
        let spec = model(2);
        let c = certify(&spec, &x0(2), Some(2.0), 400, EPS_C).unwrap();
        assert!(c.is_certified());
        assert!((c.worst_margin.unwrap() + 6.0).abs() < 1e-3);
        let c0 = certify(&spec, &x0(2), Some(0.0), 400, EPS_C).unwrap();
        assert_eq!(c0.status, CertificateStatus::Failed);
        assert!((c0.worst_margin.unwrap() - 2.0).abs() < 1e-6);
        let c1 = certify(&spec, &x0(2), Some(1.01), 400, EPS_C).unwrap();
        assert!(c1.is_certified());
        assert!((c1.worst_margin.unwrap() + 2.04).abs() < 1e-6);
        let cd = certify(&spec, &x0(2), None, 400, EPS_C).unwrap();
        assert!((cd.lambda_used.unwrap() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn certify_rejects_point_off_intersection() {
        let spec = model(2);
        let x = Point::from_vec(vec![0.1, 1.0, 0.0]);
        assert!(matches!(certify(&spec, &x, Some(2.0), 100, EPS_C), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn hormander_examples() {
        let spec = model(2);
        let (psi0, psi1) = build_psi(&spec);
        let psi = psi1.minus_scaled_square(2.0, &psi0);
        let r = check_hormander(&spec.metric, &psi, &x0(2), 400, EPS_C).unwrap();
        assert_eq!(r.status, ConditionStatus::Pass);
        assert!((r.max_hp2.unwrap() + 6.0).abs() < 1e-6);
        let r1 = check_hormander(&spec.metric, &psi1, &x0(2), 400, EPS_C).unwrap();
        assert_eq!(r1.status, ConditionStatus::Fail);
        assert!((r1.max_hp2.unwrap() - 2.0).abs() < 1e-6);
        let elliptic = MetricField::constant(DMatrix::identity(3, 3));
        let re = check_hormander(&elliptic, &psi1, &x0(2), 100, EPS_C).unwrap();
        assert_eq!(re.status, ConditionStatus::VacuousPass);
    }

    #[test]
    fn calderon_examples() {
        let spec = model(2);
        let (psi0, psi1) = build_psi(&spec);
        let r0 = check_calderon(&spec.metric, &psi0, &x0(2), 400).unwrap();
        assert_eq!(r0.status, ConditionStatus::Pass);
        assert!((r0.min_abs_hp.unwrap() - SQRT_2).abs() < 1e-6);
        let r1 = check_calderon(&spec.metric, &psi1, &x0(2), 400).unwrap();
        assert_eq!(r1.status, ConditionStatus::Fail);
        let w = r1.witness.unwrap();
        assert!(w[1].abs() < 1e-6 && (w[0].abs() - FRAC_1_SQRT_2).abs() < 1e-6);
        let c = ScalarField::constant(3, 1.0);
        assert!(matches!(check_calderon(&spec.metric, &c, &x0(2), 10), Err(Error::Hypothesis(_))));
    }
}
