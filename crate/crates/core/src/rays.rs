//! Bicharacteristics of `p(x,ξ) = ⟨Q(x)ξ,ξ⟩` and their contact with level
//! sets.
//!
//! Hamilton's equations `ẋ = 2Q(x)ξ`, `ξ̇ = −⟨∂ₓQ(x)ξ, ξ⟩` are integrated
//! with the classical fourth-order Runge–Kutta scheme. Along a null ray
//! tangent to `{ψ = 0}` at `s = 0`, `ψ(γ(s)) = ½H_p²ψ·s² + O(s³)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{MetricField, Point, ScalarField};
use crate::geometry::{eval_symbol, hp2, PhasePoint};

/// Default integration step.
pub const DS: f64 = 1e-3;

/// Default half-width of the contact fit window.
pub const S_FIT: f64 = 0.05;

/// Launch-point membership tolerance for [`contact`].
pub const TOL_LAUNCH: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaySample {
    pub s: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub p: f64,
    pub psi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayTrajectory {
    /// Strictly increasing in `s`.
    pub samples: Vec<RaySample>,
    pub step: f64,
    /// The ray left the metric's domain and was cut there.
    pub truncated: bool,
}

fn rhs(q: &MetricField, x: &Point, xi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let dx = q.at(x) * xi * 2.0;
    let dxi = DVector::from_fn(x.len(), |j, _| -xi.dot(&(q.deriv(x, j) * xi)));
    (dx, dxi)
}

fn rk4_step(q: &MetricField, x: &Point, xi: &DVector<f64>, h: f64) -> (Point, DVector<f64>) {
    let (k1x, k1p) = rhs(q, x, xi);
    let (k2x, k2p) = rhs(q, &(x + &k1x * (h / 2.0)), &(xi + &k1p * (h / 2.0)));
    let (k3x, k3p) = rhs(q, &(x + &k2x * (h / 2.0)), &(xi + &k2p * (h / 2.0)));
    let (k4x, k4p) = rhs(q, &(x + &k3x * h), &(xi + &k3p * h));
    (
        x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0),
        xi + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0),
    )
}

fn sample(q: &MetricField, s: f64, x: &Point, xi: &DVector<f64>) -> RaySample {
    RaySample {
        s,
        x: x.as_slice().to_vec(),
        xi: xi.as_slice().to_vec(),
        p: eval_symbol(q, &PhasePoint::new(x.clone(), xi.clone())),
        psi: None,
    }
}

/// Integrates `n_steps` steps of signed size `h` from `start`; the launch
/// sample is included.
fn march(q: &MetricField, start: &PhasePoint, h: f64, n_steps: usize) -> (Vec<RaySample>, bool) {
    let mut x = start.x.clone();
    let mut xi = start.xi.clone();
    let mut out = vec![sample(q, 0.0, &x, &xi)];
    for k in 1..=n_steps {
        let (nx, nxi) = rk4_step(q, &x, &xi, h);
        if q.domain().is_some_and(|d| !d.contains(&nx)) {
            return (out, true);
        }
        x = nx;
        xi = nxi;
        out.push(sample(q, h * k as f64, &x, &xi));
    }
    (out, false)
}

/// Forward integration over `s ∈ [0, n_steps·ds]`.
pub fn integrate(q: &MetricField, start: &PhasePoint, ds: f64, n_steps: usize) -> RayTrajectory {
    assert!(ds > 0.0, "ds must be positive");
    assert!(n_steps >= 1, "n_steps must be positive");
    assert_eq!(q.dim(), start.dim(), "metric and phase point dimensions differ");
    let (samples, truncated) = march(q, start, ds, n_steps);
    RayTrajectory {
        samples,
        step: ds,
        truncated,
    }
}

/// Integration over `s ∈ [−n_each·ds, n_each·ds]` through `start`.
pub fn trace_through(q: &MetricField, start: &PhasePoint, ds: f64, n_each: usize) -> RayTrajectory {
    assert!(ds > 0.0, "ds must be positive");
    assert!(n_each >= 1, "n_each must be positive");
    assert_eq!(q.dim(), start.dim(), "metric and phase point dimensions differ");
    let (mut back, tb) = march(q, start, -ds, n_each);
    let (fwd, tf) = march(q, start, ds, n_each);
    back.reverse();
    back.pop();
    back.extend(fwd);
    RayTrajectory {
        samples: back,
        step: ds,
        truncated: tb || tf,
    }
}

impl RayTrajectory {
    /// Fills in `ψ` along the ray.
    pub fn attach_psi(&mut self, psi: &ScalarField) {
        for s in &mut self.samples {
            s.psi = Some(psi.value(&Point::from_column_slice(&s.x)));
        }
    }

    /// `max |p(s) − p(0)|` along the ray.
    pub fn p_drift(&self) -> f64 {
        let p0 = self
            .samples
            .iter()
            .find(|s| s.s == 0.0)
            .unwrap_or(&self.samples[0])
            .p;
        self.samples.iter().map(|s| (s.p - p0).abs()).fold(0.0, f64::max)
    }

    /// Columns `s, x…, xi…, p, psi` (`psi` is NaN when not attached).
    pub fn table(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut header = vec!["s".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("xi{i}")));
        header.extend(["p".to_string(), "psi".to_string()]);
        let rows = self
            .samples
            .iter()
            .map(|s| {
                let mut r = vec![s.s];
                r.extend(&s.x);
                r.extend(&s.xi);
                r.push(s.p);
                r.push(s.psi.unwrap_or(f64::NAN));
                r
            })
            .collect();
        (header, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
    Crossing,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContactReport {
    pub tangency: bool,
    /// Fitted `dψ(γ)/ds` at `s = 0`.
    pub linear_coeff: f64,
    pub tol_tan: f64,
    pub fitted_c2: f64,
    /// `½H_p²ψ` at the launch point.
    pub predicted_c2: f64,
    /// `|fitted_c2 − predicted_c2| / |predicted_c2|`.
    pub rel_error: f64,
    pub side: Side,
    pub n_fit: usize,
}

/// Least-squares cubic `c₀ + c₁s + c₂s² + c₃s³` through `(s, v)`.
fn cubic_fit(s: &[f64], v: &[f64], scale: f64) -> Option<[f64; 4]> {
    let m = s.len();
    let a = DMatrix::from_fn(m, 4, |i, k| (s[i] / scale).powi(k as i32));
    let b = DVector::from_column_slice(v);
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some([
        sol[0],
        sol[1] / scale,
        sol[2] / (scale * scale),
        sol[3] / (scale * scale * scale),
    ])
}

/// Classifies the contact of a ray launched on `{ψ = 0}` with that level set
/// using samples with `|s| ≤ s_fit`.
pub fn contact(q: &MetricField, traj: &RayTrajectory, psi: &ScalarField, s_fit: f64) -> Result<ContactReport> {
    let launch = traj
        .samples
        .iter()
        .find(|s| s.s == 0.0)
        .ok_or_else(|| Error::Fit("trajectory has no launch sample at s = 0".into()))?;
    let x0 = Point::from_column_slice(&launch.x);
    let xi0 = DVector::from_column_slice(&launch.xi);
    let psi0 = psi.value(&x0);
    if psi0.abs() > TOL_LAUNCH {
        return Err(Error::Hypothesis(format!("launch point has psi = {psi0:e}")));
    }
    let (s, v): (Vec<f64>, Vec<f64>) = traj
        .samples
        .iter()
        .filter(|r| r.s.abs() <= s_fit * (1.0 + 1e-12))
        .map(|r| (r.s, psi.value(&Point::from_column_slice(&r.x))))
        .unzip();
    if s.len() < 4 {
        return Err(Error::Fit(format!("{} samples in the fit window, need at least 4", s.len())));
    }
    let c = cubic_fit(&s, &v, s_fit).ok_or_else(|| Error::Fit("singular least-squares system".into()))?;
    let xdot = q.at(&x0) * &xi0 * 2.0;
    let tol_tan = 1e-6 * psi.grad(&x0).norm() * xdot.norm();
    let tangency = c[1].abs() <= tol_tan;
    let predicted = 0.5 * hp2(q, psi, &PhasePoint::new(x0, xi0));
    let side = match (tangency, c[2] < 0.0) {
        (false, _) => Side::Crossing,
        (true, true) => Side::Below,
        (true, false) => Side::Above,
    };
    Ok(ContactReport {
        tangency,
        linear_coeff: c[1],
        tol_tan,
        fitted_c2: c[2],
        predicted_c2: predicted,
        rel_error: if predicted != 0.0 {
            (c[2] - predicted).abs() / predicted.abs()
        } else {
            (c[2] - predicted).abs()
        },
        side,
        n_fit: s.len(),
    })
}

/// Traces through `start` with the default step and classifies contact.
pub fn contact_at(q: &MetricField, psi: &ScalarField, start: &PhasePoint) -> Result<(RayTrajectory, ContactReport)> {
    let n_each = (S_FIT / DS).round() as usize;
    let mut traj = trace_through(q, start, DS, n_each);
    traj.attach_psi(psi);
    let report = contact(q, &traj, psi, S_FIT)?;
    Ok((traj, report))
}
