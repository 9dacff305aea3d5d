//! Test-side oracles, written independently of `ucp-core`: finite
//! differences of plain closures and a brute-force scan of the unit sphere.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Field = fn(&[f64]) -> f64;
pub type Metric = fn(&[f64]) -> Vec<Vec<f64>>;

// ---- frozen closed-form constants of the flat model ----

/// `⟨Qdφ₊, dφ₋⟩` on the intersection.
pub const SIGN: f64 = 2.0;
pub const M0: f64 = std::f64::consts::SQRT_2;
pub const LAMBDA0: f64 = 1.0;
/// Worst margin at `λ = 2`: `2 − 4λ`.
pub const MARGIN_LAMBDA2: f64 = -6.0;
/// `½H_p²ψ` along the constraint set at `λ = 2`.
pub const C2_PSI: f64 = -3.0;
/// `½H_p²ψ₁` along the constraint set.
pub const C2_CONTROL: f64 = 1.0;

// ---- the flat model `Q = diag(−1, I)`, `φ± = |y| − 1 ∓ t` ----

fn radius(x: &[f64]) -> f64 {
    x[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn phi_plus(x: &[f64]) -> f64 {
    radius(x) - 1.0 - x[0]
}

pub fn phi_minus(x: &[f64]) -> f64 {
    radius(x) - 1.0 + x[0]
}

pub fn psi0(x: &[f64]) -> f64 {
    0.5 * (phi_minus(x) - phi_plus(x))
}

pub fn psi1(x: &[f64]) -> f64 {
    0.5 * (phi_plus(x) + phi_minus(x))
}

pub fn flat(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 }).collect())
        .collect()
}

/// `e^σ diag(−1, 1, 1)` with `σ = 0.3 sin(t + y₁) + 0.2 y₂²`.
pub fn conformal(x: &[f64]) -> Vec<Vec<f64>> {
    let s = (0.3 * (x[0] + x[1]).sin() + 0.2 * x[2] * x[2]).exp();
    let mut q = flat(3);
    for row in q.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    q
}

// ---- finite differences ----

pub fn grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn hess(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let at = |si: f64, sj: f64| {
                let mut y = x.to_vec();
                y[i] += si * h;
                y[j] += sj * h;
                f(&y)
            };
            out[i][j] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    out
}

pub fn mat_vec(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨Q(x)a, b⟩`.
pub fn pairing(q: Metric, x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    dot(&mat_vec(&q(x), a), b)
}

/// `H_p f` at `(x, ξ)` for `p = ⟨Q(x)ξ, ξ⟩` and `f(x, ξ)`, by central
/// differences in both slots.
pub fn poisson(q: Metric, f: &dyn Fn(&[f64], &[f64]) -> f64, x: &[f64], xi: &[f64], h: f64) -> f64 {
    let p = |x: &[f64], xi: &[f64]| pairing(q, x, xi, xi);
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        let d = |g: &dyn Fn(&[f64], &[f64]) -> f64, in_x: bool| {
            let (mut xp, mut xm, mut kp, mut km) = (x.to_vec(), x.to_vec(), xi.to_vec(), xi.to_vec());
            if in_x {
                xp[i] += h;
                xm[i] -= h;
            } else {
                kp[i] += h;
                km[i] -= h;
            }
            (g(&xp, &kp) - g(&xm, &km)) / (2.0 * h)
        };
        s += d(&p, false) * d(f, true) - d(&p, true) * d(f, false);
    }
    s
}

/// `H_pψ = 2⟨Qξ, dψ⟩` with a differenced gradient.
pub fn hp(q: Metric, psi: Field, x: &[f64], xi: &[f64]) -> f64 {
    2.0 * pairing(q, x, xi, &grad(&psi, x, 1e-6))
}

/// `H_p²ψ` by differencing `H_pψ` along the Hamiltonian field.
pub fn hp2(q: Metric, psi: Field, x: &[f64], xi: &[f64]) -> f64 {
    let g = move |x: &[f64], xi: &[f64]| hp(q, psi, x, xi);
    poisson(q, &g, x, xi, 1e-4)
}

/// `H_p²ψ = 4⟨Qξ, ∇²ψ Qξ⟩` for constant `Q`.
pub fn hp2_constant(q: &[Vec<f64>], hess_psi: &[Vec<f64>], xi: &[f64]) -> f64 {
    let v = mat_vec(q, xi);
    4.0 * dot(&v, &mat_vec(hess_psi, &v))
}

// ---- brute-force sphere scan ----

#[derive(Debug, Clone)]
pub struct Scan {
    pub points: usize,
    /// Points within `delta` of the constraint set `{p = 0, H_pψ₁ = 0}`.
    pub hits: usize,
    pub m0: f64,
    pub lambda0: f64,
    /// Largest `H_p²ψ₁ − 2λ(H_pψ₀)²` over the hits.
    pub margin: f64,
    pub max_hp2_psi1_on_set: f64,
}

/// Scans `points` uniform unit covectors at `x₀` of the flat model in
/// `n = x0.len()` dimensions.
pub fn sphere_scan(x0: &[f64], points: usize, delta: f64, lambda: f64, seed: u64) -> Scan {
    let n = x0.len();
    let q = flat(n);
    let g0 = grad(&psi0, x0, 1e-6);
    let g1 = grad(&psi1, x0, 1e-6);
    let h1 = hess(&psi1, x0, 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scan = Scan {
        points,
        hits: 0,
        m0: f64::INFINITY,
        lambda0: 0.0,
        margin: f64::NEG_INFINITY,
        max_hp2_psi1_on_set: f64::NEG_INFINITY,
    };
    let mut sphere_max = f64::NEG_INFINITY;
    for _ in 0..points {
        let mut xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = dot(&xi, &xi).sqrt();
        xi.iter_mut().for_each(|v| *v /= r);
        let qxi = mat_vec(&q, &xi);
        let p = dot(&qxi, &xi);
        let hp1 = 2.0 * dot(&qxi, &g1);
        let hp0 = 2.0 * dot(&qxi, &g0);
        let h2 = hp2_constant(&q, &h1, &xi);
        sphere_max = sphere_max.max(h2);
        if p.abs() < delta && hp1.abs() < delta {
            scan.hits += 1;
            scan.m0 = scan.m0.min(hp0.abs());
            scan.margin = scan.margin.max(h2 - 2.0 * lambda * hp0 * hp0);
            scan.max_hp2_psi1_on_set = scan.max_hp2_psi1_on_set.max(h2);
        }
    }
    scan.lambda0 = sphere_max / (2.0 * scan.m0 * scan.m0);
    scan
}

/// Base point `(0, 1, 0, …)` of the flat model in `n` dimensions.
pub fn base_point(n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[1] = 1.0;
    x
}
