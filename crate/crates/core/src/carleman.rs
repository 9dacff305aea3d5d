//! Discrete Carleman ratios
//! `‖e^{−λφ}Pw‖ / (λ^{1/2}‖e^{−λφ}∇w‖ + λ^{3/2}‖e^{−λφ}w‖)`
//! for the convexified weight `φ = e^{μψ} − 1`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bump::TensorBump;
use crate::error::{Error, Result};
use crate::field::{MetricField, Point, ScalarField};
use crate::grid::{Grid, GridFunction};

/// Default λ ladder `1, 2, 4, …, 64`.
pub const DEFAULT_LAMBDAS: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// Weight `φ = e^{μψ} − 1`; `{φ < 0} = {ψ < 0}` exactly.
#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub psi: ScalarField,
    pub mu: f64,
    pub phi: ScalarField,
}

impl WeightSpec {
    /// Checks `dφ ≠ 0` and the sublevel inclusion at the given points.
    pub fn validate(&self, points: &[Point]) -> Result<()> {
        for x in points {
            let (p, s) = (self.phi.value(x), self.psi.value(x));
            if p < 0.0 && s >= 0.0 {
                return Err(Error::Hypothesis(format!("phi < 0 <= psi at {:?}", x.as_slice())));
            }
            if self.phi.grad(x).norm() == 0.0 {
                return Err(Error::Hypothesis(format!("d phi vanishes at {:?}", x.as_slice())));
            }
        }
        Ok(())
    }
}

pub fn build_weight(psi: &ScalarField, mu: f64) -> WeightSpec {
    assert!(mu > 0.0, "convexification rate must be positive");
    let phi = psi.compose(move |s| {
        let e = (mu * s).exp();
        (e - 1.0, mu * e, mu * mu * e)
    });
    WeightSpec {
        psi: psi.clone(),
        mu,
        phi,
    }
}

/// Lower-order part `b·∂ + c` of `P`.
#[derive(Debug, Clone, Default)]
pub struct LowerOrder {
    pub b: Option<Vec<ScalarField>>,
    pub c: Option<ScalarField>,
}

impl LowerOrder {
    pub fn none() -> Self {
        LowerOrder::default()
    }
}

/// Offset of `idx` by `s` along `axis`, as a flat index.
fn shifted(grid: &Grid, k: usize, axis: usize, s: isize) -> usize {
    (k as isize + s * grid.stride(axis) as isize) as usize
}

fn on_boundary(grid: &Grid, idx: &[usize]) -> bool {
    idx.iter().enumerate().any(|(a, &i)| i == 0 || i == grid.intervals(a))
}

/// Centered first differences; zero on the boundary layer.
pub fn gradient(w: &GridFunction) -> Vec<GridFunction> {
    let g = w.grid();
    let v = w.values();
    (0..g.dim())
        .map(|a| {
            let h2 = 2.0 * g.h(a);
            let vals = (0..g.len())
                .into_par_iter()
                .map(|k| {
                    if on_boundary(g, &g.multi(k)) {
                        0.0
                    } else {
                        (v[shifted(g, k, a, 1)] - v[shifted(g, k, a, -1)]) / h2
                    }
                })
                .collect();
            GridFunction::from_values(g.clone(), vals)
        })
        .collect()
}

fn assert_compact(w: &GridFunction) {
    let g = w.grid();
    for k in 0..g.len() {
        if on_boundary(g, &g.multi(k)) {
            assert!(w.values()[k] == 0.0, "w must vanish on the grid boundary");
        }
    }
}

/// `Pw = Σ Q_jk ∂_j∂_k w + b·∇w + c w` with the three-point second
/// difference on the diagonal and products of centered first differences
/// off it. Exact on quadratics.
pub fn apply_operator(q: &MetricField, lower: &LowerOrder, w: &GridFunction) -> GridFunction {
    let g = w.grid();
    let n = g.dim();
    assert_eq!(q.dim(), n, "metric and grid dimensions differ");
    assert_compact(w);
    let v = w.values();
    let vals = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let idx = g.multi(k);
            if on_boundary(g, &idx) {
                return 0.0;
            }
            let x = g.point(k);
            let qx = q.at(&x);
            let mut s = 0.0;
            for j in 0..n {
                let hj = g.h(j);
                s += qx[(j, j)] * (v[shifted(g, k, j, 1)] - 2.0 * v[k] + v[shifted(g, k, j, -1)]) / (hj * hj);
                for l in j + 1..n {
                    let pp = shifted(g, shifted(g, k, j, 1), l, 1);
                    let pm = shifted(g, shifted(g, k, j, 1), l, -1);
                    let mp = shifted(g, shifted(g, k, j, -1), l, 1);
                    let mm = shifted(g, shifted(g, k, j, -1), l, -1);
                    let d = (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * hj * g.h(l));
                    s += 2.0 * qx[(j, l)] * d;
                }
            }
            if let Some(b) = &lower.b {
                for (a, ba) in b.iter().enumerate() {
                    let d = (v[shifted(g, k, a, 1)] - v[shifted(g, k, a, -1)]) / (2.0 * g.h(a));
                    s += ba.value(&x) * d;
                }
            }
            if let Some(c) = &lower.c {
                s += c.value(&x) * v[k];
            }
            s
        })
        .collect();
    GridFunction::from_values(g.clone(), vals)
}

/// One Carleman evaluation. `ratio` is NaN when `w ≡ 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CarlemanSample {
    pub lambda: f64,
    pub lhs: f64,
    pub rhs1: f64,
    pub rhs2: f64,
    pub ratio: f64,
    /// `‖e^{−λφ}∇w‖`, before the `λ^{1/2}` factor.
    pub grad_norm: f64,
    /// `‖e^{−λφ}w‖`, before the `λ^{3/2}` factor.
    pub w_norm: f64,
    /// Whether `w ≡ 0`.
    pub empty: bool,
}

/// `Pw`, `∇w` and `φ` on the grid, reused across λ.
pub struct Prepared {
    w: GridFunction,
    pw: GridFunction,
    grad: Vec<GridFunction>,
    phi: Vec<f64>,
}

impl Prepared {
    pub fn new(q: &MetricField, lower: &LowerOrder, weight: &WeightSpec, w: &GridFunction) -> Self {
        let g = w.grid();
        let phi = (0..g.len()).into_par_iter().map(|k| weight.phi.value(&g.point(k))).collect();
        Prepared {
            w: w.clone(),
            pw: apply_operator(q, lower, w),
            grad: gradient(w),
            phi,
        }
    }

    pub fn ratio(&self, lambda: f64) -> Result<CarlemanSample> {
        assert!(lambda > 0.0, "lambda must be positive");
        let g = self.w.grid();
        let wv = self.w.values();
        let empty = wv.iter().all(|&x| x == 0.0);
        if empty {
            return Ok(CarlemanSample {
                lambda,
                lhs: 0.0,
                rhs1: 0.0,
                rhs2: 0.0,
                ratio: f64::NAN,
                grad_norm: 0.0,
                w_norm: 0.0,
                empty: true,
            });
        }
        // min of φ over the nodes where w, Pw or ∇w is nonzero
        let active = |k: usize| wv[k] != 0.0 || self.pw.values()[k] != 0.0 || self.grad.iter().any(|d| d.values()[k] != 0.0);
        let shift = (0..g.len())
            .filter(|&k| active(k))
            .map(|k| self.phi[k])
            .fold(f64::INFINITY, f64::min);
        let weight: Vec<f64> = (0..g.len())
            .map(|k| if active(k) { (-2.0 * lambda * (self.phi[k] - shift)).exp() } else { 0.0 })
            .collect();
        if weight.iter().any(|x| !x.is_finite()) {
            return Err(Error::Range(format!("e^(-lambda phi) overflows at lambda = {lambda}")));
        }
        let weighted = |f: &dyn Fn(usize) -> f64| -> f64 {
            let vals = (0..g.len()).map(|k| weight[k] * f(k)).collect();
            GridFunction::from_values(g.clone(), vals).integral().max(0.0).sqrt()
        };
        let lhs = weighted(&|k| self.pw.values()[k].powi(2));
        let grad_norm = weighted(&|k| self.grad.iter().map(|d| d.values()[k].powi(2)).sum());
        let w_norm = weighted(&|k| wv[k] * wv[k]);
        let rhs1 = lambda.sqrt() * grad_norm;
        let rhs2 = lambda.powf(1.5) * w_norm;
        Ok(CarlemanSample {
            lambda,
            lhs,
            rhs1,
            rhs2,
            ratio: lhs / (rhs1 + rhs2),
            grad_norm,
            w_norm,
            empty: false,
        })
    }
}

pub fn carleman_ratio(
    q: &MetricField,
    lower: &LowerOrder,
    weight: &WeightSpec,
    w: &GridFunction,
    lambda: f64,
) -> Result<CarlemanSample> {
    Prepared::new(q, lower, weight, w).ratio(lambda)
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanRow {
    pub test: usize,
    #[serde(flatten)]
    pub sample: CarlemanSample,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanReport {
    pub lambdas: Vec<f64>,
    pub mu: f64,
    pub n_tests: usize,
    /// `min` over the corpus of the ratio, per λ.
    pub r_min: Vec<f64>,
    /// Consecutive λ pairs over which `r_min` decreases.
    pub decreasing: Vec<(f64, f64)>,
    /// Median over the corpus of the fitted log–log slope of
    /// `rhs1 / ‖e^{−λφ}∇w‖`.
    pub slope_rhs1: f64,
    /// Same for `rhs2 / ‖e^{−λφ}w‖`.
    pub slope_rhs2: f64,
    #[serde(skip)]
    pub rows: Vec<CarlemanRow>,
}

impl CarlemanReport {
    /// `min r_min(λ)` over `λ ≥ from`.
    pub fn r_star(&self, from: f64) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.r_min)
            .filter(|(l, _)| **l >= from)
            .map(|(_, r)| *r)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn lambda_sweep(
    q: &MetricField,
    lower: &LowerOrder,
    weight: &WeightSpec,
    corpus: &[GridFunction],
    lambdas: &[f64],
) -> Result<CarlemanReport> {
    assert!(!corpus.is_empty(), "corpus must be nonempty");
    assert!(lambdas.windows(2).all(|w| w[0] < w[1]), "lambdas must increase");
    let mut rows = Vec::new();
    let mut r_min = vec![f64::INFINITY; lambdas.len()];
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    for (t, w) in corpus.iter().enumerate() {
        let prep = Prepared::new(q, lower, weight, w);
        let mut samples = Vec::new();
        for (i, &l) in lambdas.iter().enumerate() {
            let s = prep.ratio(l)?;
            if !s.empty {
                r_min[i] = r_min[i].min(s.ratio);
            }
            samples.push(s);
            rows.push(CarlemanRow { test: t, sample: s });
        }
        if samples.iter().all(|s| !s.empty) {
            let ll: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
            s1.push(fit_slope(&ll, &samples.iter().map(|s| (s.rhs1 / s.grad_norm).ln()).collect::<Vec<_>>()));
            s2.push(fit_slope(&ll, &samples.iter().map(|s| (s.rhs2 / s.w_norm).ln()).collect::<Vec<_>>()));
        }
    }
    let decreasing = (1..lambdas.len())
        .filter(|&i| r_min[i] < r_min[i - 1])
        .map(|i| (lambdas[i - 1], lambdas[i]))
        .collect();
    Ok(CarlemanReport {
        lambdas: lambdas.to_vec(),
        mu: weight.mu,
        n_tests: corpus.len(),
        r_min,
        decreasing,
        slope_rhs1: median(&mut s1),
        slope_rhs2: median(&mut s2),
        rows,
    })
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// `count` test functions on `grid`, each a signed superposition of one to
/// five tensor bumps supported inside the grid box.
pub fn bump_superpositions(grid: &Grid, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.dim();
    (0..count)
        .map(|_| {
            let terms: Vec<(f64, TensorBump)> = (0..rng.gen_range(1..=5))
                .map(|_| {
                    let mut center = Vec::with_capacity(n);
                    let mut radius = Vec::with_capacity(n);
                    for a in 0..n {
                        let width = grid.hi(a) - grid.lo(a);
                        let r = width * rng.gen_range(0.1..0.25);
                        let margin = r + 2.0 * grid.h(a);
                        center.push(rng.gen_range(grid.lo(a) + margin..grid.hi(a) - margin));
                        radius.push(r);
                    }
                    let c = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    (c, TensorBump::new(center, radius))
                })
                .collect();
            GridFunction::from_fn(grid.clone(), |y| terms.iter().map(|(c, b)| c * b.value(y)).sum())
        })
        .collect()
}

/// Evaluates a field on every grid node.
pub fn sample_field(grid: &Grid, f: &ScalarField) -> GridFunction {
    GridFunction::from_fn(grid.clone(), |y| f.value(&DVector::from_column_slice(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use nalgebra::DMatrix;

    fn wave() -> MetricField {
        MetricField::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0])))
    }

    fn psi() -> ScalarField {
        ScalarField::from_expr(2, Expr::parse("x1 - 1 - 2*x0^2").unwrap())
    }

    fn grid(n: usize) -> Grid {
        Grid::new(vec![-0.5, 0.5], vec![0.5, 1.5], vec![n, n])
    }

    #[test]
    fn weight_matches_direct_exponential() {
        let w = build_weight(&psi(), 1.0);
        for x in [[0.1f64, 0.9], [-0.3, 1.2], [0.0, 1.0]] {
            let p = DVector::from_column_slice(&x);
            let direct = (x[1] - 1.0 - 2.0 * x[0] * x[0]).exp() - 1.0;
            assert!((w.phi.value(&p) - direct).abs() < 1e-14);
            assert!((w.phi.grad(&p) - w.psi.grad(&p) * (direct + 1.0)).norm() < 1e-12);
        }
        let pts: Vec<Point> = (0..50).map(|k| DVector::from_vec(vec![-0.5 + k as f64 / 50.0, 0.6 + k as f64 / 60.0])).collect();
        w.validate(&pts).unwrap();
    }

    #[test]
    #[should_panic]
    fn nonpositive_mu_is_rejected() {
        build_weight(&psi(), 0.0);
    }

    #[test]
    fn stencil_is_exact_on_quadratics() {
        let g = Grid::cube(2, 16);
        let q = MetricField::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]));
        let w = GridFunction::from_fn(g.clone(), |y| {
            let inner = y[0].abs() < 1.0 && y[1].abs() < 1.0;
            if inner { y[0] * y[0] + 3.0 * y[0] * y[1] - y[1] * y[1] } else { 0.0 }
        });
        let pw = apply_operator(&q, &LowerOrder::none(), &w);
        // 2·1 + 2·0.3·3 + 2·2·(−1) = −0.2, away from the boundary ring
        let k = g.flat(&[8, 8]);
        assert!((pw.values()[k] + 0.2).abs() < 1e-12);
        assert!(apply_operator(&q, &LowerOrder::none(), &GridFunction::zeros(g)).is_zero());
    }

    #[test]
    fn wave_operator_is_second_order() {
        // w = sin(π(t+y))·B with B a bump; □w computed analytically
        let err = |n: usize| {
            let g = Grid::cube(2, n);
            let b = TensorBump::new(vec![0.0, 0.0], vec![0.7, 0.7]);
            let w = GridFunction::from_fn(g.clone(), |y| (std::f64::consts::PI * (y[0] + y[1])).sin() * b.value(y));
            let pw = apply_operator(&wave(), &LowerOrder::none(), &w);
            let exact = |y: &[f64]| {
                let pi = std::f64::consts::PI;
                let s = (pi * (y[0] + y[1])).sin();
                let c = (pi * (y[0] + y[1])).cos();
                let d = |a: [usize; 2]| b.deriv(&a, y);
                // (−∂ₜ² + ∂ᵧ²)(sB); the s'' terms cancel
                -(2.0 * pi * c * d([1, 0]) + s * d([2, 0])) + (2.0 * pi * c * d([0, 1]) + s * d([0, 2]))
            };
            (0..g.len()).map(|k| (pw.values()[k] - exact(&g.coords(k))).abs()).fold(0.0, f64::max)
        };
        let ratio = err(128) / err(256);
        assert!(ratio > 3.5, "{ratio}");
    }

    #[test]
    fn ratio_examples() {
        let g = grid(64);
        let weight = build_weight(&psi(), 1.0);
        let z = carleman_ratio(&wave(), &LowerOrder::none(), &weight, &GridFunction::zeros(g.clone()), 8.0).unwrap();
        assert!(z.empty && z.ratio.is_nan());
        let w = &bump_superpositions(&g, 1, 3)[0];
        let a = carleman_ratio(&wave(), &LowerOrder::none(), &weight, w, 8.0).unwrap();
        assert!(a.ratio > 0.0 && a.ratio.is_finite());
        let b = carleman_ratio(&wave(), &LowerOrder::none(), &weight, &w.scaled(2.0), 8.0).unwrap();
        assert!((b.lhs / a.lhs - 2.0).abs() < 1e-12);
        assert!((b.ratio / a.ratio - 1.0).abs() < 1e-12);
        // adding a constant to φ changes nothing after the shift
        let shifted = WeightSpec {
            phi: ScalarField::lin_comb(&[(1.0, &weight.phi), (3.0, &ScalarField::constant(2, 1.0))]),
            ..weight.clone()
        };
        let c = carleman_ratio(&wave(), &LowerOrder::none(), &shifted, w, 8.0).unwrap();
        assert!((c.ratio / a.ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lambda_powers_are_wired() {
        let g = grid(48);
        let weight = build_weight(&psi(), 1.0);
        let corpus = bump_superpositions(&g, 3, 5);
        let r = lambda_sweep(&wave(), &LowerOrder::none(), &weight, &corpus, &DEFAULT_LAMBDAS).unwrap();
        assert!((r.slope_rhs1 - 0.5).abs() < 1e-12);
        assert!((r.slope_rhs2 - 1.5).abs() < 1e-12);
        assert_eq!(r.rows.len(), 3 * DEFAULT_LAMBDAS.len());
    }
}
