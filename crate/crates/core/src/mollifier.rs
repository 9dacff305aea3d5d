//! Friedrichs commutator `[a∂_j∂_l, ρ_ε∗]v` for kinked `H¹` functions.
//!
//! The mollifier is the separable product `ρ(z) = c·b(√2z₁)·b(√2z₂)`,
//! supported in the unit disc, normalized on the grid so that the discrete
//! integral is exactly one per axis. Derivatives are moved onto the kernel
//! by two integrations by parts, so only values of `v` enter:
//!
//! `a(ρ_ε∗∂_j∂_l v) − ρ_ε∗(a∂_j∂_l v) = a K_jl∗v − K_jl∗(av) + K_j∗(∂_l a v)
//! + K_l∗(∂_j a v) − K∗(∂_j∂_l a v)`,
//!
//! where `K = ρ_ε` and subscripts denote kernel derivatives. The coefficient
//! `a` therefore has to be `C²`.

use rayon::prelude::*;
use serde::Serialize;

use crate::bump::bump_1d;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid, GridFunction};

/// Smallest admissible `ε/h`.
pub const MIN_NODES_PER_EPS: f64 = 4.0;

/// Default mollification scales, halving from `ε₀ = 0.4`.
pub const DEFAULT_EPS: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// One-dimensional kernel factor and its first two derivatives on the
/// offsets `−m..=m`.
///
/// The sampled derivatives are corrected by polynomial multiples of the
/// sampled factor so that their discrete moments obey the integration by
/// parts rules `Σ zᵖK′ = −pΣ zᵖ⁻¹K`, `Σ zᵖK″ = p(p−1)Σ zᵖ⁻²K` for `p ≤ 3`
/// and `p ≤ 4`; without this the `ε⁻²` scaling of `K″` amplifies the
/// aliasing of an under-resolved kernel.
struct Kernel1D {
    m: usize,
    k: [Vec<f64>; 3],
}

impl Kernel1D {
    fn new(eps: f64, h: f64) -> Self {
        let s = std::f64::consts::SQRT_2 / eps;
        let m = (1.0 / (s * h)).ceil() as usize;
        let z: Vec<f64> = (0..=2 * m).map(|i| (i as f64 - m as f64) * h).collect();
        let raw0: Vec<f64> = z.iter().map(|&zi| bump_1d(zi * s, 0)).collect();
        let c = 1.0 / (raw0.iter().sum::<f64>() * h);
        let k0: Vec<f64> = raw0.iter().map(|v| c * v).collect();
        let k1: Vec<f64> = z.iter().map(|&zi| c * s * bump_1d(zi * s, 1)).collect();
        let k2: Vec<f64> = z.iter().map(|&zi| c * s * s * bump_1d(zi * s, 2)).collect();
        let moment = |k: &[f64], p: i32| -> f64 { k.iter().zip(&z).map(|(w, zi)| w * zi.powi(p)).sum::<f64>() * h };
        let m2 = moment(&k0, 2);
        let k1 = corrected(&k1, &k0, &z, h, &[1, 3], &[-1.0, -3.0 * m2]);
        let k2 = corrected(&k2, &k0, &z, h, &[0, 2, 4], &[0.0, 2.0, 12.0 * m2]);
        Kernel1D { m, k: [k0, k1, k2] }
    }
}

/// `k + Σ_q c_q z^{p_q} k0` with the `c_q` chosen so that the moments of
/// orders `p` equal `target`.
fn corrected(k: &[f64], k0: &[f64], z: &[f64], h: f64, p: &[i32], target: &[f64]) -> Vec<f64> {
    let moment = |f: &dyn Fn(usize) -> f64, q: i32| -> f64 { (0..z.len()).map(|i| f(i) * z[i].powi(q)).sum::<f64>() * h };
    let r = p.len();
    let a = nalgebra::DMatrix::from_fn(r, r, |row, col| moment(&|i| k0[i] * z[i].powi(p[col]), p[row]));
    let b = nalgebra::DVector::from_fn(r, |row, _| target[row] - moment(&|i| k[i], p[row]));
    let c = a.lu().solve(&b).expect("moment system is nonsingular");
    (0..z.len())
        .map(|i| k[i] + (0..r).map(|q| c[q] * z[i].powi(p[q])).sum::<f64>() * k0[i])
        .collect()
}

/// Discrete convolution with `∂^{(ox, oy)}` of the product kernel,
/// zero-padded at the grid edge.
fn convolve(f: &[f64], nx: usize, ny: usize, h: [f64; 2], kx: &Kernel1D, ky: &Kernel1D, order: [usize; 2]) -> Vec<f64> {
    let tx = &kx.k[order[0]];
    let ty = &ky.k[order[1]];
    let (mx, my) = (kx.m as isize, ky.m as isize);
    let mut tmp = vec![0.0; nx * ny];
    tmp.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let src = &f[j * nx..(j + 1) * nx];
        for (i, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (q, w) in tx.iter().enumerate() {
                let ii = i as isize - (q as isize - mx);
                if ii >= 0 && (ii as usize) < nx {
                    acc += w * src[ii as usize];
                }
            }
            *out = acc * h[0];
        }
    });
    let mut out = vec![0.0; nx * ny];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (q, w) in ty.iter().enumerate() {
            let jj = j as isize - (q as isize - my);
            if jj < 0 || jj as usize >= ny {
                continue;
            }
            let src = &tmp[jj as usize * nx..(jj as usize + 1) * nx];
            for (o, s) in row.iter_mut().zip(src) {
                *o += w * s * h[1];
            }
        }
    });
    out
}

/// `‖[a∂_j∂_l, ρ_ε∗]v‖_{L²}` summed over all components `(j, l)`, one value
/// per entry of `eps`.
///
/// Errors with [`Error::Resolution`] if some `ε < 4h`, and with
/// [`Error::Support`] unless `v` vanishes within one kernel radius of the
/// grid edge.
pub fn commutator_norms(a: &Expr, v: &GridFunction, eps: &[f64]) -> Result<Vec<f64>> {
    let g = v.grid();
    assert_eq!(g.dim(), 2, "the commutator lab runs on planar grids");
    let h = [g.h(0), g.h(1)];
    let hmax = h[0].max(h[1]);
    for &e in eps {
        if e < MIN_NODES_PER_EPS * hmax {
            return Err(Error::Resolution {
                eps: e,
                min: MIN_NODES_PER_EPS * hmax,
            });
        }
    }
    let (nx, ny) = (g.nodes_along(0), g.nodes_along(1));
    let emax = eps.iter().copied().fold(0.0, f64::max);
    let margin = [
        (emax / std::f64::consts::SQRT_2 / h[0]).ceil() as usize + 1,
        (emax / std::f64::consts::SQRT_2 / h[1]).ceil() as usize + 1,
    ];
    for k in 0..g.len() {
        let idx = g.multi(k);
        let near = idx[0] < margin[0] || idx[0] + margin[0] >= nx || idx[1] < margin[1] || idx[1] + margin[1] >= ny;
        if near && v.values()[k] != 0.0 {
            return Err(Error::Support(format!(
                "v is nonzero at {:?}, within one kernel radius of the edge",
                g.coords(k)
            )));
        }
    }

    let jets: Vec<_> = (0..g.len()).into_par_iter().map(|k| a.jet(&g.coords(k))).collect();
    let vals = v.values();
    let av: Vec<f64> = jets.iter().zip(vals).map(|(j, v)| j.value * v).collect();
    let dav: [Vec<f64>; 2] = [0, 1].map(|l| jets.iter().zip(vals).map(|(j, v)| j.grad[l] * v).collect());
    let norms = eps
        .iter()
        .map(|&e| {
            let kx = Kernel1D::new(e, h[0]);
            let ky = Kernel1D::new(e, h[1]);
            let conv = |f: &[f64], order: [usize; 2]| convolve(f, nx, ny, h, &kx, &ky, order);
            let unit = |j: usize| if j == 0 { [1, 0] } else { [0, 1] };
            let mut sq = 0.0;
            for (j, l, mult) in [(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)] {
                let ojl = [unit(j)[0] + unit(l)[0], unit(j)[1] + unit(l)[1]];
                let kv = conv(vals, ojl);
                let kav = conv(&av, ojl);
                let kj = conv(&dav[l], unit(j));
                let kl = conv(&dav[j], unit(l));
                let d2a: Vec<f64> = jets.iter().zip(vals).map(|(jt, v)| jt.hess[j * 2 + l] * v).collect();
                let k0 = conv(&d2a, [0, 0]);
                let s: f64 = (0..g.len())
                    .into_par_iter()
                    .map(|k| {
                        let d = jets[k].value * kv[k] - kav[k] + kj[k] + kl[k] - k0[k];
                        d * d
                    })
                    .collect::<Vec<f64>>()
                    .iter()
                    .sum();
                sq += mult * s * h[0] * h[1];
            }
            sq.sqrt()
        })
        .collect();
    Ok(norms)
}

/// A coefficient and a function for the commutator lab.
#[derive(Debug, Clone)]
pub struct CommutatorCase {
    pub name: String,
    pub a: Expr,
    pub v: GridFunction,
}

fn envelope(y: &[f64]) -> f64 {
    bump_1d(y[0] / 0.6, 0) * bump_1d(y[1] / 0.6, 0)
}

/// `H¹` functions with a gradient jump across a line, times a bump
/// envelope supported in `|y_a| < 0.6`.
pub fn kink_corpus(grid: &Grid) -> Vec<CommutatorCase> {
    let e = |s: &str| Expr::parse(s).expect("corpus coefficients parse");
    let case = |name: &str, a: &str, f: fn(&[f64]) -> f64| CommutatorCase {
        name: name.to_string(),
        a: e(a),
        v: GridFunction::from_fn(grid.clone(), move |y| f(y) * envelope(y)),
    };
    vec![
        case("kink_y1", "x0", |y| y[0].max(0.0)),
        case("kink_y2", "sin(x0 + x1)", |y| y[1].max(0.0)),
        case("kink_diag", "1 + x0*x1", |y| (y[0] - y[1]).abs()),
        case("kink_corner", "x0 + 0.5*x1", |y| y[0].max(0.0) * y[1].max(0.0)),
    ]
}

/// Constant coefficient: the commutator vanishes identically.
pub fn constant_case(grid: &Grid) -> CommutatorCase {
    CommutatorCase {
        name: "constant_a".to_string(),
        a: Expr::constant(2.5),
        v: GridFunction::from_fn(grid.clone(), |y| y[0].max(0.0) * envelope(y)),
    }
}

/// Smooth `v`: the commutator is `O(ε)`.
pub fn smooth_case(grid: &Grid) -> CommutatorCase {
    CommutatorCase {
        name: "smooth".to_string(),
        a: Expr::var(0),
        v: GridFunction::from_fn(grid.clone(), |y| y[0].sin() * envelope(y)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutatorReport {
    pub name: String,
    pub eps: Vec<f64>,
    pub norms: Vec<f64>,
    /// Least-squares slope of `log‖·‖` against `log ε`.
    pub rate: f64,
    /// Norms strictly decrease as `ε` halves.
    pub monotone: bool,
    /// `‖·‖(ε_min) / ‖·‖(ε_max)`.
    pub decay: f64,
}

pub fn commutator_report(case: &CommutatorCase, eps: &[f64]) -> Result<CommutatorReport> {
    let norms = commutator_norms(&case.a, &case.v, eps)?;
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&i, &j| eps[j].total_cmp(&eps[i]));
    let monotone = order.windows(2).all(|w| norms[w[1]] < norms[w[0]]);
    let decay = match (order.first(), order.last()) {
        (Some(&i), Some(&j)) if norms[i] > 0.0 => norms[j] / norms[i],
        _ => 0.0,
    };
    Ok(CommutatorReport {
        name: case.name.clone(),
        eps: eps.to_vec(),
        rate: log_slope(eps, &norms),
        norms,
        monotone,
        decay,
    })
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
