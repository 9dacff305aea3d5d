//! Compactly supported smooth bumps `b(s) = exp(−1/(1−s²))` and their
//! tensor products, with analytic derivatives up to order two per axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// `b^{(order)}(s)` for `order ≤ 2`; zero for `|s| ≥ 1`.
pub fn bump_1d(s: f64, order: usize) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s * s;
    let b = (-1.0 / q).exp();
    match order {
        0 => b,
        1 => -2.0 * s / (q * q) * b,
        2 => {
            let g1 = -2.0 * s / (q * q);
            let g2 = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
            (g2 + g1 * g1) * b
        }
        _ => panic!("bump derivatives are provided up to order 2"),
    }
}

/// `φ(y) = Πₐ b((yₐ − cₐ)/rₐ)`, supported in the box `c ± r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorBump {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl TensorBump {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Self {
        assert_eq!(center.len(), radius.len(), "center and radius dimensions differ");
        assert!(radius.iter().all(|&r| r > 0.0), "radii must be positive");
        TensorBump { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Derivative along one axis of the one-dimensional factor.
    pub fn factor(&self, axis: usize, y: f64, order: usize) -> f64 {
        let r = self.radius[axis];
        bump_1d((y - self.center[axis]) / r, order) / r.powi(order as i32)
    }

    /// `∂^α φ(y)`.
    pub fn deriv(&self, alpha: &[usize], y: &[f64]) -> f64 {
        (0..self.dim()).map(|a| self.factor(a, y[a], alpha[a])).product()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        (0..self.dim()).map(|a| self.factor(a, y[a], 0)).product()
    }

    pub fn support(&self, axis: usize) -> (f64, f64) {
        (self.center[axis] - self.radius[axis], self.center[axis] + self.radius[axis])
    }

    /// Errors unless the support lies strictly inside `(lo, hi)` on every axis.
    pub fn check_inside(&self, lo: &[f64], hi: &[f64]) -> Result<()> {
        for a in 0..self.dim() {
            let (s0, s1) = self.support(a);
            if s0 <= lo[a] || s1 >= hi[a] {
                return Err(Error::Support(format!(
                    "support [{s0}, {s1}] on axis {a} touches the boundary [{}, {}]",
                    lo[a], hi[a]
                )));
            }
        }
        Ok(())
    }
}

/// `count` bumps with centers in `[−0.5, 0.5]ⁿ` and radii in `[0.25, 0.45]`,
/// all supported strictly inside `(−1, 1)ⁿ`.
pub fn bump_corpus(n: usize, count: usize, seed: u64) -> Vec<TensorBump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let center = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let radius = (0..n).map(|_| rng.gen_range(0.25..0.45)).collect();
            TensorBump::new(center, radius)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-5;
        for s in [-0.7, -0.2, 0.0, 0.35, 0.8] {
            let d1 = (bump_1d(s + h, 0) - bump_1d(s - h, 0)) / (2.0 * h);
            let d2 = (bump_1d(s + h, 1) - bump_1d(s - h, 1)) / (2.0 * h);
            assert!((d1 - bump_1d(s, 1)).abs() < 1e-8);
            assert!((d2 - bump_1d(s, 2)).abs() < 1e-7);
        }
        assert_eq!(bump_1d(1.0, 0), 0.0);
        assert_eq!(bump_1d(-1.2, 2), 0.0);
    }

    #[test]
    fn corpus_is_reproducible_and_inside() {
        let a = bump_corpus(2, 20, 3);
        assert_eq!(a, bump_corpus(2, 20, 3));
        for b in &a {
            b.check_inside(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        }
        let edge = TensorBump::new(vec![0.8, 0.0], vec![0.3, 0.3]);
        assert!(matches!(edge.check_inside(&[-1.0, -1.0], &[1.0, 1.0]), Err(Error::Support(_))));
    }
}
