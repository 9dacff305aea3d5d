//! Sampling and optimization on sections of the unit sphere cut out by one
//! quadratic form and a set of linear functionals:
//! `{ξ : |ξ| = 1, ξᵀAξ = 0, ℓᵢ·ξ = 0}`.
//!
//! The linear constraints are eliminated exactly by working in an
//! orthonormal basis of their common kernel; the quadratic constraint is
//! met by tangentially projected Newton steps followed by renormalization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Maximum Newton steps when projecting a seed onto the section.
pub const MAX_NEWTON: usize = 30;

/// Angular radius under which two samples are merged.
pub const MERGE_ANGLE: f64 = 1e-3;

/// Deterministic, roughly uniform points on `𝕊^{dim−1}`.
///
/// `dim = 3` uses the Fibonacci lattice; other dimensions use normalized
/// Gaussian vectors from a fixed-seed generator.
pub fn sphere_seeds(dim: usize, count: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 1, "sphere dimension must be positive");
    if dim == 3 {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        return (0..count)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let a = golden * i as f64;
                DVector::from_vec(vec![r * a.cos(), r * a.sin(), z])
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + dim as u64);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = DVector::from_fn(dim, |_, _| gaussian(&mut rng));
        let n = v.norm();
        if n > 1e-8 {
            out.push(v / n);
        }
    }
    out
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Orthonormal basis (as columns) of `{v : ℓᵢ·v = 0 ∀i}`.
pub fn kernel_basis(dim: usize, linear: &[DVector<f64>]) -> DMatrix<f64> {
    if linear.is_empty() {
        return DMatrix::identity(dim, dim);
    }
    let mut l = DMatrix::zeros(linear.len(), dim);
    for (i, row) in linear.iter().enumerate() {
        assert_eq!(row.len(), dim, "functional dimension mismatch");
        l.set_row(i, &row.transpose());
    }
    let gram = l.transpose() * &l;
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = (0..dim)
        .filter(|&k| eig.eigenvalues[k].abs() <= 1e-12 * scale)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    DMatrix::from_columns(&cols)
}

/// The set `{ξ ∈ 𝕊^{n−1} : ξᵀAξ = 0, Lξ = 0}`.
#[derive(Debug, Clone)]
pub struct QuadricSection {
    a: DMatrix<f64>,
    basis: DMatrix<f64>,
    a_w: DMatrix<f64>,
}

/// Whether a quadratic form restricted to a subspace is definite, i.e.
/// whether its null set on the unit sphere is empty.
fn is_definite(a: &DMatrix<f64>) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    let eig = SymmetricEigen::new(a.clone());
    let scale = eig.eigenvalues.amax();
    if scale == 0.0 {
        return false;
    }
    let tol = 1e-12 * scale;
    eig.eigenvalues.iter().all(|&l| l > tol) || eig.eigenvalues.iter().all(|&l| l < -tol)
}

impl QuadricSection {
    pub fn new(a: DMatrix<f64>, linear: &[DVector<f64>]) -> Self {
        assert!(a.is_square(), "quadratic form must be square");
        let a = (&a + a.transpose()) * 0.5;
        let basis = kernel_basis(a.nrows(), linear);
        let a_w = basis.transpose() * &a * &basis;
        QuadricSection { a, basis, a_w }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Dimension of the linear subspace the section lives in.
    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Decided exactly from the definiteness of `A` on the kernel.
    pub fn is_empty(&self) -> bool {
        is_definite(&self.a_w)
    }

    /// `|ξᵀAξ|`.
    pub fn residual(&self, xi: &DVector<f64>) -> f64 {
        xi.dot(&(&self.a * xi)).abs()
    }

    fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.basis * z
    }

    fn reduce(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * xi
    }

    /// Projected Newton from `seed`; `None` if the seed is orthogonal to the
    /// kernel or the iteration fails to reach `eps`.
    pub fn project(&self, seed: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
        let z0 = self.reduce(seed);
        let n0 = z0.norm();
        if n0 < 1e-8 {
            return None;
        }
        let z = self.newton(z0 / n0, eps)?;
        Some(self.lift(&z))
    }

    fn newton(&self, mut z: DVector<f64>, eps: f64) -> Option<DVector<f64>> {
        let f = |z: &DVector<f64>| z.dot(&(&self.a_w * z));
        let mut r = f(&z);
        for _ in 0..MAX_NEWTON {
            if r.abs() <= 1e-3 * eps {
                break;
            }
            let g = &self.a_w * &z * 2.0;
            let gt = &g - &z * z.dot(&g);
            let g2 = gt.norm_squared();
            if g2 < 1e-24 {
                return None;
            }
            let step = gt * (-r / g2);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let cand = (&z + &step * t).normalize();
                let rc = f(&cand);
                if rc.abs() < r.abs() {
                    z = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (r.abs() <= eps).then_some(z)
    }

    /// Projects every seed and merges results closer than [`MERGE_ANGLE`].
    pub fn sample(&self, seeds: &[DVector<f64>], eps: f64) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        for s in seeds {
            if let Some(xi) = self.project(s, eps) {
                push_unique(&mut out, xi);
            }
        }
        out
    }

    /// Local extremum of `ξᵀBξ` on the section, starting from a point of it.
    ///
    /// Riemannian gradient steps with Armijo backtracking; each trial point
    /// is pulled back onto the section by [`QuadricSection::project`].
    pub fn refine(
        &self,
        start: &DVector<f64>,
        b: &DMatrix<f64>,
        minimize: bool,
        eps: f64,
    ) -> DVector<f64> {
        let sign = if minimize { 1.0 } else { -1.0 };
        let b_w = self.basis.transpose() * b * &self.basis * sign;
        let obj = |z: &DVector<f64>| z.dot(&(&b_w * z));
        let mut z = self.reduce(start).normalize();
        let mut fz = obj(&z);
        for _ in 0..200 {
            let g = &b_w * &z * 2.0;
            let g = self.tangent(&z, &g);
            let gn2 = g.norm_squared();
            if gn2 < 1e-28 {
                break;
            }
            let mut t = 1.0 / (2.0 * b_w.amax().max(1e-300));
            let mut moved = false;
            for _ in 0..40 {
                let trial = (&z - &g * t).normalize();
                if let Some(cand) = self.newton(trial, eps) {
                    let fc = obj(&cand);
                    if fc <= fz - 1e-4 * t * gn2 {
                        z = cand;
                        fz = fc;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        self.lift(&z)
    }

    /// Component of `v` tangent to the section at `z` (reduced coordinates).
    fn tangent(&self, z: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v - z * z.dot(v);
        let n = &self.a_w * z;
        let n = &n - z * z.dot(&n);
        let nn = n.norm_squared();
        if nn > 1e-24 {
            out -= &n * (n.dot(&out) / nn);
        }
        out
    }
}

/// Appends `xi` unless a stored sample lies within [`MERGE_ANGLE`].
pub fn push_unique(samples: &mut Vec<DVector<f64>>, xi: DVector<f64>) {
    let close = samples
        .iter()
        .any(|s| s.dot(&xi).clamp(-1.0, 1.0).acos() < MERGE_ANGLE);
    if !close {
        samples.push(xi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn flat3() -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]))
    }

    #[test]
    fn seeds_are_unit() {
        for dim in [2, 3, 4, 5] {
            let s = sphere_seeds(dim, 50);
            assert_eq!(s.len(), 50);
            assert!(s.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn kernel_basis_is_orthonormal_complement() {
        let l = vec![DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0])];
        let b = kernel_basis(4, &l);
        assert_eq!(b.ncols(), 3);
        assert!((b.transpose() * &b - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!((l[0].transpose() * &b).amax() < 1e-12);
    }

    #[test]
    fn null_cone_slice_has_four_points() {
        let sec = QuadricSection::new(flat3(), &[DVector::from_vec(vec![0.0, 1.0, 0.0])]);
        assert!(!sec.is_empty());
        let pts = sec.sample(&sphere_seeds(3, 200), 1e-12);
        assert_eq!(pts.len(), 4);
        for p in &pts {
            assert!((p[0].abs() - FRAC_1_SQRT_2).abs() < 1e-10);
            assert!(p[1].abs() < 1e-14);
            assert!(sec.residual(p) <= 1e-12);
        }
    }

    #[test]
    fn definite_form_gives_empty_section() {
        let sec = QuadricSection::new(DMatrix::identity(3, 3), &[]);
        assert!(sec.is_empty());
        assert!(sec.sample(&sphere_seeds(3, 20), 1e-10).is_empty());
    }

    #[test]
    fn refine_finds_extremum_on_circle() {
        // null cone of diag(−1,1,1,1) within e₂⊥ is a circle τ² = η₁² + η₃²
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0, 1.0]));
        let sec = QuadricSection::new(q, &[DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0])]);
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]));
        let start = sec.sample(&sphere_seeds(4, 10), 1e-12)[0].clone();
        let lo = sec.refine(&start, &b, true, 1e-12);
        let hi = sec.refine(&start, &b, false, 1e-12);
        assert!(lo.dot(&(&b * &lo)) < 1e-10);
        assert!((hi.dot(&(&b * &hi)) - 0.5).abs() < 1e-8);
    }
}
