//! Principal symbol evaluation, Hamiltonian brackets, signature analysis
//! and metric pullback.
//!
//! For `p(x,ξ) = ⟨Q(x)ξ,ξ⟩` the Hamiltonian field acts on a function of `x`
//! by `H_pψ = 2⟨Q(x)ξ, dψ(x)⟩`, and `H_p²ψ = {p,{p,ψ}}` is assembled in
//! closed form from `Q`, `∂Q`, `∇ψ` and `∇²ψ` by [`hp2`]. [`hp2_bracket`]
//! computes the same quantity from nested Poisson brackets using only
//! point evaluations and serves as an independent check.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{fd_step, MetricField, Point, ScalarField};

/// A point `(x, ξ)` of phase space; `ξ` is a covector at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Point,
    pub xi: DVector<f64>,
}

impl PhasePoint {
    pub fn new(x: Point, xi: DVector<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "x and xi must have equal dimension");
        PhasePoint { x, xi }
    }

    pub fn from_slices(x: &[f64], xi: &[f64]) -> Self {
        PhasePoint::new(Point::from_column_slice(x), DVector::from_column_slice(xi))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

fn check_dims(q: &MetricField, pp: &PhasePoint) {
    assert_eq!(q.dim(), pp.dim(), "metric and phase point dimensions differ");
}

/// `p(x,ξ) = ξᵀQ(x)ξ`.
pub fn eval_symbol(q: &MetricField, pp: &PhasePoint) -> f64 {
    check_dims(q, pp);
    let m = q.at(&pp.x);
    pp.xi.dot(&(m * &pp.xi))
}

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Signature {
    pub plus: usize,
    pub minus: usize,
    pub zero: usize,
}

impl Signature {
    /// `(n−1, 1, 0)`.
    pub fn is_lorentzian(&self) -> bool {
        self.minus == 1 && self.zero == 0 && self.plus >= 1
    }

    /// Whether some eigenvalue fell inside the zero band.
    pub fn has_near_zero(&self) -> bool {
        self.zero > 0
    }
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Counts eigenvalues above `+tol`, below `-tol` and inside `[-tol, tol]`
/// with `tol = 1e-10 · max|λ|`.
pub fn signature(m: &DMatrix<f64>) -> Signature {
    assert!(m.is_square(), "signature of a non-square matrix");
    let eig = SymmetricEigen::new(symmetric_part(m));
    let scale = eig.eigenvalues.amax();
    let tol = 1e-10 * scale;
    let mut s = Signature { plus: 0, minus: 0, zero: 0 };
    for &l in eig.eigenvalues.iter() {
        if scale == 0.0 || l.abs() <= tol {
            s.zero += 1;
        } else if l > 0.0 {
            s.plus += 1;
        } else {
            s.minus += 1;
        }
    }
    s
}

/// Returns `R` with `RᵀMR = diag(1,…,1,−1)`.
///
/// Built from the symmetric eigendecomposition: positive eigenvectors first,
/// the negative one last, each column scaled by `|λ|^{-1/2}`.
pub fn lorentz_normal_form(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let sig = signature(m);
    if !(sig.plus == n - 1 && sig.minus == 1 && sig.zero == 0) {
        return Err(Error::Signature {
            expected_plus: n - 1,
            expected_minus: 1,
            plus: sig.plus,
            minus: sig.minus,
            zero: sig.zero,
        });
    }
    let eig = SymmetricEigen::new(symmetric_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    // positives in descending order, then the single negative eigenvalue
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut r = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let scale = eig.eigenvalues[k].abs().sqrt().recip();
        r.set_column(col, &(eig.eigenvectors.column(k) * scale));
    }
    Ok(r)
}

/// `H_pψ(x,ξ) = 2⟨Q(x)ξ, dψ(x)⟩`.
pub fn hp(q: &MetricField, psi: &ScalarField, pp: &PhasePoint) -> f64 {
    check_dims(q, pp);
    let m = q.at(&pp.x);
    2.0 * (m * &pp.xi).dot(&psi.grad(&pp.x))
}

/// `H_p²ψ` together with a flag telling whether any finite-difference
/// fallback was involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hp2Value {
    pub value: f64,
    pub fd_fallback: bool,
}

/// `H_p²ψ(x,ξ)` from the closed form
///
/// `½H_p²ψ = Σⱼ ∂p/∂ξⱼ (⟨∂ⱼQ ξ, dψ⟩ + ⟨Qξ, d∂ⱼψ⟩) − ⟨∂ₓQ ξ, ξ⟩·Q dψ`.
pub fn hp2_with_meta(q: &MetricField, psi: &ScalarField, pp: &PhasePoint) -> Hp2Value {
    check_dims(q, pp);
    let x = &pp.x;
    let xi = &pp.xi;
    let m = q.at(x);
    let qxi = &m * xi;
    let g = psi.grad(x);
    let hs = psi.hess(x);
    let qg = &m * &g;
    let mut transport = 0.0;
    let mut drift = 0.0;
    for j in 0..x.len() {
        let dq = q.deriv(x, j);
        let dq_xi = &dq * xi;
        transport += 2.0 * qxi[j] * (dq_xi.dot(&g) + qxi.dot(&hs.column(j)));
        drift += xi.dot(&dq_xi) * qg[j];
    }
    Hp2Value {
        value: 2.0 * (transport - drift),
        fd_fallback: !q.has_analytic_deriv() || !psi.has_analytic_hess(),
    }
}

pub fn hp2(q: &MetricField, psi: &ScalarField, pp: &PhasePoint) -> f64 {
    hp2_with_meta(q, psi, pp).value
}

/// The symmetric matrix `A(x)` with `H_p²ψ(x,ξ) = ξᵀAξ`, recovered from
/// [`hp2`] by polarization.
pub fn hp2_form(q: &MetricField, psi: &ScalarField, x: &Point) -> DMatrix<f64> {
    let n = x.len();
    let f = |xi: DVector<f64>| hp2(q, psi, &PhasePoint::new(x.clone(), xi));
    let unit = |i: usize| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    };
    let diag: Vec<f64> = (0..n).map(|i| f(unit(i))).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = diag[i];
        for j in 0..i {
            let v = 0.5 * (f(unit(i) + unit(j)) - diag[i] - diag[j]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// `{p,{p,ψ}}` from nested Poisson brackets using only evaluations of `Q`
/// and `ψ`. Derivatives in `ξ` are exact (the symbol is quadratic, the inner
/// bracket linear); derivatives in `x` are central differences.
pub fn hp2_bracket(q: &MetricField, psi: &ScalarField, pp: &PhasePoint) -> f64 {
    check_dims(q, pp);
    let n = pp.dim();
    let p = |x: &Point, xi: &DVector<f64>| xi.dot(&(q.at(x) * xi));
    let unit = |j: usize| {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        e
    };
    let dp_dxi = |x: &Point, xi: &DVector<f64>, j: usize| {
        0.5 * (p(x, &(xi + unit(j))) - p(x, &(xi - unit(j))))
    };
    let dpsi_dx = |x: &Point, j: usize| {
        let h = fd_step(x[j]);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        (psi.value(&xp) - psi.value(&xm)) / (2.0 * h)
    };
    // {p, ψ}(x, ξ)
    let inner = |x: &Point, xi: &DVector<f64>| -> f64 {
        (0..n).map(|j| dp_dxi(x, xi, j) * dpsi_dx(x, j)).sum()
    };
    let x = &pp.x;
    let xi = &pp.xi;
    let mut total = 0.0;
    for j in 0..n {
        let h = fd_step(x[j]);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        let dinner_dx = (inner(&xp, xi) - inner(&xm, xi)) / (2.0 * h);
        let dp_dx = (p(&xp, xi) - p(&xm, xi)) / (2.0 * h);
        let dinner_dxi = 0.5 * (inner(x, &(xi + unit(j))) - inner(x, &(xi - unit(j))));
        total += dp_dxi(x, xi, j) * dinner_dx - dinner_dxi * dp_dx;
    }
    total
}

type MapFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type JacFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// A local diffeomorphism `κ: y ↦ x` with its Jacobian and inverse.
#[derive(Clone)]
pub struct Chart {
    dim: usize,
    forward: MapFn,
    jacobian: JacFn,
    inverse: MapFn,
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chart").field("dim", &self.dim).finish()
    }
}

impl Chart {
    pub fn new(
        dim: usize,
        forward: impl Fn(&Point) -> Point + Send + Sync + 'static,
        jacobian: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
        inverse: impl Fn(&Point) -> Point + Send + Sync + 'static,
    ) -> Self {
        Chart {
            dim,
            forward: Arc::new(forward),
            jacobian: Arc::new(jacobian),
            inverse: Arc::new(inverse),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Chart::new(dim, |y| y.clone(), move |_| DMatrix::identity(dim, dim), |x| x.clone())
    }

    /// `κ(y) = A y`.
    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        let inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Chart("linear chart matrix is singular".into()))?;
        let a2 = a.clone();
        Ok(Chart::new(a.nrows(), move |y| &a * y, move |_| a2.clone(), move |x| &inv * x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, y: &Point) -> Point {
        (self.forward)(y)
    }

    pub fn jacobian(&self, y: &Point) -> DMatrix<f64> {
        (self.jacobian)(y)
    }

    pub fn inverse(&self, x: &Point) -> Point {
        (self.inverse)(x)
    }

    /// `|κ⁻¹(κ(y)) − y|∞`.
    pub fn roundtrip_error(&self, y: &Point) -> f64 {
        (self.inverse(&self.forward(y)) - y).amax()
    }

    /// Spectral condition number of `κ'(y)`.
    pub fn condition_number(&self, y: &Point) -> f64 {
        let sv = self.jacobian(y).singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// `ψ ∘ κ`.
    pub fn pull_scalar(&self, psi: &ScalarField) -> ScalarField {
        let (f, j) = (self.forward.clone(), self.jacobian.clone());
        psi.compose_map(move |y| f(y), move |y| j(y))
    }

    /// `y ↦ Q_κ(y)` as a metric field (derivatives by differences).
    pub fn pull_metric(&self, q: &MetricField) -> MetricField {
        let chart = self.clone();
        let q = q.clone();
        MetricField::from_fn(self.dim, move |y| {
            pullback_metric(&q, &chart, y).expect("chart jacobian must be invertible on its domain")
        })
    }
}

/// `Q_κ(y) = κ'(y)⁻¹ Q(κ(y)) κ'(y)⁻ᵀ`, so that
/// `p_κ(y,η) = p(κ(y), κ'(y)⁻ᵀη)`.
pub fn pullback_metric(q: &MetricField, chart: &Chart, y: &Point) -> Result<DMatrix<f64>> {
    let jac = chart.jacobian(y);
    let sv = jac.singular_values();
    if sv.min() <= 1e-14 * sv.max().max(f64::MIN_POSITIVE) {
        return Err(Error::Chart(format!("singular jacobian at y = {:?}", y.as_slice())));
    }
    let inv = jac
        .try_inverse()
        .ok_or_else(|| Error::Chart("jacobian inversion failed".into()))?;
    let x = chart.forward(y);
    let qx = q.at(&x);
    let pulled = &inv * &qx * inv.transpose();
    let pulled = symmetric_part(&pulled);
    if signature(&pulled) != signature(&qx) {
        return Err(Error::Chart("pullback changed the signature".into()));
    }
    Ok(pulled)
}
