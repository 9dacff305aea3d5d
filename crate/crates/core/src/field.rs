//! Metric and scalar fields with derivative suppliers.
//!
//! Both field types carry analytic derivative callbacks when they are
//! available and fall back to central finite differences otherwise. The
//! fallback step is `1e-4` times the local coordinate scale `max(1, |x_j|)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::expr::Expr;

pub type Point = DVector<f64>;

/// Relative step used by every finite-difference fallback.
pub const FD_REL_STEP: f64 = 1e-4;

pub(crate) fn fd_step(xj: f64) -> f64 {
    FD_REL_STEP * xj.abs().max(1.0)
}

/// Axis-aligned region of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box corners must have equal dimension");
        assert!(
            lo.iter().zip(&hi).all(|(a, b)| a < b),
            "box must be nonempty in every axis"
        );
        BoxRegion { lo, hi }
    }

    /// Box `center ± half_width` in every axis.
    pub fn around(center: &[f64], half_width: f64) -> Self {
        BoxRegion::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Point {
        Point::from_iterator(
            self.dim(),
            self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)),
        )
    }
}

type ValueFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// `x ↦ ψ(x)` with gradient and Hessian suppliers.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    value: ValueFn,
    grad: GradFn,
    hess: HessFn,
    analytic_grad: bool,
    analytic_hess: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("analytic_grad", &self.analytic_grad)
            .field("analytic_hess", &self.analytic_hess)
            .finish()
    }
}

fn fd_grad(value: ValueFn) -> GradFn {
    Arc::new(move |x: &Point| {
        let mut g = DVector::zeros(x.len());
        let mut xp = x.clone();
        for j in 0..x.len() {
            let h = fd_step(x[j]);
            xp[j] = x[j] + h;
            let fp = value(&xp);
            xp[j] = x[j] - h;
            let fm = value(&xp);
            xp[j] = x[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
        g
    })
}

fn fd_hess(grad: GradFn) -> HessFn {
    Arc::new(move |x: &Point| {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        let mut xp = x.clone();
        for j in 0..n {
            let s = fd_step(x[j]);
            xp[j] = x[j] + s;
            let gp = grad(&xp);
            xp[j] = x[j] - s;
            let gm = grad(&xp);
            xp[j] = x[j];
            h.set_column(j, &((gp - gm) / (2.0 * s)));
        }
        (&h + h.transpose()) * 0.5
    })
}

impl ScalarField {
    /// Field from a value callback only; derivatives by finite differences.
    pub fn from_fn(dim: usize, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        let value: ValueFn = Arc::new(f);
        let grad = fd_grad(value.clone());
        let hess = fd_hess(grad.clone());
        ScalarField {
            dim,
            value,
            grad,
            hess,
            analytic_grad: false,
            analytic_hess: false,
        }
    }

    /// Supplies an analytic gradient. Without an explicit Hessian supplier
    /// the Hessian falls back to differences of this gradient.
    pub fn with_grad(
        mut self,
        g: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Arc::new(g);
        self.analytic_grad = true;
        if !self.analytic_hess {
            self.hess = fd_hess(self.grad.clone());
        }
        self
    }

    pub fn with_hess(
        mut self,
        h: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Arc::new(h);
        self.analytic_hess = true;
        self
    }

    /// Field defined by a closed-form expression; all derivatives analytic.
    pub fn from_expr(dim: usize, expr: Expr) -> Self {
        if let Some(k) = expr.max_var() {
            assert!(k < dim, "expression uses x{k} but the field has dimension {dim}");
        }
        let expr = Arc::new(expr);
        let (e1, e2, e3) = (expr.clone(), expr.clone(), expr);
        ScalarField {
            dim,
            value: Arc::new(move |x: &Point| e1.eval(x.as_slice())),
            grad: Arc::new(move |x: &Point| DVector::from_vec(e2.jet(x.as_slice()).grad)),
            hess: Arc::new(move |x: &Point| {
                let n = x.len();
                DMatrix::from_row_slice(n, n, &e3.jet(x.as_slice()).hess)
            }),
            analytic_grad: true,
            analytic_hess: true,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        ScalarField {
            dim,
            value: Arc::new(move |_| c),
            grad: Arc::new(move |_| DVector::zeros(dim)),
            hess: Arc::new(move |_| DMatrix::zeros(dim, dim)),
            analytic_grad: true,
            analytic_hess: true,
        }
    }

    /// `x ↦ a·x + b`.
    pub fn linear(coeffs: DVector<f64>, offset: f64) -> Self {
        let dim = coeffs.len();
        let (c1, c2) = (coeffs.clone(), coeffs);
        ScalarField {
            dim,
            value: Arc::new(move |x: &Point| c1.dot(x) + offset),
            grad: Arc::new(move |_| c2.clone()),
            hess: Arc::new(move |_| DMatrix::zeros(dim, dim)),
            analytic_grad: true,
            analytic_hess: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Point) -> DVector<f64> {
        (self.grad)(x)
    }

    pub fn hess(&self, x: &Point) -> DMatrix<f64> {
        (self.hess)(x)
    }

    pub fn has_analytic_grad(&self) -> bool {
        self.analytic_grad
    }

    pub fn has_analytic_hess(&self) -> bool {
        self.analytic_hess
    }

    /// `Σ cᵢ·fᵢ`, derivatives by linearity.
    pub fn lin_comb(terms: &[(f64, &ScalarField)]) -> Self {
        assert!(!terms.is_empty(), "empty linear combination");
        let dim = terms[0].1.dim;
        assert!(terms.iter().all(|(_, f)| f.dim == dim), "dimension mismatch");
        let owned: Arc<Vec<(f64, ScalarField)>> =
            Arc::new(terms.iter().map(|(c, f)| (*c, (*f).clone())).collect());
        let (t1, t2, t3) = (owned.clone(), owned.clone(), owned.clone());
        ScalarField {
            dim,
            value: Arc::new(move |x: &Point| t1.iter().map(|(c, f)| c * f.value(x)).sum()),
            grad: Arc::new(move |x: &Point| {
                t2.iter()
                    .fold(DVector::zeros(dim), |acc, (c, f)| acc + f.grad(x) * *c)
            }),
            hess: Arc::new(move |x: &Point| {
                t3.iter()
                    .fold(DMatrix::zeros(dim, dim), |acc, (c, f)| acc + f.hess(x) * *c)
            }),
            analytic_grad: owned.iter().all(|(_, f)| f.analytic_grad),
            analytic_hess: owned.iter().all(|(_, f)| f.analytic_hess),
        }
    }

    /// `self − λ·other²`, derivatives by the product rule.
    pub fn minus_scaled_square(&self, lambda: f64, other: &ScalarField) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (a.clone(), b.clone());
        let (a3, b3) = (a.clone(), b.clone());
        ScalarField {
            dim: self.dim,
            value: Arc::new(move |x: &Point| {
                let v = b.value(x);
                a.value(x) - lambda * v * v
            }),
            grad: Arc::new(move |x: &Point| a2.grad(x) - b2.grad(x) * (2.0 * lambda * b2.value(x))),
            hess: Arc::new(move |x: &Point| {
                let g = b3.grad(x);
                a3.hess(x) - (&g * g.transpose() + b3.hess(x) * b3.value(x)) * (2.0 * lambda)
            }),
            analytic_grad: self.analytic_grad && other.analytic_grad,
            analytic_hess: self.analytic_hess && other.analytic_hess,
        }
    }

    /// `f ∘ self` where `f` returns `(f, f', f'')` at a value.
    pub fn compose(
        &self,
        f: impl Fn(f64) -> (f64, f64, f64) + Send + Sync + 'static,
    ) -> Self {
        let f = Arc::new(f);
        let (s1, s2, s3) = (self.clone(), self.clone(), self.clone());
        let (f1, f2, f3) = (f.clone(), f.clone(), f);
        ScalarField {
            dim: self.dim,
            value: Arc::new(move |x: &Point| f1(s1.value(x)).0),
            grad: Arc::new(move |x: &Point| s2.grad(x) * f2(s2.value(x)).1),
            hess: Arc::new(move |x: &Point| {
                let (_, d1, d2) = f3(s3.value(x));
                let g = s3.grad(x);
                s3.hess(x) * d1 + &g * g.transpose() * d2
            }),
            analytic_grad: self.analytic_grad,
            analytic_hess: self.analytic_hess,
        }
    }

    /// `ψ ∘ κ` for a map `κ` with Jacobian `κ'`. Gradient is `κ'ᵀ∇ψ(κ)`;
    /// the Hessian is differenced from that gradient.
    pub fn compose_map(
        &self,
        map: impl Fn(&Point) -> Point + Send + Sync + 'static,
        jacobian: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let map = Arc::new(map);
        let jac = Arc::new(jacobian);
        let (s1, s2) = (self.clone(), self.clone());
        let m1 = map.clone();
        let dim = self.dim;
        ScalarField::from_fn(dim, move |y| s1.value(&m1(y)))
            .with_grad(move |y| jac(y).transpose() * s2.grad(&map(y)))
    }
}

type MatFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
type DerivFn = Arc<dyn Fn(&Point, usize) -> DMatrix<f64> + Send + Sync>;

/// `x ↦ Q(x)`, a symmetric matrix field, with a first-derivative supplier.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    eval: MatFn,
    deriv: DerivFn,
    analytic_deriv: bool,
    domain: Option<BoxRegion>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("analytic_deriv", &self.analytic_deriv)
            .field("domain", &self.domain)
            .finish()
    }
}

fn fd_metric_deriv(eval: MatFn) -> DerivFn {
    Arc::new(move |x: &Point, j: usize| {
        let h = fd_step(x[j]);
        let mut xp = x.clone();
        xp[j] = x[j] + h;
        let qp = eval(&xp);
        xp[j] = x[j] - h;
        let qm = eval(&xp);
        (qp - qm) / (2.0 * h)
    })
}

impl MetricField {
    pub fn constant(q: DMatrix<f64>) -> Self {
        assert!(q.is_square(), "metric must be square");
        let dim = q.nrows();
        MetricField {
            dim,
            eval: Arc::new(move |_| q.clone()),
            deriv: Arc::new(move |_, _| DMatrix::zeros(dim, dim)),
            analytic_deriv: true,
            domain: None,
        }
    }

    /// Metric from a callback; derivatives by central differences.
    pub fn from_fn(dim: usize, f: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        let eval: MatFn = Arc::new(f);
        MetricField {
            dim,
            deriv: fd_metric_deriv(eval.clone()),
            eval,
            analytic_deriv: false,
            domain: None,
        }
    }

    pub fn with_deriv(
        mut self,
        d: impl Fn(&Point, usize) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.deriv = Arc::new(d);
        self.analytic_deriv = true;
        self
    }

    /// Metric whose entries are closed-form expressions (`entries[i][j]`
    /// must equal `entries[j][i]`); derivatives are analytic.
    pub fn from_exprs(entries: Vec<Vec<Expr>>) -> Self {
        let dim = entries.len();
        assert!(entries.iter().all(|r| r.len() == dim), "metric entries must be square");
        for i in 0..dim {
            for j in 0..i {
                assert!(entries[i][j] == entries[j][i], "metric entries must be symmetric");
            }
        }
        let entries = Arc::new(entries);
        let e1 = entries.clone();
        MetricField {
            dim,
            eval: Arc::new(move |x: &Point| {
                DMatrix::from_fn(dim, dim, |i, j| e1[i][j].eval(x.as_slice()))
            }),
            deriv: Arc::new(move |x: &Point, k: usize| {
                let mut d = DMatrix::zeros(dim, dim);
                for i in 0..dim {
                    for j in i..dim {
                        let v = entries[i][j].jet(x.as_slice()).grad[k];
                        d[(i, j)] = v;
                        d[(j, i)] = v;
                    }
                }
                d
            }),
            analytic_deriv: true,
            domain: None,
        }
    }

    /// `e^{σ(x)}·base`, a conformal rescaling of a constant form.
    pub fn conformal(sigma: Expr, base: DMatrix<f64>) -> Self {
        let dim = base.nrows();
        let sigma = Arc::new(sigma);
        let (s1, b1) = (sigma.clone(), base.clone());
        MetricField {
            dim,
            eval: Arc::new(move |x: &Point| &b1 * s1.eval(x.as_slice()).exp()),
            deriv: Arc::new(move |x: &Point, j: usize| {
                let jet = sigma.jet(x.as_slice());
                &base * (jet.value.exp() * jet.grad[j])
            }),
            analytic_deriv: true,
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: BoxRegion) -> Self {
        assert_eq!(domain.dim(), self.dim, "domain dimension mismatch");
        self.domain = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Option<&BoxRegion> {
        self.domain.as_ref()
    }

    pub fn at(&self, x: &Point) -> DMatrix<f64> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        (self.eval)(x)
    }

    /// `∂Q/∂x_j` at `x`.
    pub fn deriv(&self, x: &Point, j: usize) -> DMatrix<f64> {
        (self.deriv)(x, j)
    }

    pub fn derivs(&self, x: &Point) -> Vec<DMatrix<f64>> {
        (0..self.dim).map(|j| self.deriv(x, j)).collect()
    }

    pub fn has_analytic_deriv(&self) -> bool {
        self.analytic_deriv
    }

    /// Symmetry of `Q(x)` to `1e-12` relative.
    pub fn is_symmetric_at(&self, x: &Point) -> bool {
        let q = self.at(x);
        let scale = q.amax().max(f64::MIN_POSITIVE);
        (&q - q.transpose()).amax() <= 1e-12 * scale
    }

    /// The metric scaled by a constant factor.
    pub fn scaled(&self, c: f64) -> Self {
        let (e, d) = (self.eval.clone(), self.deriv.clone());
        MetricField {
            dim: self.dim,
            eval: Arc::new(move |x: &Point| e(x) * c),
            deriv: Arc::new(move |x: &Point, j: usize| d(x, j) * c),
            analytic_deriv: self.analytic_deriv,
            domain: self.domain.clone(),
        }
    }
}
