//! Uniform tensor grids, grid functions and tensor-trapezoid quadrature.

use rayon::prelude::*;
use serde::Serialize;

use crate::field::Point;

/// Uniform tensor grid on `[lo, hi]` with `dims[a]` intervals along axis `a`.
/// Node `k` has multi-index `(i₀, i₁, …)` with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    dims: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, dims: Vec<usize>) -> Self {
        assert!(lo.len() == hi.len() && lo.len() == dims.len(), "grid axis count mismatch");
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "grid must be nonempty");
        assert!(dims.iter().all(|&d| d >= 1), "grid needs at least one interval per axis");
        Grid { lo, hi, dims }
    }

    /// `[−1, 1]ⁿ` with `intervals` intervals per axis.
    pub fn cube(n: usize, intervals: usize) -> Self {
        Grid::new(vec![-1.0; n], vec![1.0; n], vec![intervals; n])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn intervals(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn nodes_along(&self, axis: usize) -> usize {
        self.dims[axis] + 1
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn h(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.dims[axis] as f64
    }

    /// Product of the spacings.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.h(a)).product()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().map(|d| d + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.dims[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + self.h(axis) * i as f64
        }
    }

    /// Offset between consecutive nodes along `axis` in the flat index.
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[..axis].iter().map(|d| d + 1).product()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| i * self.stride(a))
            .sum()
    }

    pub fn multi(&self, mut k: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|d| {
                let i = k % (d + 1);
                k /= d + 1;
                i
            })
            .collect()
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.multi(k)
            .into_iter()
            .enumerate()
            .map(|(a, i)| self.coord(a, i))
            .collect()
    }

    pub fn point(&self, k: usize) -> Point {
        Point::from_vec(self.coords(k))
    }

    /// Index of the node at coordinate `x` along `axis`, if `x` is a node.
    pub fn node_index(&self, axis: usize, x: f64) -> Option<usize> {
        let s = (x - self.lo[axis]) / self.h(axis);
        let i = s.round();
        ((s - i).abs() < 1e-9 && i >= 0.0 && i as usize <= self.dims[axis]).then_some(i as usize)
    }

    /// Node-index range `[first, last]` covering `[a, b]` along `axis`.
    pub fn index_range(&self, axis: usize, a: f64, b: f64) -> (usize, usize) {
        let h = self.h(axis);
        let first = ((a - self.lo[axis]) / h).ceil().max(0.0) as usize;
        let last = (((b - self.lo[axis]) / h).floor() as isize).clamp(0, self.dims[axis] as isize) as usize;
        (first.min(self.dims[axis]), last)
    }

    /// The grid with every other node removed; `None` if some axis has an
    /// odd number of intervals.
    pub fn coarsened(&self) -> Option<Grid> {
        if self.dims.iter().any(|d| d % 2 != 0) {
            return None;
        }
        Some(Grid::new(
            self.lo.clone(),
            self.hi.clone(),
            self.dims.iter().map(|d| d / 2).collect(),
        ))
    }
}

/// Values on the nodes of a [`Grid`].
///
/// `breaks` lists axes along which the function may jump across the
/// coordinate plane `{y_a = 0}`; quadrature then treats the two sides as
/// separate trapezoid panels, so nodes on that plane carry half weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    breaks: Vec<usize>,
}

impl GridFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len(), "value count does not match the grid");
        GridFunction {
            grid,
            values,
            breaks: Vec::new(),
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        GridFunction::from_values(grid, vec![0.0; n])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(&grid.coords(k)))
            .collect();
        GridFunction::from_values(grid, values)
    }

    pub fn with_breaks(mut self, breaks: Vec<usize>) -> Self {
        for &a in &breaks {
            assert!(a < self.grid.dim(), "break axis out of range");
            assert!(
                self.grid.node_index(a, 0.0).is_some(),
                "break plane must lie on grid nodes"
            );
        }
        self.breaks = breaks;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.values[self.grid.flat(idx)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            breaks: self.breaks.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Trapezoid weight of node index `i` along `axis`.
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        trapezoid_weight(&self.grid, &self.breaks, axis, i)
    }

    /// Tensor-trapezoid integral of the stored values, summed in node order.
    pub fn integral(&self) -> f64 {
        let g = &self.grid;
        (0..g.len())
            .into_par_iter()
            .map(|k| {
                let idx = g.multi(k);
                let w: f64 = idx.iter().enumerate().map(|(a, &i)| self.axis_weight(a, i)).product();
                w * self.values[k]
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// Discrete `L²` norm with trapezoid weights.
    pub fn l2_norm(&self) -> f64 {
        let sq = GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * v).collect(),
            breaks: self.breaks.clone(),
        };
        sq.integral().max(0.0).sqrt()
    }
}

/// Composite trapezoid weight; grid ends and break planes get half weight.
pub fn trapezoid_weight(grid: &Grid, breaks: &[usize], axis: usize, i: usize) -> f64 {
    let h = grid.h(axis);
    if i == 0 || i == grid.intervals(axis) {
        return 0.5 * h;
    }
    if breaks.contains(&axis) && grid.node_index(axis, 0.0) == Some(i) {
        return 0.5 * h;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let g = Grid::new(vec![-1.0, 0.0, 2.0], vec![1.0, 1.0, 3.0], vec![4, 3, 2]);
        assert_eq!(g.len(), 5 * 4 * 3);
        for k in [0, 7, 33, 59] {
            assert_eq!(g.flat(&g.multi(k)), k);
        }
        assert_eq!(g.coord(0, 4), 1.0);
        assert_eq!(g.node_index(0, 0.0), Some(2));
        assert_eq!(g.node_index(0, 0.1), None);
    }

    #[test]
    fn trapezoid_integrates_bilinear_exactly() {
        let g = Grid::cube(2, 8);
        let f = GridFunction::from_fn(g, |y| 1.0 + y[0] + 2.0 * y[1] + y[0] * y[1]);
        assert!((f.integral() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn break_gives_composite_rule_on_quadrant() {
        // ∫ over the closed quadrant of (1 + y₁)(1 + y₂): 1.5 · 1.5
        let g = Grid::cube(2, 16);
        let f = GridFunction::from_fn(g, |y| {
            if y[0] >= 0.0 && y[1] >= 0.0 {
                (1.0 + y[0]) * (1.0 + y[1])
            } else {
                0.0
            }
        })
        .with_breaks(vec![0, 1]);
        assert!((f.integral() - 2.25).abs() < 1e-14);
    }

    #[test]
    fn second_order_convergence() {
        let err = |n| {
            let f = GridFunction::from_fn(Grid::cube(2, n), |y| (y[0] * 1.3).exp() * y[1].cos());
            let exact = (1.3f64.exp() - (-1.3f64).exp()) / 1.3 * 2.0 * 1f64.sin();
            (f.integral() - exact).abs()
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }
}
