//! Curves sampled on a shared grid of `[0, 1]`, with trapezoid-rule inner
//! products standing in for the `L2[0, 1]` inner product.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered abscissae with trapezoid quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a grid with composite trapezoid weights.
    pub fn trapezoid(points: Vec<f64>) -> Result<Grid> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite grid point".into()));
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing (index {} -> {})",
                k,
                k + 1
            )));
        }
        let g = points.len();
        let mut weights = vec![0.0; g];
        weights[0] = (points[1] - points[0]) / 2.0;
        weights[g - 1] = (points[g - 1] - points[g - 2]) / 2.0;
        for k in 1..g - 1 {
            weights[k] = (points[k + 1] - points[k - 1]) / 2.0;
        }
        Ok(Grid { points, weights })
    }

    /// `size` equidistant points on `[0, 1]`, endpoints included.
    pub fn uniform(size: usize) -> Result<Grid> {
        if size < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {size}"
            )));
        }
        let last = (size - 1) as f64;
        Grid::trapezoid((0..size).map(|k| k as f64 / last).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature inner product of two sampled curves. Lengths must match the grid.
    #[inline]
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    #[inline]
    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }
}

/// A real-valued curve sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "curve has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve values".into()));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        GridFunction::new(grid, values)
    }

    pub fn zeros(grid: Arc<Grid>) -> GridFunction {
        let values = vec![0.0; grid.len()];
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }
}

/// `<f, g>_H` by trapezoid quadrature.
pub fn h_inner(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    Ok(f.grid.inner(&f.values, &g.values))
}

/// `||f||_H`.
pub fn h_norm(f: &GridFunction) -> f64 {
    f.grid.norm(&f.values)
}
