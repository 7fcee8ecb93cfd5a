//! The adaptive functional lasso estimator.
//!
//! Coefficient functions live in the span of the leading eigenfunctions of
//! the kernel operator and are stored by their coordinates
//! `b_jl = <β_j, v_l>_H`. In those coordinates the penalty norm is
//! `||β_j||_K² = Σ_l b_jl² / θ_l` and the model's linear predictor is
//! `Σ_j Σ_l b_jl s_ijl`.

mod adaptive;
mod descent;
mod kkt;
mod oracle;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{ScoreTensor, StandardizationRecord};
use crate::error::{Error, Result};
use crate::function_space::GridFunction;
use crate::kernels::EigenBasis;

pub use adaptive::{
    adaptive_fit, original_scale, predict, row_norms, AdaptiveFit, OriginalScale, PathSpec,
};
pub use descent::{
    block_update, coordinate_descent, fit_path, lambda_max, lambda_path, partial_target,
    shrink_update,
};
pub use kkt::{kkt_check, KktEntry, KktReport};
pub use oracle::oracle_fit;

/// Rows whose K-norm is below this are treated as zero when forming
/// adaptive weights.
pub const ZERO_ROW_NORM: f64 = 1e-10;

/// Per-predictor coordinate vectors in an eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    basis: Arc<EigenBasis>,
    p: usize,
    /// Row-major `p × m`.
    coords: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(basis: Arc<EigenBasis>, p: usize) -> Coefficients {
        let m = basis.len();
        Coefficients {
            basis,
            p,
            coords: vec![0.0; p * m],
        }
    }

    /// Wraps row-major `p × m` coordinates.
    pub fn from_coords(basis: Arc<EigenBasis>, p: usize, coords: Vec<f64>) -> Result<Coefficients> {
        if coords.len() != p * basis.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coordinates, got {}",
                p * basis.len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("coefficients".into()));
        }
        Ok(Coefficients { basis, p, coords })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.basis.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let m = self.m();
        &self.coords[j * m..(j + 1) * m]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let m = self.m();
        &mut self.coords[j * m..(j + 1) * m]
    }

    pub fn is_zero_row(&self, j: usize) -> bool {
        self.row(j).iter().all(|&c| c == 0.0)
    }

    /// Indices of nonzero rows, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| !self.is_zero_row(j)).collect()
    }

    pub fn k_norms(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| k_norm(self.row(j), &self.basis))
            .collect()
    }

    /// `β_j` sampled on the basis grid.
    pub fn curve(&self, j: usize) -> GridFunction {
        reconstruct_curve(self.row(j), &self.basis)
    }
}

/// How one coefficient function is refreshed given all others.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockUpdate {
    /// Minimizes the objective over the block exactly, accounting for the
    /// block's empirical covariance. Reduces to [`BlockUpdate::Identity`]
    /// when that covariance is the identity in the K-metric.
    #[default]
    Exact,
    /// The functional soft-threshold `shrink_update(partial_target)`,
    /// which treats the block covariance as the identity.
    Identity,
}

impl BlockUpdate {
    pub fn name(self) -> &'static str {
        match self {
            BlockUpdate::Exact => "exact",
            BlockUpdate::Identity => "identity",
        }
    }
}

impl std::str::FromStr for BlockUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<BlockUpdate> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(BlockUpdate::Exact),
            "identity" => Ok(BlockUpdate::Identity),
            _ => Err(Error::InvalidArgument(format!(
                "unknown block update '{s}'"
            ))),
        }
    }
}

/// Controls for [`coordinate_descent`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Threshold on the largest relative K-norm change of any coefficient
    /// function over one sweep.
    pub tol: f64,
    /// Abort once more than this many predictors are active.
    pub kill_switch: Option<usize>,
    pub update: BlockUpdate,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 1000,
            tol: 1e-6,
            kill_switch: None,
            update: BlockUpdate::Exact,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.kill_switch == Some(0) {
            return Err(Error::InvalidArgument(
                "kill switch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Unit weights.
    Plain,
    /// Weights `1 / ||β̃_j||_K` from a plain fit.
    Adaptive,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Plain => "plain",
            Stage::Adaptive => "adaptive",
        }
    }
}

/// Why coordinate descent stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    KillSwitch,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::KillSwitch => "kill-switch",
        }
    }
}

/// Output of one penalized solve.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub coefficients: Coefficients,
    pub active_set: Vec<usize>,
    pub lambda: f64,
    /// `f64::INFINITY` marks a predictor excluded from the fit.
    pub weights: Vec<f64>,
    pub n_iterations: usize,
    pub termination: Termination,
    pub objective: f64,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
    pub stage: Stage,
    pub update: BlockUpdate,
    /// Transform that maps raw data into the space the fit was computed in.
    pub standardization: Option<StandardizationRecord>,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// `||h||_K = sqrt(Σ_l b_l² / θ_l)`.
pub fn k_norm(row: &[f64], basis: &EigenBasis) -> f64 {
    k_norm_theta(row, basis.eigenvalues())
}

#[inline]
pub(crate) fn k_norm_theta(row: &[f64], theta: &[f64]) -> f64 {
    row.iter()
        .zip(theta)
        .map(|(b, t)| b * b / t)
        .sum::<f64>()
        .sqrt()
}

/// Fitted values `Σ_j Σ_l b_jl s_ijl`.
pub fn fitted_values(coeffs: &Coefficients, scores: &ScoreTensor) -> Vec<f64> {
    let (n, m) = (scores.n(), scores.m());
    let mut out = vec![0.0; n];
    for j in 0..coeffs.p() {
        let b = coeffs.row(j);
        if b.iter().all(|&c| c == 0.0) {
            continue;
        }
        for (i, s) in scores.block(j).chunks_exact(m).enumerate() {
            out[i] += s.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    debug_assert_eq!(out.len(), n);
    out
}

/// `(1/2n) Σ_i (y_i − ŷ_i)² + λ Σ_j w_j ||β_j||_K`.
///
/// Predictors with infinite weight must have zero coefficients and
/// contribute nothing.
pub fn objective_value(
    coeffs: &Coefficients,
    scores: &ScoreTensor,
    y: &[f64],
    lambda: f64,
    weights: &[f64],
) -> Result<f64> {
    check_shapes(scores, y, weights)?;
    if coeffs.p() != scores.p() || coeffs.m() != scores.m() {
        return Err(Error::InvalidArgument(
            "coefficients do not match the scores".into(),
        ));
    }
    let fitted = fitted_values(coeffs, scores);
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let theta = coeffs.basis().eigenvalues();
    let mut penalty = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w.is_infinite() {
            if !coeffs.is_zero_row(j) {
                return Err(Error::InvalidWeights {
                    predictor: j,
                    weight: w,
                });
            }
            continue;
        }
        penalty += w * k_norm_theta(coeffs.row(j), theta);
    }
    Ok(rss / (2.0 * y.len() as f64) + lambda * penalty)
}

/// `β(t_g) = Σ_l b_l v_l(t_g)`.
pub fn reconstruct_curve(row: &[f64], basis: &EigenBasis) -> GridFunction {
    let mut values = vec![0.0; basis.grid().len()];
    for (l, b) in row.iter().enumerate().take(basis.len()) {
        for (v, e) in values.iter_mut().zip(basis.eigenfunction(l)) {
            *v += b * e;
        }
    }
    GridFunction::new(basis.grid().clone(), values).expect("finite coordinates give a finite curve")
}

/// Weights must be positive; `+∞` excludes a predictor.
pub(crate) fn check_shapes(scores: &ScoreTensor, y: &[f64], weights: &[f64]) -> Result<()> {
    if y.len() != scores.n() {
        return Err(Error::InvalidArgument(format!(
            "response has {} entries, scores have {} observations",
            y.len(),
            scores.n()
        )));
    }
    if weights.len() != scores.p() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} predictors",
            weights.len(),
            scores.p()
        )));
    }
    for (j, &w) in weights.iter().enumerate() {
        if w.is_nan() || w <= 0.0 {
            return Err(Error::InvalidWeights {
                predictor: j,
                weight: w,
            });
        }
    }
    Ok(())
}
