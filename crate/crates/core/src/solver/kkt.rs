use super::descent::{residual, Problem};
use super::{k_norm_theta, FitResult};
use crate::dataset::ScoreTensor;
use crate::error::Result;

/// Optimality residual of one predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct KktEntry {
    pub predictor: usize,
    pub active: bool,
    /// Skipped because the predictor carried infinite weight.
    pub excluded: bool,
    /// Active: `||β̂_j − update_j||_K`. Inactive: `||č_j||_K`.
    pub residual: f64,
    /// The value `residual` is compared against.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    pub tol: f64,
    pub entries: Vec<KktEntry>,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.predictor)
            .collect()
    }

    /// Largest `residual / bound` over checked predictors.
    pub fn worst_ratio(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.excluded)
            .map(|e| {
                if e.bound > 0.0 {
                    e.residual / e.bound
                } else if e.residual > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Checks that `fit` is a fixed point of its own block update on
/// `(scores, y)`.
///
/// An active predictor passes when its row moves by at most
/// `tol · (1 + ||β̂_j||_K)` under one more update; an inactive one when
/// `||č_j||_K ≤ λ w_j (1 + tol)`.
pub fn kkt_check(fit: &FitResult, scores: &ScoreTensor, y: &[f64], tol: f64) -> Result<KktReport> {
    let problem = Problem::new(scores, y, &fit.weights, fit.update)?;
    let coeffs = &fit.coefficients;
    let r = residual(scores, y, coeffs);
    let theta = problem.theta();
    let entries = (0..scores.p())
        .map(|j| {
            let w = fit.weights[j];
            if w.is_infinite() {
                return KktEntry {
                    predictor: j,
                    active: false,
                    excluded: true,
                    residual: 0.0,
                    bound: 0.0,
                    pass: true,
                };
            }
            let b = coeffs.row(j);
            let g = problem.gradient_target(j, &r, b);
            let threshold = fit.lambda * w;
            if coeffs.is_zero_row(j) {
                let check: Vec<f64> = g.iter().zip(theta).map(|(g, t)| g * t).collect();
                let residual = k_norm_theta(&check, theta);
                let bound = threshold * (1.0 + tol);
                KktEntry {
                    predictor: j,
                    active: false,
                    excluded: false,
                    residual,
                    bound,
                    pass: residual <= bound,
                }
            } else {
                let next = problem.update(j, &g, threshold);
                let diff: Vec<f64> = b.iter().zip(&next).map(|(a, c)| a - c).collect();
                let residual = k_norm_theta(&diff, theta);
                let bound = tol * (1.0 + k_norm_theta(b, theta));
                KktEntry {
                    predictor: j,
                    active: true,
                    excluded: false,
                    residual,
                    bound,
                    pass: residual <= bound,
                }
            }
        })
        .collect();
    Ok(KktReport { tol, entries })
}
