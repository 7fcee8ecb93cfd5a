use std::sync::Arc;

use super::{
    fit_path, fitted_values, k_norm, lambda_path, FitOptions, FitResult, Stage, Termination,
    ZERO_ROW_NORM,
};
use crate::dataset::{
    project_scores_with, standardize, FunctionalDataset, ScoreTensor, StandardizationRecord,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::function_space::GridFunction;
use crate::kernels::EigenBasis;
use crate::model_selection::{cross_validate, make_folds, CvResult, CvSpec, Fold};

/// The λ grid searched in each stage.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub count: usize,
    pub ratio: f64,
    /// Overrides the geometric grid when present. Must be nonincreasing.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            count: 100,
            ratio: 0.05,
            lambdas: None,
        }
    }
}

impl PathSpec {
    pub fn explicit(lambdas: Vec<f64>) -> PathSpec {
        PathSpec {
            lambdas: Some(lambdas),
            ..PathSpec::default()
        }
    }

    fn resolve(&self, scores: &ScoreTensor, y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        match &self.lambdas {
            Some(l) => {
                if l.is_empty() {
                    return Err(Error::InvalidArgument(
                        "explicit lambda list is empty".into(),
                    ));
                }
                if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidArgument(
                        "lambdas must be finite and nonnegative".into(),
                    ));
                }
                if l.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidArgument(
                        "lambdas must be nonincreasing".into(),
                    ));
                }
                Ok(l.clone())
            }
            None => lambda_path(scores, y, weights, self.count, self.ratio),
        }
    }
}

/// Both stages of an adaptive fit with their cross-validation traces.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveFit {
    pub stage1: FitResult,
    pub stage2: FitResult,
    pub cv1: CvResult,
    /// Absent when stage 1 selected nothing.
    pub cv2: Option<CvResult>,
    /// Stage 1 came back empty, so stage 2 is a copy of it.
    pub stage1_empty: bool,
    pub folds: Vec<Fold>,
}

/// Plain fit with unit weights, then a refit restricted to its support
/// with weights `1 / ||β̃_j||_K`. Each stage builds its own λ path and
/// picks λ by cross-validation on the same folds.
pub fn adaptive_fit(
    data: &FunctionalDataset,
    basis: &Arc<EigenBasis>,
    opts: &FitOptions,
    path: &PathSpec,
    cv: &CvSpec,
    exec: Exec,
) -> Result<AdaptiveFit> {
    opts.validate()?;
    let (std, record) = standardize(data)?;
    let scores = project_scores_with(&std, basis, exec)?;
    let y = std.response();
    let folds = make_folds(cv, data.n())?;
    let stage = StageInput {
        data,
        basis,
        scores: &scores,
        y,
        folds: &folds,
        opts,
        exec,
        record: &record,
    };

    let unit = vec![1.0; data.p()];
    let (stage1, cv1) = stage.run(&unit, path, Stage::Plain)?;

    let norms = stage1.coefficients.k_norms();
    let weights: Vec<f64> = norms
        .iter()
        .map(|&v| {
            if v >= ZERO_ROW_NORM {
                1.0 / v
            } else {
                f64::INFINITY
            }
        })
        .collect();
    if weights.iter().all(|w| w.is_infinite()) {
        return Ok(AdaptiveFit {
            stage2: stage1.clone(),
            stage1,
            cv1,
            cv2: None,
            stage1_empty: true,
            folds,
        });
    }
    let (stage2, cv2) = stage.run(&weights, path, Stage::Adaptive)?;
    Ok(AdaptiveFit {
        stage1,
        stage2,
        cv1,
        cv2: Some(cv2),
        stage1_empty: false,
        folds,
    })
}

struct StageInput<'a> {
    data: &'a FunctionalDataset,
    basis: &'a Arc<EigenBasis>,
    scores: &'a ScoreTensor,
    y: &'a [f64],
    folds: &'a [Fold],
    opts: &'a FitOptions,
    exec: Exec,
    record: &'a StandardizationRecord,
}

impl StageInput<'_> {
    fn run(&self, weights: &[f64], path: &PathSpec, stage: Stage) -> Result<(FitResult, CvResult)> {
        let lambdas = path.resolve(self.scores, self.y, weights)?;
        let cv = cross_validate(
            self.data, self.basis, weights, &lambdas, self.folds, self.opts, self.exec,
        )?;
        let fits = fit_path(
            self.scores,
            self.y,
            weights,
            &lambdas[..=cv.selected_index],
            self.opts,
        )?;
        // A kill-switch abort is not a usable model; fall back to the last
        // fit on the path that stayed within the cap.
        let mut fit = fits
            .iter()
            .rev()
            .find(|f| f.termination != Termination::KillSwitch)
            .or(fits.last())
            .cloned()
            .expect("a nonempty path yields at least one fit");
        fit.stage = stage;
        fit.standardization = Some(self.record.clone());
        Ok((fit, cv))
    }
}

/// Predictions in the response's original units.
pub fn predict(fit: &FitResult, new_data: &FunctionalDataset) -> Result<Vec<f64>> {
    let coeffs = &fit.coefficients;
    let basis = coeffs.basis();
    if new_data.grid() != basis.grid() && **new_data.grid() != **basis.grid() {
        return Err(Error::GridMismatch);
    }
    if new_data.p() != coeffs.p() {
        return Err(Error::InvalidArgument(format!(
            "model has {} predictors, data has {}",
            coeffs.p(),
            new_data.p()
        )));
    }
    let record = fit
        .standardization
        .clone()
        .unwrap_or_else(|| StandardizationRecord::identity(coeffs.p(), basis.grid().len()));
    let std = record.apply(new_data)?;
    let scores = project_scores_with(&std, basis, Exec::Sequential)?;
    Ok(fitted_values(coeffs, &scores)
        .into_iter()
        .map(|v| v + record.response_mean)
        .collect())
}

/// Coefficient functions and intercept acting on raw curves:
/// `ŷ = intercept + Σ_j <curve_j, X_j>_H`.
#[derive(Clone, Debug, PartialEq)]
pub struct OriginalScale {
    pub intercept: f64,
    pub curves: Vec<GridFunction>,
}

pub fn original_scale(fit: &FitResult) -> OriginalScale {
    let coeffs = &fit.coefficients;
    let grid = coeffs.basis().grid().clone();
    let record = fit
        .standardization
        .clone()
        .unwrap_or_else(|| StandardizationRecord::identity(coeffs.p(), grid.len()));
    let mut intercept = record.response_mean;
    let curves = (0..coeffs.p())
        .map(|j| {
            let scale = record.predictor_scales[j];
            let values: Vec<f64> = coeffs.curve(j).values().iter().map(|v| v / scale).collect();
            intercept -= grid.inner(&values, &record.predictor_means[j]);
            GridFunction::new(grid.clone(), values).expect("finite coefficients")
        })
        .collect();
    OriginalScale { intercept, curves }
}

/// K-norms of a fit's rows, the quantity adaptive weights invert.
pub fn row_norms(fit: &FitResult) -> Vec<f64> {
    let basis = fit.coefficients.basis();
    (0..fit.coefficients.p())
        .map(|j| k_norm(fit.coefficients.row(j), basis))
        .collect()
}
