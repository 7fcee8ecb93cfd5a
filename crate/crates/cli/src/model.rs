//! On-disk form of a fitted model.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sofia::dataset::{FunctionalDataset, StandardizationRecord};
use sofia::kernels::{EigenBasis, KernelFamily};
use sofia::solver::{BlockUpdate, Coefficients, FitResult, Stage, Termination};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub kernel: KernelFamily,
    pub rho: f64,
    pub basis_fraction: f64,
    pub predictor_names: Vec<String>,
    pub basis: EigenBasis,
    pub standardization: StandardizationRecord,
    pub stage1_empty: bool,
    pub stages: Vec<SavedStage>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SavedStage {
    pub stage: Stage,
    pub lambda: f64,
    /// `None` marks a predictor excluded with infinite weight.
    pub weights: Vec<Option<f64>>,
    /// One row of basis coordinates per predictor.
    pub coefficients: Vec<Vec<f64>>,
    pub n_iterations: usize,
    pub termination: Termination,
    pub objective: f64,
    pub update: BlockUpdate,
}

impl SavedStage {
    pub fn from_fit(fit: &FitResult) -> SavedStage {
        let c = &fit.coefficients;
        SavedStage {
            stage: fit.stage,
            lambda: fit.lambda,
            weights: fit
                .weights
                .iter()
                .map(|w| w.is_finite().then_some(*w))
                .collect(),
            coefficients: (0..c.p()).map(|j| c.row(j).to_vec()).collect(),
            n_iterations: fit.n_iterations,
            termination: fit.termination,
            objective: fit.objective,
            update: fit.update,
        }
    }
}

impl SavedModel {
    pub fn read(path: &Path) -> Result<SavedModel> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading model file {}", path.display()))?;
        let model: SavedModel = serde_json::from_str(&raw)
            .with_context(|| format!("parsing model file {}", path.display()))?;
        if model.format_version != FORMAT_VERSION {
            bail!(
                "model file {} has format version {}, expected {FORMAT_VERSION}",
                path.display(),
                model.format_version
            );
        }
        model.basis()?;
        for s in &model.stages {
            if s.weights.len() != model.predictor_names.len()
                || s.coefficients.len() != model.predictor_names.len()
            {
                bail!(
                    "model file {}: stage tables do not match the predictor list",
                    path.display()
                );
            }
        }
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// The stored basis, re-validated.
    pub fn basis(&self) -> Result<Arc<EigenBasis>> {
        let b = &self.basis;
        let m = b.len();
        let table: Vec<f64> = (0..m).flat_map(|l| b.eigenfunction(l).to_vec()).collect();
        let checked = EigenBasis::from_parts(
            b.grid().clone(),
            b.eigenvalues().to_vec(),
            table,
            b.total_trace(),
        )
        .context("model file holds an invalid basis")?;
        Ok(Arc::new(checked))
    }

    pub fn stage(&self, name: &str) -> Result<&SavedStage> {
        self.stages
            .iter()
            .find(|s| s.stage.name() == name)
            .with_context(|| format!("model has no `{name}` stage"))
    }

    /// Rebuilds a fit result able to predict and be checked.
    pub fn fit(&self, stage: &SavedStage) -> Result<FitResult> {
        let basis = self.basis()?;
        let p = self.predictor_names.len();
        let coords: Vec<f64> = stage.coefficients.concat();
        let coefficients = Coefficients::from_coords(basis, p, coords)?;
        Ok(FitResult {
            active_set: coefficients.support(),
            coefficients,
            lambda: stage.lambda,
            weights: stage
                .weights
                .iter()
                .map(|w| w.unwrap_or(f64::INFINITY))
                .collect(),
            n_iterations: stage.n_iterations,
            termination: stage.termination,
            objective: stage.objective,
            objective_trace: Vec::new(),
            stage: stage.stage,
            update: stage.update,
            standardization: Some(self.standardization.clone()),
        })
    }

    /// Reorders `data`'s predictors to the model's order.
    pub fn align(&self, data: &FunctionalDataset) -> Result<FunctionalDataset> {
        let names = data.predictor_names();
        if names == self.predictor_names.as_slice() {
            return Ok(data.clone());
        }
        let mut order = Vec::with_capacity(self.predictor_names.len());
        for want in &self.predictor_names {
            let j = names
                .iter()
                .position(|n| n == want)
                .with_context(|| format!("data has no predictor `{want}`"))?;
            order.push(j);
        }
        if names.len() != order.len() {
            bail!(
                "data has {} predictors, the model was fitted on {}",
                names.len(),
                order.len()
            );
        }
        let mut values = Vec::with_capacity(data.values().len());
        for i in 0..data.n() {
            for &j in &order {
                values.extend_from_slice(data.curve(i, j));
            }
        }
        Ok(FunctionalDataset::new(
            data.grid().clone(),
            values,
            data.response().to_vec(),
            self.predictor_names.clone(),
            data.obs_ids().to_vec(),
        )?)
    }
}
