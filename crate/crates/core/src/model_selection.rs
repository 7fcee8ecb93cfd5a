//! Choosing λ by k-fold or rolling-window cross-validation.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataset::{project_scores_with, standardize, FunctionalDataset};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kernels::EigenBasis;
use crate::solver::{fit_path, fitted_values, FitOptions, Termination};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvMode {
    /// Seeded shuffle split into contiguous blocks.
    KFold,
    /// Expanding training window followed by a validation block, shifted
    /// forward each fold. Preserves time order.
    Rolling,
}

impl std::str::FromStr for CvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<CvMode> {
        match s.to_ascii_lowercase().as_str() {
            "kfold" => Ok(CvMode::KFold),
            "rolling" => Ok(CvMode::Rolling),
            _ => Err(Error::InvalidArgument(format!("unknown cv mode '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvSpec {
    pub mode: CvMode,
    pub folds: usize,
    pub rolling_train_frac: f64,
    pub rolling_test_frac: f64,
    pub rolling_shift_frac: f64,
    pub seed: u64,
}

impl Default for CvSpec {
    fn default() -> Self {
        CvSpec {
            mode: CvMode::KFold,
            folds: 5,
            rolling_train_frac: 0.75,
            rolling_test_frac: 0.05,
            rolling_shift_frac: 0.05,
            seed: 0,
        }
    }
}

impl CvSpec {
    pub fn kfold(folds: usize, seed: u64) -> CvSpec {
        CvSpec {
            folds,
            seed,
            ..CvSpec::default()
        }
    }

    pub fn rolling(folds: usize) -> CvSpec {
        CvSpec {
            mode: CvMode::Rolling,
            folds,
            ..CvSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        for (name, f) in [
            ("rolling train fraction", self.rolling_train_frac),
            ("rolling test fraction", self.rolling_test_frac),
            ("rolling shift fraction", self.rolling_shift_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1), got {f}"
                )));
            }
        }
        if self.rolling_train_frac + self.rolling_test_frac > 1.0 {
            return Err(Error::InvalidArgument(
                "rolling train and test fractions sum past 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

pub fn make_folds(spec: &CvSpec, n: usize) -> Result<Vec<Fold>> {
    spec.validate()?;
    match spec.mode {
        CvMode::KFold => kfold(spec, n),
        CvMode::Rolling => rolling(spec, n),
    }
}

fn kfold(spec: &CvSpec, n: usize) -> Result<Vec<Fold>> {
    let k = spec.folds;
    if n < k || n - n / k < 2 {
        return Err(Error::FoldConstruction(format!(
            "{n} observations cannot fill {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha20Rng::seed_from_u64(spec.seed));
    Ok((0..k)
        .map(|f| {
            let (lo, hi) = (f * n / k, (f + 1) * n / k);
            let mut validation = perm[lo..hi].to_vec();
            let mut train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
            validation.sort_unstable();
            train.sort_unstable();
            Fold { train, validation }
        })
        .collect())
}

fn rolling(spec: &CvSpec, n: usize) -> Result<Vec<Fold>> {
    let size = |frac: f64| ((frac * n as f64).round() as usize).max(1);
    let (train, test, shift) = (
        size(spec.rolling_train_frac),
        size(spec.rolling_test_frac),
        size(spec.rolling_shift_frac),
    );
    (0..spec.folds)
        .map(|f| {
            let end = train + f * shift;
            if end < 2 || end + test > n {
                return Err(Error::FoldConstruction(format!(
                    "rolling fold {} needs {} observations, have {n}",
                    f + 1,
                    end + test
                )));
            }
            Ok(Fold {
                train: (0..end).collect(),
                validation: (end..end + test).collect(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub mean_error: Vec<f64>,
    /// `folds × lambdas`. Entries past a kill-switch abort are infinite.
    pub per_fold_error: Vec<Vec<f64>>,
    pub selected_index: usize,
    pub selected_lambda: f64,
}

impl CvResult {
    /// Aggregates fold errors and selects the λ with the smallest mean,
    /// preferring the earlier (larger) λ on ties.
    pub fn from_fold_errors(lambdas: Vec<f64>, per_fold_error: Vec<Vec<f64>>) -> CvResult {
        let folds = per_fold_error.len() as f64;
        let mean_error: Vec<f64> = (0..lambdas.len())
            .map(|k| per_fold_error.iter().map(|row| row[k]).sum::<f64>() / folds)
            .collect();
        let mut selected_index = 0;
        for (k, e) in mean_error.iter().enumerate() {
            if *e < mean_error[selected_index] {
                selected_index = k;
            }
        }
        CvResult {
            selected_lambda: lambdas[selected_index],
            lambdas,
            mean_error,
            per_fold_error,
            selected_index,
        }
    }
}

/// Validation RMSE of every λ in `lambdas` on every fold.
///
/// Each fold standardizes its own training split and replays that
/// transform on the validation split, so no validation statistic leaks
/// into training.
pub fn cross_validate(
    data: &FunctionalDataset,
    basis: &Arc<EigenBasis>,
    weights: &[f64],
    lambdas: &[f64],
    folds: &[Fold],
    opts: &FitOptions,
    exec: Exec,
) -> Result<CvResult> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda path".into()));
    }
    if folds.is_empty() {
        return Err(Error::FoldConstruction("no folds".into()));
    }
    let per_fold_error = exec.try_map(folds.len(), |f| {
        fold_errors(data, basis, weights, lambdas, &folds[f], opts).map_err(|e| Error::Fold {
            fold: f + 1,
            source: Box::new(e),
        })
    })?;
    Ok(CvResult::from_fold_errors(lambdas.to_vec(), per_fold_error))
}

fn fold_errors(
    data: &FunctionalDataset,
    basis: &Arc<EigenBasis>,
    weights: &[f64],
    lambdas: &[f64],
    fold: &Fold,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    if fold.train.is_empty() || fold.validation.is_empty() {
        return Err(Error::FoldConstruction(
            "empty training or validation set".into(),
        ));
    }
    let (train, record) = standardize(&data.subset(&fold.train))?;
    let validation = record.apply(&data.subset(&fold.validation))?;
    let train_scores = project_scores_with(&train, basis, Exec::Sequential)?;
    let val_scores = project_scores_with(&validation, basis, Exec::Sequential)?;
    let fits = fit_path(&train_scores, train.response(), weights, lambdas, opts)?;

    let target = validation.response();
    let mut errors = vec![f64::INFINITY; lambdas.len()];
    for (k, fit) in fits.iter().enumerate() {
        if fit.termination == Termination::KillSwitch {
            break;
        }
        let predicted = fitted_values(&fit.coefficients, &val_scores);
        let mse = predicted
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / target.len() as f64;
        errors[k] = mse.sqrt();
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::Grid;
    use crate::kernels::{build_basis, KernelFamily, KernelSpec};
    use std::collections::BTreeSet;

    #[test]
    fn rolling_folds_match_the_monthly_layout() {
        let folds = make_folds(&CvSpec::rolling(5), 420).unwrap();
        assert_eq!(folds.len(), 5);
        assert_eq!(folds[0].train, (0..315).collect::<Vec<_>>());
        assert_eq!(folds[0].validation, (315..336).collect::<Vec<_>>());
        assert_eq!(folds[4].train.len(), 399);
        assert_eq!(folds[4].validation, (399..420).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.train.iter().max() < f.validation.iter().min());
        }
    }

    #[test]
    fn rolling_rounding_and_failure() {
        // 0.05 · 30 = 1.5 rounds to 2; 0.75 · 30 = 22.5 rounds to 23.
        let folds = make_folds(&CvSpec::rolling(2), 30).unwrap();
        assert_eq!(folds[0].train.len(), 23);
        assert_eq!(folds[0].validation, vec![23, 24]);
        assert_eq!(folds[1].validation, vec![25, 26]);
        // Tiny n still gets one-observation blocks.
        let folds = make_folds(&CvSpec::rolling(2), 7).unwrap();
        assert_eq!(folds[1].validation.len(), 1);
        assert!(matches!(
            make_folds(&CvSpec::rolling(8), 20),
            Err(Error::FoldConstruction(_))
        ));
    }

    #[test]
    fn kfold_partition() {
        let folds = make_folds(&CvSpec::kfold(5, 7), 10).unwrap();
        let mut seen = BTreeSet::new();
        for f in &folds {
            assert_eq!(f.validation.len(), 2);
            assert_eq!(f.train.len(), 8);
            for v in &f.validation {
                assert!(seen.insert(*v));
                assert!(!f.train.contains(v));
            }
        }
        assert_eq!(seen.len(), 10);
        assert_eq!(folds, make_folds(&CvSpec::kfold(5, 7), 10).unwrap());
        assert_ne!(folds, make_folds(&CvSpec::kfold(5, 8), 10).unwrap());
        assert!(make_folds(&CvSpec::kfold(5, 0), 4).is_err());
        assert!(make_folds(&CvSpec::kfold(1, 0), 10).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = CvSpec {
            rolling_train_frac: 0.97,
            ..CvSpec::rolling(5)
        };
        assert!(bad.validate().is_err());
        let bad = CvSpec {
            rolling_shift_frac: 0.0,
            ..CvSpec::rolling(5)
        };
        assert!(bad.validate().is_err());
        assert_eq!("Rolling".parse::<CvMode>().unwrap(), CvMode::Rolling);
        assert!("loo".parse::<CvMode>().is_err());
    }

    #[test]
    fn selection_rules() {
        let r = CvResult::from_fold_errors(
            vec![3.0, 2.0, 1.0],
            vec![vec![1.0, 0.5, 0.5], vec![1.0, 0.7, 0.7]],
        );
        assert_eq!(r.selected_index, 1);
        assert_eq!(r.selected_lambda, 2.0);
        assert!((r.mean_error[1] - 0.6).abs() < 1e-15);
        let r = CvResult::from_fold_errors(vec![1.5], vec![vec![2.0], vec![4.0]]);
        assert_eq!(r.selected_lambda, 1.5);
        let r = CvResult::from_fold_errors(vec![3.0, 2.0], vec![vec![1.0, f64::INFINITY]]);
        assert_eq!(r.selected_index, 0);
    }

    fn dataset(n: usize, outlier: Option<(usize, f64)>) -> FunctionalDataset {
        let grid = Arc::new(Grid::uniform(20).unwrap());
        let mut values = Vec::new();
        let mut response = Vec::new();
        for i in 0..n {
            let a = ((i * 37 % 11) as f64 - 5.0) / 5.0;
            let b = ((i * 53 % 7) as f64 - 3.0) / 3.0;
            for &t in grid.points() {
                values.push(a * (std::f64::consts::PI * t).sin() + 0.1 * b);
            }
            for &t in grid.points() {
                values.push(b * t);
            }
            response.push(2.0 * a);
        }
        if let Some((i, v)) = outlier {
            let g = grid.len();
            values[(i * 2) * g..(i * 2 + 1) * g]
                .iter_mut()
                .for_each(|x| *x += v);
        }
        FunctionalDataset::with_default_ids(grid, values, response, vec!["x1".into(), "x2".into()])
            .unwrap()
    }

    fn basis(data: &FunctionalDataset) -> Arc<EigenBasis> {
        let spec = KernelSpec::new(KernelFamily::Exponential, 1.0).unwrap();
        let full = build_basis(&spec, data.grid().clone()).unwrap();
        Arc::new(full.truncate(data.n(), 0.99).unwrap())
    }

    #[test]
    fn noiseless_selection_keeps_the_true_predictor() {
        let data = dataset(40, None);
        let basis = basis(&data);
        let folds = make_folds(&CvSpec::kfold(5, 1), 40).unwrap();
        let lambdas: Vec<f64> = (0..15).map(|k| 0.5 * 0.7f64.powi(k)).collect();
        let opts = FitOptions::default();
        let cv = cross_validate(
            &data,
            &basis,
            &[1.0, 1.0],
            &lambdas,
            &folds,
            &opts,
            Exec::Parallel,
        )
        .unwrap();
        let mean: Vec<f64> = (0..lambdas.len())
            .map(|k| cv.per_fold_error.iter().map(|r| r[k]).sum::<f64>() / 5.0)
            .collect();
        for (a, b) in mean.iter().zip(&cv.mean_error) {
            assert!((a - b).abs() <= 1e-12);
        }

        let (std, _) = standardize(&data).unwrap();
        let s = project_scores_with(&std, &basis, Exec::Sequential).unwrap();
        let fits = fit_path(
            &s,
            std.response(),
            &[1.0, 1.0],
            &lambdas[..=cv.selected_index],
            &opts,
        )
        .unwrap();
        assert!(fits.last().unwrap().active_set.contains(&0));
    }

    #[test]
    fn fold_order_and_strategy_do_not_matter() {
        let data = dataset(30, None);
        let basis = basis(&data);
        let folds = make_folds(&CvSpec::kfold(3, 2), 30).unwrap();
        let lambdas = [0.3, 0.1, 0.03];
        let opts = FitOptions::default();
        let a = cross_validate(
            &data,
            &basis,
            &[1.0, 1.0],
            &lambdas,
            &folds,
            &opts,
            Exec::Parallel,
        )
        .unwrap();
        let b = cross_validate(
            &data,
            &basis,
            &[1.0, 1.0],
            &lambdas,
            &folds,
            &opts,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(a, b);
        let reversed: Vec<Fold> = folds.iter().rev().cloned().collect();
        let c = cross_validate(
            &data,
            &basis,
            &[1.0, 1.0],
            &lambdas,
            &reversed,
            &opts,
            Exec::Sequential,
        )
        .unwrap();
        let flipped: Vec<Vec<f64>> = c.per_fold_error.into_iter().rev().collect();
        assert_eq!(a.per_fold_error, flipped);
    }

    #[test]
    fn validation_outlier_does_not_leak() {
        let folds = vec![Fold {
            train: (0..20).collect(),
            validation: (20..25).collect(),
        }];
        let clean = dataset(25, None);
        let dirty = dataset(25, Some((22, 50.0)));
        let basis = basis(&clean);
        let lambdas = [0.2, 0.05];
        let opts = FitOptions::default();
        let a = cross_validate(
            &clean,
            &basis,
            &[1.0, 1.0],
            &lambdas,
            &folds,
            &opts,
            Exec::Sequential,
        )
        .unwrap();
        let b = cross_validate(
            &dirty,
            &basis,
            &[1.0, 1.0],
            &lambdas,
            &folds,
            &opts,
            Exec::Sequential,
        )
        .unwrap();
        // Training statistics are untouched, so the fitted coefficients agree
        // and only the error on the contaminated validation block moves.
        let (train_a, rec_a) = standardize(&clean.subset(&folds[0].train)).unwrap();
        let (train_b, rec_b) = standardize(&dirty.subset(&folds[0].train)).unwrap();
        assert_eq!(rec_a, rec_b);
        assert_eq!(train_a, train_b);
        assert_ne!(a.per_fold_error, b.per_fold_error);
    }

    #[test]
    fn singleton_path_is_selected() {
        let data = dataset(20, None);
        let basis = basis(&data);
        let folds = make_folds(&CvSpec::kfold(4, 3), 20).unwrap();
        let cv = cross_validate(
            &data,
            &basis,
            &[1.0, 1.0],
            &[0.05],
            &folds,
            &FitOptions::default(),
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(cv.selected_lambda, 0.05);
    }
}
