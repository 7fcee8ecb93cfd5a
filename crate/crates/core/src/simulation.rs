//! Synthetic scenarios with known active predictors, and the
//! selection/prediction metrics used to score a fit against them.
//!
//! Predictor curves are random sums of five shifted sines. The first `p0`
//! predictors act through fixed Gamma- and exponential-density shaped
//! coefficient functions; the rest are inert.
//!
//! Every random draw comes from a ChaCha20 stream keyed by
//! `(seed, replication, purpose)`, so replications can run in any order
//! and on any number of threads with identical results.

use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Exp, Gamma, Normal};

use crate::dataset::{project_scores_with, standardize, FunctionalDataset};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::function_space::{Grid, GridFunction};
use crate::kernels::{build_basis, EigenBasis, KernelSpec};
use crate::model_selection::CvSpec;
use crate::solver::{
    adaptive_fit, kkt_check, oracle_fit, predict, FitOptions, FitResult, PathSpec,
};

/// Signal-to-noise ratios at or above this are treated as noise free.
pub const NOISE_FREE_SNR: f64 = 1e12;

/// Tolerance used for the per-replication KKT flags.
pub const KKT_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub p0: usize,
    pub snr: f64,
    pub grid_size: usize,
    pub seed: u64,
    pub n_test: usize,
}

impl Scenario {
    pub fn new(p: usize, p0: usize, snr: f64, seed: u64) -> Scenario {
        Scenario {
            n: 500,
            p,
            p0,
            snr,
            grid_size: 50,
            seed,
            n_test: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 == 5 || self.p0 == 10) {
            return Err(Error::Scenario(format!(
                "p0 must be 5 or 10, got {}",
                self.p0
            )));
        }
        if self.p0 > self.p {
            return Err(Error::Scenario(format!(
                "p0 = {} exceeds p = {}",
                self.p0, self.p
            )));
        }
        if !(self.snr > 0.0) || self.snr.is_nan() {
            return Err(Error::Scenario(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        if self.n < 2 {
            return Err(Error::Scenario(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.n_test == 0 {
            return Err(Error::Scenario("n_test must be positive".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::Scenario(format!(
                "grid size must be at least 2, got {}",
                self.grid_size
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::uniform(self.grid_size)?))
    }
}

/// Purpose of a random stream within one replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    TrainCurves = 0,
    TrainNoise = 1,
    TestCurves = 2,
    TestNoise = 3,
    Folds = 4,
}

const STREAMS: u64 = 5;

pub fn stream_rng(seed: u64, replication: usize, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64 * STREAMS + stream as u64);
    rng
}

/// Uniform draw in the open interval `(0, 1)` from the top 52 bits.
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal draw by inverse CDF.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    Normal::standard().inverse_cdf(open_uniform(rng))
}

/// `0.01 (Σ_r (a_r sin(2πt(5 − a_r)) − m_r) + 15)` on `grid`.
pub fn predictor_curve(grid: &Grid, a: &[f64], m: &[f64]) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&t| {
            let sum: f64 = a
                .iter()
                .zip(m)
                .map(|(a, m)| a * (TAU * t * (5.0 - a)).sin() - m)
                .sum();
            0.01 * (sum + 15.0)
        })
        .collect()
}

/// `n × p` curves laid out as `(i * p + j) * G + g`. Each curve draws
/// `a_r ~ U(0, 5)` and `m_r ~ U(0, 2π)` for `r = 1..5`.
pub fn generate_predictors(n: usize, p: usize, grid: &Grid, rng: &mut impl RngCore) -> Vec<f64> {
    let mut values = Vec::with_capacity(n * p * grid.len());
    let (mut a, mut m) = ([0.0; 5], [0.0; 5]);
    for _ in 0..n * p {
        for r in 0..5 {
            a[r] = 5.0 * open_uniform(rng);
            m[r] = TAU * open_uniform(rng);
        }
        values.extend(predictor_curve(grid, &a, &m));
    }
    values
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    /// Gamma(k, rate 1) density evaluated at `scale · t`.
    Gamma { k: f64, scale: f64 },
    /// `r e^{−rt}`.
    Exponential { r: f64 },
}

const CATALOG: [(Shape, f64); 10] = [
    (Shape::Gamma { k: 2.0, scale: 8.0 }, 8.0),
    (Shape::Exponential { r: 3.0 }, 1.0),
    (
        Shape::Gamma {
            k: 4.0,
            scale: 10.0,
        },
        16.0,
    ),
    (Shape::Exponential { r: 2.0 }, 1.0),
    (
        Shape::Gamma {
            k: 6.0,
            scale: 12.0,
        },
        20.0,
    ),
    (Shape::Exponential { r: 5.0 }, 0.8),
    (Shape::Gamma { k: 3.0, scale: 6.0 }, 15.0),
    (Shape::Exponential { r: 1.5 }, 1.0),
    (
        Shape::Gamma {
            k: 8.0,
            scale: 14.0,
        },
        25.0,
    ),
    (Shape::Exponential { r: 4.0 }, 0.6),
];

/// The fixed coefficient functions of the active predictors.
pub fn true_betas(p0: usize, grid: &Arc<Grid>) -> Result<Vec<GridFunction>> {
    if !(p0 == 5 || p0 == 10) {
        return Err(Error::Scenario(format!(
            "no coefficient catalog for p0 = {p0}"
        )));
    }
    CATALOG[..p0]
        .iter()
        .map(|&(shape, c)| {
            let f: Box<dyn Fn(f64) -> f64> = match shape {
                Shape::Gamma { k, scale } => {
                    let d = Gamma::new(k, 1.0).expect("valid gamma parameters");
                    Box::new(move |t| d.pdf(scale * t))
                }
                Shape::Exponential { r } => {
                    let d = Exp::new(r).expect("valid rate");
                    Box::new(move |t| d.pdf(t))
                }
            };
            GridFunction::from_fn(grid.clone(), |t| c * f(t))
        })
        .collect()
}

/// Signal, noise level and noisy response of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Response {
    pub y: Vec<f64>,
    pub y_true: Vec<f64>,
    pub sigma2: f64,
}

/// `y_true_i = Σ_j <β_j, X_ij>_H` over the first `betas.len()` predictors.
pub fn signal(values: &[f64], p: usize, grid: &Grid, betas: &[GridFunction]) -> Vec<f64> {
    let g = grid.len();
    values
        .chunks_exact(p * g)
        .map(|obs| {
            betas
                .iter()
                .enumerate()
                .map(|(j, b)| grid.inner(b.values(), &obs[j * g..(j + 1) * g]))
                .sum()
        })
        .collect()
}

/// Adds `N(0, σ²)` noise with `σ² = var(y_true) / snr`.
pub fn generate_response(
    values: &[f64],
    p: usize,
    grid: &Grid,
    betas: &[GridFunction],
    snr: f64,
    rng: &mut impl RngCore,
) -> Result<Response> {
    if !(snr > 0.0) {
        return Err(Error::Scenario(format!("snr must be positive, got {snr}")));
    }
    let y_true = signal(values, p, grid, betas);
    let var = sample_variance(&y_true);
    if !(var > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    let sigma2 = if snr >= NOISE_FREE_SNR {
        0.0
    } else {
        var / snr
    };
    let y = add_noise(&y_true, sigma2, rng);
    Ok(Response { y, y_true, sigma2 })
}

pub fn add_noise(y_true: &[f64], sigma2: f64, rng: &mut impl RngCore) -> Vec<f64> {
    if sigma2 == 0.0 {
        return y_true.to_vec();
    }
    let sd = sigma2.sqrt();
    y_true
        .iter()
        .map(|v| v + sd * standard_normal(rng))
        .collect()
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub rmse: f64,
}

pub fn selection_metrics(
    active: &[usize],
    true_active: &[usize],
    predictions: &[f64],
    actual: &[f64],
) -> SelectionMetrics {
    let tp = active.iter().filter(|j| true_active.contains(j)).count();
    SelectionMetrics {
        tp,
        fp: active.len() - tp,
        rmse: rmse(predictions, actual),
    }
}

pub fn rmse(predictions: &[f64], actual: &[f64]) -> f64 {
    let sq: f64 = predictions
        .iter()
        .zip(actual)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sq / actual.len() as f64).sqrt()
}

/// Fitting controls shared by every replication.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSettings {
    pub replications: usize,
    pub basis_fraction: f64,
    pub path: PathSpec,
    /// The shuffle seed is replaced per replication.
    pub cv: CvSpec,
    pub opts: FitOptions,
}

impl SimulationSettings {
    /// Defaults with the kill switch at `2 p0`.
    pub fn for_scenario(scenario: &Scenario, replications: usize) -> SimulationSettings {
        SimulationSettings {
            replications,
            basis_fraction: 0.99,
            path: PathSpec::default(),
            cv: CvSpec::default(),
            opts: FitOptions {
                kill_switch: Some(2 * scenario.p0),
                ..FitOptions::default()
            },
        }
    }
}

/// One generated train/test pair.
#[derive(Clone, Debug)]
pub struct Sample {
    pub train: FunctionalDataset,
    pub test: FunctionalDataset,
    pub train_response: Response,
    /// Noisy test responses; the signal is in `test_signal`.
    pub test_signal: Vec<f64>,
}

pub fn generate_sample(scenario: &Scenario, replication: usize) -> Result<Sample> {
    scenario.validate()?;
    let grid = scenario.grid()?;
    let betas = true_betas(scenario.p0, &grid)?;
    let names: Vec<String> = (1..=scenario.p).map(|j| format!("x{j}")).collect();
    let rng = |s| stream_rng(scenario.seed, replication, s);

    let train_x = generate_predictors(scenario.n, scenario.p, &grid, &mut rng(Stream::TrainCurves));
    let train_response = generate_response(
        &train_x,
        scenario.p,
        &grid,
        &betas,
        scenario.snr,
        &mut rng(Stream::TrainNoise),
    )?;
    let test_x = generate_predictors(
        scenario.n_test,
        scenario.p,
        &grid,
        &mut rng(Stream::TestCurves),
    );
    let test_signal = signal(&test_x, scenario.p, &grid, &betas);
    let test_y = add_noise(
        &test_signal,
        train_response.sigma2,
        &mut rng(Stream::TestNoise),
    );

    let train = FunctionalDataset::with_default_ids(
        grid.clone(),
        train_x,
        train_response.y.clone(),
        names.clone(),
    )?;
    let test = FunctionalDataset::with_default_ids(grid, test_x, test_y, names)?;
    Ok(Sample {
        train,
        test,
        train_response,
        test_signal,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationRow {
    pub replication: usize,
    pub tp: usize,
    pub fp: usize,
    pub rmse: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub n_iter1: usize,
    pub n_iter2: usize,
    /// Test RMSE of unpenalized least squares on the true active set.
    pub oracle_rmse: f64,
    pub converged1: bool,
    pub converged2: bool,
    /// Whether the selected fit of each stage passes `kkt_check`.
    pub kkt1: bool,
    pub kkt2: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub rows: Vec<ReplicationRow>,
}

/// Column means, booleans counted as 0/1.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportMeans {
    pub tp: f64,
    pub fp: f64,
    pub rmse: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub n_iter1: f64,
    pub n_iter2: f64,
    pub oracle_rmse: f64,
    pub converged1: f64,
    pub converged2: f64,
    pub kkt1: f64,
    pub kkt2: f64,
}

impl SimulationReport {
    pub fn means(&self) -> ReportMeans {
        let n = self.rows.len() as f64;
        let mean = |f: &dyn Fn(&ReplicationRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        ReportMeans {
            tp: mean(&|r| r.tp as f64),
            fp: mean(&|r| r.fp as f64),
            rmse: mean(&|r| r.rmse),
            lambda1: mean(&|r| r.lambda1),
            lambda2: mean(&|r| r.lambda2),
            n_iter1: mean(&|r| r.n_iter1 as f64),
            n_iter2: mean(&|r| r.n_iter2 as f64),
            oracle_rmse: mean(&|r| r.oracle_rmse),
            converged1: mean(&|r| flag(r.converged1)),
            converged2: mean(&|r| flag(r.converged2)),
            kkt1: mean(&|r| flag(r.kkt1)),
            kkt2: mean(&|r| flag(r.kkt2)),
        }
    }

    /// One row per replication followed by a `mean` row.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "replication",
            "tp",
            "fp",
            "rmse",
            "lambda1",
            "lambda2",
            "n_iter1",
            "n_iter2",
            "oracle_rmse",
            "converged1",
            "converged2",
            "kkt1",
            "kkt2",
        ])?;
        let flag = |b: bool| if b { "1" } else { "0" }.to_string();
        for r in &self.rows {
            w.write_record([
                r.replication.to_string(),
                r.tp.to_string(),
                r.fp.to_string(),
                r.rmse.to_string(),
                r.lambda1.to_string(),
                r.lambda2.to_string(),
                r.n_iter1.to_string(),
                r.n_iter2.to_string(),
                r.oracle_rmse.to_string(),
                flag(r.converged1),
                flag(r.converged2),
                flag(r.kkt1),
                flag(r.kkt2),
            ])?;
        }
        let m = self.means();
        w.write_record([
            "mean".to_string(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.rmse.to_string(),
            m.lambda1.to_string(),
            m.lambda2.to_string(),
            m.n_iter1.to_string(),
            m.n_iter2.to_string(),
            m.oracle_rmse.to_string(),
            m.converged1.to_string(),
            m.converged2.to_string(),
            m.kkt1.to_string(),
            m.kkt2.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Everything one replication produced, for callers that want more than
/// the summary row.
#[derive(Clone, Debug)]
pub struct ReplicationOutcome {
    pub row: ReplicationRow,
    pub stage1: FitResult,
    pub stage2: FitResult,
    pub predictions: Vec<f64>,
}

/// Generates, fits and scores one replication.
pub fn run_replication(
    scenario: &Scenario,
    basis: &Arc<EigenBasis>,
    settings: &SimulationSettings,
    replication: usize,
    exec: Exec,
) -> Result<ReplicationOutcome> {
    let sample = generate_sample(scenario, replication)?;
    let mut cv = settings.cv.clone();
    cv.seed = stream_rng(scenario.seed, replication, Stream::Folds).next_u64();
    let fit = adaptive_fit(
        &sample.train,
        basis,
        &settings.opts,
        &settings.path,
        &cv,
        exec,
    )?;

    let predictions = predict(&fit.stage2, &sample.test)?;
    let truth: Vec<usize> = (0..scenario.p0).collect();
    let metrics = selection_metrics(
        &fit.stage2.active_set,
        &truth,
        &predictions,
        sample.test.response(),
    );

    let (std, record) = standardize(&sample.train)?;
    let scores = project_scores_with(&std, basis, exec)?;
    let mut oracle = fit.stage1.clone();
    oracle.coefficients = oracle_fit(&scores, std.response(), &truth)?;
    oracle.active_set = oracle.coefficients.support();
    oracle.standardization = Some(record);
    let oracle_rmse = rmse(&predict(&oracle, &sample.test)?, sample.test.response());

    let kkt1 = kkt_check(&fit.stage1, &scores, std.response(), KKT_TOL)?.passed();
    let kkt2 = kkt_check(&fit.stage2, &scores, std.response(), KKT_TOL)?.passed();
    let row = ReplicationRow {
        replication,
        tp: metrics.tp,
        fp: metrics.fp,
        rmse: metrics.rmse,
        lambda1: fit.stage1.lambda,
        lambda2: fit.stage2.lambda,
        n_iter1: fit.stage1.n_iterations,
        n_iter2: fit.stage2.n_iterations,
        oracle_rmse,
        converged1: fit.stage1.converged(),
        converged2: fit.stage2.converged(),
        kkt1,
        kkt2,
    };
    Ok(ReplicationOutcome {
        row,
        stage1: fit.stage1,
        stage2: fit.stage2,
        predictions,
    })
}

/// Kernel basis truncated for the scenario's training size.
pub fn scenario_basis(
    scenario: &Scenario,
    kernel: &KernelSpec,
    fraction: f64,
) -> Result<Arc<EigenBasis>> {
    let full = build_basis(kernel, scenario.grid()?)?;
    Ok(Arc::new(full.truncate(scenario.n, fraction)?))
}

/// Runs `settings.replications` independent replications, in parallel
/// when `exec` allows.
pub fn run_scenario(
    scenario: &Scenario,
    kernel: &KernelSpec,
    settings: &SimulationSettings,
    exec: Exec,
) -> Result<SimulationReport> {
    scenario.validate()?;
    if settings.replications == 0 {
        return Err(Error::Scenario("need at least one replication".into()));
    }
    let basis = scenario_basis(scenario, kernel, settings.basis_fraction)?;
    let rows = exec.try_map(settings.replications, |r| {
        run_replication(scenario, &basis, settings, r, exec)
            .map(|o| o.row)
            .map_err(|e| Error::Replication {
                replication: r,
                source: Box::new(e),
            })
    })?;
    Ok(SimulationReport {
        scenario: scenario.clone(),
        rows,
    })
}
