use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use sofia::dataset::{
    load_curves, load_curves_only, project_scores_with, rolling_windows, FunctionalDataset,
    TimeSeries, WindowSpec,
};
use sofia::function_space::Grid;
use sofia::kernels::{build_basis, EigenBasis, KernelSpec};
use sofia::model_selection::{cross_validate, make_folds, CvResult, CvSpec};
use sofia::simulation::{run_scenario, Scenario, SimulationSettings};
use sofia::solver::{
    adaptive_fit, kkt_check, lambda_path, original_scale, predict, FitOptions, FitResult,
    KktReport, PathSpec,
};
use sofia::Exec;

use crate::args::{
    CvArgs, CvCommandArgs, DataArgs, EigenArgs, FitArgs, KernelArgs, KktArgs, PredictArgs,
    SimulateArgs, SolverArgs, WindowArgs,
};
use crate::model::{SavedModel, SavedStage, FORMAT_VERSION};

/// Optimality tolerance used for the KKT summary written by `fit`.
const FIT_KKT_TOL: f64 = 1e-5;

fn kernel_spec(a: &KernelArgs) -> Result<KernelSpec> {
    ensure!(
        a.basis_fraction > 0.0 && a.basis_fraction <= 1.0,
        "--basis-fraction must lie in (0, 1], got {}",
        a.basis_fraction
    );
    Ok(KernelSpec::new(a.kernel, a.rho)?)
}

fn fit_options(a: &SolverArgs) -> Result<FitOptions> {
    let opts = FitOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        kill_switch: a.kill_switch,
        update: a.block_update,
    };
    opts.validate()?;
    Ok(opts)
}

fn path_spec(a: &SolverArgs) -> Result<PathSpec> {
    if let Some(l) = &a.lambda {
        ensure!(!l.is_empty(), "--lambda needs at least one value");
        ensure!(
            l.iter().all(|v| v.is_finite() && *v >= 0.0),
            "--lambda values must be finite and nonnegative"
        );
        ensure!(
            l.windows(2).all(|w| w[1] <= w[0]),
            "--lambda values must be nonincreasing"
        );
        return Ok(PathSpec::explicit(l.clone()));
    }
    ensure!(
        a.lambda_count >= 2,
        "--lambda-count must be at least 2 unless --lambda is given, got {}",
        a.lambda_count
    );
    ensure!(
        a.lambda_ratio > 0.0 && a.lambda_ratio < 1.0,
        "--lambda-ratio must lie in (0, 1), got {}",
        a.lambda_ratio
    );
    Ok(PathSpec {
        count: a.lambda_count,
        ratio: a.lambda_ratio,
        lambdas: None,
    })
}

fn cv_spec(a: &CvArgs, seed: u64) -> Result<CvSpec> {
    let spec = CvSpec {
        mode: a.mode,
        folds: a.folds,
        seed,
        ..CvSpec::default()
    };
    spec.validate()?;
    Ok(spec)
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("reading {what} file {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn read_data(a: &DataArgs) -> Result<FunctionalDataset> {
    let curves = open(&a.curves, "curve")?;
    let response = open(&a.response, "response")?;
    load_curves(curves, response).with_context(|| {
        format!(
            "loading {} and {}",
            a.curves.display(),
            a.response.display()
        )
    })
}

fn retained_basis(
    kernel: &KernelSpec,
    fraction: f64,
    grid: Arc<Grid>,
    n: usize,
) -> Result<Arc<EigenBasis>> {
    let full = build_basis(kernel, grid)?;
    Ok(Arc::new(full.truncate(n, fraction)?))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(dir, name)?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes curves in long format, the layout the loader reads back.
fn write_curves(w: &mut csv::Writer<impl Write>, data: &FunctionalDataset) -> Result<()> {
    w.write_record(["obs_id", "predictor_id", "grid_index", "value"])?;
    for (i, id) in data.obs_ids().iter().enumerate() {
        for (j, name) in data.predictor_names().iter().enumerate() {
            for (k, v) in data.curve(i, j).iter().enumerate() {
                w.write_record([id.as_str(), name.as_str(), &k.to_string(), &v.to_string()])?;
            }
        }
    }
    Ok(())
}

fn write_cv(w: &mut csv::Writer<impl Write>, traces: &[(&str, &CvResult)]) -> Result<()> {
    let folds = traces
        .iter()
        .map(|(_, cv)| cv.per_fold_error.len())
        .max()
        .unwrap_or(0);
    let mut header = vec![
        "stage".to_string(),
        "lambda".into(),
        "mean_rmse".into(),
        "selected".into(),
    ];
    header.extend((1..=folds).map(|f| format!("fold_{f}")));
    w.write_record(&header)?;
    for (stage, cv) in traces {
        for (k, lambda) in cv.lambdas.iter().enumerate() {
            let mut row = vec![
                stage.to_string(),
                lambda.to_string(),
                cv.mean_error[k].to_string(),
                u8::from(k == cv.selected_index).to_string(),
            ];
            row.extend(cv.per_fold_error.iter().map(|e| e[k].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StageReport {
    stage: &'static str,
    lambda: f64,
    cv_selected_index: Option<usize>,
    active: Vec<String>,
    k_norms: Vec<f64>,
    /// `null` for predictors excluded from the stage.
    weights: Vec<Option<f64>>,
    n_iterations: usize,
    termination: &'static str,
    converged: bool,
    objective: f64,
    kkt_passed: bool,
    kkt_worst_ratio: f64,
    kkt_failures: Vec<String>,
}

impl StageReport {
    fn new(
        fit: &FitResult,
        cv: Option<&CvResult>,
        kkt: &KktReport,
        names: &[String],
    ) -> StageReport {
        let pick = |idx: &[usize]| idx.iter().map(|&j| names[j].clone()).collect();
        StageReport {
            stage: fit.stage.name(),
            lambda: fit.lambda,
            cv_selected_index: cv.map(|c| c.selected_index),
            active: pick(&fit.active_set),
            k_norms: fit.coefficients.k_norms(),
            weights: fit
                .weights
                .iter()
                .map(|w| w.is_finite().then_some(*w))
                .collect(),
            n_iterations: fit.n_iterations,
            termination: fit.termination.name(),
            converged: fit.converged(),
            objective: fit.objective,
            kkt_passed: kkt.passed(),
            kkt_worst_ratio: kkt.worst_ratio(),
            kkt_failures: pick(&kkt.failures()),
        }
    }
}

#[derive(Serialize)]
struct SelectionReport {
    predictors: Vec<String>,
    selected: Vec<String>,
    intercept: f64,
    stage1_empty: bool,
    kernel: &'static str,
    rho: f64,
    basis_size: usize,
    block_update: &'static str,
    kkt_tol: f64,
    stages: Vec<StageReport>,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let kernel = kernel_spec(&a.kernel)?;
    let opts = fit_options(&a.solver)?;
    let path = path_spec(&a.solver)?;
    let cv = cv_spec(&a.cv, a.seed)?;
    let data = read_data(&a.data)?;
    let basis = retained_basis(
        &kernel,
        a.kernel.basis_fraction,
        data.grid().clone(),
        data.n(),
    )?;
    let exec = Exec::Parallel;

    let fit = adaptive_fit(&data, &basis, &opts, &path, &cv, exec)?;
    let record = fit
        .stage2
        .standardization
        .clone()
        .context("fit carries no standardization")?;
    let std = record.apply(&data)?;
    let scores = project_scores_with(&std, &basis, exec)?;
    let kkt1 = kkt_check(&fit.stage1, &scores, std.response(), FIT_KKT_TOL)?;
    let kkt2 = kkt_check(&fit.stage2, &scores, std.response(), FIT_KKT_TOL)?;

    let names = data.predictor_names();
    let original = original_scale(&fit.stage2);
    let mut w = csv_writer(&a.out, "coefficients.csv")?;
    w.write_record(["obs_id", "predictor_id", "grid_index", "value"])?;
    for (name, curve) in names.iter().zip(&original.curves) {
        for (k, v) in curve.values().iter().enumerate() {
            w.write_record(["beta", name.as_str(), &k.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;

    let report = SelectionReport {
        predictors: names.to_vec(),
        selected: fit
            .stage2
            .active_set
            .iter()
            .map(|&j| names[j].clone())
            .collect(),
        intercept: original.intercept,
        stage1_empty: fit.stage1_empty,
        kernel: kernel.family().name(),
        rho: kernel.rho(),
        basis_size: basis.len(),
        block_update: opts.update.name(),
        kkt_tol: FIT_KKT_TOL,
        stages: vec![
            StageReport::new(&fit.stage1, Some(&fit.cv1), &kkt1, names),
            StageReport::new(&fit.stage2, fit.cv2.as_ref(), &kkt2, names),
        ],
    };
    write_json(&a.out, "selection.json", &report)?;

    let mut traces = vec![("plain", &fit.cv1)];
    if let Some(cv2) = &fit.cv2 {
        traces.push(("adaptive", cv2));
    }
    write_cv(&mut csv_writer(&a.out, "cv.csv")?, &traces)?;

    let model = SavedModel {
        format_version: FORMAT_VERSION,
        kernel: kernel.family(),
        rho: kernel.rho(),
        basis_fraction: a.kernel.basis_fraction,
        predictor_names: names.to_vec(),
        basis: (*basis).clone(),
        standardization: record,
        stage1_empty: fit.stage1_empty,
        stages: vec![
            SavedStage::from_fit(&fit.stage1),
            SavedStage::from_fit(&fit.stage2),
        ],
    };
    model.write(&a.out.join("model.json"))?;

    println!(
        "selected {} of {} predictors at lambda {} (plain stage: {} at lambda {})",
        fit.stage2.active_set.len(),
        names.len(),
        fit.stage2.lambda,
        fit.stage1.active_set.len(),
        fit.stage1.lambda
    );
    Ok(())
}

pub fn cv(a: &CvCommandArgs) -> Result<()> {
    let kernel = kernel_spec(&a.kernel)?;
    let opts = fit_options(&a.solver)?;
    let path = path_spec(&a.solver)?;
    let spec = cv_spec(&a.cv, a.seed)?;
    let data = read_data(&a.data)?;
    let basis = retained_basis(
        &kernel,
        a.kernel.basis_fraction,
        data.grid().clone(),
        data.n(),
    )?;
    let exec = Exec::Parallel;

    let weights = vec![1.0; data.p()];
    let lambdas = match &path.lambdas {
        Some(l) => l.clone(),
        None => {
            let (std, _) = sofia::dataset::standardize(&data)?;
            let scores = project_scores_with(&std, &basis, exec)?;
            lambda_path(&scores, std.response(), &weights, path.count, path.ratio)?
        }
    };
    let folds = make_folds(&spec, data.n())?;
    let result = cross_validate(&data, &basis, &weights, &lambdas, &folds, &opts, exec)?;
    write_cv(&mut csv_writer(&a.out, "cv.csv")?, &[("plain", &result)])?;
    println!(
        "selected lambda {} (index {}) with mean validation RMSE {}",
        result.selected_lambda, result.selected_index, result.mean_error[result.selected_index]
    );
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let kernel = kernel_spec(&a.kernel)?;
    let scenario = Scenario {
        n: a.n,
        p: a.p,
        p0: a.p0,
        snr: a.snr,
        grid_size: a.grid_size,
        seed: a.seed,
        n_test: a.n_test,
    };
    scenario.validate()?;
    ensure!(a.reps >= 1, "--reps must be at least 1");
    let mut settings = SimulationSettings::for_scenario(&scenario, a.reps);
    settings.basis_fraction = a.kernel.basis_fraction;
    settings.path = path_spec(&a.solver)?;
    settings.cv = cv_spec(&a.cv, a.seed)?;
    let mut opts = fit_options(&a.solver)?;
    opts.kill_switch = a.solver.kill_switch.or(settings.opts.kill_switch);
    settings.opts = opts;

    let report = run_scenario(&scenario, &kernel, &settings, Exec::Parallel)?;
    let mut w = create(&a.out, "metrics.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let m = report.means();
    println!(
        "{} replications: mean TP {}, mean FP {}, mean RMSE {} (oracle {})",
        report.rows.len(),
        m.tp,
        m.fp,
        m.rmse,
        m.oracle_rmse
    );
    Ok(())
}

pub fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let model = SavedModel::read(&a.model)?;
    let stage = model.stage(&a.stage)?;
    let fit = model.fit(stage)?;
    let data = load_curves_only(open(&a.curves, "curve")?)
        .with_context(|| format!("loading {}", a.curves.display()))?;
    let data = model.align(&data)?;
    let predictions = predict(&fit, &data)?;
    let mut w = csv_writer(&a.out, "predictions.csv")?;
    w.write_record(["obs_id", "prediction"])?;
    for (id, v) in data.obs_ids().iter().zip(&predictions) {
        w.write_record([id.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    println!("wrote {} predictions", predictions.len());
    Ok(())
}

pub fn eigen(a: &EigenArgs) -> Result<()> {
    let kernel = kernel_spec(&a.kernel)?;
    let grid = Arc::new(Grid::uniform(a.grid_size)?);
    let full = build_basis(&kernel, grid.clone())?;
    let n = a.n.unwrap_or(full.len());
    ensure!(n >= 1, "--n must be at least 1");
    let kept = full.truncate(n, a.kernel.basis_fraction)?;

    let mut w = csv_writer(&a.out, "eigen.csv")?;
    w.write_record(["index", "eigenvalue", "cumulative_fraction", "retained"])?;
    let mut cum = 0.0;
    for (l, theta) in full.eigenvalues().iter().enumerate() {
        cum += theta;
        w.write_record([
            (l + 1).to_string(),
            theta.to_string(),
            (cum / full.total_trace()).to_string(),
            u8::from(l < kept.len()).to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&a.out, "eigenfunctions.csv")?;
    w.write_record(["index", "grid_index", "t", "value"])?;
    for l in 0..kept.len() {
        for (k, (t, v)) in grid.points().iter().zip(kept.eigenfunction(l)).enumerate() {
            w.write_record([
                (l + 1).to_string(),
                k.to_string(),
                t.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    println!("retained {} of {} eigenvalues", kept.len(), full.len());
    Ok(())
}

pub fn window(a: &WindowArgs) -> Result<()> {
    let series = TimeSeries::from_csv(open(&a.series, "series")?)
        .with_context(|| format!("loading {}", a.series.display()))?;
    let spec = WindowSpec {
        target: a.target.clone(),
        window: a.window,
        horizon: a.horizon,
        target_as_predictor: a.target_as_predictor,
    };
    let data = rolling_windows(&series, &spec)?;
    let mut w = csv_writer(&a.out, "curves.csv")?;
    write_curves(&mut w, &data)?;
    w.flush()?;
    let mut w = csv_writer(&a.out, "response.csv")?;
    w.write_record(["obs_id", "y"])?;
    for (id, y) in data.obs_ids().iter().zip(data.response()) {
        w.write_record([id.as_str(), &y.to_string()])?;
    }
    w.flush()?;
    println!("{} windows over {} predictors", data.n(), data.p());
    Ok(())
}

pub fn kkt(a: &KktArgs) -> Result<()> {
    ensure!(
        a.tol.is_finite() && a.tol > 0.0,
        "--tol must be positive, got {}",
        a.tol
    );
    let model = SavedModel::read(&a.model)?;
    let data = model.align(&read_data(&a.data)?)?;
    let basis = model.basis()?;
    let std = model.standardization.apply(&data)?;
    let scores = project_scores_with(&std, &basis, Exec::Parallel)?;

    let mut w = csv_writer(&a.out, "kkt.csv")?;
    w.write_record([
        "stage",
        "predictor_id",
        "active",
        "excluded",
        "residual",
        "bound",
        "pass",
    ])?;
    let mut failed: Vec<String> = Vec::new();
    for stage in &model.stages {
        let fit = model.fit(stage)?;
        let report = kkt_check(&fit, &scores, std.response(), a.tol)?;
        for e in &report.entries {
            let name = &model.predictor_names[e.predictor];
            w.write_record([
                stage.stage.name(),
                name.as_str(),
                &u8::from(e.active).to_string(),
                &u8::from(e.excluded).to_string(),
                &e.residual.to_string(),
                &e.bound.to_string(),
                &u8::from(e.pass).to_string(),
            ])?;
            if !e.pass {
                failed.push(format!("{}/{}", stage.stage.name(), name));
            }
        }
    }
    w.flush()?;
    if !failed.is_empty() {
        bail!("optimality conditions violated for {}", failed.join(", "));
    }
    println!("optimality conditions hold for every stage");
    Ok(())
}
