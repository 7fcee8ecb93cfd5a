mod common;

use std::fs;
use std::sync::Arc;

use common::{read_csv, run, sample_files, stderr, stdout};
use sofia::dataset::{load_curves, load_curves_only};
use sofia::kernels::{build_basis, KernelFamily, KernelSpec};
use sofia::model_selection::CvSpec;
use sofia::solver::{adaptive_fit, predict, FitOptions, PathSpec};
use sofia::Exec;

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_writes_artifacts_that_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let f = sample_files(dir.path(), 80, 7, 20.0, 3);
    let out = dir.path().join("fit");
    let o = run(&[
        "fit",
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--lambda-count",
        "20",
        "--seed",
        "9",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["coefficients.csv", "selection.json", "cv.csv", "model.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }

    // Coefficient curves load back as a curve table.
    let beta = load_curves_only(fs::File::open(out.join("coefficients.csv")).unwrap()).unwrap();
    assert_eq!(beta.n(), 1);
    assert_eq!(beta.p(), 7);
    assert_eq!(beta.grid().len(), 20);

    let sel: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["stages"].as_array().unwrap().len(), 2);
    assert_eq!(sel["stages"][1]["stage"], "adaptive");
    assert!(sel["stages"][1]["kkt_passed"].as_bool().unwrap());

    // The same fit in-process gives the same predictions as `predict`.
    let pred_dir = dir.path().join("pred");
    let o = run(&[
        "predict",
        "--model",
        s(&out.join("model.json")),
        "--curves",
        s(&f.test_curves),
        "--out",
        s(&pred_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&pred_dir.join("predictions.csv"));
    assert_eq!(rows[0], ["obs_id", "prediction"]);
    assert_eq!(rows.len(), 26);

    let data = load_curves(
        fs::File::open(&f.curves).unwrap(),
        fs::File::open(&f.response).unwrap(),
    )
    .unwrap();
    let basis = Arc::new(
        build_basis(
            &KernelSpec::new(KernelFamily::Gaussian, 8.0).unwrap(),
            data.grid().clone(),
        )
        .unwrap()
        .truncate(data.n(), 0.99)
        .unwrap(),
    );
    let path = PathSpec {
        count: 20,
        ..PathSpec::default()
    };
    let fit = adaptive_fit(
        &data,
        &basis,
        &FitOptions::default(),
        &path,
        &CvSpec::kfold(5, 9),
        Exec::Sequential,
    )
    .unwrap();
    let test = load_curves_only(fs::File::open(&f.test_curves).unwrap()).unwrap();
    let expected = predict(&fit.stage2, &test).unwrap();
    for (row, e) in rows[1..].iter().zip(&expected) {
        let got: f64 = row[1].parse().unwrap();
        assert!((got - e).abs() <= 1e-12 * (1.0 + e.abs()), "{got} vs {e}");
    }

    let o = run(&[
        "kkt-check",
        "--model",
        s(&out.join("model.json")),
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kkt = read_csv(&out.join("kkt.csv"));
    assert_eq!(kkt.len(), 1 + 2 * 7);
}

#[test]
fn kkt_check_rejects_a_perturbed_model() {
    let dir = tempfile::tempdir().unwrap();
    let f = sample_files(dir.path(), 60, 6, 20.0, 4);
    let out = dir.path().join("fit");
    let o = run(&[
        "fit",
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--lambda-count",
        "10",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = out.join("model.json");
    let mut model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let row = &mut model["stages"][1]["coefficients"][0][0];
    *row = serde_json::json!(row.as_f64().unwrap() * 1.5 + 0.1);
    fs::write(&path, serde_json::to_string(&model).unwrap()).unwrap();
    let o = run(&[
        "kkt-check",
        "--model",
        s(&path),
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("optimality conditions violated"),
        "{}",
        stderr(&o)
    );
    assert!(out.join("kkt.csv").exists());
}

#[test]
fn predict_matches_predictors_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let f = sample_files(dir.path(), 60, 6, 20.0, 5);
    let out = dir.path().join("fit");
    assert!(run(&[
        "fit",
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--lambda-count",
        "10",
        "--out",
        s(&out)
    ])
    .status
    .success());
    // Reverse the predictor order in the test file.
    let rows = read_csv(&f.test_curves);
    let mut body: Vec<&Vec<String>> = rows[1..].iter().collect();
    body.sort_by_key(|r| std::cmp::Reverse(r[1].clone()));
    let mut text = String::from("obs_id,predictor_id,grid_index,value\n");
    for r in body {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    let shuffled = dir.path().join("shuffled.csv");
    fs::write(&shuffled, text).unwrap();

    let model = out.join("model.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&[
        "predict",
        "--model",
        s(&model),
        "--curves",
        s(&f.test_curves),
        "--out",
        s(&a)
    ])
    .status
    .success());
    assert!(run(&[
        "predict",
        "--model",
        s(&model),
        "--curves",
        s(&shuffled),
        "--out",
        s(&b)
    ])
    .status
    .success());
    assert_eq!(
        fs::read(a.join("predictions.csv")).unwrap(),
        fs::read(b.join("predictions.csv")).unwrap()
    );
    let o = run(&[
        "predict",
        "--model",
        s(&model),
        "--curves",
        s(&f.test_curves),
        "--stage",
        "nope",
        "--out",
        s(&a),
    ]);
    assert!(!o.status.success());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"kernel": "exponential", "rho": 2, "grid_size": 30}"#,
    )
    .unwrap();
    let out = dir.path().join("e");
    let o = run(&["eigen", "--config", s(&cfg), "--rho", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let direct = dir.path().join("d");
    assert!(run(&[
        "eigen",
        "--kernel",
        "exponential",
        "--rho",
        "4",
        "--grid-size",
        "30",
        "--out",
        s(&direct)
    ])
    .status
    .success());
    assert_eq!(
        fs::read(out.join("eigen.csv")).unwrap(),
        fs::read(direct.join("eigen.csv")).unwrap()
    );
    assert_eq!(read_csv(&out.join("eigen.csv")).len(), 31);
}

#[test]
fn explicit_lambda_gives_a_single_fit() {
    let dir = tempfile::tempdir().unwrap();
    let f = sample_files(dir.path(), 60, 6, 20.0, 6);
    let out = dir.path().join("fit");
    let o = run(&[
        "fit",
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--lambda-count",
        "1",
        "--lambda",
        "0.05",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cv = read_csv(&out.join("cv.csv"));
    assert!(cv[1..].iter().all(|r| r[1] == "0.05"));
    let sel: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["stages"][0]["lambda"], 0.05);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let o = run(&["fit", "--curves", s(&missing), "--response", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.csv"), "{}", stderr(&o));

    let f = sample_files(dir.path(), 40, 6, 20.0, 7);
    for extra in [
        &["--lambda-count", "1"][..],
        &["--lambda-ratio", "1.5"],
        &["--tol", "0"],
        &["--folds", "1"],
        &["--rho", "-2"],
        &["--basis-fraction", "0"],
        &["--lambda", "0.1,0.2"],
    ] {
        let mut args = vec![
            "fit",
            "--curves",
            s(&f.curves),
            "--response",
            s(&f.response),
        ];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(!o.status.success(), "{extra:?} accepted");
        assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
    }

    let o = run(&[
        "simulate", "--p", "10", "--p0", "3", "--snr", "1", "--seed", "1",
    ]);
    assert!(!o.status.success());
    let o = run(&["fit", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn window_output_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let mut text = String::from("time,a,b,y\n");
    for t in 0..30 {
        let x = t as f64;
        text.push_str(&format!("{t},{},{},{}\n", x.sin(), x * 0.5, x.cos()));
    }
    fs::write(&series, text).unwrap();
    let out = dir.path().join("w");
    let o = run(&[
        "window",
        "--series",
        s(&series),
        "--target",
        "y",
        "--window",
        "6",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("24 windows"));
    let data = load_curves(
        fs::File::open(out.join("curves.csv")).unwrap(),
        fs::File::open(out.join("response.csv")).unwrap(),
    )
    .unwrap();
    assert_eq!((data.n(), data.p()), (24, 2));
    assert_eq!(data.obs_ids()[0], "01");
    assert_eq!(data.response()[0], 6f64.cos());
    assert_eq!(data.curve(2, 1), &[1.0, 1.5, 2.0, 2.5, 3.0, 3.5]);
}

#[test]
fn simulate_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--n",
        "60",
        "--p",
        "6",
        "--p0",
        "5",
        "--snr",
        "10",
        "--reps",
        "2",
        "--grid-size",
        "15",
        "--n-test",
        "20",
        "--lambda-count",
        "10",
        "--seed",
        "11",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("metrics.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "mean");
    assert!(stdout(&o).starts_with("2 replications"));
}

#[test]
fn cv_command_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let f = sample_files(dir.path(), 60, 6, 20.0, 8);
    let out = dir.path().join("cv");
    let o = run(&[
        "cv",
        "--curves",
        s(&f.curves),
        "--response",
        s(&f.response),
        "--lambda-count",
        "8",
        "--folds",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("cv.csv"));
    assert_eq!(
        rows[0],
        [
            "stage",
            "lambda",
            "mean_rmse",
            "selected",
            "fold_1",
            "fold_2",
            "fold_3"
        ]
    );
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[1..].iter().filter(|r| r[3] == "1").count(), 1);
}
