#![allow(dead_code)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sofia::dataset::FunctionalDataset;
use sofia::simulation::{generate_sample, Scenario};

pub fn sofia() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sofia"))
}

pub fn run(args: &[&str]) -> Output {
    sofia().args(args).output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn write_curves(path: &Path, data: &FunctionalDataset) {
    let mut w = BufWriter::new(File::create(path).unwrap());
    writeln!(w, "obs_id,predictor_id,grid_index,value").unwrap();
    for (i, id) in data.obs_ids().iter().enumerate() {
        for (j, name) in data.predictor_names().iter().enumerate() {
            for (k, v) in data.curve(i, j).iter().enumerate() {
                writeln!(w, "{id},{name},{k},{v}").unwrap();
            }
        }
    }
}

pub fn write_response(path: &Path, data: &FunctionalDataset) {
    let mut w = BufWriter::new(File::create(path).unwrap());
    writeln!(w, "obs_id,y").unwrap();
    for (id, y) in data.obs_ids().iter().zip(data.response()) {
        writeln!(w, "{id},{y}").unwrap();
    }
}

pub struct SampleFiles {
    pub curves: PathBuf,
    pub response: PathBuf,
    pub test_curves: PathBuf,
    pub train: FunctionalDataset,
    pub test: FunctionalDataset,
}

/// Simulated train and test files under `dir`.
pub fn sample_files(dir: &Path, n: usize, p: usize, snr: f64, seed: u64) -> SampleFiles {
    let scenario = Scenario {
        n,
        p,
        p0: 5,
        snr,
        grid_size: 20,
        seed,
        n_test: 25,
    };
    let s = generate_sample(&scenario, 0).unwrap();
    let files = SampleFiles {
        curves: dir.join("curves.csv"),
        response: dir.join("response.csv"),
        test_curves: dir.join("test_curves.csv"),
        train: s.train,
        test: s.test,
    };
    write_curves(&files.curves, &files.train);
    write_response(&files.response, &files.train);
    write_curves(&files.test_curves, &files.test);
    files
}

pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}
