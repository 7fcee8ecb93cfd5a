use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sofia::kernels::KernelFamily;
use sofia::model_selection::CvMode;
use sofia::solver::BlockUpdate;

#[derive(Debug, Parser)]
#[command(
    name = "sofia",
    version,
    about = "Adaptive penalized scalar-on-function regression",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads for parallel sections. Never changes any output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the two-stage estimator and write coefficients, selection report,
    /// CV traces and a reusable model file.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Fit(FitArgs),
    /// Run a simulation scenario and write per-replication metrics.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Cross-validate the unit-weight λ path only.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Cv(CvCommandArgs),
    /// Predict responses for new curves with a saved model.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Predict(PredictArgs),
    /// Write the kernel operator spectrum and retained eigenfunctions.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Eigen(EigenArgs),
    /// Turn a multivariate time series into rolling-window curves.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Window(WindowArgs),
    /// Verify the optimality conditions of a saved model on its data.
    #[command(
        name = "kkt-check",
        args_override_self = true,
        allow_negative_numbers = true
    )]
    KktCheck(KktArgs),
}

impl Command {
    pub const NAMES: [&'static str; 7] = [
        "fit",
        "simulate",
        "cv",
        "predict",
        "eigen",
        "window",
        "kkt-check",
    ];
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, default_value = "gaussian")]
    pub kernel: KernelFamily,
    /// Kernel length scale.
    #[arg(long, default_value_t = 8.0)]
    pub rho: f64,
    /// Fraction of the kernel trace the retained eigenvalues must explain.
    #[arg(long, default_value_t = 0.99)]
    pub basis_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 100)]
    pub lambda_count: usize,
    /// Smallest λ on the path as a fraction of λ_max.
    #[arg(long, default_value_t = 0.05)]
    pub lambda_ratio: f64,
    /// Explicit λ values, comma separated, replacing the generated path.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub kill_switch: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// `exact` block minimization or the `identity` soft-threshold.
    #[arg(long, default_value = "exact")]
    pub block_update: BlockUpdate,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[arg(long = "cv", default_value = "kfold")]
    pub mode: CvMode,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Curve table (long or wide format).
    #[arg(long)]
    pub curves: PathBuf,
    /// Response table `obs_id,y`.
    #[arg(long)]
    pub response: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    /// Seed for the k-fold shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvCommandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub p0: usize,
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Required: every random draw derives from it.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub curves: PathBuf,
    /// Which stage's coefficients to use.
    #[arg(long, default_value = "adaptive")]
    pub stage: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Number of equally spaced grid points on [0, 1].
    #[arg(long, default_value_t = 50)]
    pub grid_size: usize,
    /// Sample size capping the number of retained eigenvalues.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Time-series table: time column first, then numeric columns.
    #[arg(long)]
    pub series: PathBuf,
    /// Column whose future value is the response.
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 12)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    /// Also use the target's own history as a predictor curve.
    #[arg(long)]
    pub target_as_predictor: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KktArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Expands `--config FILE` into flags placed right after the subcommand,
/// so flags given on the command line, which come later, win.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            let path = iter.next().context("--config needs a file path")?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let raw = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    let serde_json::Value::Object(map) = value else {
        bail!("config file {} must hold a JSON object", path.display());
    };
    let mut injected = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => injected.push(flag.into()),
            serde_json::Value::String(s) => injected.extend([flag.into(), s.into()]),
            serde_json::Value::Number(n) => injected.extend([flag.into(), n.to_string().into()]),
            serde_json::Value::Array(items) => {
                let joined = items
                    .iter()
                    .map(|v| match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(",");
                injected.extend([flag.into(), joined.into()]);
            }
            serde_json::Value::Object(_) => bail!("config key `{key}` must not be an object"),
        }
    }
    let at = rest
        .iter()
        .position(|a| Command::NAMES.contains(&a.to_string_lossy().as_ref()))
        .map(|i| i + 1)
        .unwrap_or(rest.len());
    rest.splice(at..at, injected);
    Ok(rest)
}
