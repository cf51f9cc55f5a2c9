use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use vineclass::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "vineclass", version, about = "Vine-copula classifiers for mixed continuous and ordinal data")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a labelled dataset from one of the benchmark data-generating processes.
    Simulate(SimulateArgs),
    /// Fit one vine per class and store the classifier as JSON.
    Fit(FitArgs),
    /// Posterior class probabilities (and optional risk groups) for a dataset.
    Predict(PredictArgs),
    /// Per-class Brier and nll scores, overall nll and AUC of stored posteriors.
    Evaluate(EvaluateArgs),
    /// Risk-group table for one or more alpha thresholds.
    RiskGroups(RiskGroupsArgs),
    /// Risk curve over one variable or surface over two.
    Scenario(ScenarioArgs),
    /// Conditional Spearman bands, latent normal scores and edge reports.
    Diagnose(DiagnoseArgs),
    /// Copula classifier against weighted logistic regression on simulated data.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Directory for relative output paths (default: $VINECLASS_OUT_DIR or the working directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// continuous | mixed
    #[arg(long, default_value = "continuous")]
    pub variant: String,
    /// Rows per class.
    #[arg(long, default_value_t = 700)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Independent sample index for the same seed (e.g. 0 = train, 1 = test).
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Schema file written next to the data (default: <out>.schema.json).
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// kernel | empirical (continuous margins)
    #[arg(long, default_value = "kernel")]
    pub margins: String,
    #[arg(long, default_value_t = vineclass::vine::DEFAULT_PSI0)]
    pub psi0: f64,
    /// Candidate pair-copula families.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// equal | empirical
    #[arg(long, default_value = "equal")]
    pub priors: String,
    /// greedy | full
    #[arg(long, default_value = "greedy")]
    pub truncation: String,
    /// Also write a per-edge report (needs --seed for the Monte Carlo Spearman's rho).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file whose label/aux entries name the extra columns to carry over.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub aux: Option<String>,
    /// Risk thresholds; adds one group column per value.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub adverse: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Posterior CSV with a label column, as `SPLIT=PATH` or `PATH`.
    #[arg(long, required = true)]
    pub predictions: Vec<String>,
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Class whose probability is scored by the AUC.
    #[arg(long, default_value_t = 1)]
    pub adverse: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct RiskGroupsArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.15,0.20,0.25")]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub adverse: u32,
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Auxiliary outcome column summarized per group.
    #[arg(long)]
    pub aux: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON object mapping every variable to its base value.
    #[arg(long)]
    pub profile: PathBuf,
    /// `NAME:MIN:MAX[:POINTS]` or `NAME:V1,V2,...`; one grid gives a curve, two a surface.
    #[arg(long, required = true, num_args = 1)]
    pub grid: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub adverse: u32,
    /// CSV output; axis metadata goes to the same path with a `.meta.json` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Restrict the data to rows with this label.
    #[arg(long)]
    pub class: Option<u32>,
    /// Conditional Spearman's rho of X and Y by the ordinal Z.
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub z: Option<String>,
    #[arg(long, default_value_t = vineclass::diagnostics::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = vineclass::diagnostics::DEFAULT_BAND_LEVEL)]
    pub level: f64,
    /// Latent normal scores for `CONTINUOUS,ORDINAL`.
    #[arg(long, value_delimiter = ',')]
    pub scores: Option<Vec<String>>,
    /// Fitted classifier: adds model-implied rho (with --edge) and writes edge reports.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Edge label such as `23;1` for the model-implied rho.
    #[arg(long)]
    pub edge: Option<String>,
    /// Output directory for the diagnostic CSVs (relative to the output directory).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub dir: OutDir,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// continuous | mixed
    #[arg(long, default_value = "continuous")]
    pub variant: String,
    /// Seeds as a list and/or ranges, e.g. `1-20` or `3,5,9`.
    #[arg(long, default_value = "1-20")]
    pub seeds: String,
    #[arg(long, default_value_t = vineclass::simulation::DEFAULT_TRAIN_PER_CLASS)]
    pub n_train: usize,
    #[arg(long, default_value_t = vineclass::simulation::DEFAULT_TEST_PER_CLASS)]
    pub n_test: usize,
    /// oracle | mbic
    #[arg(long, value_delimiter = ',', default_value = "oracle,mbic")]
    pub modes: Vec<String>,
    #[arg(long, default_value = "kernel")]
    pub margins: String,
    #[arg(long, default_value_t = vineclass::vine::DEFAULT_PSI0)]
    pub psi0: f64,
    /// Points per axis of the class-1 probability grid (0 disables it).
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Probability-grid CSV (default: <out>.grid.csv).
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[command(flatten)]
    pub dir: OutDir,
}

fn flag_present(argv: &[String], flag: &str) -> bool {
    argv.iter()
        .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
}

fn scalar(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::InvalidArgument(format!("unsupported config value {other}"))),
    }
}

/// Expands `--config FILE`: every key of the JSON object becomes a flag
/// unless the command line already sets it.
pub fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = if let Some(p) = argv[pos].strip_prefix("--config=") {
        let p = p.to_string();
        argv.remove(pos);
        p
    } else {
        if pos + 1 >= argv.len() {
            return Err(Error::InvalidArgument("--config needs a file path".into()));
        }
        let p = argv.remove(pos + 1);
        argv.remove(pos);
        p
    };
    let text = std::fs::read_to_string(&path)?;
    let Value::Object(map) = serde_json::from_str::<Value>(&text)? else {
        return Err(Error::InvalidArgument(format!("config file {path} must hold a JSON object")));
    };
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag_present(&argv, &flag) {
            continue;
        }
        match &value {
            Value::Bool(true) => argv.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",");
                argv.push(flag);
                argv.push(joined);
            }
            other => {
                argv.push(flag);
                argv.push(scalar(other)?);
            }
        }
    }
    Ok(argv)
}
