//! `snrloss`: moment bounds, the Bernoulli classifier simulation and MLP training runs.
//!
//! Results go to stdout as JSON; per-epoch training metrics go to a CSV file.
//! Exit codes: 0 success, 2 input error, 3 training divergence, 1 anything else.

mod config;

use clap::{ArgGroup, Args, Parser, Subcommand};
use config::ExperimentConfig;
use serde::Serialize;
use serde_json::{json, Value};
use snrloss::bounds::{self, Interval, Moments};
use snrloss::data_io::{self, Dataset};
use snrloss::extremal::{oracle_max_event, DiscreteDist, Event, Grid, OracleResult};
use snrloss::nn::{self, MetricsRecord, MlpModel};
use snrloss::parametric::simulate_accuracy;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] snrloss::Error),
    #[error("writing metrics: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing output: {0}")]
    Output(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(snrloss::Error::Diverged { .. }) => 3,
            CliError::Core(e) if e.is_input_error() => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "snrloss",
    version,
    about = "Moment bounds, Bernoulli SNR classifier simulation and CE vs CE+SNR training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tightest mean/variance bounds for a tail, two-sided or interval event.
    Bounds(BoundsArgs),
    /// Paired Monte Carlo accuracy of the SNR and likelihood-ratio Bernoulli classifiers.
    #[command(after_help = ExperimentConfig::defaults_help())]
    ParametricSim(SimArgs),
    /// Train an MLP with cross entropy or cross entropy plus the SNR loss.
    #[command(after_help = ExperimentConfig::defaults_help())]
    Train(TrainArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("event").required(true)))]
struct BoundsArgs {
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, allow_negative_numbers = true)]
    var: f64,
    /// Upper bound on Pr(x >= ETA).
    #[arg(long, group = "event", allow_negative_numbers = true, value_name = "ETA")]
    tail: Option<f64>,
    /// Upper bound on Pr(x <= LO or x >= HI).
    #[arg(long, group = "event", num_args = 2, allow_negative_numbers = true, value_names = ["LO", "HI"])]
    outside: Option<Vec<f64>>,
    /// Upper and lower bounds on Pr(LO <= x <= HI).
    #[arg(long, group = "event", num_args = 2, allow_negative_numbers = true, value_names = ["LO", "HI"])]
    inside: Option<Vec<f64>>,
    /// Lower/upper envelope of the CDF at ETA.
    #[arg(long, group = "event", allow_negative_numbers = true, value_name = "ETA")]
    cdf: Option<f64>,
    /// Also solve the moment problem on a grid and report the gap to the closed form.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file (keys listed below).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_trials: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// synth | mnist
    #[arg(long)]
    dataset: Option<String>,
    /// ce | ce-snr | ce-snr-batch | ce-snr-epoch
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// IDX image file (plain or gzip).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (plain or gzip).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bounds(a) => cmd_bounds(&a),
        Command::ParametricSim(a) => cmd_parametric_sim(&a),
        Command::Train(a) => cmd_train(&a),
    };
    match result.and_then(|v| Ok(serde_json::to_string_pretty(&v)?)) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(snrloss::Error::Diverged { .. }) = e {
                eprintln!("hint: lower lr or raise snr.eps");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn witness_json(d: &DiscreteDist) -> Value {
    json!(d.points().iter().map(|&(x, p)| [x, p]).collect::<Vec<_>>())
}

fn oracle_json(o: &OracleResult, bound: f64) -> Value {
    json!({
        "sup_prob": o.sup_prob,
        "gap": (bound - o.sup_prob).abs(),
        "grid_step": o.grid_step,
        "witness": witness_json(&o.witness),
    })
}

fn interval(v: &[f64]) -> Result<Interval, CliError> {
    Ok(Interval::new(v[0], v[1])?)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<Value, CliError> {
    let m = Moments::new(a.mu, a.var)?;
    let grid = Grid::around(&m);
    let mut out = json!({ "mu": a.mu, "var": a.var });

    if let Some(eta) = a.tail {
        let bound = bounds::upper_tail_bound(&m, eta)?;
        out["event"] = json!({ "kind": "tail", "eta": eta });
        out["bound"] = json!(bound);
        if a.verify {
            out["oracle"] = oracle_json(&oracle_max_event(&m, &Event::Tail(eta), &grid)?, bound);
        }
    } else if let Some(v) = &a.outside {
        let iv = interval(v)?;
        let bound = bounds::outside_interval_upper_bound(&m, &iv)?;
        out["event"] = json!({ "kind": "outside", "lo": iv.lo(), "hi": iv.hi() });
        out["bound"] = json!(bound);
        out["sharp_bound"] = json!(bounds::outside_interval_sharp_bound(&m, &iv)?);
        if a.verify {
            out["oracle"] = oracle_json(&oracle_max_event(&m, &Event::Outside(iv), &grid)?, bound);
        }
    } else if let Some(v) = &a.inside {
        let iv = interval(v)?;
        let upper = bounds::inside_interval_upper_bound(&m, &iv)?;
        let lower = bounds::inside_interval_lower_bound(&m, &iv)?;
        out["event"] = json!({ "kind": "inside", "lo": iv.lo(), "hi": iv.hi() });
        out["bound"] = json!(upper);
        out["lower_bound"] = json!(lower);
        if a.verify {
            out["oracle"] = oracle_json(&oracle_max_event(&m, &Event::Inside(iv), &grid)?, upper);
            // the infimum of the inside probability is the complement of the outside supremum
            let outside = oracle_max_event(&m, &Event::Outside(iv), &grid)?;
            let inf = 1.0 - outside.sup_prob;
            out["oracle_lower"] =
                json!({ "inf_prob": inf, "gap": (lower - inf).abs(), "grid_step": outside.grid_step });
        }
    } else if let Some(eta) = a.cdf {
        if a.verify {
            return Err(CliError::Input("--verify is not available for --cdf".into()));
        }
        let env = bounds::cdf_envelope(&m, eta)?;
        out["event"] = json!({ "kind": "cdf", "eta": eta });
        out["lower"] = json!(env.lower);
        out["upper"] = json!(env.upper);
    }
    Ok(out)
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_parametric_sim(a: &SimArgs) -> Result<Value, CliError> {
    let mut cfg = load_config(&a.common)?;
    if let Some(n) = a.n_trials {
        cfg.sim_n_trials = n;
    }
    let (prob, protocol) = cfg.sim_setup()?;
    let r = simulate_accuracy(&prob, &protocol)?;
    Ok(json!({
        "acc_snr": r.acc_snr,
        "acc_ml": r.acc_ml,
        "tau_snr": r.tau_snr,
        "tau_ml": r.tau_ml,
        "n_trials": r.n_trials,
        "seed": r.seed,
        "only_snr_correct": r.only_snr_correct,
        "only_ml_correct": r.only_ml_correct,
        "p": prob.boundaries(),
        "upper_factor": cfg.sim_upper_factor,
        "n_calibration": protocol.n_calibration,
    }))
}

const MNIST_CANDIDATES: &[(&str, &str)] = &[
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    ("mnist-10k-images-idx3-ubyte.gz", "mnist-10k-labels-idx1-ubyte.gz"),
];

fn mnist_paths(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf), CliError> {
    if let (Some(i), Some(l)) = (&cfg.images, &cfg.labels) {
        return Ok((i.clone(), l.clone()));
    }
    // the bundled subset under ./data/mnist is the fallback when run from the repository root
    let dir = std::env::var_os("SNR_DATA_DIR").map(PathBuf::from).or_else(|| {
        let local = PathBuf::from("data/mnist");
        local.is_dir().then_some(local)
    });
    let found = dir.as_ref().and_then(|d| {
        MNIST_CANDIDATES.iter().map(|(i, l)| (d.join(i), d.join(l))).find(|(i, l)| i.is_file() && l.is_file())
    });
    found.ok_or_else(|| {
        CliError::Input(format!(
            "MNIST files not found ({}). Download train-images-idx3-ubyte.gz and \
             train-labels-idx1-ubyte.gz from an MNIST mirror into a directory and set \
             SNR_DATA_DIR to it, or pass --images and --labels.",
            match &dir {
                Some(d) => format!("searched {}", d.display()),
                None => "SNR_DATA_DIR is unset and ./data/mnist does not exist".to_string(),
            }
        ))
    })
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let ds = match cfg.dataset.as_str() {
        "synth" => data_io::synth_blobs(
            cfg.synth_classes,
            cfg.synth_dim,
            cfg.synth_samples_per_class,
            cfg.synth_separation,
            cfg.synth_seed,
        )?,
        "mnist" => {
            let (images, labels) = mnist_paths(cfg)?;
            data_io::load_idx(&images, &labels).map_err(|e| match e {
                snrloss::Error::Io(io) => {
                    CliError::Input(format!("cannot read {} / {}: {io}", images.display(), labels.display()))
                }
                other => other.into(),
            })?
        }
        other => return Err(CliError::Input(format!("unknown dataset `{other}`"))),
    };
    Ok(if cfg.max_samples > 0 { ds.head(cfg.max_samples) } else { ds })
}

#[derive(Serialize)]
struct CsvRow {
    epoch: usize,
    train_loss_ce: f64,
    train_loss_snr: f64,
    val_accuracy: f64,
}

fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(CsvRow {
            epoch: r.epoch,
            train_loss_ce: r.train_loss_ce,
            train_loss_snr: r.train_loss_snr,
            val_accuracy: r.val_accuracy,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<Value, CliError> {
    let mut cfg = load_config(&a.common)?;
    for (key, value) in [("dataset", &a.dataset), ("loss", &a.loss)] {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(p) = &a.images {
        cfg.images = Some(p.clone());
    }
    if let Some(p) = &a.labels {
        cfg.labels = Some(p.clone());
    }
    let train_cfg = cfg.train_config()?;
    let ds = load_dataset(&cfg)?;
    let split = data_io::split_and_batch(&ds, cfg.val_fraction, cfg.batch_size, cfg.seed)?;

    let mut dims = vec![ds.features()];
    dims.extend(&cfg.hidden);
    dims.push(ds.class_count());
    let mut model = MlpModel::new(&dims, cfg.seed)?;
    let records = nn::train(&mut model, &split, &train_cfg)?;
    write_metrics(&a.out, &records)?;

    let best = records.iter().max_by(|x, y| x.val_accuracy.total_cmp(&y.val_accuracy).then(y.epoch.cmp(&x.epoch)));
    Ok(json!({
        "dataset": cfg.dataset,
        "loss": train_cfg.loss_mode.as_str(),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "n_train": split.train.len(),
        "n_val": split.val.len(),
        "batch_size": nn::effective_batch_size(cfg.batch_size, split.train.len()),
        "layers": dims,
        "final_val_accuracy": records.last().map(|r| r.val_accuracy),
        "best_val_accuracy": best.map(|r| r.val_accuracy),
        "best_epoch": best.map(|r| r.epoch),
        "final_eta": records.last().map(|r| r.eta_snapshot.clone()),
        "metrics_csv": a.out.display().to_string(),
    }))
}
