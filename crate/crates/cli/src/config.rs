//! Flat key/value experiment configuration.
//!
//! Every setting has a dotted key (`lr`, `snr.lambda`, `synth.dim`, ...). A TOML file
//! given with `--config` is flattened into these keys, then `--set key=value` pairs and
//! explicit flags are applied on top, in that order. Unknown keys are rejected.

use crate::CliError;
use snrloss::nn::{LossMode, TrainConfig};
use snrloss::parametric::{BernoulliProblem, SimProtocol, ThetaSampler};
use snrloss::snr_loss::{EtaMode, SnrLossConfig};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Keys and one-line descriptions, in the order they are documented.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for initialization, split, batch order and simulation"),
    ("epochs", "training epochs"),
    ("lr", "initial learning rate"),
    ("lr_decay", "learning-rate multiplier applied every lr_decay_every epochs"),
    ("lr_decay_every", "epochs between learning-rate decays (0 disables)"),
    ("momentum", "momentum coefficient beta"),
    ("batch_size", "batch size (reduced to ceil(N/8) when the train split has < 8192 samples)"),
    ("hidden", "comma-separated hidden layer widths"),
    ("loss", "ce | ce-snr | ce-snr-batch | ce-snr-epoch (ce-snr uses snr.mode)"),
    ("val_fraction", "fraction of samples held out for validation"),
    ("dataset", "synth | mnist"),
    ("max_samples", "use only the first N samples of the dataset (0 = all)"),
    ("images", "IDX image file (default: looked up in $SNR_DATA_DIR or ./data/mnist)"),
    ("labels", "IDX label file (default: looked up in $SNR_DATA_DIR or ./data/mnist)"),
    ("snr.lambda", "Lagrange multiplier on the ordering penalty"),
    ("snr.margin", "margin inside the ordering penalty"),
    ("snr.eps", "variance floor and squared-distance regularizer"),
    ("snr.weight", "weight of the SNR loss added to cross entropy"),
    ("snr.m_mult", "threshold offset below the class mean, in standard deviations"),
    ("snr.mode", "batch | epoch threshold update cadence"),
    ("snr.normalize_pairs", "divide the pair sum by the number of pairs"),
    ("synth.classes", "synthetic blob classes"),
    ("synth.dim", "synthetic blob dimension"),
    ("synth.samples_per_class", "synthetic samples per class"),
    ("synth.separation", "minimum distance between blob centers"),
    ("synth.seed", "seed for the synthetic data"),
    ("sim.p", "comma-separated class boundaries p_i in (0, 1)"),
    ("sim.upper_factor", "class-1 theta_i ~ U(p_i, min(1, factor * p_i)); class 0 ~ U(0, p_i)"),
    ("sim.n_trials", "paired evaluation trials"),
    ("sim.n_calibration", "held-out trials used to calibrate the thresholds"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub loss: String,
    pub val_fraction: f64,
    pub dataset: String,
    pub max_samples: usize,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub snr: SnrLossConfig,
    pub m_mult: f64,
    pub snr_mode: Option<EtaMode>,
    pub synth_classes: usize,
    pub synth_dim: usize,
    pub synth_samples_per_class: usize,
    pub synth_separation: f64,
    pub synth_seed: u64,
    pub sim_p: Vec<f64>,
    pub sim_upper_factor: f64,
    pub sim_n_trials: usize,
    pub sim_n_calibration: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let sim = SimProtocol::default();
        let factor = match sim.class1 {
            ThetaSampler::AboveBoundary { factor } => factor,
            _ => 10.0,
        };
        Self {
            seed: 0,
            epochs: train.epochs,
            lr: train.lr,
            lr_decay: train.lr_decay,
            lr_decay_every: train.lr_decay_every,
            momentum: train.momentum_beta,
            batch_size: train.batch_size,
            hidden: vec![256, 128],
            loss: "ce".into(),
            val_fraction: 0.2,
            dataset: "synth".into(),
            max_samples: 0,
            images: None,
            labels: None,
            snr: train.snr,
            m_mult: train.m_mult,
            snr_mode: None,
            synth_classes: 10,
            synth_dim: 32,
            synth_samples_per_class: 500,
            synth_separation: 6.0,
            synth_seed: 0,
            sim_p: BernoulliProblem::reference().boundaries().to_vec(),
            sim_upper_factor: factor,
            sim_n_trials: sim.n_trials,
            sim_n_calibration: sim.n_calibration,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Input(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_string(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn mode_str(m: EtaMode) -> &'static str {
    match m {
        EtaMode::Batch => "batch",
        EtaMode::Epoch => "epoch",
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "loss" => {
                if !["ce", "ce-snr", "ce-snr-batch", "ce-snr-epoch"].contains(&v) {
                    return Err(CliError::Input(format!("unknown loss `{v}`")));
                }
                self.loss = v.to_string();
            }
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "dataset" => {
                if !["synth", "mnist"].contains(&v) {
                    return Err(CliError::Input(format!("unknown dataset `{v}` (expected synth or mnist)")));
                }
                self.dataset = v.to_string();
            }
            "max_samples" => self.max_samples = parse(key, v)?,
            "images" => self.images = (!v.is_empty()).then(|| PathBuf::from(v)),
            "labels" => self.labels = (!v.is_empty()).then(|| PathBuf::from(v)),
            "snr.lambda" => self.snr.lambda = parse(key, v)?,
            "snr.margin" => self.snr.margin = parse(key, v)?,
            "snr.eps" => self.snr.eps = parse(key, v)?,
            "snr.weight" => self.snr.weight = parse(key, v)?,
            "snr.m_mult" => self.m_mult = parse(key, v)?,
            "snr.mode" => {
                self.snr_mode = Some(match v {
                    "batch" => EtaMode::Batch,
                    "epoch" => EtaMode::Epoch,
                    _ => return Err(CliError::Input(format!("unknown snr.mode `{v}` (expected batch or epoch)"))),
                })
            }
            "snr.normalize_pairs" => self.snr.normalize_pairs = parse(key, v)?,
            "synth.classes" => self.synth_classes = parse(key, v)?,
            "synth.dim" => self.synth_dim = parse(key, v)?,
            "synth.samples_per_class" => self.synth_samples_per_class = parse(key, v)?,
            "synth.separation" => self.synth_separation = parse(key, v)?,
            "synth.seed" => self.synth_seed = parse(key, v)?,
            "sim.p" => self.sim_p = parse_list(key, v)?,
            "sim.upper_factor" => self.sim_upper_factor = parse(key, v)?,
            "sim.n_trials" => self.sim_n_trials = parse(key, v)?,
            "sim.n_calibration" => self.sim_n_calibration = parse(key, v)?,
            _ => return Err(CliError::Core(snrloss::Error::UnknownKey(key.to_string()))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "momentum" => self.momentum.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "hidden" => join(&self.hidden),
            "loss" => self.loss.clone(),
            "val_fraction" => self.val_fraction.to_string(),
            "dataset" => self.dataset.clone(),
            "max_samples" => self.max_samples.to_string(),
            "images" => path_string(&self.images),
            "labels" => path_string(&self.labels),
            "snr.lambda" => self.snr.lambda.to_string(),
            "snr.margin" => self.snr.margin.to_string(),
            "snr.eps" => self.snr.eps.to_string(),
            "snr.weight" => self.snr.weight.to_string(),
            "snr.m_mult" => self.m_mult.to_string(),
            "snr.mode" => mode_str(self.snr_mode.unwrap_or(EtaMode::Epoch)).to_string(),
            "snr.normalize_pairs" => self.snr.normalize_pairs.to_string(),
            "synth.classes" => self.synth_classes.to_string(),
            "synth.dim" => self.synth_dim.to_string(),
            "synth.samples_per_class" => self.synth_samples_per_class.to_string(),
            "synth.separation" => self.synth_separation.to_string(),
            "synth.seed" => self.synth_seed.to_string(),
            "sim.p" => join(&self.sim_p),
            "sim.upper_factor" => self.sim_upper_factor.to_string(),
            "sim.n_trials" => self.sim_n_trials.to_string(),
            "sim.n_calibration" => self.sim_n_calibration.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| CliError::Input(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    /// Applies every key of a TOML document; nested tables become dotted keys.
    pub fn apply_toml(&mut self, text: &str) -> Result<(), CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Input(format!("config: {e}")))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat)?;
        for (k, v) in flat {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_toml(&text)
    }

    pub fn loss_mode(&self) -> Result<LossMode, CliError> {
        let fixed = match self.loss.as_str() {
            "ce" => return Ok(LossMode::Ce),
            "ce-snr" => {
                return Ok(match self.snr_mode.unwrap_or(EtaMode::Epoch) {
                    EtaMode::Batch => LossMode::CeSnrBatch,
                    EtaMode::Epoch => LossMode::CeSnrEpoch,
                })
            }
            "ce-snr-batch" => EtaMode::Batch,
            "ce-snr-epoch" => EtaMode::Epoch,
            other => return Err(CliError::Input(format!("unknown loss `{other}`"))),
        };
        if let Some(m) = self.snr_mode.filter(|&m| m != fixed) {
            return Err(CliError::Input(format!("loss `{}` conflicts with snr.mode = {}", self.loss, mode_str(m))));
        }
        Ok(if fixed == EtaMode::Batch { LossMode::CeSnrBatch } else { LossMode::CeSnrEpoch })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            lr: self.lr,
            momentum_beta: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            loss_mode: self.loss_mode()?,
            snr: self.snr,
            m_mult: self.m_mult,
            lr_decay_every: self.lr_decay_every,
            lr_decay: self.lr_decay,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sim_setup(&self) -> Result<(BernoulliProblem, SimProtocol), CliError> {
        let prob = BernoulliProblem::new(self.sim_p.clone())?;
        let protocol = SimProtocol {
            class0: ThetaSampler::BelowBoundary,
            class1: ThetaSampler::AboveBoundary { factor: self.sim_upper_factor },
            n_trials: self.sim_n_trials,
            n_calibration: self.sim_n_calibration,
            seed: self.seed,
        };
        Ok((prob, protocol))
    }

    /// `key = default  description` lines for `--help`.
    pub fn defaults_help() -> String {
        let d = Self::default();
        let mut out = String::from("Configuration keys (--config FILE / --set KEY=VALUE), with defaults:\n");
        for (k, help) in KEYS {
            let v = d.get(k).unwrap_or_default();
            let shown = if v.is_empty() { "\"\"".to_string() } else { v };
            out.push_str(&format!("  {k} = {shown}\n      {help}\n"));
        }
        out.push_str("\nEnvironment: SNR_DATA_DIR (else ./data/mnist) is searched for MNIST IDX files when images/labels are unset.\n");
        out
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<(), CliError> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let value = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|item| match item {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    _ => Err(CliError::Input(format!("config: unsupported array item in `{key}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
            toml::Value::Datetime(_) => return Err(CliError::Input(format!("config: unsupported value for `{key}`"))),
        };
        out.push((key, value));
    }
    Ok(())
}
