use super::mlp::{cross_entropy, MlpModel};
use super::sgd::Momentum;
use crate::data_io::{epoch_batches, Dataset, SplitData};
use crate::error::{invalid, Error, Result};
use crate::snr_loss::{class_conditional_stats, snr_loss_and_grad, EtaMode, EtaState, SnrLossConfig, StatsAccumulator};
use ndarray::{s, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    Ce,
    CeSnrBatch,
    CeSnrEpoch,
}

impl LossMode {
    pub fn eta_mode(self) -> Option<EtaMode> {
        match self {
            LossMode::Ce => None,
            LossMode::CeSnrBatch => Some(EtaMode::Batch),
            LossMode::CeSnrEpoch => Some(EtaMode::Epoch),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Ce => "ce",
            LossMode::CeSnrBatch => "ce-snr-batch",
            LossMode::CeSnrEpoch => "ce-snr-epoch",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossMode::Ce),
            "ce-snr-batch" => Ok(LossMode::CeSnrBatch),
            "ce-snr-epoch" => Ok(LossMode::CeSnrEpoch),
            other => Err(invalid(format!("unknown loss mode `{other}` (expected ce, ce-snr-batch or ce-snr-epoch)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum_beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub snr: SnrLossConfig,
    /// Threshold offset in standard deviations below the class mean.
    pub m_mult: f64,
    /// Learning rate is multiplied by `lr_decay` every `lr_decay_every` epochs (0 disables).
    pub lr_decay_every: usize,
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum_beta: 0.9,
            batch_size: 1024,
            epochs: 20,
            seed: 0,
            loss_mode: LossMode::Ce,
            snr: SnrLossConfig::default(),
            m_mult: 4.0,
            lr_decay_every: 10,
            lr_decay: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum_beta)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(self.m_mult.is_finite() && self.m_mult >= 0.0) {
            return Err(invalid("m_mult must be finite and non-negative"));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return Err(invalid("lr_decay must be positive"));
        }
        self.snr.validate()
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_every {
            0 => self.lr,
            every => self.lr * self.lr_decay.powi((epoch / every) as i32),
        }
    }

    fn snr_active(&self) -> bool {
        self.loss_mode != LossMode::Ce && self.snr.weight > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based index of the completed epoch.
    pub epoch: usize,
    /// Sample-weighted mean of the per-batch cross entropy.
    pub train_loss_ce: f64,
    /// Sample-weighted mean of the per-batch SNR loss (0 when inactive).
    pub train_loss_snr: f64,
    pub val_accuracy: f64,
    /// Thresholds at the end of the epoch; empty when the SNR term is inactive.
    pub eta_snapshot: Vec<f64>,
}

/// Requested batch size, reduced to `⌈n/8⌉` for training sets under 8192 samples.
pub fn effective_batch_size(requested: usize, n_train: usize) -> usize {
    let b = if n_train < 8192 { requested.min(n_train.div_ceil(8)) } else { requested };
    b.max(1)
}

const EVAL_CHUNK: usize = 2048;

/// Fraction of rows whose arg-max logit (lowest index on ties) equals the label.
pub fn evaluate_accuracy(model: &MlpModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    let mut correct = 0usize;
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let logits = model.forward(ds.inputs().slice(s![start..end, ..]))?;
        for (row, &y) in logits.rows().into_iter().zip(&ds.labels()[start..end]) {
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            correct += usize::from(pred == y);
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn full_pass_stats(model: &MlpModel, ds: &Dataset) -> Result<StatsAccumulator> {
    let mut acc = StatsAccumulator::new(model.output_dim());
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let logits = model.forward(ds.inputs().slice(s![start..end, ..]))?;
        acc.push(logits.view(), &ds.labels()[start..end])?;
    }
    Ok(acc)
}

/// Runs the full training loop and returns one record per epoch.
///
/// Each batch minimizes `CE + weight·SNR` with the thresholds held fixed. Batch-wise
/// mode initializes the thresholds from the first batch and re-estimates them after
/// every step from that batch's logits; epoch-wise mode initializes them from a full
/// forward pass and re-estimates them once per epoch from the logits of all batches.
pub fn train(model: &mut MlpModel, split: &SplitData, cfg: &TrainConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let train = &split.train;
    if train.is_empty() || split.val.is_empty() {
        return Err(invalid("train and validation sets must be non-empty"));
    }
    if train.features() != model.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} features, model expects {}",
            train.features(),
            model.input_dim()
        )));
    }
    if train.class_count() > model.output_dim() {
        return Err(Error::Shape(format!("{} classes but {} logits", train.class_count(), model.output_dim())));
    }

    let batch_size = effective_batch_size(cfg.batch_size, train.len());
    let mut opt = Momentum::new(model, cfg.momentum_beta)?;
    let snr_on = cfg.snr_active();
    let mut eta = EtaState::new(model.output_dim(), cfg.loss_mode.eta_mode().unwrap_or(EtaMode::Batch));
    eta.m_mult = cfg.m_mult;

    if snr_on && eta.mode == EtaMode::Epoch {
        eta.update(&full_pass_stats(model, train)?.finish());
    }

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut epoch_stats = StatsAccumulator::new(model.output_dim());
        let (mut ce_sum, mut snr_sum) = (0.0, 0.0);

        for (b, idx) in epoch_batches(train.len(), batch_size, split.seed, epoch).iter().enumerate() {
            let x = train.inputs().select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let cache = model.forward_cached(x.view())?;
            let (ce, mut dlogits) = cross_entropy(cache.logits.view(), &y)?;

            let mut snr_value = 0.0;
            if snr_on {
                if !eta.initialized {
                    eta.update(&class_conditional_stats(cache.logits.view(), &y)?);
                }
                if eta.initialized {
                    let (value, grad) = snr_loss_and_grad(cache.logits.view(), &y, &eta, &cfg.snr)?;
                    dlogits.scaled_add(cfg.snr.weight, &grad);
                    snr_value = value;
                }
                match eta.mode {
                    EtaMode::Batch => eta.update(&class_conditional_stats(cache.logits.view(), &y)?),
                    EtaMode::Epoch => epoch_stats.push(cache.logits.view(), &y)?,
                }
            }

            if !(ce.is_finite() && snr_value.is_finite()) {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                    detail: format!("loss is not finite (ce {ce}, snr {snr_value})"),
                });
            }
            let grads = model.backward(&cache, dlogits.view())?;
            opt.step(model, &grads, lr)?;
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                    detail: "parameters became non-finite".into(),
                });
            }
            ce_sum += ce * idx.len() as f64;
            snr_sum += snr_value * idx.len() as f64;
        }

        if snr_on && eta.mode == EtaMode::Epoch {
            eta.update(&epoch_stats.finish());
        }
        records.push(MetricsRecord {
            epoch: epoch + 1,
            train_loss_ce: ce_sum / train.len() as f64,
            train_loss_snr: snr_sum / train.len() as f64,
            val_accuracy: evaluate_accuracy(model, &split.val)?,
            eta_snapshot: if snr_on { eta.eta.clone() } else { Vec::new() },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_size_reduction() {
        assert_eq!(effective_batch_size(1024, 60000), 1024);
        assert_eq!(effective_batch_size(1024, 8000), 1000);
        assert_eq!(effective_batch_size(64, 8000), 64);
        assert_eq!(effective_batch_size(1024, 5), 1);
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 0.05);
        assert_eq!(cfg.lr_at(9), 0.05);
        assert_eq!(cfg.lr_at(10), 0.025);
        assert_eq!(cfg.lr_at(25), 0.0125);
    }

    #[test]
    fn loss_mode_round_trip() {
        for m in [LossMode::Ce, LossMode::CeSnrBatch, LossMode::CeSnrEpoch] {
            assert_eq!(m.as_str().parse::<LossMode>().unwrap(), m);
        }
        assert!("snr".parse::<LossMode>().is_err());
    }
}
