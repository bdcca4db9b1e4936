//! Signal-to-noise-ratio loss on class-conditional logit statistics.
//!
//! For each class `n` with at least two samples in a batch, the logit of class `n`
//! should sit above a threshold `η_n` and every other logit `i` below it. With the
//! conditional means and unbiased variances of the logits given class `n`, the loss
//! of one `(n, i)` pair is
//!
//! ```text
//! σ_n² / ((μ_n − η_n)² + ε) + σ_{i|n}² / ((η_n − μ_{i|n})² + ε)
//!     + λ·(max(0, μ_{i|n} − η_n − m) + max(0, η_n − μ_n + m))
//! ```
//!
//! i.e. the two noise-to-signal ratios `1/s` plus a hinge penalty enforcing
//! `μ_{i|n} < η_n < μ_n`. The thresholds are constants inside a loss evaluation and
//! are moved by [`EtaState::update`] to `μ̂_n − m_mult·σ̂_n`.

use crate::error::{invalid, Error, Result};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrLossConfig {
    /// Lagrange multiplier on the ordering penalty.
    pub lambda: f64,
    /// Margin inside the hinge penalty.
    pub margin: f64,
    /// Floor on variances and additive regularizer on squared distances.
    pub eps: f64,
    /// Multiplier on the SNR loss when added to cross entropy.
    pub weight: f64,
    /// Divide the pair sum by the number of summed pairs.
    pub normalize_pairs: bool,
}

impl Default for SnrLossConfig {
    fn default() -> Self {
        Self { lambda: 1.0, margin: 0.0, eps: 1e-6, weight: 1.0, normalize_pairs: true }
    }
}

impl SnrLossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [("lambda", self.lambda), ("margin", self.margin), ("eps", self.eps), ("weight", self.weight)];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("snr.{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.eps <= 0.0 {
            return Err(invalid("snr.eps must be strictly positive"));
        }
        Ok(())
    }
}

/// Statistics of every logit column over the rows of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: usize,
    /// `mean[i]` is `μ_{i|n}`; `mean[n]` is `μ_n`.
    pub mean: Vec<f64>,
    /// Unbiased (`count − 1`) variances, same indexing as `mean`.
    pub var: Vec<f64>,
}

/// Per-class conditional logit statistics; classes with fewer than two samples are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitClassStats {
    pub class_count: usize,
    pub per_class: Vec<Option<ClassStats>>,
}

impl LogitClassStats {
    pub fn is_empty(&self) -> bool {
        self.per_class.iter().all(Option::is_none)
    }

    pub fn get(&self, class: usize) -> Option<&ClassStats> {
        self.per_class.get(class).and_then(Option::as_ref)
    }

    pub fn present(&self) -> impl Iterator<Item = (usize, &ClassStats)> {
        self.per_class.iter().enumerate().filter_map(|(n, s)| s.as_ref().map(|s| (n, s)))
    }
}

fn check_batch(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    let (rows, classes) = logits.dim();
    if rows == 0 || classes == 0 {
        return Err(Error::Shape("empty logit matrix".into()));
    }
    if rows != labels.len() {
        return Err(Error::Shape(format!("{rows} logit rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(invalid(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Running per-class, per-column count/mean/M2, mergeable across batches.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    classes: usize,
    count: Vec<usize>,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

impl StatsAccumulator {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            count: vec![0; classes],
            mean: Array2::zeros((classes, classes)),
            m2: Array2::zeros((classes, classes)),
        }
    }

    /// Adds a batch (Chan et al. pairwise merge of the batch moments).
    #[allow(clippy::needless_range_loop)]
    pub fn push(&mut self, logits: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
        check_batch(&logits, labels)?;
        if logits.ncols() != self.classes {
            return Err(Error::Shape(format!("{} columns, accumulator has {}", logits.ncols(), self.classes)));
        }
        let batch = batch_moments(&logits, labels);
        for n in 0..self.classes {
            let nb = batch.count[n];
            if nb == 0 {
                continue;
            }
            let na = self.count[n];
            let total = (na + nb) as f64;
            for i in 0..self.classes {
                let delta = batch.mean[[n, i]] - self.mean[[n, i]];
                self.mean[[n, i]] += delta * nb as f64 / total;
                self.m2[[n, i]] += batch.m2[[n, i]] + delta * delta * (na as f64) * (nb as f64) / total;
            }
            self.count[n] += nb;
        }
        Ok(())
    }

    pub fn finish(&self) -> LogitClassStats {
        let per_class = (0..self.classes)
            .map(|n| {
                let k = self.count[n];
                (k >= 2).then(|| ClassStats {
                    count: k,
                    mean: self.mean.row(n).to_vec(),
                    var: self.m2.row(n).iter().map(|m2| m2 / (k - 1) as f64).collect(),
                })
            })
            .collect();
        LogitClassStats { class_count: self.classes, per_class }
    }
}

struct BatchMoments {
    count: Vec<usize>,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

/// Two-pass per-class column means and sums of squared deviations.
fn batch_moments(logits: &ArrayView2<f64>, labels: &[usize]) -> BatchMoments {
    let classes = logits.ncols();
    let mut count = vec![0usize; classes];
    let mut mean = Array2::<f64>::zeros((classes, classes));
    for (row, &n) in logits.rows().into_iter().zip(labels) {
        count[n] += 1;
        let mut target = mean.row_mut(n);
        target += &row;
    }
    for (mut r, &k) in mean.rows_mut().into_iter().zip(&count) {
        if k > 0 {
            r /= k as f64;
        }
    }
    let mut m2 = Array2::<f64>::zeros((classes, classes));
    for (row, &n) in logits.rows().into_iter().zip(labels) {
        for i in 0..classes {
            let d = row[i] - mean[[n, i]];
            m2[[n, i]] += d * d;
        }
    }
    BatchMoments { count, mean, m2 }
}

/// Conditional means and unbiased variances of every logit given each class.
pub fn class_conditional_stats(logits: ArrayView2<f64>, labels: &[usize]) -> Result<LogitClassStats> {
    let mut acc = StatsAccumulator::new(logits.ncols());
    acc.push(logits, labels)?;
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EtaMode {
    /// Update from every batch's statistics.
    Batch,
    /// Update once per epoch from statistics aggregated over the epoch.
    Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaState {
    pub eta: Vec<f64>,
    /// Offset of the threshold below the class mean, in standard deviations.
    pub m_mult: f64,
    pub mode: EtaMode,
    pub initialized: bool,
}

impl EtaState {
    pub fn new(classes: usize, mode: EtaMode) -> Self {
        Self { eta: vec![0.0; classes], m_mult: 4.0, mode, initialized: false }
    }

    /// `η_n ← μ̂_n − m_mult·σ̂_n` for every class present in `stats`; absent classes keep
    /// their threshold. Empty statistics leave the state untouched.
    pub fn update(&mut self, stats: &LogitClassStats) {
        for (n, s) in stats.present() {
            if n < self.eta.len() {
                self.eta[n] = s.mean[n] - self.m_mult * s.var[n].sqrt();
            }
        }
        if !stats.is_empty() {
            self.initialized = true;
        }
    }
}

/// Functional form of [`EtaState::update`].
pub fn eta_update(state: &EtaState, stats: &LogitClassStats) -> EtaState {
    let mut next = state.clone();
    next.update(stats);
    next
}

/// Loss of one `(n, i)` pair. Variances are used as given.
pub fn snr_pair_loss(mu_n: f64, var_n: f64, mu_in: f64, var_in: f64, eta_n: f64, cfg: &SnrLossConfig) -> f64 {
    let d = mu_n - eta_n;
    let e = eta_n - mu_in;
    let nsr_n = var_n / (d * d + cfg.eps);
    let nsr_in = var_in / (e * e + cfg.eps);
    let penalty = (mu_in - eta_n - cfg.margin).max(0.0) + (eta_n - mu_n + cfg.margin).max(0.0);
    nsr_n + nsr_in + cfg.lambda * penalty
}

fn floored(var: f64, eps: f64) -> f64 {
    var.max(eps)
}

fn pair_count(stats: &LogitClassStats) -> usize {
    stats.present().count() * stats.class_count.saturating_sub(1)
}

fn check_eta(stats: &LogitClassStats, eta: &EtaState) -> Result<()> {
    if !eta.initialized {
        return Err(Error::NotInitialized);
    }
    if eta.eta.len() != stats.class_count {
        return Err(Error::Shape(format!("{} thresholds for {} classes", eta.eta.len(), stats.class_count)));
    }
    Ok(())
}

/// Sum (or pair-normalized mean) of [`snr_pair_loss`] over present classes `n` and
/// all `i ≠ n`, with variances floored at `eps`.
pub fn snr_total_loss(stats: &LogitClassStats, eta: &EtaState, cfg: &SnrLossConfig) -> Result<f64> {
    check_eta(stats, eta)?;
    let pairs = pair_count(stats);
    if pairs == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (n, s) in stats.present() {
        let var_n = floored(s.var[n], cfg.eps);
        for i in (0..stats.class_count).filter(|&i| i != n) {
            total += snr_pair_loss(s.mean[n], var_n, s.mean[i], floored(s.var[i], cfg.eps), eta.eta[n], cfg);
        }
    }
    Ok(if cfg.normalize_pairs { total / pairs as f64 } else { total })
}

/// Loss and its exact gradient with respect to every logit, `η` held constant.
///
/// The gradient flows through the class-conditional means (`∂μ/∂z = 1/k`) and the
/// unbiased variances (`∂σ²/∂z = 2(z − μ)/(k − 1)`). A floored variance contributes
/// no variance gradient.
pub fn snr_loss_and_grad(
    logits: ArrayView2<f64>,
    labels: &[usize],
    eta: &EtaState,
    cfg: &SnrLossConfig,
) -> Result<(f64, Array2<f64>)> {
    let stats = class_conditional_stats(logits, labels)?;
    check_eta(&stats, eta)?;
    let classes = stats.class_count;
    let mut grad = Array2::<f64>::zeros(logits.dim());
    let pairs = pair_count(&stats);
    if pairs == 0 {
        return Ok((0.0, grad));
    }
    let scale = if cfg.normalize_pairs { 1.0 / pairs as f64 } else { 1.0 };

    // d loss / d mean and d loss / d var, per (class, column)
    let mut g_mean = Array2::<f64>::zeros((classes, classes));
    let mut g_var = Array2::<f64>::zeros((classes, classes));
    let mut total = 0.0;
    let others = (classes - 1) as f64;

    for (n, s) in stats.present() {
        let h = eta.eta[n];
        let (mu_n, raw_var_n) = (s.mean[n], s.var[n]);
        let var_n = floored(raw_var_n, cfg.eps);
        let d = mu_n - h;
        let denom = d * d + cfg.eps;
        let own_active = h - mu_n + cfg.margin > 0.0;

        let mut dmu_n = -2.0 * d * var_n / (denom * denom);
        if own_active {
            dmu_n -= cfg.lambda;
        }
        g_mean[[n, n]] = others * dmu_n * scale;
        if raw_var_n >= cfg.eps {
            g_var[[n, n]] = others * scale / denom;
        }

        for i in (0..classes).filter(|&i| i != n) {
            let (mu_in, raw_var_in) = (s.mean[i], s.var[i]);
            let var_in = floored(raw_var_in, cfg.eps);
            total += snr_pair_loss(mu_n, var_n, mu_in, var_in, h, cfg);

            let e = h - mu_in;
            let denom_i = e * e + cfg.eps;
            let mut dmu_in = 2.0 * e * var_in / (denom_i * denom_i);
            if mu_in - h - cfg.margin > 0.0 {
                dmu_in += cfg.lambda;
            }
            g_mean[[n, i]] = dmu_in * scale;
            if raw_var_in >= cfg.eps {
                g_var[[n, i]] = scale / denom_i;
            }
        }
    }

    for ((mut out, row), &n) in grad.rows_mut().into_iter().zip(logits.rows()).zip(labels) {
        let Some(s) = stats.get(n) else { continue };
        let k = s.count as f64;
        for i in 0..classes {
            out[i] = g_mean[[n, i]] / k + g_var[[n, i]] * 2.0 * (row[i] - s.mean[i]) / (k - 1.0);
        }
    }

    let loss = total * scale;
    Ok((loss, grad))
}

/// Gradient half of [`snr_loss_and_grad`].
pub fn snr_loss_backward(
    logits: ArrayView2<f64>,
    labels: &[usize],
    eta: &EtaState,
    cfg: &SnrLossConfig,
) -> Result<Array2<f64>> {
    snr_loss_and_grad(logits, labels, eta, cfg).map(|(_, g)| g)
}
