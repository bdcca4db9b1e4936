//! Linear classifiers for independent Bernoulli observations.
//!
//! Each coordinate `x_i ~ Bernoulli(θ_i)`; class 0 has `θ_i < p_i` and class 1 has
//! `θ_i ≥ p_i`. Two linear statistics are compared:
//!
//! - the SNR classifier `Σ arccos(p_i) x_i`, obtained by maximizing the lower bound
//!   `s/(1+s)` on the true-positive rate through a Fisher-information reparameterization;
//! - the plug-in likelihood-ratio classifier `−Σ log(p_i) x_i`.
//!
//! Both predict class 1 when the score exceeds a threshold `τ` calibrated on a held-out
//! sample drawn under the same [`SimProtocol`].

use crate::error::{invalid, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-coordinate class boundaries `p_i ∈ (0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliProblem {
    p: Vec<f64>,
}

impl BernoulliProblem {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(invalid("problem needs at least one coordinate"));
        }
        if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(invalid(format!("boundaries must lie in (0, 1), got {bad}")));
        }
        Ok(Self { p })
    }

    /// Ten coordinates: four with `p = 0.001` and six with `p = 0.1`.
    pub fn reference() -> Self {
        let mut p = vec![0.001; 4];
        p.extend(std::iter::repeat(0.1).take(6));
        Self { p }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub tau: f64,
}

impl LinearClassifier {
    pub fn score(&self, x: &[bool]) -> f64 {
        self.weights.iter().zip(x).filter(|(_, &xi)| xi).map(|(w, _)| w).sum()
    }

    /// `true` selects class 1.
    pub fn classify(&self, x: &[bool]) -> bool {
        self.score(x) > self.tau
    }
}

/// How `θ` is drawn for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThetaSampler {
    /// `θ_i ~ Uniform(0, p_i)`.
    BelowBoundary,
    /// `θ_i ~ Uniform(p_i, min(1, factor·p_i))`.
    AboveBoundary { factor: f64 },
    /// A fixed parameter vector.
    Fixed(Vec<f64>),
}

impl ThetaSampler {
    fn draw(&self, p: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            ThetaSampler::BelowBoundary => {
                for (o, &pi) in out.iter_mut().zip(p) {
                    *o = rng.random::<f64>() * pi;
                }
            }
            ThetaSampler::AboveBoundary { factor } => {
                for (o, &pi) in out.iter_mut().zip(p) {
                    let top = (factor * pi).min(1.0);
                    *o = pi + rng.random::<f64>() * (top - pi);
                }
            }
            ThetaSampler::Fixed(theta) => out.copy_from_slice(theta),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ThetaSampler::BelowBoundary => Ok(()),
            ThetaSampler::AboveBoundary { factor } if *factor >= 1.0 && factor.is_finite() => Ok(()),
            ThetaSampler::AboveBoundary { factor } => {
                Err(invalid(format!("upper factor must be finite and >= 1, got {factor}")))
            }
            ThetaSampler::Fixed(theta) if theta.len() != dim => {
                Err(Error::Shape(format!("fixed theta has {} entries, problem has {dim}", theta.len())))
            }
            ThetaSampler::Fixed(theta) => match theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                Some(t) => Err(invalid(format!("theta must lie in [0, 1], got {t}"))),
                None => Ok(()),
            },
        }
    }

    /// Whether every draw lies on the class's side of the boundaries.
    pub fn respects(&self, p: &[f64], class_one: bool) -> bool {
        match self {
            ThetaSampler::BelowBoundary => !class_one,
            ThetaSampler::AboveBoundary { .. } => class_one,
            ThetaSampler::Fixed(theta) => theta.iter().zip(p).all(|(&t, &pi)| if class_one { t >= pi } else { t < pi }),
        }
    }
}

/// Simulation protocol: balanced labels, `θ` from the class sampler, then
/// `x_i ~ Bernoulli(θ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProtocol {
    pub class0: ThetaSampler,
    pub class1: ThetaSampler,
    pub n_trials: usize,
    /// Size of the held-out sample used to pick `τ`.
    pub n_calibration: usize,
    pub seed: u64,
}

impl Default for SimProtocol {
    fn default() -> Self {
        Self {
            class0: ThetaSampler::BelowBoundary,
            class1: ThetaSampler::AboveBoundary { factor: 10.0 },
            n_trials: 100_000,
            n_calibration: 100_000,
            seed: 0,
        }
    }
}

impl SimProtocol {
    fn validate(&self, prob: &BernoulliProblem) -> Result<()> {
        self.class0.validate(prob.dim())?;
        self.class1.validate(prob.dim())?;
        if self.n_calibration == 0 {
            return Err(invalid("calibration sample must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub acc_snr: f64,
    pub acc_ml: f64,
    pub tau_snr: f64,
    pub tau_ml: f64,
    pub n_trials: usize,
    pub seed: u64,
    /// Trials where exactly one of the two classifiers was correct, split by winner.
    pub only_snr_correct: usize,
    pub only_ml_correct: usize,
}

/// Diagonal of the Fisher information of independent Bernoulli coordinates.
pub fn fisher_information_bernoulli(theta: &[f64]) -> Result<Vec<f64>> {
    theta
        .iter()
        .map(|&t| if t > 0.0 && t < 1.0 { Ok(1.0 / (t * (1.0 - t))) } else { Err(Error::SingularFisher(t)) })
        .collect()
}

/// `w_i = arccos(p_i)` with `τ` calibrated under `protocol`.
pub fn snr_classifier_weights(prob: &BernoulliProblem, protocol: &SimProtocol) -> Result<LinearClassifier> {
    let weights = prob.p.iter().map(|p| p.acos()).collect();
    calibrated(weights, prob, protocol)
}

/// `w_i = −log(p_i)` with `τ` calibrated under `protocol`.
pub fn ml_classifier_weights(prob: &BernoulliProblem, protocol: &SimProtocol) -> Result<LinearClassifier> {
    let weights = prob.p.iter().map(|p| -p.ln()).collect();
    calibrated(weights, prob, protocol)
}

fn calibrated(weights: Vec<f64>, prob: &BernoulliProblem, protocol: &SimProtocol) -> Result<LinearClassifier> {
    let mut c = LinearClassifier { weights, tau: 0.0 };
    c.tau = calibrate_tau(&c, prob, protocol)?;
    Ok(c)
}

// Stream identifiers keep calibration and evaluation draws disjoint.
const CALIBRATION_STREAM: u64 = 1;
const EVALUATION_STREAM: u64 = 2;

fn trial_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 48) | index as u64);
    rng
}

fn draw_trial(prob: &BernoulliProblem, protocol: &SimProtocol, rng: &mut ChaCha8Rng) -> (bool, Vec<bool>) {
    let label = rng.random::<bool>();
    let mut theta = vec![0.0; prob.dim()];
    let sampler = if label { &protocol.class1 } else { &protocol.class0 };
    sampler.draw(&prob.p, rng, &mut theta);
    let x = theta.iter().map(|&t| rng.random::<f64>() < t).collect();
    (label, x)
}

/// Threshold maximizing empirical accuracy of `score > τ` over `(scores, labels)`.
///
/// Candidates are one value below every score (everything positive) and the midpoint
/// above each distinct score (or the score itself for the largest). Ties go to the
/// candidate with the smallest `|τ|`, then the smaller `τ`. Returns `(τ, accuracy)`.
pub fn calibrate_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len() as f64;
    let positives = pairs.iter().filter(|p| p.1).count();

    // τ below the minimum: everything predicted positive.
    let mut best_tau = pairs[0].0 - 1.0;
    let mut best_correct = positives;
    // Sweep τ upward; `correct` counts labels matched when all scores <= τ are negative.
    let mut correct = positives;
    let mut k = 0;
    while k < pairs.len() {
        let s = pairs[k].0;
        while k < pairs.len() && pairs[k].0 == s {
            if pairs[k].1 {
                correct -= 1;
            } else {
                correct += 1;
            }
            k += 1;
        }
        let tau = if k < pairs.len() { 0.5 * (s + pairs[k].0) } else { s };
        let wins = correct > best_correct
            || (correct == best_correct
                && (tau.abs() < best_tau.abs() || (tau.abs() == best_tau.abs() && tau < best_tau)));
        if wins {
            best_tau = tau;
            best_correct = correct;
        }
    }
    Ok((best_tau, best_correct as f64 / n))
}

/// Calibrates `τ` for `c` on `protocol.n_calibration` fresh draws.
pub fn calibrate_tau(c: &LinearClassifier, prob: &BernoulliProblem, protocol: &SimProtocol) -> Result<f64> {
    protocol.validate(prob)?;
    if c.weights.len() != prob.dim() {
        return Err(Error::Shape(format!("{} weights for dimension {}", c.weights.len(), prob.dim())));
    }
    let (scores, labels): (Vec<f64>, Vec<bool>) = (0..protocol.n_calibration)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(protocol.seed, CALIBRATION_STREAM, i);
            let (label, x) = draw_trial(prob, protocol, &mut rng);
            (c.score(&x), label)
        })
        .unzip();
    Ok(calibrate_threshold(&scores, &labels)?.0)
}

/// Paired Monte Carlo accuracy of the SNR and likelihood-ratio classifiers.
pub fn simulate_accuracy(prob: &BernoulliProblem, protocol: &SimProtocol) -> Result<SimResult> {
    if protocol.n_trials == 0 {
        return Err(invalid("n_trials must be positive"));
    }
    let snr = snr_classifier_weights(prob, protocol)?;
    let ml = ml_classifier_weights(prob, protocol)?;

    let counts = (0..protocol.n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(protocol.seed, EVALUATION_STREAM, i);
            let (label, x) = draw_trial(prob, protocol, &mut rng);
            let a = snr.classify(&x) == label;
            let b = ml.classify(&x) == label;
            [usize::from(a), usize::from(b), usize::from(a && !b), usize::from(b && !a)]
        })
        .reduce(|| [0; 4], |x, y| [x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3]]);

    let n = protocol.n_trials as f64;
    Ok(SimResult {
        acc_snr: counts[0] as f64 / n,
        acc_ml: counts[1] as f64 / n,
        tau_snr: snr.tau,
        tau_ml: ml.tau,
        n_trials: protocol.n_trials,
        seed: protocol.seed,
        only_snr_correct: counts[2],
        only_ml_correct: counts[3],
    })
}
