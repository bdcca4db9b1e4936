//! Oracles shared by the integration test targets.
#![allow(dead_code, clippy::needless_range_loop)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use snrloss::snr_loss::{class_conditional_stats, EtaMode, EtaState, SnrLossConfig};

/// Straight double loop over the raw logits: no shared helpers with the library.
pub fn brute_loss(z: &Array2<f64>, labels: &[usize], eta: &[f64], cfg: &SnrLossConfig) -> f64 {
    let c = z.ncols();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for n in 0..c {
        let rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == n).collect();
        if rows.len() < 2 {
            continue;
        }
        let k = rows.len() as f64;
        let mean = |col: usize| rows.iter().map(|&r| z[[r, col]]).sum::<f64>() / k;
        let var = |col: usize| {
            let m = mean(col);
            rows.iter().map(|&r| (z[[r, col]] - m).powi(2)).sum::<f64>() / (k - 1.0)
        };
        let (mu_n, var_n) = (mean(n), var(n).max(cfg.eps));
        for i in 0..c {
            if i == n {
                continue;
            }
            let (mu_i, var_i) = (mean(i), var(i).max(cfg.eps));
            let h = eta[n];
            total += var_n / ((mu_n - h).powi(2) + cfg.eps)
                + var_i / ((h - mu_i).powi(2) + cfg.eps)
                + cfg.lambda * ((mu_i - h - cfg.margin).max(0.0) + (h - mu_n + cfg.margin).max(0.0));
            pairs += 1;
        }
    }
    if cfg.normalize_pairs && pairs > 0 {
        total / pairs as f64
    } else {
        total
    }
}

pub struct Instance {
    pub z: Array2<f64>,
    pub labels: Vec<usize>,
    pub eta: EtaState,
}

/// Random batch with every class present at least twice and thresholds well away
/// from every conditional mean (so the hinges are not at a kink).
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let classes = rng.random_range(2..=5);
    let per_class = rng.random_range(2..=6);
    let mut labels: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat(c).take(per_class)).collect();
    for _ in 0..rng.random_range(0..4) {
        labels.push(rng.random_range(0..classes));
    }
    let z = Array2::from_shape_fn((labels.len(), classes), |_| rng.random_range(-3.0..3.0));
    let stats = class_conditional_stats(z.view(), &labels).unwrap();
    let mut eta = EtaState::new(classes, EtaMode::Batch);
    eta.initialized = true;
    for n in 0..classes {
        let s = stats.get(n).unwrap();
        // pick a threshold at least 0.3 from every conditional mean of class n
        loop {
            let h = rng.random_range(-4.0..4.0);
            if s.mean.iter().all(|m| (m - h).abs() > 0.3) {
                eta.eta[n] = h;
                break;
            }
        }
    }
    Instance { z, labels, eta }
}

pub fn config(rng: &mut ChaCha8Rng) -> SnrLossConfig {
    SnrLossConfig {
        lambda: rng.random_range(0.0..2.0),
        margin: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.2) },
        eps: 1e-6,
        weight: 1.0,
        normalize_pairs: rng.random_bool(0.7),
    }
}

/// Central-difference gradient of [`brute_loss`] and its normwise relative error
/// against `analytic` (max abs difference over max abs analytic entry).
pub fn fd_relative_error(inst: &Instance, cfg: &SnrLossConfig, analytic: &Array2<f64>, h: f64) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
    let mut worst: f64 = 0.0;
    for idx in ndarray::indices(inst.z.dim()) {
        let mut plus = inst.z.clone();
        plus[idx] += h;
        let mut minus = inst.z.clone();
        minus[idx] -= h;
        let fd = (brute_loss(&plus, &inst.labels, &inst.eta.eta, cfg)
            - brute_loss(&minus, &inst.labels, &inst.eta.eta, cfg))
            / (2.0 * h);
        worst = worst.max((analytic[idx] - fd).abs() / scale);
    }
    worst
}
