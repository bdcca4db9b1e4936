use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snrloss::data_io::{split_and_batch, synth_blobs};
use snrloss::nn::{cross_entropy, evaluate_accuracy, train, LossMode, MlpModel, TrainConfig};
use snrloss::snr_loss::{snr_loss_and_grad, EtaMode, EtaState, SnrLossConfig};
use snrloss::Error;

/// Loss of the whole network on a fixed batch, for finite differences.
fn ce_of(model: &MlpModel, x: &Array2<f64>, y: &[usize]) -> f64 {
    cross_entropy(model.forward(x.view()).unwrap().view(), y).unwrap().0
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut model = MlpModel::new(&[5, 7, 6, 3], 2).unwrap();
    let x = Array2::from_shape_fn((9, 5), |_| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..9).map(|i| i % 3).collect();
    let cache = model.forward_cached(x.view()).unwrap();
    let (_, dlogits) = cross_entropy(cache.logits.view(), &y).unwrap();
    let grads = model.backward(&cache, dlogits.view()).unwrap();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for l in 0..3 {
        let (rows, cols) = model.layers()[l].w.dim();
        for (i, j) in (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))) {
            let orig = model.layers()[l].w[[i, j]];
            model.layers_mut()[l].w[[i, j]] = orig + h;
            let up = ce_of(&model, &x, &y);
            model.layers_mut()[l].w[[i, j]] = orig - h;
            let down = ce_of(&model, &x, &y);
            model.layers_mut()[l].w[[i, j]] = orig;
            worst = worst.max(((up - down) / (2.0 * h) - grads.layers[l].w[[i, j]]).abs());
        }
        for j in 0..cols {
            let orig = model.layers()[l].b[j];
            model.layers_mut()[l].b[j] = orig + h;
            let up = ce_of(&model, &x, &y);
            model.layers_mut()[l].b[j] = orig - h;
            let down = ce_of(&model, &x, &y);
            model.layers_mut()[l].b[j] = orig;
            worst = worst.max(((up - down) / (2.0 * h) - grads.layers[l].b[j]).abs());
        }
    }
    assert!(worst < 1e-7, "max abs error {worst}");
}

#[test]
fn backward_is_linear_in_upstream_gradient() {
    // the combined objective is backpropagated as a single dL/dlogits
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = MlpModel::new(&[4, 6, 3], 1).unwrap();
    let x = Array2::from_shape_fn((12, 4), |_| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let cache = model.forward_cached(x.view()).unwrap();
    let (_, ce) = cross_entropy(cache.logits.view(), &y).unwrap();
    let mut eta = EtaState::new(3, EtaMode::Batch);
    eta.initialized = true;
    eta.eta = vec![-0.7, 0.4, 1.3];
    let (_, snr) = snr_loss_and_grad(cache.logits.view(), &y, &eta, &SnrLossConfig::default()).unwrap();
    let w = 0.3;
    let joint = model.backward(&cache, (&ce + &(w * &snr)).view()).unwrap();
    let mut split = model.backward(&cache, ce.view()).unwrap();
    split.add_scaled(w, &model.backward(&cache, snr.view()).unwrap()).unwrap();
    for (a, b) in joint.layers.iter().zip(&split.layers) {
        assert!(a.w.iter().zip(&b.w).all(|(p, q)| (p - q).abs() <= 1e-12 * p.abs().max(1.0)));
        assert!(a.b.iter().zip(&b.b).all(|(p, q)| (p - q).abs() <= 1e-12 * p.abs().max(1.0)));
    }
}

fn two_blob_split(seed: u64) -> snrloss::data_io::SplitData {
    split_and_batch(&synth_blobs(2, 8, 300, 6.0, seed).unwrap(), 0.2, 64, seed).unwrap()
}

fn small_config(mode: LossMode) -> TrainConfig {
    TrainConfig { epochs: 5, loss_mode: mode, ..TrainConfig::default() }
}

#[test]
fn cross_entropy_learns_two_blobs() {
    let split = two_blob_split(1);
    let mut model = MlpModel::new(&[8, 16, 2], 1).unwrap();
    let records = train(&mut model, &split, &small_config(LossMode::Ce)).unwrap();
    assert_eq!(records.len(), 5);
    assert_eq!(records.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert!(records.iter().all(|r| r.eta_snapshot.is_empty() && r.train_loss_snr == 0.0));
    assert!(records[4].train_loss_ce < records[0].train_loss_ce);
    assert!(records[4].val_accuracy >= 0.99, "{}", records[4].val_accuracy);
    assert_eq!(evaluate_accuracy(&model, &split.val).unwrap(), records[4].val_accuracy);
}

#[test]
fn zero_weight_reduces_to_cross_entropy() {
    let split = two_blob_split(2);
    let run = |mode, weight| {
        let mut model = MlpModel::new(&[8, 16, 2], 3).unwrap();
        let cfg = TrainConfig { snr: SnrLossConfig { weight, ..SnrLossConfig::default() }, ..small_config(mode) };
        let r = train(&mut model, &split, &cfg).unwrap();
        (model, r)
    };
    let (ce_model, ce_rec) = run(LossMode::Ce, 1.0);
    for mode in [LossMode::CeSnrBatch, LossMode::CeSnrEpoch] {
        let (m, r) = run(mode, 0.0);
        assert_eq!(m, ce_model);
        assert_eq!(r, ce_rec);
    }
}

#[test]
fn training_is_deterministic_and_snr_modes_record_thresholds() {
    let split = two_blob_split(5);
    for mode in [LossMode::CeSnrBatch, LossMode::CeSnrEpoch] {
        let run = || {
            let mut model = MlpModel::new(&[8, 16, 2], 7).unwrap();
            let cfg = TrainConfig { epochs: 2, ..small_config(mode) };
            (train(&mut model, &split, &cfg), model)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a, b);
                assert_eq!(ma, mb);
                assert!(a.iter().all(|r| r.eta_snapshot.len() == 2));
            }
            (Err(Error::Diverged { epoch: e1, batch: b1, .. }), Err(Error::Diverged { epoch: e2, batch: b2, .. })) => {
                assert_eq!((e1, b1), (e2, b2));
            }
            (a, b) => panic!("runs disagree: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn rejects_bad_configuration_and_shapes() {
    let split = two_blob_split(6);
    let mut model = MlpModel::new(&[8, 4, 2], 0).unwrap();
    for cfg in [
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { momentum_beta: 1.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { snr: SnrLossConfig { eps: 0.0, ..SnrLossConfig::default() }, ..TrainConfig::default() },
    ] {
        assert!(train(&mut model, &split, &cfg).unwrap_err().is_input_error());
    }
    let mut wrong = MlpModel::new(&[5, 4, 2], 0).unwrap();
    assert!(matches!(train(&mut wrong, &split, &TrainConfig::default()), Err(Error::Shape(_))));
}
