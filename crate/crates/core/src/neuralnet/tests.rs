use approx::assert_relative_eq;
use ndarray::{array, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::airlink::{synthesize_frame, SourceKind, TagFrame};
use crate::channel::ChannelRealization;
use crate::rng_from_seed;

fn random_batch(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = rng_from_seed(seed);
    let x = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-2.0..2.0));
    let y = (0..rows).map(|_| rng.random_range(0..2u8)).collect();
    (x, y)
}

fn frame(n: usize, bit: u8) -> crate::ReceivedFrame {
    let c = Complex64::new(0.6, -0.3);
    let chan = ChannelRealization::from_gains(c, c, c, Complex64::new(1.0, 0.0));
    let mut rng = rng_from_seed(1);
    synthesize_frame(&TagFrame::ook(n, bit, 0.5), &chan, &SourceKind::ComplexGaussian { power: 1.0 }, 10.0, 0.5, &mut rng)
        .unwrap()
}

#[test]
fn encoding_width_is_twelve_n() {
    assert_eq!(encode_frame(&frame(40, 1)).unwrap().len(), 480);
    assert_eq!(MlpConfig::for_frame(40).input_dim, 480);
    assert_eq!(MlpConfig::for_frame(40).n_per_symbol(), Some(40));
}

#[test]
fn zero_samples_keep_reference() {
    let mut rx = frame(5, 0);
    let full = encode_frame(&rx).unwrap();
    rx.samples.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
    let zeroed = encode_frame(&rx).unwrap();
    assert!(zeroed[..30].iter().all(|&v| v == 0.0));
    assert_eq!(zeroed[30..], full[30..]);
}

#[test]
fn reference_round_trip() {
    let rx = frame(4, 0);
    let r = decode_reference(&encode_frame(&rx).unwrap()).unwrap();
    let on = Complex64::new(0.5f64.sqrt(), 0.0);
    assert_eq!(r.len(), 12);
    assert!(r[..8].iter().all(|&g| g == on));
    assert!(r[8..].iter().all(|&g| g == Complex64::new(0.0, 0.0)));
}

#[test]
fn encoding_rejects_bad_length() {
    let mut rx = frame(4, 1);
    rx.samples.pop();
    assert!(encode_frame(&rx).is_err());
}

#[test]
fn zero_model_outputs_one_half() {
    let m = MlpModel::zeros(MlpConfig::with_dims(12, vec![8, 4])).unwrap();
    let (x, _) = random_batch(10, 12, 0);
    for mode in [Mode::Train, Mode::Infer] {
        let p = m.forward(x.view(), mode).unwrap().predictions;
        assert!(p.iter().all(|&v| v == 0.5));
    }
    assert_eq!(predict_bit(&m, x.row(0).as_slice().unwrap()).unwrap(), 1);
}

#[test]
fn threshold_boundary() {
    assert_eq!(decide_bit(0.5), 1);
    assert_eq!(decide_bit(0.49), 0);
}

#[test]
fn hand_computed_forward() {
    let mut m = MlpModel::zeros(MlpConfig::with_dims(1, vec![1])).unwrap();
    m.linears[0].weight[[0, 0]] = 2.0;
    m.linears[0].bias[0] = -0.5;
    m.norms[0].scale[0] = 3.0;
    m.norms[0].shift[0] = 0.1;
    m.linears[1].weight[[0, 0]] = 0.7;
    m.linears[1].bias[0] = -0.2;
    let p = m.predict_proba(array![[1.25]].view()).unwrap();
    assert_relative_eq!(p[0], 0.9832090052291017, max_relative = 1e-14);
}

#[test]
fn train_mode_batch_norm_statistics() {
    let (x, _) = random_batch(64, 12, 3);
    let mut cfg = MlpConfig::with_dims(12, vec![16, 8]);
    let m = MlpModel::new(cfg.clone(), &mut rng_from_seed(2)).unwrap();
    let pass = m.forward(x.view(), Mode::Train).unwrap();
    for cache in &pass.hidden {
        let xn = cache.normalized();
        let mean = xn.mean_axis(Axis(0)).unwrap();
        let var = xn.var_axis(Axis(0), 0.0);
        for (&mu, &v) in mean.iter().zip(&var) {
            assert!(mu.abs() < 1e-6);
            assert!(v <= 1.0 && v >= 0.0);
        }
    }
    // With a negligible epsilon the normalized variance is 1 for every live unit.
    cfg.bn_epsilon = 1e-14;
    let m = MlpModel::new(cfg, &mut rng_from_seed(2)).unwrap();
    let pass = m.forward(x.view(), Mode::Train).unwrap();
    for cache in &pass.hidden {
        for v in cache.normalized().var_axis(Axis(0), 0.0) {
            // Dead ReLU units have zero variance and normalize to zero.
            assert!((v - 1.0).abs() < 1e-6 || v == 0.0, "var {v}");
        }
    }
}

#[test]
fn running_stats_follow_momentum() {
    let mut m = MlpModel::new(MlpConfig::with_dims(4, vec![3]), &mut rng_from_seed(4)).unwrap();
    let (x, _) = random_batch(32, 4, 5);
    let pass = m.forward(x.view(), Mode::Train).unwrap();
    let z = x.dot(&m.linears[0].weight.t()) + &m.linears[0].bias;
    let r = z.mapv(|v| v.max(0.0));
    let mean = r.mean_axis(Axis(0)).unwrap();
    m.update_running_stats(&pass);
    for j in 0..3 {
        assert_relative_eq!(m.norms[0].running_mean[j], 0.01 * mean[j], max_relative = 1e-12);
        assert!(m.norms[0].running_var[j] >= 0.0);
    }
}

#[test]
fn bce_examples() {
    let half = ndarray::Array1::from_elem(4, 0.5);
    assert_relative_eq!(bce_loss(half.view(), &[0, 1, 1, 0]).unwrap(), std::f64::consts::LN_2, max_relative = 1e-15);
    let c = 1e-7;
    let perfect = array![c, 1.0 - c];
    assert!(bce_loss(perfect.view(), &[0, 1]).unwrap() < 1e-6);
    assert_relative_eq!(bce_loss(array![0.9].view(), &[1]).unwrap(), 0.10536051565782628, max_relative = 1e-14);
    assert!(bce_loss(array![0.9].view(), &[]).is_err());
}

#[test]
fn toy_gradient_check() {
    let m = MlpModel::new(MlpConfig::with_dims(12, vec![8]), &mut rng_from_seed(10)).unwrap();
    let (x, y) = random_batch(16, 12, 11);
    let err = m.gradient_check(x.view(), &y, 1e-5).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn saturated_correct_predictions_have_zero_gradient() {
    let mut m = MlpModel::new(MlpConfig::with_dims(6, vec![5]), &mut rng_from_seed(12)).unwrap();
    m.linears[1].weight.fill(0.0);
    m.linears[1].bias[0] = 50.0;
    let (x, _) = random_batch(8, 6, 13);
    let pass = m.forward(x.view(), Mode::Train).unwrap();
    let g = m.backward(&pass, &[1; 8]).unwrap();
    assert!(g.max_abs() <= 1e-8);
}

#[test]
fn scaled_loss_scales_gradients() {
    let m = MlpModel::new(MlpConfig::with_dims(6, vec![5, 3]), &mut rng_from_seed(14)).unwrap();
    let (x, y) = random_batch(8, 6, 15);
    let pass = m.forward(x.view(), Mode::Train).unwrap();
    let g1 = m.backward(&pass, &y).unwrap();
    let g2 = m.backward_scaled(&pass, &y, 2.0).unwrap();
    for (a, b) in g1.slices().iter().zip(g2.slices()) {
        for (&a, &b) in a.iter().zip(b) {
            assert_eq!(2.0 * a, b);
        }
    }
}

#[test]
fn backward_rejects_infer_pass() {
    let m = MlpModel::new(MlpConfig::with_dims(6, vec![5]), &mut rng_from_seed(16)).unwrap();
    let (x, y) = random_batch(4, 6, 17);
    let pass = m.forward(x.view(), Mode::Infer).unwrap();
    assert!(m.backward(&pass, &y).is_err());
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut m = MlpModel::new(MlpConfig::with_dims(6, vec![5]), &mut rng_from_seed(18)).unwrap();
    let before = m.clone();
    let (x, y) = random_batch(4, 6, 19);
    let pass = m.forward(x.view(), Mode::Train).unwrap();
    let mut g = m.backward(&pass, &y).unwrap();
    g.linears.iter_mut().for_each(|l| {
        l.weight.fill(0.0);
        l.bias.fill(0.0)
    });
    g.norms.iter_mut().for_each(|(a, b)| {
        a.fill(0.0);
        b.fill(0.0)
    });
    let mut state = AdamState::new(&mut m, 0.9, 0.999, 1e-8);
    for _ in 0..5 {
        adam_step(&mut m, &g, &mut state, 1e-3).unwrap();
    }
    assert_eq!(m, before);
    assert_eq!(state.step, 5);
}

#[test]
fn adam_constant_gradient_steps_by_learning_rate() {
    let mut m = MlpModel::zeros(MlpConfig::with_dims(2, vec![2])).unwrap();
    let pass = m.forward(array![[1.0, 2.0]].view(), Mode::Train).unwrap();
    let mut g = m.backward(&pass, &[1]).unwrap();
    g.linears.iter_mut().for_each(|l| {
        l.weight.fill(0.3);
        l.bias.fill(-2.0)
    });
    g.norms.iter_mut().for_each(|(a, b)| {
        a.fill(5e-3);
        b.fill(7.0)
    });
    let lr = 1e-3;
    let mut state = AdamState::new(&mut m, 0.9, 0.999, 1e-8);
    for _ in 0..200 {
        adam_step(&mut m, &g, &mut state, lr).unwrap();
    }
    let prev = m.clone();
    adam_step(&mut m, &g, &mut state, lr).unwrap();
    let mut m2 = m.clone();
    let mut p2 = prev;
    for (now, before) in m2.parameters_mut().iter().zip(p2.parameters_mut()) {
        for (a, b) in now.iter().zip(before.iter()) {
            assert_relative_eq!((a - b).abs(), lr, max_relative = 1e-4);
        }
    }
}

#[test]
fn patience_one_with_flat_validation_stops_after_two_epochs() {
    let mut m = MlpModel::zeros(MlpConfig::with_dims(6, vec![4])).unwrap();
    let (x, y) = random_batch(40, 6, 20);
    let (vx, vy) = random_batch(20, 6, 21);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        patience: 1,
        batch_size: 8,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let report = train(
        &mut m,
        &LabeledSet::new(x, y).unwrap(),
        &LabeledSet::new(vx, vy).unwrap(),
        &cfg,
    )
    .unwrap();
    assert_eq!(report.epochs(), 2);
    assert!(report.stopped_early);
    assert_eq!(report.val_loss[0], report.val_loss[1]);
}

fn separable(rows: usize, seed: u64) -> LabeledSet {
    let mut rng = rng_from_seed(seed);
    let w = [1.0, -2.0, 0.5, 1.5];
    let mut x = Array2::zeros((rows, 4));
    let mut y = Vec::with_capacity(rows);
    for i in 0..rows {
        let (row, s) = loop {
            let row: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            if s.abs() > 0.2 {
                break (row, s);
            }
        };
        x.row_mut(i).assign(&ndarray::Array1::from(row));
        y.push((s > 0.0) as u8);
    }
    LabeledSet::new(x, y).unwrap()
}

#[test]
fn learns_a_separable_task() {
    let train_set = separable(2000, 30);
    let val_set = separable(500, 31);
    let mut m = MlpModel::new(MlpConfig::with_dims(4, vec![16, 8]), &mut rng_from_seed(32)).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        max_epochs: 60,
        learning_rate: 1e-2,
        seed: 33,
        ..TrainConfig::default()
    };
    let report = train(&mut m, &train_set, &val_set, &cfg).unwrap();
    let best = report.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_loss, best);
    assert_eq!(evaluate_loss(&m, &val_set).unwrap(), best);
    assert!(best < 0.05, "validation loss {best}");
    let first = report.train_loss[0];
    let last = *report.train_loss.last().unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let train_set = separable(300, 40);
    let val_set = separable(100, 41);
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 3,
        seed: 42,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = MlpModel::new(MlpConfig::with_dims(4, vec![8, 4]), &mut rng_from_seed(43)).unwrap();
        let r = train(&mut m, &train_set, &val_set, &cfg).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        (bytes, r)
    };
    assert_eq!(run(), run());
}

#[test]
fn train_rejects_empty_sets() {
    let mut m = MlpModel::zeros(MlpConfig::with_dims(4, vec![2])).unwrap();
    let empty = LabeledSet::new(Array2::zeros((0, 4)), vec![]).unwrap();
    let some = separable(10, 0);
    assert!(train(&mut m, &empty, &some, &TrainConfig::default()).is_err());
    assert!(train(&mut m, &some, &empty, &TrainConfig::default()).is_err());
}

#[test]
fn standardizer_guards_constant_features() {
    let x = array![[1.0, 3.0], [1.0, 5.0]];
    let s = Standardizer::fit(x.view()).unwrap();
    let z = s.apply(x.view());
    assert_eq!(z.column(0).to_vec(), vec![0.0, 0.0]);
    assert_eq!(z.column(1).to_vec(), vec![-1.0, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn backprop_matches_finite_differences(
        input in 2usize..10,
        h1 in 2usize..9,
        h2 in 0usize..6,
        rows in 4usize..17,
        seed in any::<u64>(),
    ) {
        let hidden = if h2 == 0 { vec![h1] } else { vec![h1, h2] };
        let m = MlpModel::new(MlpConfig::with_dims(input, hidden), &mut rng_from_seed(seed)).unwrap();
        let (x, y) = random_batch(rows, input, seed ^ 0x5555);
        let err = m.gradient_check(x.view(), &y, 1e-5).unwrap();
        prop_assert!(err < 1e-4, "max relative error {}", err);
    }

    #[test]
    fn clipped_outputs_stay_inside_unit_interval(seed in any::<u64>(), scale in 0.1f64..1e3) {
        let mut m = MlpModel::new(MlpConfig::with_dims(5, vec![4]), &mut rng_from_seed(seed)).unwrap();
        m.linears[1].weight.mapv_inplace(|w| w * scale);
        let (x, y) = random_batch(8, 5, seed);
        let p = m.predict_proba(x.view()).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!(bce_loss(p.view(), &y).unwrap().is_finite());
    }
}
