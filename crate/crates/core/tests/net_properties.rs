//! Properties of the classifier stack: the forward pass always emits valid
//! probability rows, checkpoint selection is exactly "best metric, earliest
//! on ties", serialized models predict bit-identically to their originals,
//! and whole training runs replay bit-for-bit under one seed.

use chrono::NaiveDate;
use fundrank_core::features::{FeatureWindow, Label};
use fundrank_core::net::{
    config_hash, evaluate, forward, load_checkpoint, predict, save_checkpoint, train, Mode,
    ModelParams, SelectionMetric, TrainConfig, TrainingSet,
};
use ndarray::Array2;
use proptest::prelude::*;

fn bare_window(values: Array2<f64>) -> FeatureWindow {
    let mask = Array2::from_elem(values.dim(), false);
    FeatureWindow {
        ticker: "TST".to_string(),
        asof: NaiveDate::from_ymd_opt(2020, 3, 31).unwrap(),
        values,
        mask,
    }
}

fn toy_set(n: usize, f: usize, seed: u64, separation: f64) -> TrainingSet {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Array2::zeros((n, 8 * f));
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let up = r % 2 == 0;
        for c in 0..8 * f {
            inputs[[r, c]] = 0.4 * (2.0 * rng.random::<f64>() - 1.0);
        }
        inputs[[r, 1]] += if up { separation } else { -separation };
        labels.push(if up { Label::Up } else { Label::Down });
    }
    TrainingSet::new(inputs, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Inference on arbitrary finite batches yields rows of finite
    /// probabilities in [0, 1] summing to 1 within rounding.
    #[test]
    fn inference_always_emits_probability_rows(
        seed in 0u64..1000,
        f in 1usize..5,
        rows in 1usize..9,
        scale in 0.01f64..100.0,
    ) {
        use rand::{Rng, SeedableRng};
        let params = ModelParams::init(f, seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let batch = Array2::from_shape_fn((rows, 8 * f), |_| {
            scale * (2.0 * rng.random::<f64>() - 1.0)
        });
        let (probs, _) = forward(&params, &batch, Mode::Inference).unwrap();
        prop_assert_eq!(probs.dim(), (rows, 2));
        for row in probs.rows() {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row sums to {sum}");
            for &p in row {
                prop_assert!(p.is_finite() && (0.0..=1.0).contains(&p));
            }
        }
    }
}

/// A checkpoint written to disk and read back drives predictions that match
/// the in-memory model bit for bit, across random models and inputs.
#[test]
fn saved_models_predict_bitwise_like_the_originals() {
    use rand::{Rng, SeedableRng};
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig::default();
    for trial in 0..12u64 {
        let f = 1 + (trial as usize % 4);
        let params = ModelParams::init(f, 1000 + trial);
        let floors = fundrank_core::features::DenominatorFloors::uniform(f, 1e-6);
        let path = dir.path().join(format!("model_{trial}.json"));
        let checkpoint = fundrank_core::net::Checkpoint {
            params: params.clone(),
            iteration: 41,
            metric: SelectionMetric::ValidationAccuracy,
            metric_value: 0.5,
        };
        save_checkpoint(&path, &checkpoint, &config_hash(&config), &floors).unwrap();
        let envelope = load_checkpoint(&path).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(trial);
        for _ in 0..16 {
            let window =
                bare_window(Array2::from_shape_fn((8, f), |_| 4.0 * rng.random::<f64>() - 2.0));
            let a = predict(&params, &window).unwrap();
            let b = predict(&envelope.checkpoint.params, &window).unwrap();
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }
}

/// The returned checkpoint is the evaluation-log row with the best metric,
/// taking the earliest on exact ties, and its parameters reproduce that
/// metric on the validation set.
#[test]
fn checkpoint_selection_is_best_metric_earliest_tie() {
    let train_set = toy_set(96, 2, 21, 0.8);
    let val_set = toy_set(40, 2, 22, 0.8);
    for (seed, metric) in
        [(1u64, SelectionMetric::ValidationAccuracy), (2, SelectionMetric::ValidationLoss)]
    {
        let config = TrainConfig {
            maxiter: 300,
            miniter: 50,
            batch_size: 16,
            eval_interval: 50,
            learning_rate: 1e-3,
            selection_metric: metric,
            ..TrainConfig::default()
        };
        let outcome = train(&train_set, &val_set, &config, seed).unwrap();
        assert_eq!(outcome.log.len() as u64, (300 - 50) / 50);

        let best_row = outcome
            .log
            .iter()
            .fold(None::<&fundrank_core::net::EvalRow>, |best, row| match best {
                None => Some(row),
                Some(b) => {
                    let improved = match metric {
                        SelectionMetric::ValidationAccuracy => row.val_metric > b.val_metric,
                        SelectionMetric::ValidationLoss => row.val_metric < b.val_metric,
                    };
                    Some(if improved { row } else { b })
                }
            })
            .unwrap();
        assert_eq!(outcome.best.iteration, best_row.iteration);
        assert_eq!(outcome.best.metric_value.to_bits(), best_row.val_metric.to_bits());

        // Replaying the stored parameters reproduces the stored metric.
        let replayed = evaluate(&outcome.best.params, &val_set, metric).unwrap();
        assert_eq!(replayed.to_bits(), outcome.best.metric_value.to_bits());
    }
}

/// One seed, one result: two runs agree bit for bit in the log, the selected
/// parameters, and downstream evaluation; a different seed does not.
#[test]
fn training_replays_bitwise_under_a_fixed_seed() {
    let train_set = toy_set(80, 1, 31, 0.6);
    let val_set = toy_set(30, 1, 32, 0.6);
    let config = TrainConfig {
        maxiter: 200,
        miniter: 40,
        batch_size: 8,
        eval_interval: 40,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let a = train(&train_set, &val_set, &config, 77).unwrap();
    let b = train(&train_set, &val_set, &config, 77).unwrap();
    assert_eq!(a.log.len(), b.log.len());
    for (x, y) in a.log.iter().zip(&b.log) {
        assert_eq!(x.iteration, y.iteration);
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.val_metric.to_bits(), y.val_metric.to_bits());
    }
    assert_eq!(a.best.params, b.best.params);
    assert_eq!(a.clamp_events, b.clamp_events);

    let c = train(&train_set, &val_set, &config, 78).unwrap();
    assert_ne!(
        a.best.params, c.best.params,
        "different seeds should explore different batches"
    );
}

/// End to end on a learnable toy problem: training beats coin flipping and
/// the persisted checkpoint scores identically after a disk round trip.
#[test]
fn training_learns_and_survives_persistence() {
    let train_set = toy_set(240, 2, 41, 1.0);
    let val_set = toy_set(80, 2, 42, 1.0);
    let config = TrainConfig {
        maxiter: 600,
        miniter: 100,
        batch_size: 32,
        eval_interval: 100,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, &val_set, &config, 9).unwrap();
    assert!(
        outcome.best.metric_value > 0.9,
        "validation accuracy {} on a separable problem",
        outcome.best.metric_value
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    let floors = fundrank_core::features::DenominatorFloors::uniform(2, 1e-6);
    save_checkpoint(&path, &outcome.best, &config_hash(&config), &floors).unwrap();
    let envelope = load_checkpoint(&path).unwrap();
    assert_eq!(envelope.config_hash, config_hash(&config));
    let replayed = evaluate(
        &envelope.checkpoint.params,
        &val_set,
        SelectionMetric::ValidationAccuracy,
    )
    .unwrap();
    assert_eq!(replayed.to_bits(), outcome.best.metric_value.to_bits());
}
