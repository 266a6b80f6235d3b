//! End-to-end training behaviour on tiny synthetic sets.

mod criteria;

use criteria::{empty_like, tiny_config as config, tiny_set};
use hierlstm_core::forecaster::Variant;
use hierlstm_core::train::{train, TrainConfig};

#[test]
fn sixteen_samples_are_memorised_and_zero_rate_is_inert() {
    criteria::overfit_sanity().unwrap();
}

#[test]
fn small_steps_decrease_full_batch_loss_monotonically() {
    let data = tiny_set(16);
    for lr in [1e-4, 3e-5] {
        let tc = TrainConfig {
            learning_rate: lr,
            batch_size: 16,
            epochs: 40,
            patience: 0,
            ..TrainConfig::default()
        };
        for variant in Variant::ALL {
            let out = train(config(variant), &data, &empty_like(&data), &tc).unwrap();
            for w in out.history.windows(2) {
                assert!(
                    w[1].train_loss <= w[0].train_loss,
                    "{variant} lr {lr}: loss rose from {} to {} at epoch {}",
                    w[0].train_loss,
                    w[1].train_loss,
                    w[1].epoch
                );
            }
        }
    }
}

#[test]
fn training_is_deterministic_across_runs() {
    let data = tiny_set(16);
    let tc = TrainConfig {
        learning_rate: 5e-3,
        batch_size: 5,
        epochs: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(config(Variant::HierLstmAt), &data, &data, &tc).unwrap();
    let b = train(config(Variant::HierLstmAt), &data, &data, &tc).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
}
