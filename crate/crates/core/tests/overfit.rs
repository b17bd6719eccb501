//! A model that cannot memorize one sample has an implementation fault.

use cerebroflow_core::dataset::{augment_one, generate_network, AugmentParams, NetworkSpec};
use cerebroflow_core::gnn::{encode_sample, mean_loss, train, ModelConfig, TrainConfig};

#[test]
fn single_sample_loss_drops_by_ninety_percent() {
    let spec = NetworkSpec {
        depth: 3,
        loop_count: 1,
        stenosis_count: 1,
    };
    let g = generate_network(11, spec).unwrap();
    let sample = augment_one(&g, 0, 5, 0, &AugmentParams::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 500,
        eval_every: 50,
        batch_size: 1,
        lr0: 3e-3,
        model: ModelConfig {
            hidden: 32,
            layers: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let set = [sample];
    let out = train(&set, &set, &cfg).unwrap();
    let initial = out.history.first_train_loss().unwrap();
    let enc = encode_sample(&set[0], &out.stats).unwrap();
    let last = mean_loss(&out.params, &[enc], 1).unwrap();
    assert!(last < 0.1 * initial, "loss {initial} -> {last}");
}
