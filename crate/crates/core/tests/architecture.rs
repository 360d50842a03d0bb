use fogresnet::model::{default_network_spec, Network, KERNEL_SIZE};
use fogresnet::nn::Mode;
use fogresnet::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(batch: usize, seed: u64) -> Tensor3<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor3::from_fn(batch, 3, 1000, |_, _, _| rng.gen_range(-1.0f32..1.0)).unwrap()
}

#[test]
fn per_block_channels_and_lengths() {
    let spec = default_network_spec();
    let mut net = Network::<f32>::init(&spec, 0).unwrap();
    let (logits, cache) = net.forward(&random_batch(4, 1), Mode::Eval).unwrap();
    let channels: Vec<usize> = cache.block_shapes().iter().map(|s| s.1).collect();
    let lengths: Vec<usize> = cache.block_shapes().iter().map(|s| s.2).collect();
    assert_eq!(channels, [32, 64, 128, 256, 384, 512]);
    assert_eq!(lengths, [1000, 500, 250, 125, 25, 5]);
    assert!(cache.block_shapes().iter().all(|s| s.0 == 4));
    assert_eq!(logits.shape(), (4, 3));
    assert_eq!(spec.head_features, 512);
    assert!(spec
        .blocks
        .iter()
        .all(|b| b.kernel == KERNEL_SIZE && b.kernel == 17));
}

#[test]
fn train_mode_reports_the_same_shapes() {
    let spec = default_network_spec();
    let mut net = Network::<f32>::init(&spec, 0).unwrap();
    let (_, eval) = net
        .clone()
        .forward(&random_batch(2, 2), Mode::Eval)
        .unwrap();
    let (_, train) = net.forward(&random_batch(2, 2), Mode::Train).unwrap();
    assert_eq!(eval.block_shapes(), train.block_shapes());
}

#[test]
fn every_block_has_a_projection_shortcut() {
    let spec = default_network_spec();
    let strides: Vec<usize> = spec.blocks.iter().map(|b| b.stride).collect();
    assert_eq!(strides, [1, 2, 2, 2, 5, 5]);
    let net = Network::<f32>::init(&spec, 0).unwrap();
    assert!(net.blocks.iter().all(|b| b.shortcut.is_some()));
    assert!(net
        .named_params()
        .iter()
        .any(|(n, _)| n == "blocks.5.shortcut.conv.weight"));
}

#[test]
fn eval_logits_do_not_depend_on_batch_composition() {
    let net = Network::<f32>::init(&default_network_spec(), 3).unwrap();
    let batch = random_batch(12, 4);
    let together = net.predict(&batch).unwrap();
    for b in [0, 7, 8, 11] {
        let single = Tensor3::from_vec(batch.sample(b).to_vec(), 1, 3, 1000).unwrap();
        let alone = net.predict(&single).unwrap();
        for c in 0..3 {
            let (x, y) = (together.get(b, c), alone.get(0, c));
            assert!(
                (x - y).abs() <= 1e-5 * x.abs().max(y.abs()).max(1e-3),
                "sample {b} class {c}: {x} vs {y}"
            );
        }
    }
}
