//! The six-block residual network: architecture description, parameters,
//! whole-network passes and checkpoints.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, load_checkpoint_for,
    save_checkpoint, write_atomic, CheckpointMeta, MAGIC, VERSION,
};
pub use network::{ForwardCache, Network, Projection, ResidualBlock};
pub use spec::{default_network_spec, NetworkSpec, ResidualBlockSpec, KERNEL_SIZE};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::tensor::{Matrix, Tensor3};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::from_schedule(3, 16, &[(4, 1), (6, 2)], 3, 3)
    }

    fn batch(b: usize, spec: &NetworkSpec) -> Tensor3<f64> {
        Tensor3::from_fn(b, spec.input_channels, spec.window_length, |i, c, l| {
            ((i * 13 + c * 5 + l * 7) % 11) as f64 / 5.0 - 1.0
        })
        .unwrap()
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Network::<f32>::init(&tiny_spec(), 7).unwrap();
        let b = Network::<f32>::init(&tiny_spec(), 7).unwrap();
        let c = Network::<f32>::init(&tiny_spec(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn logits_have_batch_by_outputs_shape() {
        let spec = tiny_spec();
        let mut net = Network::<f64>::init(&spec, 1).unwrap();
        let (logits, cache) = net.forward(&batch(5, &spec), Mode::Train).unwrap();
        assert_eq!(logits.shape(), (5, 3));
        assert_eq!(cache.block_shapes().len(), 2);
    }

    #[test]
    fn eval_forward_is_repeatable() {
        let spec = tiny_spec();
        let mut net = Network::<f32>::init(&spec, 2).unwrap();
        let x = batch(3, &spec).cast::<f32>();
        let (a, _) = net.forward(&x, Mode::Eval).unwrap();
        let (b, _) = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(net.predict(&x).unwrap(), a);
    }

    #[test]
    fn zero_head_weights_give_bias() {
        let spec = tiny_spec();
        let mut net = Network::<f64>::init(&spec, 3).unwrap();
        net.head.weight.value.iter_mut().for_each(|w| *w = 0.0);
        net.head.bias.value = vec![0.5, -1.0, 2.0];
        let logits = net.predict(&batch(4, &spec)).unwrap();
        for r in 0..4 {
            assert_eq!(logits.row(r), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let spec = tiny_spec();
        let net = Network::<f64>::init(&spec, 3).unwrap();
        let x = Tensor3::<f64>::zeros(2, 3, 15).unwrap();
        assert!(matches!(
            net.predict(&x),
            Err(crate::Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_rejects_eval_cache_and_accumulates() {
        let spec = tiny_spec();
        let mut net = Network::<f64>::init(&spec, 4).unwrap();
        let x = batch(3, &spec);
        let (_, eval_cache) = net.forward(&x, Mode::Eval).unwrap();
        let g = Matrix::from_vec(vec![0.1; 9], 3, 3).unwrap();
        assert!(matches!(
            net.backward(&eval_cache, &g),
            Err(crate::Error::EvalModeCache)
        ));

        let (_, cache) = net.forward(&x, Mode::Train).unwrap();
        net.backward(&cache, &Matrix::zeros(3, 3)).unwrap();
        assert!(net
            .named_params()
            .iter()
            .all(|(_, p)| p.grad.iter().all(|&v| v == 0.0)));

        net.backward(&cache, &g).unwrap();
        let once: Vec<Vec<f64>> = net
            .named_params()
            .iter()
            .map(|(_, p)| p.grad.clone())
            .collect();
        net.backward(&cache, &g).unwrap();
        for ((_, p), first) in net.named_params().iter().zip(&once) {
            for (&twice, &one) in p.grad.iter().zip(first) {
                assert!((twice - 2.0 * one).abs() <= 1e-12 * one.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn identity_block_with_zero_main_path_is_relu_of_input() {
        let spec = NetworkSpec::from_schedule(4, 12, &[(4, 1)], 3, 2);
        let mut net = Network::<f64>::init(&spec, 5).unwrap();
        let block = &mut net.blocks[0];
        assert!(block.shortcut.is_none());
        block.conv1.weight.value.iter_mut().for_each(|w| *w = 0.0);
        block.conv2.weight.value.iter_mut().for_each(|w| *w = 0.0);
        let x = Tensor3::from_fn(2, 4, 12, |b, c, l| (b + c + l) as f64 * 0.3 - 2.0).unwrap();
        // running mean 0, variance 1, zero shift: the main path emits exactly 0
        let y = net.blocks[0].infer(&x).unwrap();
        assert_eq!(y, x.map(|v| v.max(0.0)));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let spec = tiny_spec();
        let mut net = Network::<f32>::init(&spec, 11).unwrap();
        let x = batch(2, &spec).cast::<f32>();
        net.forward(&x, Mode::Train).unwrap(); // moves running stats
        let meta = CheckpointMeta {
            fold: Some(2),
            seed: 99,
            config_digest: [7; 32],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &net, &meta).unwrap();
        let (loaded, m2) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(loaded, net);
        assert_eq!(loaded.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn checkpoint_errors_are_distinct() {
        let spec = tiny_spec();
        let net = Network::<f32>::init(&spec, 1).unwrap();
        let meta = CheckpointMeta {
            fold: None,
            seed: 1,
            config_digest: [0; 32],
        };
        let bytes = checkpoint_to_bytes(&net, &meta);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes::<f32>(&bad),
            Err(crate::Error::BadMagic)
        ));

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            checkpoint_from_bytes::<f32>(&bad),
            Err(crate::Error::UnsupportedVersion(9))
        ));

        assert!(matches!(
            checkpoint_from_bytes::<f32>(&bytes[..bytes.len() - 3]),
            Err(crate::Error::Truncated)
        ));
        assert!(matches!(
            checkpoint_from_bytes::<f64>(&bytes),
            Err(crate::Error::CorruptCheckpoint(_))
        ));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.ckpt");
        save_checkpoint(&path, &net, &meta).unwrap();
        assert!(load_checkpoint_for::<f32>(&path, &tiny_spec()).is_ok());
        assert!(matches!(
            load_checkpoint_for::<f32>(&path, &default_network_spec()),
            Err(crate::Error::SpecMismatch(_))
        ));
    }
}
