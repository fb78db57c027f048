//! MLP backbone, optimizer and parameter checkpoints.

mod checkpoint;
mod mlp;
mod optim;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, FORMAT_VERSION, MAGIC};
pub use mlp::{ForwardCache, HeadLayout, Mlp, MlpConfig, Mode};
pub use optim::{sgd_step, Sgd};
pub use params::ParamVector;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{softmax_cross_entropy, Backend, Fast, Reference, Rng, Scalar, Tensor};

    fn batch(rows: usize, dim: usize, seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed, 99);
        let data = (0..rows * dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        Tensor::new(vec![rows, dim], data).unwrap()
    }

    #[test]
    fn mnist_backbone_shape() {
        let model = Mlp::<Fast>::new(MlpConfig::new(784, vec![200], 10), 0).unwrap();
        let x = Tensor::zeros(&[7, 784]);
        let logits = model.predict(&x, &[1; 7]).unwrap();
        assert_eq!(logits.shape(), &[7, 10]);
        assert_eq!(model.num_params(), 784 * 200 + 200 + 200 * 10 + 10);
    }

    #[test]
    fn linear_model_is_affine() {
        let mut model = Mlp::<Reference>::zeroed(MlpConfig::new(2, vec![], 2)).unwrap();
        // W is [in, out] row-major, then b
        model
            .params_mut()
            .as_mut_slice()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 0.5, -0.5]);
        let x = Tensor::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let y = model.predict(&x, &[1, 1]).unwrap();
        assert_eq!(y.data(), &[4.5, 5.5, 2.5, 3.5]);
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let model = Mlp::<Reference>::new(MlpConfig::new(5, vec![8, 4], 3), 3).unwrap();
        let x = batch(4, 5, 1);
        let mut rng = Rng::new(1, 1);
        let (train, _) = model.forward(&x, &[1; 4], Mode::Train, &mut rng).unwrap();
        let eval = model.predict(&x, &[1; 4]).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let model = Mlp::<Reference>::new(MlpConfig::new(5, vec![8], 3).with_dropout(0.3), 3).unwrap();
        let x = batch(4, 5, 2);
        let mut rng = Rng::new(1, 1);
        let (logits, cache) = model.forward(&x, &[1; 4], Mode::Train, &mut rng).unwrap();
        let g = model.backward(&cache, &Tensor::zeros(logits.shape()), None).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut model = Mlp::<Reference>::new(MlpConfig::new(3, vec![4], 2), 0).unwrap();
        let x = batch(2, 3, 0);
        let mut rng = Rng::new(0, 0);
        let (logits, cache) = model.forward(&x, &[1, 1], Mode::Eval, &mut rng).unwrap();
        model.params_mut()[0] += 1.0;
        let err = model.backward(&cache, &Tensor::ones(logits.shape()), None).unwrap_err();
        assert!(err.to_string().contains("stale"), "{err}");
    }

    #[test]
    fn multi_head_selection_and_errors() {
        let cfg = MlpConfig::new(3, vec![4], 10).with_heads(HeadLayout::PerTask { num_tasks: 5 });
        let model = Mlp::<Reference>::new(cfg, 0).unwrap();
        let x = batch(2, 3, 0);
        assert_eq!(model.predict(&x, &[2, 2]).unwrap().shape(), &[2, 2]);
        assert!(matches!(model.predict(&x, &[1, 2]), Err(crate::Error::Validation(_))));
        assert!(matches!(model.predict(&x, &[6, 6]), Err(crate::Error::Range(_))));
    }

    #[test]
    fn duplicated_rows_contribute_equally() {
        let model = Mlp::<Reference>::new(MlpConfig::new(4, vec![6], 3), 5).unwrap();
        let one = batch(1, 4, 7);
        let two = Tensor::concat_rows(&[&one, &one]).unwrap();
        let mut rng = Rng::new(0, 0);
        let (l1, c1) = model.forward(&one, &[1], Mode::Eval, &mut rng).unwrap();
        let (l2, c2) = model.forward(&two, &[1, 1], Mode::Eval, &mut rng).unwrap();
        let g1 = model.backward(&c1, &Tensor::ones(l1.shape()), None).unwrap();
        let g2 = model.backward(&c2, &Tensor::ones(l2.shape()), None).unwrap();
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    fn ce_loss<B: Backend>(model: &Mlp<B>, x: &Tensor<B::Elem>, y: &[usize], seed: u64) -> f64 {
        let mut rng = Rng::new(seed, 3);
        let (logits, _) = model.forward(x, &vec![1; y.len()], Mode::Train, &mut rng).unwrap();
        softmax_cross_entropy::<B>(&logits, y).unwrap().0.as_f64()
    }

    #[test]
    fn backward_matches_central_differences_under_dropout() {
        let model = Mlp::<Reference>::new(MlpConfig::new(4, vec![5, 3], 3).with_dropout(0.25), 11).unwrap();
        let x = batch(3, 4, 4);
        let y = [0, 2, 1];
        let mut rng = Rng::new(21, 3);
        let (logits, cache) = model.forward(&x, &[1; 3], Mode::Train, &mut rng).unwrap();
        let (_, gl) = softmax_cross_entropy::<Reference>(&logits, &y).unwrap();
        let analytic = model.backward(&cache, &gl, None).unwrap();
        let h = 1e-5;
        for i in 0..model.num_params() {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (ce_loss(&plus, &x, &y, 21) - ce_loss(&minus, &x, &y, 21)) / (2.0 * h);
            let a = analytic[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: analytic {a} vs fd {fd}");
        }
    }

    #[test]
    fn snapshot_restore_roundtrip() {
        let mut model = Mlp::<Fast>::new(MlpConfig::new(3, vec![4], 2), 1).unwrap();
        let x = batch(2, 3, 1).cast();
        let before = model.predict(&x, &[1, 1]).unwrap();
        let snap = model.snapshot();
        let mut opt = Sgd::new(0.5, 0.0, 1.0).unwrap();
        let g = ParamVector::from_vec(vec![1.0f32; model.num_params()]);
        opt.step(model.params_mut(), &g).unwrap();
        assert_ne!(model.predict(&x, &[1, 1]).unwrap(), before);
        model.restore(&snap).unwrap();
        assert_eq!(model.predict(&x, &[1, 1]).unwrap(), before);
        assert!(model.restore(&ParamVector::zeros(3)).is_err());
    }

    #[test]
    fn checkpoint_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        let model = Mlp::<Reference>::new(MlpConfig::new(3, vec![4], 2), 9).unwrap();
        write_checkpoint(&path, model.params()).unwrap();
        let loaded = read_checkpoint(&path).unwrap();
        assert!(loaded.bit_eq(model.params()));
        let mut other = Mlp::<Reference>::new(MlpConfig::new(3, vec![4], 2), 10).unwrap();
        other.restore(&loaded).unwrap();
        let x = batch(2, 3, 0);
        assert_eq!(other.predict(&x, &[1, 1]).unwrap(), model.predict(&x, &[1, 1]).unwrap());
    }
}
