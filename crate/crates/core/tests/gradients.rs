mod support;

use ftl_core::kernels::conv::{conv_backward, ConvSpec};
use ftl_core::nn::{LayerSpec, Network, NetworkSpec, NnError, OutputGrad, OutputHead};
use ftl_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gradcheck::{run_suite, toy_regressor_spec};

#[test]
fn every_layer_passes_finite_differences() {
    for report in run_suite(10, 2024) {
        assert!(report.configs >= 10);
        assert!(
            report.worst_rel < 1e-4,
            "{}: worst relative error {:.3e} over {} elements",
            report.name,
            report.worst_rel,
            report.checked
        );
    }
}

#[test]
fn zero_loss_gradient_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Network::new(toy_regressor_spec(5), &mut rng).unwrap();
    let frames: Vec<Tensor> = (0..5).map(|_| Tensor::from_fn([6, 6, 8], |_| rng.gen())).collect();
    let cache = net.forward(&frames).unwrap();
    let grads = net.backward(&cache, OutputGrad::Output(Tensor::zeros([2]))).unwrap();
    assert!(grads.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn single_dense_layer_gradient_is_outer_product() {
    let spec = NetworkSpec {
        name: "probe".into(),
        input: [1, 1, 3],
        frame_layers: vec![],
        recurrent: None,
        head_layers: vec![LayerSpec::Dense { inputs: 3, outputs: 2 }],
        output: OutputHead::Identity,
    };
    let net = Network::new(spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let x = Tensor::new([1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    let cache = net.forward(&[x.clone()]).unwrap();
    let g = Tensor::vector(vec![3.0, -0.5]);
    let grads = net.backward(&cache, OutputGrad::Output(g.clone())).unwrap();
    let mut want = Vec::new();
    for gi in g.data() {
        for xi in x.data() {
            want.push(gi * xi);
        }
    }
    assert_eq!(grads.tensors[0].data(), want.as_slice());
    assert_eq!(grads.tensors[1], g);
}

#[test]
fn stale_cache_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Network::new(toy_regressor_spec(2), &mut rng).unwrap();
    let frames: Vec<Tensor> = (0..2).map(|_| Tensor::from_fn([6, 6, 8], |_| rng.gen())).collect();
    let cache = net.forward(&frames).unwrap();
    let grads = net.backward(&cache, OutputGrad::Output(Tensor::vector(vec![1.0, 1.0]))).unwrap();
    net.sgd_step(&grads, 0.1).unwrap();
    assert!(matches!(
        net.backward(&cache, OutputGrad::Output(Tensor::vector(vec![1.0, 1.0]))),
        Err(NnError::StaleCache)
    ));
    let other = net.clone();
    assert!(matches!(
        other.backward(&net.forward(&frames).unwrap(), OutputGrad::Output(Tensor::vector(vec![1.0, 1.0]))),
        Err(NnError::StaleCache)
    ));
}

#[test]
fn grouped_weight_gradients_ignore_other_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = ConvSpec::same(8, 8, 3, 4);
    let weights = Tensor::from_fn(spec.weight_shape(), |_| rng.gen_range(-1.0..1.0));
    let x = Tensor::from_fn([8, 5, 6], |_| rng.gen_range(-1.0..1.0));
    let g_out = Tensor::from_fn([8, 5, 6], |_| rng.gen_range(-1.0..1.0));
    let base = conv_backward(&x, &weights, &g_out, &spec).unwrap();
    let per_group_weights = weights.len() / 4;
    for g in 0..4 {
        // Scramble every input channel outside group g.
        let mut scrambled = x.clone();
        let plane = 30;
        for c in 0..8 {
            if c / 2 != g {
                for v in &mut scrambled.data_mut()[c * plane..(c + 1) * plane] {
                    *v = rng.gen_range(-5.0..5.0);
                }
            }
        }
        let probe = conv_backward(&scrambled, &weights, &g_out, &spec).unwrap();
        let range = g * per_group_weights..(g + 1) * per_group_weights;
        assert_eq!(&probe.weights.data()[range.clone()], &base.weights.data()[range]);
    }
}
