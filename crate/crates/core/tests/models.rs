use ftl_core::kernels::conv::conv_forward;
use ftl_core::models::*;
use ftl_core::nn::{LayerSpec, Network};
use ftl_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn canonical_parameter_counts_report() {
    for (name, spec) in [
        ("mcn grouped", mcn_spec(&McnConfig::canonical()).unwrap()),
        ("mcn standard", mcn_spec(&McnConfig::canonical().with_variant(ConvVariant::Standard)).unwrap()),
        ("rn grouped", rn_spec(&RnConfig::canonical()).unwrap()),
        ("rn standard", rn_spec(&RnConfig::canonical().with_variant(ConvVariant::Standard)).unwrap()),
    ] {
        println!("{name:<13} {:>10} params {:>14} flops", spec.param_count().unwrap(), spec.flop_count().unwrap());
    }
    let g = rn_spec(&RnConfig::canonical()).unwrap().param_count().unwrap() as f64;
    let s = rn_spec(&RnConfig::canonical().with_variant(ConvVariant::Standard)).unwrap().param_count().unwrap() as f64;
    assert!((s - 2.23e6).abs() / 2.23e6 < 0.01);
    assert!((g - 1.79e6).abs() / 1.79e6 < 0.01);
    assert!((100.0 * (s - g) / s - 19.7).abs() < 0.05);
}

/// Grouped layer weights of a built network and the spec they belong to.
fn grouped_layer(net: &Network) -> (ftl_core::kernels::ConvSpec, Tensor) {
    let mut slot = 0;
    let mut found = None;
    for layer in &net.spec().frame_layers {
        if let LayerSpec::Conv(c) = layer {
            if c.groups > 1 {
                found = Some((*c, net.params()[slot].clone()));
            }
            slot += if c.bias { 2 } else { 1 };
        }
    }
    found.expect("network has a grouped layer")
}

#[test]
fn zeroing_one_group_changes_only_its_outputs() {
    let net = build_rn(&RnConfig::desk(), 5).unwrap();
    let (spec, w) = grouped_layer(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Tensor::from_fn([spec.in_channels, 3, 5], |_| rng.gen_range(-1.0..1.0));
    let base = conv_forward(&x, &w, None, &spec).unwrap();
    let (pin, pout, plane) = (spec.in_per_group(), spec.out_per_group(), 15);
    for g in 0..spec.groups {
        let mut probe = x.clone();
        probe.data_mut()[g * pin * plane..(g + 1) * pin * plane].fill(0.0);
        let out = conv_forward(&probe, &w, None, &spec).unwrap();
        for oc in 0..spec.out_channels {
            let same = out.channel(oc) == base.channel(oc);
            assert_eq!(same, oc / pout != g, "group {g}, output channel {oc}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regressor_outputs_are_bounded(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = build_rn(&RnConfig::desk(), seed).unwrap();
        let params = net.params().iter().map(|p| Tensor::from_fn(p.shape(), |_| rng.gen_range(-scale..scale))).collect();
        let rn = Rn::new(Network::from_params(net.spec().clone(), params).unwrap()).unwrap();
        let frames: Vec<Tensor> = (0..5).map(|_| Tensor::from_fn([6, 15, 20], |_| rng.gen())).collect();
        let out = rn.infer(&frames, None).unwrap();
        prop_assert!((-1.0..=1.0).contains(&out.steering));
        prop_assert!((0.0..=1.0).contains(&out.throttle));
        let again = rn.infer(&frames, Some(&out.state)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&again.steering));
    }

    #[test]
    fn classifier_outputs_are_distributions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mcn = Mcn::new(build_mcn(&McnConfig::desk(), seed).unwrap()).unwrap();
        let out = mcn.infer(&Tensor::from_fn([6, 30, 40], |_| rng.gen())).unwrap();
        prop_assert!((out.p_present + out.p_absent - 1.0).abs() < 1e-12);
    }
}
