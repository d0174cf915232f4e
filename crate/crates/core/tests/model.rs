mod common;

use common::random_config;
use masnet::model::{count_params, fuse, read_checkpoint, write_checkpoint, FusionStrategy, Model, ModelConfig, Variant};
use masnet::{Rng, Tape, Tensor};

#[test]
fn zeroed_value_paths_reduce_to_vanilla_on_random_configs() {
    let mut rng = Rng::new(77);
    for _ in 0..10 {
        let config = random_config(&mut rng);
        let mut masnet = Model::<f32>::new(config.clone(), &mut rng).unwrap();
        masnet.zero_value_paths();
        let vanilla = masnet.to_vanilla().unwrap();
        let side = 1 << config.channels.len();
        for _ in 0..2 {
            let a = Tensor::<f32>::uniform(&[3, 2 * side, side], 0.0, 1.0, &mut rng);
            let b = Tensor::<f32>::uniform(&[3, 2 * side, side], 0.0, 1.0, &mut rng);
            assert!(masnet.predict(&a, &b).unwrap().bit_eq(&vanilla.predict(&a, &b).unwrap()), "{config:?}");
        }
    }
}

#[test]
fn parameter_overhead_is_the_attention_sum() {
    let mut rng = Rng::new(9);
    for _ in 0..25 {
        let config = random_config(&mut rng);
        let masnet = count_params(&config).unwrap();
        let vanilla = count_params(&config.with_variant(Variant::VanillaSiamese)).unwrap();
        let expected: usize = config
            .channels
            .iter()
            .zip(&config.attention)
            .filter(|(_, &on)| on)
            .map(|(&c, _)| {
                let d = config.d.unwrap_or(c);
                3 * c * d + if d == c { 0 } else { c * d }
            })
            .sum();
        assert_eq!(masnet.total - vanilla.total, expected);
        assert_eq!(vanilla.attention, 0);
        let built = Model::<f32>::new(config.clone(), &mut rng).unwrap();
        assert_eq!(built.params().scalar_count(), masnet.total);
        assert!((masnet.attention_fraction - expected as f64 / masnet.total as f64).abs() < 1e-15);
    }
}

#[test]
fn diff_fusion_negates_under_swap() {
    let mut rng = Rng::new(4);
    let config = ModelConfig { fusion: FusionStrategy::Diff, ..ModelConfig::default() };
    let model = Model::<f64>::new(config, &mut rng).unwrap();
    let a = Tensor::<f64>::uniform(&[3, 8, 8], 0.0, 1.0, &mut rng);
    let b = Tensor::<f64>::uniform(&[3, 8, 8], 0.0, 1.0, &mut rng);
    let fused = |x: &Tensor<f64>, y: &Tensor<f64>| {
        let mut t = Tape::new();
        let bound = model.bind(&mut t, false);
        let (x1, x2) = (t.constant(x.clone()), t.constant(y.clone()));
        let out = model.forward(&mut t, &bound, x1, x2).unwrap();
        t.value(out.fused).clone()
    };
    let (ab, ba) = (fused(&a, &b), fused(&b, &a));
    assert!(ab.bit_eq(&ba.map(|v| -v)));
}

#[test]
fn symmetric_fusions_are_swap_invariant() {
    let mut rng = Rng::new(6);
    let model = Model::<f64>::new(ModelConfig { fusion: FusionStrategy::Add, ..ModelConfig::default() }, &mut rng).unwrap();
    let a = Tensor::<f64>::uniform(&[3, 8, 8], 0.0, 1.0, &mut rng);
    let b = Tensor::<f64>::uniform(&[3, 8, 8], 0.0, 1.0, &mut rng);
    let d = model.predict(&a, &b).unwrap().max_abs_diff(&model.predict(&b, &a).unwrap());
    assert!(d < 1e-12, "{d}");
}

#[test]
fn add_with_zero_is_identity() {
    let mut t = Tape::<f64>::new();
    let f = t.constant(Tensor::uniform(&[2, 2, 2], -1.0, 1.0, &mut Rng::new(1)));
    let z = t.constant(Tensor::zeros(&[2, 2, 2]));
    let y = fuse(&mut t, f, z, FusionStrategy::Add, None).unwrap();
    assert!(t.value(y).bit_eq(t.value(f)));
    assert!(fuse(&mut t, f, z, FusionStrategy::StackPointwise, None).is_err());
}

#[test]
fn logits_stay_finite_on_random_configs() {
    let mut rng = Rng::new(12);
    for _ in 0..10 {
        let config = random_config(&mut rng);
        let model = Model::<f32>::new(config.clone(), &mut rng).unwrap();
        let side = 2 << config.channels.len();
        let a = Tensor::<f32>::uniform(&[3, side, side], 0.0, 1.0, &mut rng);
        let b = Tensor::<f32>::uniform(&[3, side, side], 0.0, 1.0, &mut rng);
        let logits = model.predict(&a, &b).unwrap();
        assert_eq!(logits.shape(), [2, side, side]);
        assert!(logits.is_finite());
    }
}

#[test]
fn checkpoints_round_trip_every_variant() {
    let mut rng = Rng::new(21);
    for _ in 0..6 {
        let mut config = random_config(&mut rng);
        for variant in [Variant::VanillaSiamese, Variant::MASNet] {
            config.variant = variant;
            let model = Model::<f32>::new(config.clone(), &mut rng).unwrap();
            let mut bytes = Vec::new();
            write_checkpoint(&model, &mut bytes).unwrap();
            assert_eq!(&bytes[..5], b"MASN1");
            assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), model);
        }
    }
}
