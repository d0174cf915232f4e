use masnet::data::{generate_dataset, SynthConfig};
use masnet::model::{Model, ModelConfig};
use masnet::training::{adamw_step, batch_gradients, lr_at, train, OptimizerState, TrainConfig};
use masnet::{Error, Rng, Tensor};

fn small_train() -> TrainConfig {
    TrainConfig { base_lr: 2e-3, warmup_iters: 3, max_iters: 12, batch_size: 2, crop_size: 16, checkpoint_every: 4, seed: 5, ..TrainConfig::default() }
}

fn small_data(n: usize) -> Vec<masnet::data::Sample> {
    generate_dataset(&SynthConfig { size: 16, seed: 3, ..SynthConfig::default() }, n).unwrap()
}

fn small_model() -> ModelConfig {
    ModelConfig { channels: vec![4, 8], ..ModelConfig::default() }
}

/// Textbook Adam on one scalar.
struct Adam {
    m: f64,
    v: f64,
    t: i32,
}

impl Adam {
    fn step(&mut self, theta: f64, g: f64, lr: f64, c: &TrainConfig) -> f64 {
        self.t += 1;
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * g;
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * g * g;
        let mh = self.m / (1.0 - c.beta1.powi(self.t));
        let vh = self.v / (1.0 - c.beta2.powi(self.t));
        theta - lr * mh / (vh.sqrt() + c.epsilon)
    }
}

#[test]
fn adamw_without_decay_is_adam() {
    let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
    let mut rng = Rng::new(31);
    for _ in 0..20 {
        let start = rng.uniform_range(-3.0, 3.0);
        let mut params = vec![Tensor::<f64>::from_f64(&[1], &[start]).unwrap()];
        let mut state = OptimizerState::new(&params);
        let mut oracle = Adam { m: 0.0, v: 0.0, t: 0 };
        let mut theta = start;
        for _ in 0..25 {
            let g = rng.uniform_range(-2.0, 2.0);
            let lr = rng.uniform_range(1e-4, 1e-1);
            adamw_step(&mut params, &[vec![g]], &mut state, lr, &cfg).unwrap();
            theta = oracle.step(theta, g, lr, &cfg);
            assert!((params[0].data()[0] - theta).abs() < 1e-12);
        }
    }
}

#[test]
fn small_gradient_step_lowers_a_frozen_batch_loss() {
    let batch = small_data(3);
    let mut model = Model::<f64>::new(small_model(), &mut Rng::new(2)).unwrap();
    let (before, grads) = batch_gradients(&model, &batch).unwrap();
    assert!(before >= 0.0);
    for (p, g) in model.params_mut().tensors_mut().iter_mut().zip(&grads) {
        p.data_mut().iter_mut().zip(g).for_each(|(v, g)| *v -= 1e-3 * g);
    }
    let (after, _) = batch_gradients(&model, &batch).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn runs_repeat_bitwise_and_log_the_schedule() {
    let data = small_data(6);
    let cfg = small_train();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let runs: Vec<_> = dirs.iter().map(|d| train(&small_model(), &data, &data[..2], &cfg, Some(d.path())).unwrap()).collect();
    assert_eq!(runs[0].model, runs[1].model);
    for name in ["final.masn", "best.masn", "iter_000004.masn", "iter_000008.masn", "iter_000012.masn"] {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("checkpoints").join(name)).unwrap();
        assert_eq!(read(&dirs[0]), read(&dirs[1]), "{name}");
    }

    let log = std::fs::read_to_string(dirs[0].path().join("logs/train.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), cfg.max_iters);
    for (i, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        assert_eq!(cols[1].parse::<f64>().unwrap(), lr_at(i, &cfg).unwrap());
        assert!(cols[2].parse::<f64>().unwrap() >= 0.0);
    }
    let (best_iter, _, _) = runs[0].best.as_ref().unwrap();
    assert!([4, 8, 12].contains(best_iter));
}

#[test]
fn different_seeds_differ() {
    let data = small_data(4);
    let a = train(&small_model(), &data, &[], &small_train(), None).unwrap();
    let b = train(&small_model(), &data, &[], &TrainConfig { seed: 6, ..small_train() }, None).unwrap();
    assert_ne!(a.model, b.model);
}

#[test]
fn nan_loss_aborts() {
    let cfg = TrainConfig { base_lr: 1e30, weight_decay: 0.0, ..small_train() };
    let err = train(&small_model(), &small_data(4), &[], &cfg, None).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(train(&small_model(), &[], &[], &small_train(), None).is_err());
}
