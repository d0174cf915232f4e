//! Loss, AdamW, the warmup + poly schedule, and the deterministic training
//! loop.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::data::{augment, AugmentPolicy, ChangeMask, Sample};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{write_checkpoint, Model, ModelConfig};
use crate::rng::{Rng, AUGMENT_STREAM, INIT_STREAM};
use crate::tensor::{Real, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_iters: usize,
    pub max_iters: usize,
    pub poly_power: f64,
    pub batch_size: usize,
    /// Square training crop; also the augmentation output extent.
    pub crop_size: usize,
    /// Checkpoint and validation cadence in iterations; 0 disables both.
    pub checkpoint_every: usize,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 6e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_iters: 150,
            max_iters: 2000,
            poly_power: 1.0,
            batch_size: 4,
            crop_size: 64,
            checkpoint_every: 500,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters >= self.max_iters {
            return Err(Error::config(format!(
                "warmup_iters ({}) must be below max_iters ({})",
                self.warmup_iters, self.max_iters
            )));
        }
        let rates = [
            ("base_lr", self.base_lr),
            ("epsilon", self.epsilon),
            ("poly_power", self.poly_power),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.crop_size == 0 {
            return Err(Error::config("batch_size and crop_size must be positive"));
        }
        Ok(())
    }

    pub fn augment_policy(&self) -> AugmentPolicy {
        if self.augment {
            AugmentPolicy { crop: Some(self.crop_size), ..AugmentPolicy::default() }
        } else {
            AugmentPolicy::none()
        }
    }
}

/// Linear warmup from 0, then poly decay to 0 at `max_iters`.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> Result<f64> {
    if iter > cfg.max_iters {
        return Err(Error::config(format!("iteration {iter} beyond max_iters {}", cfg.max_iters)));
    }
    if iter < cfg.warmup_iters {
        return Ok(cfg.base_lr * iter as f64 / cfg.warmup_iters as f64);
    }
    let progress = (iter - cfg.warmup_iters) as f64 / (cfg.max_iters - cfg.warmup_iters) as f64;
    Ok(cfg.base_lr * (1.0 - progress).powf(cfg.poly_power))
}

/// Mean per-pixel cross-entropy of `[2, H, W]` logits against a mask.
pub fn cross_entropy_loss<T: Real>(tape: &mut Tape<T>, logits: Var, mask: &ChangeMask) -> Result<Var> {
    match tape.shape(logits) {
        [2, h, w] if (*h, *w) == (mask.height(), mask.width()) => tape.cross_entropy(logits, &mask.targets()),
        s => Err(Error::shape(
            "cross_entropy_loss",
            format!("logits {s:?} vs {}x{} mask", mask.height(), mask.width()),
        )),
    }
}

/// Per-parameter AdamW moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new<T: Real>(params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        OptimizerState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One decoupled-decay Adam step:
/// `θ ← θ − lr·(m̂ / (√v̂ + ε) + wd·θ)`.
pub fn adamw_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Vec<T>],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adamw_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.numel() != g.len() || state.m[i].len() != g.len() {
            return Err(Error::shape("adamw_step", format!("parameter {i}: {} values vs {} grads", p.numel(), g.len())));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            let g = g[j].as_f64();
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let (m_hat, v_hat) = (m[j] / c1, v[j] / c2);
            let th = theta.as_f64();
            *theta = T::of_f64(th - lr * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * th));
        }
    }
    Ok(())
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients<T: Real>(model: &Model<T>, sample: &Sample) -> Result<(f64, Vec<Vec<T>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let x1 = tape.constant(sample.pair.image_a.cast());
    let x2 = tape.constant(sample.pair.image_b.cast());
    let out = model.forward(&mut tape, &bound, x1, x2)?;
    let loss = cross_entropy_loss(&mut tape, out.logits, &sample.mask)?;
    tape.backward(loss)?;
    let grads = bound.vars().iter().map(|&v| tape.grad(v).expect("bound params require grad").to_vec()).collect();
    Ok((tape.value(loss).item().as_f64(), grads))
}

/// Mean loss and gradients over a batch, accumulated one sample at a time.
pub fn batch_gradients<T: Real>(model: &Model<T>, batch: &[Sample]) -> Result<(f64, Vec<Vec<T>>)> {
    let mut total = 0.0;
    let mut acc: Vec<Vec<T>> = model.params().tensors().iter().map(|p| vec![T::zero(); p.numel()]).collect();
    for s in batch {
        let (loss, grads) = sample_gradients(model, s)?;
        total += loss;
        for (a, g) in acc.iter_mut().zip(grads) {
            a.iter_mut().zip(g).for_each(|(a, g)| *a = *a + g);
        }
    }
    let inv = T::of_f64(1.0 / batch.len() as f64);
    acc.iter_mut().flatten().for_each(|a| *a = *a * inv);
    Ok((total / batch.len() as f64, acc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
}

impl LogEntry {
    pub fn line(&self) -> String {
        format!("{}\t{}\t{}", self.iter, self.lr, self.loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final weights.
    pub model: Model<f32>,
    /// Weights with the best validation IoU, when validation ran.
    pub best: Option<(usize, f64, Model<f32>)>,
    pub log: Vec<LogEntry>,
    pub checkpoints: Vec<PathBuf>,
}

/// Seed-shuffled epochs without replacement.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(n: usize, rng: &mut Rng) -> Self {
        let mut s = Sampler { order: (0..n).collect(), pos: 0 };
        rng.shuffle(&mut s.order);
        s
    }

    fn next(&mut self, rng: &mut Rng) -> usize {
        if self.pos == self.order.len() {
            rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Trains a freshly initialized model.
///
/// Initialization and sampling draw from separate streams of `cfg.seed`, and
/// every step runs on one thread, so equal inputs give bitwise-equal weights.
/// With `out_dir` set, writes `logs/train.log`, periodic checkpoints
/// `checkpoints/iter_NNNNNN.masn`, `checkpoints/final.masn`, and, when a
/// validation set is given, `checkpoints/best.masn`.
pub fn train(
    config: &ModelConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let root = Rng::new(cfg.seed);
    let mut model = Model::<f32>::new(config.clone(), &mut root.split(INIT_STREAM))?;
    let mut rng = root.split(AUGMENT_STREAM);
    let mut sampler = Sampler::new(train_set.len(), &mut rng);
    let mut state = OptimizerState::new(model.params().tensors());
    let policy = cfg.augment_policy();

    let (ckpt_dir, mut log_file) = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir.join("checkpoints"))?;
            fs::create_dir_all(dir.join("logs"))?;
            (Some(dir.join("checkpoints")), Some(BufWriter::new(File::create(dir.join("logs/train.log"))?)))
        }
        None => (None, None),
    };

    let mut outcome = TrainOutcome { model: model.clone(), best: None, log: Vec::with_capacity(cfg.max_iters), checkpoints: vec![] };
    for iter in 0..cfg.max_iters {
        let batch: Vec<Sample> = (0..cfg.batch_size)
            .map(|_| {
                let s = &train_set[sampler.next(&mut rng)];
                augment(s, &mut rng, &policy)
            })
            .collect();
        let (loss, grads) = batch_gradients(&model, &batch).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged { iter, loss: f64::NAN },
            e => e,
        })?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iter, loss });
        }
        let lr = lr_at(iter, cfg)?;
        adamw_step(model.params_mut().tensors_mut(), &grads, &mut state, lr, cfg)?;
        let entry = LogEntry { iter, lr, loss };
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{}", entry.line())?;
        }
        outcome.log.push(entry);

        let done = iter + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            if let Some(dir) = &ckpt_dir {
                let path = dir.join(format!("iter_{done:06}.masn"));
                save(&model, &path)?;
                outcome.checkpoints.push(path);
            }
            if !val_set.is_empty() {
                let score = evaluate(&model, val_set)?.iou;
                if outcome.best.as_ref().is_none_or(|(_, best, _)| score > *best) {
                    outcome.best = Some((done, score, model.clone()));
                }
            }
        }
    }
    if let Some(f) = log_file.as_mut() {
        f.flush()?;
    }
    if let Some(dir) = &ckpt_dir {
        let path = dir.join("final.masn");
        save(&model, &path)?;
        outcome.checkpoints.push(path);
        if let Some((_, _, best)) = &outcome.best {
            let path = dir.join("best.masn");
            save(best, &path)?;
            outcome.checkpoints.push(path);
        }
    }
    outcome.model = model;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_boundaries() {
        let cfg = TrainConfig { warmup_iters: 10, max_iters: 30, ..TrainConfig::default() };
        assert_eq!(lr_at(0, &cfg).unwrap(), 0.0);
        assert_eq!(lr_at(10, &cfg).unwrap(), 6e-5);
        assert_eq!(lr_at(20, &cfg).unwrap(), 3e-5);
        assert_eq!(lr_at(30, &cfg).unwrap(), 0.0);
        assert!(lr_at(31, &cfg).is_err());
        let just_before = lr_at(9, &cfg).unwrap();
        assert!((6e-5 - just_before - 6e-6).abs() < 1e-18);
    }

    #[test]
    fn default_warmup_is_continuous() {
        let cfg = TrainConfig::default();
        let (a, b, c) = (lr_at(149, &cfg).unwrap(), lr_at(150, &cfg).unwrap(), lr_at(151, &cfg).unwrap());
        assert!(a < b && c < b);
        assert!((b - a) < 1e-6 && (b - c) < 1e-6);
    }

    #[test]
    fn adamw_scalar_recurrence() {
        let cfg = TrainConfig::default();
        let mut p = vec![Tensor::<f64>::from_f64(&[1], &[1.0]).unwrap()];
        let mut st = OptimizerState::new(&p);
        adamw_step(&mut p, &[vec![1.0]], &mut st, 0.1, &cfg).unwrap();
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.01);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
        assert!((p[0].data()[0] - 0.899).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let mut p = vec![Tensor::<f64>::from_f64(&[3], &[0.5, -2.0, 3.0]).unwrap()];
        let before = p.clone();
        let mut st = OptimizerState::new(&p);
        for _ in 0..5 {
            adamw_step(&mut p, &[vec![0.0; 3]], &mut st, 0.1, &cfg).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn zero_gradient_decays_geometrically() {
        let cfg = TrainConfig::default();
        let mut p = vec![Tensor::<f64>::from_f64(&[1], &[2.0]).unwrap()];
        let mut st = OptimizerState::new(&p);
        let mut expected = 2.0;
        for _ in 0..10 {
            adamw_step(&mut p, &[vec![0.0]], &mut st, 0.05, &cfg).unwrap();
            expected *= 1.0 - 0.05 * 0.01;
        }
        assert!((p[0].data()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn loss_at_zero_logits_is_ln2() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[2, 3, 3]));
        let mask = ChangeMask::new(3, 3, vec![0, 1, 0, 1, 1, 0, 0, 0, 1]).unwrap();
        let l = cross_entropy_loss(&mut tape, logits, &mask).unwrap();
        assert_eq!(tape.value(l).item(), std::f64::consts::LN_2);
    }

    #[test]
    fn confident_correct_loss_is_tiny() {
        let mask = ChangeMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let mut data = vec![0.0; 8];
        for (p, &t) in mask.data().iter().enumerate() {
            data[t as usize * 4 + p] = 20.0;
        }
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::from_f64(&[2, 2, 2], &data).unwrap());
        let l = cross_entropy_loss(&mut tape, logits, &mask).unwrap();
        assert!(tape.value(l).item() < 1e-3);
    }

    #[test]
    fn loss_rejects_mismatched_mask() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[2, 3, 3]));
        assert!(cross_entropy_loss(&mut tape, logits, &ChangeMask::zeros(3, 2)).is_err());
        let three = tape.leaf(Tensor::zeros(&[3, 3, 3]));
        assert!(cross_entropy_loss(&mut tape, three, &ChangeMask::zeros(3, 3)).is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { warmup_iters: 2000, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { base_lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { beta2: 1.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn sampler_visits_every_item_once_per_epoch() {
        let mut rng = Rng::new(4);
        let mut s = Sampler::new(7, &mut rng);
        for _ in 0..3 {
            let mut epoch: Vec<usize> = (0..7).map(|_| s.next(&mut rng)).collect();
            epoch.sort();
            assert_eq!(epoch, (0..7).collect::<Vec<_>>());
        }
    }
}
