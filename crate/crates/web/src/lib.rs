//! Browser front end for the `masnet` crate.
//!
//! [`DemoState`] owns a small synthetic training set, a tiny MASNet, and its
//! optimizer. [`Demo`] wraps it for JavaScript. Every image handed across the
//! boundary is a `size × size` RGBA buffer ready for `ImageData`.

use masnet::attention::AttentionLevel;
use masnet::data::{generate_dataset, Sample, SynthConfig};
use masnet::eval::{confusion, iou, normalize_map};
use masnet::model::{argmax_change, Model, ModelConfig};
use masnet::training::{adamw_step, batch_gradients, lr_at, OptimizerState, TrainConfig};
use masnet::rng::{AUGMENT_STREAM, INIT_STREAM};
use masnet::{Error, Result, Rng, Tape, Tensor};
use wasm_bindgen::prelude::*;

pub const SIZE: usize = 32;
pub const TRAIN_PAIRS: usize = 128;
pub const LEVELS: [&str; 4] = ["global", "local:4x4", "individual", "individual-literal"];

/// Which reduction of an attention block to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Post-softmax weights reduced to one value per pixel.
    Weights,
    /// Channel mean of the attended term added to the residual.
    Values,
}

pub fn image_rgba(image: &Tensor<f32>) -> Vec<u8> {
    let &[3, h, w] = image.shape() else { panic!("expected a 3×H×W image") };
    let plane = h * w;
    let d = image.data();
    let mut out = Vec::with_capacity(plane * 4);
    for p in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

pub fn mask_rgba(mask: &[u8]) -> Vec<u8> {
    mask.iter().flat_map(|&m| if m == 1 { [255, 255, 255, 255] } else { [0, 0, 0, 255] }).collect()
}

/// Nearest-neighbour upscale of an `h×w` gray map to `size×size`, coloured
/// from dark blue (0) to yellow (255).
pub fn heat_rgba(gray: &[u8], h: usize, w: usize, size: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(size * size * 4);
    for y in 0..size {
        for x in 0..size {
            let v = gray[(y * h / size) * w + x * w / size] as u32;
            out.extend([v as u8, (v * 220 / 255) as u8, (110 - v * 110 / 255) as u8, 255]);
        }
    }
    out
}

fn channel_mean(t: &Tensor<f32>) -> Vec<f64> {
    let &[c, h, w] = t.shape() else { unreachable!("feature maps are C×H×W") };
    let d = t.data();
    (0..h * w).map(|p| (0..c).map(|ch| d[ch * h * w + p] as f64).sum::<f64>() / c as f64).collect()
}

pub struct DemoState {
    train_set: Vec<Sample>,
    pair: Sample,
    model: Model<f32>,
    optimizer: OptimizerState,
    train_cfg: TrainConfig,
    rng: Rng,
    iter: usize,
}

impl DemoState {
    pub fn new(seed: u64, level: &str) -> Result<Self> {
        Self::with_schedule(seed, level, 2000)
    }

    /// Like [`DemoState::new`] with a training budget of `max_iters`.
    pub fn with_schedule(seed: u64, level: &str, max_iters: usize) -> Result<Self> {
        let synth = SynthConfig { size: SIZE, seed, ..SynthConfig::default() };
        let train_set = generate_dataset(&synth, TRAIN_PAIRS)?;
        let config = ModelConfig { level: level.parse()?, ..ModelConfig::default() };
        let rng = Rng::new(seed);
        let model = Model::new(config, &mut rng.split(INIT_STREAM))?;
        let train_cfg = TrainConfig {
            base_lr: 2e-3,
            warmup_iters: (max_iters / 20).max(1),
            max_iters,
            augment: false,
            seed,
            ..TrainConfig::default()
        };
        train_cfg.validate()?;
        Ok(DemoState {
            pair: Self::held_out(seed, 0)?,
            optimizer: OptimizerState::new(model.params().tensors()),
            train_set,
            model,
            train_cfg,
            rng: rng.split(AUGMENT_STREAM),
            iter: 0,
        })
    }

    fn held_out(seed: u64, index: u64) -> Result<Sample> {
        let synth = SynthConfig { size: SIZE, seed: seed.wrapping_add(1 << 32).wrapping_add(index), ..SynthConfig::default() };
        Ok(generate_dataset(&synth, 1)?.remove(0))
    }

    /// Replaces the displayed pair with held-out pair `index`.
    pub fn show_pair(&mut self, index: u64) -> Result<()> {
        self.pair = Self::held_out(self.train_cfg.seed, index)?;
        Ok(())
    }

    pub fn pair(&self) -> &Sample {
        &self.pair
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn iter(&self) -> usize {
        self.iter
    }

    pub fn max_iters(&self) -> usize {
        self.train_cfg.max_iters
    }

    /// Runs up to `steps` AdamW iterations and returns the mean loss, or
    /// `None` once the schedule is exhausted.
    pub fn train(&mut self, steps: usize) -> Result<Option<f64>> {
        let mut total = 0.0;
        let mut done = 0;
        while done < steps && self.iter < self.train_cfg.max_iters {
            let batch: Vec<Sample> = (0..self.train_cfg.batch_size)
                .map(|_| self.train_set[self.rng.below(self.train_set.len())].clone())
                .collect();
            let (loss, grads) = batch_gradients(&self.model, &batch)?;
            let lr = lr_at(self.iter, &self.train_cfg)?;
            adamw_step(self.model.params_mut().tensors_mut(), &grads, &mut self.optimizer, lr, &self.train_cfg)?;
            total += loss;
            done += 1;
            self.iter += 1;
        }
        Ok((done > 0).then(|| total / done as f64))
    }

    /// Swaps the attention level while keeping the learned weights.
    pub fn set_level(&mut self, level: &str) -> Result<()> {
        let level: AttentionLevel = level.parse()?;
        let config = ModelConfig { level, ..self.model.config().clone() };
        self.model = Model::from_params(config, self.model.params().tensors().to_vec())?;
        Ok(())
    }

    pub fn prediction(&self) -> Result<Vec<u8>> {
        let logits = self.model.predict(&self.pair.pair.image_a, &self.pair.pair.image_b)?;
        Ok(argmax_change(&logits))
    }

    pub fn pair_iou(&self) -> Result<f64> {
        Ok(iou(&confusion(&self.prediction()?, &self.pair.mask)?))
    }

    /// A normalized attention map for `stage` and `branch` (1 or 2), with its
    /// height and width.
    pub fn attention_map(&self, stage: usize, branch: usize, kind: MapKind) -> Result<(Vec<u8>, usize, usize)> {
        if !(1..=2).contains(&branch) {
            return Err(Error::Config(format!("branch must be 1 or 2, got {branch}")));
        }
        let mut tape = Tape::new();
        let b = self.model.bind(&mut tape, false);
        let x1 = tape.constant(self.pair.pair.image_a.clone());
        let x2 = tape.constant(self.pair.pair.image_b.clone());
        let encoded = self.model.siamese_encode(&mut tape, &b, x1, x2)?;
        let acts = encoded
            .activations
            .get(stage)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Config(format!("stage {stage} has no attention block")))?;
        let values = match kind {
            MapKind::Weights => acts.spatial_weight_map(&tape, branch),
            MapKind::Values => {
                let term = if branch == 1 { acts.weighted_1 } else { acts.weighted_2 };
                channel_mean(tape.value(term))
            }
        };
        Ok((normalize_map(&values), acts.height, acts.width))
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo(DemoState);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, level: &str) -> std::result::Result<Demo, JsError> {
        DemoState::new(seed as u64, level).map(Demo).map_err(js)
    }

    pub fn size(&self) -> usize {
        SIZE
    }

    pub fn stages(&self) -> usize {
        self.0.model().config().channels.len()
    }

    pub fn iter(&self) -> usize {
        self.0.iter()
    }

    #[wasm_bindgen(js_name = maxIters)]
    pub fn max_iters(&self) -> usize {
        self.0.max_iters()
    }

    #[wasm_bindgen(js_name = showPair)]
    pub fn show_pair(&mut self, index: u32) -> std::result::Result<(), JsError> {
        self.0.show_pair(index as u64).map_err(js)
    }

    /// Mean loss over the steps run, or NaN when training has finished.
    pub fn train(&mut self, steps: usize) -> std::result::Result<f64, JsError> {
        Ok(self.0.train(steps).map_err(js)?.unwrap_or(f64::NAN))
    }

    #[wasm_bindgen(js_name = setLevel)]
    pub fn set_level(&mut self, level: &str) -> std::result::Result<(), JsError> {
        self.0.set_level(level).map_err(js)
    }

    #[wasm_bindgen(js_name = imageA)]
    pub fn image_a(&self) -> Vec<u8> {
        image_rgba(&self.0.pair().pair.image_a)
    }

    #[wasm_bindgen(js_name = imageB)]
    pub fn image_b(&self) -> Vec<u8> {
        image_rgba(&self.0.pair().pair.image_b)
    }

    pub fn truth(&self) -> Vec<u8> {
        mask_rgba(self.0.pair().mask.data())
    }

    pub fn prediction(&self) -> std::result::Result<Vec<u8>, JsError> {
        self.0.prediction().map(|m| mask_rgba(&m)).map_err(js)
    }

    #[wasm_bindgen(js_name = pairIou)]
    pub fn pair_iou(&self) -> std::result::Result<f64, JsError> {
        self.0.pair_iou().map_err(js)
    }

    /// `kind` is `"weights"` or `"values"`.
    pub fn attention(&self, stage: usize, branch: usize, kind: &str) -> std::result::Result<Vec<u8>, JsError> {
        let kind = match kind {
            "weights" => MapKind::Weights,
            "values" => MapKind::Values,
            other => return Err(JsError::new(&format!("unknown map kind `{other}`"))),
        };
        let (gray, h, w) = self.0.attention_map(stage, branch, kind).map_err(js)?;
        Ok(heat_rgba(&gray, h, w, SIZE))
    }
}

/// Labels of the selectable attention levels.
#[wasm_bindgen]
pub fn levels() -> Vec<String> {
    LEVELS.iter().map(|s| s.to_string()).collect()
}

