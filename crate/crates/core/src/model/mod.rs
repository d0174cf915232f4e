//! Siamese change-detection models.
//!
//! Every variant shares one encoder made of stride-2 `3×3` convolution stages
//! with ReLU. The siamese variants run it once per image with a single
//! parameter set; MASNet inserts a mutual-attention block after each enabled
//! stage, and the attended maps feed the next stage. The deepest pair of maps
//! is fused and decoded back to input resolution as two-class logits
//! (non-change, change). The early-fusion baseline instead stacks both images
//! into one 6-band input for a single encoder.

mod checkpoint;
mod config;

use crate::attention::{self, AttentionActivations, AttentionParams, AttentionVars};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tape, Tensor, Var};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{count_params, parse_upsample, upsample_name, FusionStrategy, ModelConfig, ParamBreakdown, Variant, IMAGE_CHANNELS};

/// Named parameter tensors in deterministic module order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl<T: Real> ParamStore<T> {
    fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }

    fn push(&mut self, name: String, t: Tensor<T>) -> ParamId {
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Attn {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: Option<ParamId>,
    channels: usize,
    d: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    encoder: Vec<Conv>,
    attention: Vec<Option<Attn>>,
    fusion: Option<Conv>,
    decoder: Vec<Conv>,
    head: Conv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

/// Parameters of a model recorded on a tape, aligned with its [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Per-stage outputs of the siamese encoder.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub features_1: Vec<Var>,
    pub features_2: Vec<Var>,
    /// Attention intermediates for each stage that carries a block.
    pub activations: Vec<Option<AttentionActivations>>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[2, H, W]`
    pub logits: Var,
    /// Decoder input.
    pub fused: Var,
    pub encoded: Encoded,
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    rng: &'a mut Rng,
}

impl<T: Real> Builder<'_, T> {
    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize) -> Conv {
        let fan_in = c_in * k * k;
        let w = Tensor::init_fan_in(&[c_out, c_in, k, k], fan_in, self.rng);
        let b = Tensor::init_fan_in(&[c_out], fan_in, self.rng);
        Conv {
            weight: self.store.push(format!("{name}.weight"), w),
            bias: self.store.push(format!("{name}.bias"), b),
            stride,
            pad: k / 2,
        }
    }

    fn attention(&mut self, name: &str, channels: usize, d: usize, cfg: &ModelConfig) -> Result<Attn> {
        let p = AttentionParams::<T>::new(channels, d, cfg.level, self.rng)?;
        Ok(Attn {
            wq: self.store.push(format!("{name}.wq"), p.wq),
            wk: self.store.push(format!("{name}.wk"), p.wk),
            wv: self.store.push(format!("{name}.wv"), p.wv),
            wo: p.wo.map(|wo| self.store.push(format!("{name}.wo"), wo)),
            channels,
            d,
        })
    }
}

fn build_layout<T: Real>(config: &ModelConfig, rng: &mut Rng) -> Result<(ParamStore<T>, Layout)> {
    config.validate()?;
    let mut b = Builder { store: ParamStore::new(), rng };
    let n = config.channels.len();

    let mut c_in = config.encoder_in_channels();
    let mut encoder = Vec::with_capacity(n);
    for (s, &c_out) in config.channels.iter().enumerate() {
        encoder.push(b.conv(&format!("encoder.{s}"), c_in, c_out, 3, 2));
        c_in = c_out;
    }

    let mut attention = Vec::with_capacity(n);
    for (s, &c) in config.channels.iter().enumerate() {
        attention.push(if config.attention_enabled(s) {
            Some(b.attention(&format!("attention.{s}"), c, config.projection_width(c), config)?)
        } else {
            None
        });
    }

    let deepest = config.channels[n - 1];
    let fusion = (config.variant != Variant::EarlyFusion && config.fusion == FusionStrategy::StackPointwise)
        .then(|| b.conv("fusion", 2 * deepest, deepest, 1, 1));

    let mut decoder = Vec::with_capacity(n);
    let mut c = deepest;
    for level in (0..n).rev() {
        let out = config.channels[level.saturating_sub(1)];
        decoder.push(b.conv(&format!("decoder.{}", n - 1 - level), c, out, 3, 1));
        c = out;
    }
    let head = b.conv("head", c, 2, 3, 1);

    Ok((b.store, Layout { encoder, attention, fusion, decoder, head }))
}

impl<T: Real> Model<T> {
    /// Builds a model with parameters drawn uniformly in `±sqrt(1/fan_in)`.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let (params, layout) = build_layout(&config, rng)?;
        Ok(Model { config, params, layout })
    }

    /// Rebuilds a model from stored parameter values in module order.
    pub fn from_params(config: ModelConfig, values: Vec<Tensor<T>>) -> Result<Self> {
        let mut model = Model::new(config, &mut Rng::new(0))?;
        if values.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                values.len()
            )));
        }
        for (slot, v) in model.params.tensors.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::Checkpoint(format!("shape {:?} vs {:?}", v.shape(), slot.shape())));
            }
            *slot = v;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: ParamStore {
                names: self.params.names.clone(),
                tensors: self.params.tensors.iter().map(Tensor::cast).collect(),
            },
            layout: self.layout.clone(),
        }
    }

    /// Attention parameters of stage `s`, if it carries a block.
    pub fn attention_params(&self, s: usize) -> Option<AttentionParams<T>> {
        let a = (*self.layout.attention.get(s)?)?;
        let t = |id: ParamId| self.params.tensors[id.0].clone();
        Some(AttentionParams {
            channels: a.channels,
            d: a.d,
            level: self.config.level,
            wq: t(a.wq),
            wk: t(a.wk),
            wv: t(a.wv),
            wo: a.wo.map(t),
        })
    }

    /// Zeroes every value and output projection, making each attention block
    /// the identity.
    pub fn zero_value_paths(&mut self) {
        for a in self.layout.attention.iter().flatten() {
            for id in [Some(a.wv), a.wo].into_iter().flatten() {
                self.params.tensors[id.0].data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    /// The vanilla siamese model sharing this model's encoder, fusion, and
    /// decoder parameters.
    pub fn to_vanilla(&self) -> Result<Model<T>> {
        let mut config = self.config.clone();
        if config.variant == Variant::EarlyFusion {
            return Err(Error::config("early-fusion models have no siamese counterpart"));
        }
        config.variant = Variant::VanillaSiamese;
        let values = self
            .params
            .names
            .iter()
            .zip(&self.params.tensors)
            .filter(|(n, _)| !n.starts_with("attention."))
            .map(|(_, t)| t.clone())
            .collect();
        Model::from_params(config, values)
    }

    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bound {
        let vars = self
            .params
            .tensors
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.requires_grad = requires_grad;
                t.grad = None;
                tape.leaf(t)
            })
            .collect();
        Bound { vars }
    }

    fn conv(&self, tape: &mut Tape<T>, b: &Bound, c: Conv, x: Var) -> Result<Var> {
        tape.conv2d(x, b.var(c.weight), Some(b.var(c.bias)), c.stride, c.pad)
    }

    fn attention_vars(&self, b: &Bound, a: Attn) -> AttentionVars {
        AttentionVars {
            channels: a.channels,
            d: a.d,
            level: self.config.level,
            wq: b.var(a.wq),
            wk: b.var(a.wk),
            wv: b.var(a.wv),
            wo: a.wo.map(|w| b.var(w)),
        }
    }

    fn check_inputs(&self, tape: &Tape<T>, x1: Var, x2: Var) -> Result<(usize, usize)> {
        let (s1, s2) = (tape.shape(x1), tape.shape(x2));
        if s1 != s2 {
            return Err(Error::shape("forward", format!("image shapes {s1:?} vs {s2:?}")));
        }
        let &[c, h, w] = s1 else {
            return Err(Error::shape("forward", format!("expected 3×H×W, got {s1:?}")));
        };
        if c != IMAGE_CHANNELS {
            return Err(Error::shape("forward", format!("expected {IMAGE_CHANNELS} image channels, got {c}")));
        }
        let factor = 1 << self.config.channels.len();
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::shape(
                "forward",
                format!("{h}x{w} is not divisible by {factor} for {} stages", self.config.channels.len()),
            ));
        }
        Ok((h, w))
    }

    /// Runs both images through the shared encoder, interleaving mutual
    /// attention after every enabled stage.
    pub fn siamese_encode(&self, tape: &mut Tape<T>, b: &Bound, x1: Var, x2: Var) -> Result<Encoded> {
        if self.config.variant == Variant::EarlyFusion {
            return Err(Error::config("early-fusion models have a single branch"));
        }
        self.check_inputs(tape, x1, x2)?;
        let (mut f1, mut f2) = (x1, x2);
        let mut enc = Encoded { features_1: vec![], features_2: vec![], activations: vec![] };
        for (stage, attn) in self.layout.encoder.iter().zip(&self.layout.attention) {
            let h1 = self.conv(tape, b, *stage, f1)?;
            f1 = tape.relu(h1)?;
            let h2 = self.conv(tape, b, *stage, f2)?;
            f2 = tape.relu(h2)?;
            let acts = match attn {
                Some(a) => {
                    let vars = self.attention_vars(b, *a);
                    let (y1, y2, acts) = attention::mutual_attention(tape, f1, f2, &vars)?;
                    (f1, f2) = (y1, y2);
                    Some(acts)
                }
                None => None,
            };
            enc.features_1.push(f1);
            enc.features_2.push(f2);
            enc.activations.push(acts);
        }
        Ok(enc)
    }

    pub fn fuse(&self, tape: &mut Tape<T>, b: &Bound, f1: Var, f2: Var) -> Result<Var> {
        let pointwise = self.layout.fusion.map(|c| (b.var(c.weight), b.var(c.bias)));
        fuse(tape, f1, f2, self.config.fusion, pointwise)
    }

    /// Nearest or bilinear 2x upsampling interleaved with `3×3` convolutions,
    /// then a `3×3` head producing `[2, H, W]` logits.
    pub fn decode(&self, tape: &mut Tape<T>, b: &Bound, fused: Var) -> Result<Var> {
        let mut x = fused;
        for layer in &self.layout.decoder {
            let up = tape.upsample2x(x, self.config.upsample)?;
            let h = self.conv(tape, b, *layer, up)?;
            x = tape.relu(h)?;
        }
        self.conv(tape, b, self.layout.head, x)
    }

    pub fn forward(&self, tape: &mut Tape<T>, b: &Bound, x1: Var, x2: Var) -> Result<ForwardOutput> {
        match self.config.variant {
            Variant::EarlyFusion => {
                self.check_inputs(tape, x1, x2)?;
                let mut x = tape.concat(x1, x2)?;
                let mut features = Vec::new();
                for stage in &self.layout.encoder {
                    let h = self.conv(tape, b, *stage, x)?;
                    x = tape.relu(h)?;
                    features.push(x);
                }
                let logits = self.decode(tape, b, x)?;
                let n = features.len();
                Ok(ForwardOutput {
                    logits,
                    fused: x,
                    encoded: Encoded { features_1: features, features_2: vec![], activations: vec![None; n] },
                })
            }
            _ => {
                let encoded = self.siamese_encode(tape, b, x1, x2)?;
                let f1 = *encoded.features_1.last().unwrap();
                let f2 = *encoded.features_2.last().unwrap();
                let fused = self.fuse(tape, b, f1, f2)?;
                let logits = self.decode(tape, b, fused)?;
                Ok(ForwardOutput { logits, fused, encoded })
            }
        }
    }

    /// Logits for one image pair, without recording gradients.
    pub fn predict(&self, image_a: &Tensor<T>, image_b: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let x1 = tape.constant(image_a.clone());
        let x2 = tape.constant(image_b.clone());
        let out = self.forward(&mut tape, &b, x1, x2)?;
        Ok(tape.value(out.logits).clone())
    }
}

/// Combines two branch maps into one `C×H×W` map. `pointwise` carries the
/// `1×1` convolution (weight, bias) used by [`FusionStrategy::StackPointwise`].
pub fn fuse<T: Real>(
    tape: &mut Tape<T>,
    f1: Var,
    f2: Var,
    strategy: FusionStrategy,
    pointwise: Option<(Var, Var)>,
) -> Result<Var> {
    if tape.shape(f1) != tape.shape(f2) {
        return Err(Error::shape("fuse", format!("{:?} vs {:?}", tape.shape(f1), tape.shape(f2))));
    }
    match strategy {
        FusionStrategy::Add => tape.add(f1, f2),
        FusionStrategy::Diff => tape.sub(f1, f2),
        FusionStrategy::StackPointwise => {
            let (w, b) = pointwise.ok_or_else(|| Error::config("stack fusion needs a pointwise convolution"))?;
            let stacked = tape.concat(f1, f2)?;
            tape.conv2d(stacked, w, Some(b), 1, 0)
        }
    }
}

/// Class 1 wherever the change logit strictly exceeds the non-change logit.
pub fn argmax_change<T: Real>(logits: &Tensor<T>) -> Vec<u8> {
    let plane = logits.numel() / 2;
    let (bg, fg) = logits.data().split_at(plane);
    bg.iter().zip(fg).map(|(b, f)| u8::from(f > b)).collect()
}
