use std::fmt;
use std::str::FromStr;

use crate::attention::{attention_param_count, AttentionLevel};
use crate::error::{Error, Result};
use crate::tensor::UpsampleMode;

pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    VanillaSiamese,
    MASNet,
    EarlyFusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionStrategy {
    /// Channel concatenation followed by a `1×1` convolution back to `C`.
    StackPointwise,
    Add,
    Diff,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Output channels of each encoder stage.
    pub channels: Vec<usize>,
    /// Whether stage `s` carries a mutual-attention block (MASNet only).
    pub attention: Vec<bool>,
    pub level: AttentionLevel,
    /// Projection width; `None` uses each stage's channel count.
    pub d: Option<usize>,
    pub fusion: FusionStrategy,
    pub upsample: UpsampleMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::MASNet,
            channels: vec![8, 16],
            attention: vec![true, true],
            level: AttentionLevel::Individual,
            d: None,
            fusion: FusionStrategy::StackPointwise,
            upsample: UpsampleMode::Nearest,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(&self, variant: Variant) -> Self {
        ModelConfig { variant, ..self.clone() }
    }

    pub fn encoder_in_channels(&self) -> usize {
        match self.variant {
            Variant::EarlyFusion => 2 * IMAGE_CHANNELS,
            _ => IMAGE_CHANNELS,
        }
    }

    pub fn attention_enabled(&self, stage: usize) -> bool {
        self.variant == Variant::MASNet && self.attention.get(stage).copied().unwrap_or(false)
    }

    pub fn projection_width(&self, channels: usize) -> usize {
        self.d.unwrap_or(channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::config("at least one encoder stage is required"));
        }
        if self.attention.len() != self.channels.len() {
            return Err(Error::config(format!(
                "{} attention flags for {} stages",
                self.attention.len(),
                self.channels.len()
            )));
        }
        let mut c_in = self.encoder_in_channels();
        for &c in &self.channels {
            if c < c_in {
                return Err(Error::config(format!("stage narrows channels from {c_in} to {c}")));
            }
            c_in = c;
        }
        if self.d == Some(0) {
            return Err(Error::config("projection width d must be positive"));
        }
        if self.variant == Variant::MASNet && !self.attention.iter().any(|&a| a) {
            return Err(Error::config("a MASNet model needs at least one attention-enabled stage"));
        }
        if let AttentionLevel::Local { h, w } = self.level {
            if h == 0 || w == 0 {
                return Err(Error::config("local window extents must be positive"));
            }
        }
        Ok(())
    }
}

/// Exact parameter counts by module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBreakdown {
    pub encoder: usize,
    pub attention: usize,
    pub fusion: usize,
    pub decoder: usize,
    pub total: usize,
    pub attention_fraction: f64,
}

/// Closed-form parameter accounting of a configuration.
pub fn count_params(config: &ModelConfig) -> Result<ParamBreakdown> {
    config.validate()?;
    let conv = |c_in: usize, c_out: usize, k: usize| c_out * c_in * k * k + c_out;
    let n = config.channels.len();

    let mut encoder = 0;
    let mut c_in = config.encoder_in_channels();
    for &c in &config.channels {
        encoder += conv(c_in, c, 3);
        c_in = c;
    }

    let attention = config
        .channels
        .iter()
        .enumerate()
        .filter(|(s, _)| config.attention_enabled(*s))
        .map(|(_, &c)| attention_param_count(c, config.projection_width(c), config.level))
        .sum();

    let deepest = config.channels[n - 1];
    let fusion = match (config.variant, config.fusion) {
        (Variant::EarlyFusion, _) => 0,
        (_, FusionStrategy::StackPointwise) => conv(2 * deepest, deepest, 1),
        _ => 0,
    };

    let mut decoder = 0;
    let mut c = deepest;
    for level in (0..n).rev() {
        let out = config.channels[level.saturating_sub(1)];
        decoder += conv(c, out, 3);
        c = out;
    }
    decoder += conv(c, 2, 3);

    let total = encoder + attention + fusion + decoder;
    Ok(ParamBreakdown {
        encoder,
        attention,
        fusion,
        decoder,
        total,
        attention_fraction: attention as f64 / total as f64,
    })
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::VanillaSiamese => "vanilla",
            Variant::MASNet => "masnet",
            Variant::EarlyFusion => "early-fusion",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::VanillaSiamese),
            "masnet" => Ok(Variant::MASNet),
            "early-fusion" => Ok(Variant::EarlyFusion),
            _ => Err(Error::config(format!("unknown variant `{s}` (vanilla, masnet, early-fusion)"))),
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionStrategy::StackPointwise => "stack",
            FusionStrategy::Add => "add",
            FusionStrategy::Diff => "diff",
        })
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stack" => Ok(FusionStrategy::StackPointwise),
            "add" => Ok(FusionStrategy::Add),
            "diff" => Ok(FusionStrategy::Diff),
            _ => Err(Error::config(format!("unknown fusion `{s}` (stack, add, diff)"))),
        }
    }
}

impl fmt::Display for AttentionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionLevel::Global => f.write_str("global"),
            AttentionLevel::Local { h, w } => write!(f, "local:{h}x{w}"),
            AttentionLevel::Individual => f.write_str("individual"),
            AttentionLevel::IndividualLiteral => f.write_str("individual-literal"),
        }
    }
}

impl FromStr for AttentionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(AttentionLevel::Global),
            "individual" => Ok(AttentionLevel::Individual),
            "individual-literal" => Ok(AttentionLevel::IndividualLiteral),
            _ => {
                let window = s.strip_prefix("local:").ok_or_else(|| {
                    Error::config(format!(
                        "unknown attention level `{s}` (global, local:HxW, individual, individual-literal)"
                    ))
                })?;
                let (h, w) = window
                    .split_once('x')
                    .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
                    .ok_or_else(|| Error::config(format!("bad local window `{window}`, expected HxW")))?;
                Ok(AttentionLevel::Local { h, w })
            }
        }
    }
}

pub fn upsample_name(m: UpsampleMode) -> &'static str {
    match m {
        UpsampleMode::Nearest => "nearest",
        UpsampleMode::Bilinear => "bilinear",
    }
}

pub fn parse_upsample(s: &str) -> Result<UpsampleMode> {
    match s {
        "nearest" => Ok(UpsampleMode::Nearest),
        "bilinear" => Ok(UpsampleMode::Bilinear),
        _ => Err(Error::config(format!("unknown upsample mode `{s}` (nearest, bilinear)"))),
    }
}
