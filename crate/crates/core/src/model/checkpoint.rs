//! Binary checkpoint format.
//!
//! ```text
//! "MASN1"
//! u32            number of config entries
//! (u32, u64)*    tagged config integers
//! u64            number of parameter scalars
//! f32*           parameter values in module order
//! ```
//!
//! All integers and floats are little-endian. Stage channels and attention
//! flags repeat their tag once per stage, in stage order.

use std::io::{Read, Write};

use super::{FusionStrategy, Model, ModelConfig, Variant};
use crate::attention::AttentionLevel;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, UpsampleMode};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"MASN1";

const TAG_VARIANT: u32 = 1;
const TAG_STAGE_CHANNELS: u32 = 2;
const TAG_STAGE_ATTENTION: u32 = 3;
const TAG_LEVEL: u32 = 4;
const TAG_LOCAL_H: u32 = 5;
const TAG_LOCAL_W: u32 = 6;
const TAG_D: u32 = 7;
const TAG_FUSION: u32 = 8;
const TAG_UPSAMPLE: u32 = 9;

fn config_entries(cfg: &ModelConfig) -> Vec<(u32, u64)> {
    let mut e = vec![(
        TAG_VARIANT,
        match cfg.variant {
            Variant::VanillaSiamese => 0,
            Variant::MASNet => 1,
            Variant::EarlyFusion => 2,
        },
    )];
    e.extend(cfg.channels.iter().map(|&c| (TAG_STAGE_CHANNELS, c as u64)));
    e.extend(cfg.attention.iter().map(|&a| (TAG_STAGE_ATTENTION, a as u64)));
    let (level, h, w) = match cfg.level {
        AttentionLevel::Global => (0, 0, 0),
        AttentionLevel::Local { h, w } => (1, h, w),
        AttentionLevel::Individual => (2, 0, 0),
        AttentionLevel::IndividualLiteral => (3, 0, 0),
    };
    e.push((TAG_LEVEL, level));
    e.push((TAG_LOCAL_H, h as u64));
    e.push((TAG_LOCAL_W, w as u64));
    e.push((TAG_D, cfg.d.unwrap_or(0) as u64));
    e.push((
        TAG_FUSION,
        match cfg.fusion {
            FusionStrategy::StackPointwise => 0,
            FusionStrategy::Add => 1,
            FusionStrategy::Diff => 2,
        },
    ));
    e.push((
        TAG_UPSAMPLE,
        match cfg.upsample {
            UpsampleMode::Nearest => 0,
            UpsampleMode::Bilinear => 1,
        },
    ));
    e
}

fn config_from_entries(entries: &[(u32, u64)]) -> Result<ModelConfig> {
    let bad = |what: &str, v: u64| Error::Checkpoint(format!("invalid {what} value {v}"));
    let mut cfg = ModelConfig { channels: vec![], attention: vec![], ..ModelConfig::default() };
    let (mut level, mut h, mut w) = (None, 0, 0);
    for &(tag, v) in entries {
        match tag {
            TAG_VARIANT => {
                cfg.variant = match v {
                    0 => Variant::VanillaSiamese,
                    1 => Variant::MASNet,
                    2 => Variant::EarlyFusion,
                    _ => return Err(bad("variant", v)),
                }
            }
            TAG_STAGE_CHANNELS => cfg.channels.push(v as usize),
            TAG_STAGE_ATTENTION => cfg.attention.push(match v {
                0 => false,
                1 => true,
                _ => return Err(bad("attention flag", v)),
            }),
            TAG_LEVEL => level = Some(v),
            TAG_LOCAL_H => h = v as usize,
            TAG_LOCAL_W => w = v as usize,
            TAG_D => cfg.d = (v != 0).then_some(v as usize),
            TAG_FUSION => {
                cfg.fusion = match v {
                    0 => FusionStrategy::StackPointwise,
                    1 => FusionStrategy::Add,
                    2 => FusionStrategy::Diff,
                    _ => return Err(bad("fusion", v)),
                }
            }
            TAG_UPSAMPLE => {
                cfg.upsample = match v {
                    0 => UpsampleMode::Nearest,
                    1 => UpsampleMode::Bilinear,
                    _ => return Err(bad("upsample", v)),
                }
            }
            _ => return Err(Error::Checkpoint(format!("unknown config tag {tag}"))),
        }
    }
    cfg.level = match level {
        Some(0) => AttentionLevel::Global,
        Some(1) => AttentionLevel::Local { h, w },
        Some(2) => AttentionLevel::Individual,
        Some(3) => AttentionLevel::IndividualLiteral,
        Some(v) => return Err(bad("attention level", v)),
        None => return Err(Error::Checkpoint("missing attention level".into())),
    };
    cfg.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(cfg)
}

/// Serializes a model; parameters are stored as `f32`.
pub fn write_checkpoint<T: Real, W: Write>(model: &Model<T>, mut out: W) -> Result<()> {
    let entries = config_entries(model.config());
    let mut buf = Vec::with_capacity(64 + 4 * model.params().scalar_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (tag, v) in entries {
        buf.extend_from_slice(&tag.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.params().scalar_count() as u64).to_le_bytes());
    for t in model.params().tensors() {
        for &v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Model<f32>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let n = c.u32()? as usize;
    let entries = (0..n).map(|_| Ok((c.u32()?, c.u64()?))).collect::<Result<Vec<_>>>()?;
    let config = config_from_entries(&entries)?;

    let template = Model::<f32>::new(config.clone(), &mut crate::rng::Rng::new(0))?;
    let count = c.u64()? as usize;
    if count != template.params().scalar_count() {
        return Err(Error::Checkpoint(format!(
            "config needs {} parameters, file has {count}",
            template.params().scalar_count()
        )));
    }
    let mut values = Vec::with_capacity(template.params().len());
    for t in template.params().tensors() {
        let raw = c.take(4 * t.numel())?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        values.push(Tensor::new(t.shape(), data)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Model::from_params(config, values)
}
