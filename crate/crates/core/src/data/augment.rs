//! Geometric and pair-order augmentation. Every transform is a pixel remap
//! applied identically to both images and the mask.

use super::{ChangeMask, ImagePair, Sample};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    /// Scale factors are drawn log-uniformly from `[scale_min, scale_max]`.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Square crop side; `None` keeps the scaled extent.
    pub crop: Option<usize>,
    pub flip: bool,
    pub rotate: bool,
    pub switch: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy { scale_min: 0.5, scale_max: 2.0, crop: Some(64), flip: true, rotate: true, switch: true }
    }
}

impl AugmentPolicy {
    /// The identity policy.
    pub fn none() -> Self {
        AugmentPolicy { scale_min: 1.0, scale_max: 1.0, crop: None, flip: false, rotate: false, switch: false }
    }
}

/// Builds an `out_h × out_w` sample where output pixel `(y, x)` reads source
/// pixel `src(y, x)`, or zero when `src` returns `None`.
fn remap(s: &Sample, out_h: usize, out_w: usize, src: impl Fn(usize, usize) -> Option<(usize, usize)>) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    let plane = |t: &Tensor<f32>| {
        let d = t.data();
        let mut out = vec![0.0f32; 3 * out_h * out_w];
        for c in 0..3 {
            for y in 0..out_h {
                for x in 0..out_w {
                    if let Some((sy, sx)) = src(y, x) {
                        out[(c * out_h + y) * out_w + x] = d[(c * h + sy) * w + sx];
                    }
                }
            }
        }
        Tensor::new(&[3, out_h, out_w], out).expect("remap extent is positive")
    };
    let mut mask = ChangeMask::zeros(out_h, out_w);
    for y in 0..out_h {
        for x in 0..out_w {
            if let Some((sy, sx)) = src(y, x) {
                mask.set(y, x, s.mask.get(sy, sx) == 1);
            }
        }
    }
    let pair = ImagePair { image_a: plane(&s.pair.image_a), image_b: plane(&s.pair.image_b), name: s.pair.name.clone() };
    Sample { pair, mask }
}

pub fn flip_horizontal(s: &Sample) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    remap(s, h, w, |y, x| Some((y, w - 1 - x)))
}

pub fn flip_vertical(s: &Sample) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    remap(s, h, w, |y, x| Some((h - 1 - y, x)))
}

/// Rotates counter-clockwise by `quarter_turns · 90°`.
pub fn rotate90(s: &Sample, quarter_turns: usize) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    match quarter_turns % 4 {
        0 => s.clone(),
        1 => remap(s, w, h, |y, x| Some((x, w - 1 - y))),
        2 => remap(s, h, w, |y, x| Some((h - 1 - y, w - 1 - x))),
        _ => remap(s, w, h, |y, x| Some((h - 1 - x, y))),
    }
}

/// Nearest-neighbour resize sampling pixel centres.
pub fn resize_nearest(s: &Sample, out_h: usize, out_w: usize) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    let pick = |i: usize, n: usize, on: usize| (((2 * i + 1) * n) / (2 * on)).min(n - 1);
    remap(s, out_h, out_w, |y, x| Some((pick(y, h, out_h), pick(x, w, out_w))))
}

/// Crops `size × size` starting at `(top, left)`; pixels outside the source
/// are zero in the images and non-change in the mask.
pub fn crop_or_pad(s: &Sample, top: usize, left: usize, size: usize) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    remap(s, size, size, |y, x| {
        let (sy, sx) = (top + y, left + x);
        (sy < h && sx < w).then_some((sy, sx))
    })
}

/// Applies one random draw of `policy`.
pub fn augment(s: &Sample, rng: &mut Rng, policy: &AugmentPolicy) -> Sample {
    let (h, w) = (s.pair.height(), s.pair.width());
    let mut out = if policy.scale_min != 1.0 || policy.scale_max != 1.0 {
        let scale = rng.uniform_range(policy.scale_min.ln(), policy.scale_max.ln()).exp();
        let extent = |n: usize| ((n as f64 * scale).round() as usize).max(1);
        resize_nearest(s, extent(h), extent(w))
    } else {
        s.clone()
    };
    if let Some(size) = policy.crop {
        let (h, w) = (out.pair.height(), out.pair.width());
        let top = if h > size { rng.below(h - size + 1) } else { 0 };
        let left = if w > size { rng.below(w - size + 1) } else { 0 };
        out = crop_or_pad(&out, top, left, size);
    }
    if policy.flip {
        if rng.bernoulli(0.5) {
            out = flip_horizontal(&out);
        }
        if rng.bernoulli(0.5) {
            out = flip_vertical(&out);
        }
    }
    if policy.rotate {
        out = rotate90(&out, rng.below(4));
    }
    if policy.switch && rng.bernoulli(0.5) {
        std::mem::swap(&mut out.pair.image_a, &mut out.pair.image_b);
    }
    out
}
