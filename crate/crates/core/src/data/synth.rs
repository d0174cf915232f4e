//! Synthetic co-registered change pairs.
//!
//! A scene is a smooth background plus persistent shapes that appear in both
//! images. Change shapes appear in only one of the two images (added in B or
//! removed from A) and are drawn last, so the mask is exactly the union of
//! their footprints. Image B additionally receives a global per-channel gain
//! and offset (illumination or season) and independent pixel noise; neither
//! is labelled as change.

use super::{ChangeMask, ImagePair, Sample};
use crate::error::{Error, Result};
use crate::rng::{Rng, DATA_STREAM};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub persistent_shapes: usize,
    pub change_shapes: usize,
    /// Photometric jitter amplitude in `[0, 1)`.
    pub jitter: f64,
    /// Per-pixel noise amplitude in `[0, 1)`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { size: 64, persistent_shapes: 4, change_shapes: 2, jitter: 0.1, noise: 0.02, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::config("synthetic image size must be positive"));
        }
        for (name, v) in [("jitter", self.jitter), ("noise", self.noise)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} amplitude {v} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    /// Top-left corner and extent; may extend past the canvas.
    Rect { y: i64, x: i64, h: i64, w: i64 },
    /// Centre and radius; covers pixels whose centre lies within the radius.
    Disc { cy: i64, cx: i64, r: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub color: [f32; 3],
}

impl Shape {
    pub fn covers(&self, y: usize, x: usize) -> bool {
        let (y, x) = (y as i64, x as i64);
        match self.kind {
            ShapeKind::Rect { y: y0, x: x0, h, w } => y >= y0 && y < y0 + h && x >= x0 && x < x0 + w,
            ShapeKind::Disc { cy, cx, r } => (y - cy).pow(2) + (x - cx).pow(2) <= r * r,
        }
    }

    fn random(size: usize, color: [f32; 3], rng: &mut Rng) -> Shape {
        let s = size as i64;
        let kind = if rng.bernoulli(0.5) {
            let lo = (s / 8).max(1);
            let hi = (s / 3).max(lo + 1);
            let h = lo + rng.below((hi - lo) as usize) as i64;
            let w = lo + rng.below((hi - lo) as usize) as i64;
            let y = rng.below(size) as i64 - h / 4;
            let x = rng.below(size) as i64 - w / 4;
            ShapeKind::Rect { y, x, h, w }
        } else {
            let lo = (s / 16).max(1);
            let hi = (s / 6).max(lo + 1);
            let r = lo + rng.below((hi - lo) as usize) as i64;
            ShapeKind::Disc { cy: rng.below(size) as i64, cx: rng.below(size) as i64, r }
        };
        Shape { kind, color }
    }
}

/// Background and persistent shapes use mid-tones; change shapes use a
/// saturated palette, so every labelled change differs from whatever it
/// covers by more than the photometric jitter.
fn mid_tone(rng: &mut Rng) -> [f32; 3] {
    [0, 1, 2].map(|_| rng.uniform_range(0.25, 0.75) as f32)
}

fn saturated(rng: &mut Rng) -> [f32; 3] {
    [0, 1, 2].map(|_| {
        let v = rng.uniform_range(0.0, 0.1) as f32;
        if rng.bernoulli(0.5) {
            v
        } else {
            1.0 - v
        }
    })
}

/// Explicit scene description; rendering it is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub size: usize,
    /// Background colour at the top-left and bottom-right corners.
    pub background: [[f32; 3]; 2],
    pub persistent: Vec<Shape>,
    /// Shapes present only in image B.
    pub added: Vec<Shape>,
    /// Shapes present only in image A.
    pub removed: Vec<Shape>,
    /// Per-channel gain and offset applied to image B.
    pub gain: [f32; 3],
    pub offset: [f32; 3],
    pub noise: f64,
    pub noise_seed: u64,
}

impl Scene {
    pub fn random(cfg: &SynthConfig, rng: &mut Rng) -> Scene {
        let background = [mid_tone(rng), mid_tone(rng)];
        let persistent = (0..cfg.persistent_shapes)
            .map(|_| {
                let c = mid_tone(rng);
                Shape::random(cfg.size, c, rng)
            })
            .collect();
        let (mut added, mut removed) = (Vec::new(), Vec::new());
        for _ in 0..cfg.change_shapes {
            let c = saturated(rng);
            let s = Shape::random(cfg.size, c, rng);
            if rng.bernoulli(0.5) {
                added.push(s);
            } else {
                removed.push(s);
            }
        }
        let j = cfg.jitter;
        let gain = [0, 1, 2].map(|_| rng.uniform_range(1.0 - j, 1.0 + j) as f32);
        let offset = [0, 1, 2].map(|_| rng.uniform_range(-j / 2.0, j / 2.0) as f32);
        Scene {
            size: cfg.size,
            background,
            persistent,
            added,
            removed,
            gain,
            offset,
            noise: cfg.noise,
            noise_seed: rng.next_u64(),
        }
    }

    fn paint(&self, shapes: &[&Shape]) -> Tensor<f32> {
        let n = self.size;
        let plane = n * n;
        let mut img = vec![0.0f32; 3 * plane];
        let denom = (2 * n.max(2) - 2) as f32;
        for y in 0..n {
            for x in 0..n {
                let t = (y + x) as f32 / denom;
                let mut rgb = [0, 1, 2].map(|c| self.background[0][c] * (1.0 - t) + self.background[1][c] * t);
                for s in shapes {
                    if s.covers(y, x) {
                        rgb = s.color;
                    }
                }
                for c in 0..3 {
                    img[c * plane + y * n + x] = rgb[c];
                }
            }
        }
        Tensor::new(&[3, n, n], img).expect("extent matches")
    }

    pub fn render(&self, name: impl Into<String>) -> Result<Sample> {
        let n = self.size;
        let a_shapes: Vec<&Shape> = self.persistent.iter().chain(&self.removed).collect();
        let b_shapes: Vec<&Shape> = self.persistent.iter().chain(&self.added).collect();
        let image_a = self.paint(&a_shapes);
        let mut image_b = self.paint(&b_shapes);

        let plane = n * n;
        let mut noise = Rng::new(self.noise_seed);
        for (i, v) in image_b.data_mut().iter_mut().enumerate() {
            let c = i / plane;
            let jittered = *v * self.gain[c] + self.offset[c];
            let e = noise.uniform_range(-self.noise, self.noise) as f32;
            *v = (jittered + e).clamp(0.0, 1.0);
        }

        let mut mask = ChangeMask::zeros(n, n);
        for y in 0..n {
            for x in 0..n {
                let changed = self.added.iter().chain(&self.removed).any(|s| s.covers(y, x));
                mask.set(y, x, changed);
            }
        }
        Sample::new(ImagePair::new(image_a, image_b, name)?, mask)
    }
}

/// One random pair drawn from `rng`.
pub fn generate_pair(cfg: &SynthConfig, rng: &mut Rng) -> Result<Sample> {
    cfg.validate()?;
    Scene::random(cfg, rng).render("pair")
}

/// `count` pairs from `cfg.seed`, named `0000`, `0001`, ...
pub fn generate_dataset(cfg: &SynthConfig, count: usize) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed).split(DATA_STREAM);
    (0..count)
        .map(|i| Scene::random(cfg, &mut rng).render(format!("{i:04}")))
        .collect()
}
