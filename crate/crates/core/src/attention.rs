//! Self-attention and mutual-attention between two co-registered feature maps.
//!
//! For maps `x1, x2` of shape `C×H×W` and shared projections `Wq, Wk, Wv`
//! (each `d×C`), mutual attention computes, per token group,
//!
//! ```text
//! y1 = x1 + softmax(q2·k1ᵀ / √d)·v1
//! y2 = x2 + softmax(q1·k2ᵀ / √d)·v2
//! ```
//!
//! with the softmax over the key axis. When `d ≠ C` an output projection `Wo`
//! (`C×d`) maps the weighted values back to `C` channels before the residual
//! add. Self-attention is the same computation with the query taken from the
//! map itself.
//!
//! Token groups depend on the [`AttentionLevel`]:
//!
//! - `Global`: one group of `H·W` pixel tokens of width `d`.
//! - `Local { h, w }`: one group per co-registered `h×w` window.
//! - `Individual`: one group per pixel whose projected `d`-vector is re-viewed
//!   as `d` tokens of width 1, so the softmax runs over channels and yields a
//!   channel-attention map conditioned on the other image.
//! - `IndividualLiteral`: one group per pixel holding a single token. The
//!   softmax over a singleton is identically 1, so the other image's query has
//!   no influence. Kept for comparison with `Individual`.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionLevel {
    Global,
    Local { h: usize, w: usize },
    Individual,
    IndividualLiteral,
}

impl AttentionLevel {
    pub fn validate(self, height: usize, width: usize) -> Result<()> {
        if let AttentionLevel::Local { h, w } = self {
            if h == 0 || w == 0 {
                return Err(Error::config(format!("local window {h}x{w} must be at least 1x1")));
            }
            if !height.is_multiple_of(h) || !width.is_multiple_of(w) {
                return Err(Error::config(format!(
                    "feature map {height}x{width} is not divisible by local window {h}x{w}"
                )));
            }
        }
        Ok(())
    }
}

/// How a `C×H×W` map is cut into token groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLayout {
    pub groups: usize,
    pub tokens: usize,
    pub width: usize,
    /// `index[i]` is the flat `C×H×W` offset feeding flat token position `i`.
    pub index: Vec<usize>,
}

impl TokenLayout {
    pub fn new(c: usize, h: usize, w: usize, level: AttentionLevel) -> Result<Self> {
        level.validate(h, w)?;
        let plane = h * w;
        let (groups, tokens, width, index) = match level {
            AttentionLevel::Global => {
                let index = (0..plane).flat_map(|p| (0..c).map(move |ch| ch * plane + p)).collect();
                (1, plane, c, index)
            }
            AttentionLevel::Local { h: wh, w: ww } => {
                let (gy, gx) = (h / wh, w / ww);
                let mut index = Vec::with_capacity(c * plane);
                for by in 0..gy {
                    for bx in 0..gx {
                        for dy in 0..wh {
                            for dx in 0..ww {
                                let p = (by * wh + dy) * w + bx * ww + dx;
                                index.extend((0..c).map(|ch| ch * plane + p));
                            }
                        }
                    }
                }
                (gy * gx, wh * ww, c, index)
            }
            AttentionLevel::Individual => {
                let index = (0..plane).flat_map(|p| (0..c).map(move |ch| ch * plane + p)).collect();
                (plane, c, 1, index)
            }
            AttentionLevel::IndividualLiteral => {
                let index = (0..plane).flat_map(|p| (0..c).map(move |ch| ch * plane + p)).collect();
                (plane, 1, c, index)
            }
        };
        Ok(TokenLayout { groups, tokens, width, index })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.groups, self.tokens, self.width]
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.index.len()];
        for (i, &src) in self.index.iter().enumerate() {
            inv[src] = i;
        }
        inv
    }
}

fn map_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::shape("attention", format!("expected C×H×W, got {s:?}"))),
    }
}

/// Cuts a `C×H×W` map into `[groups, tokens, width]`.
pub fn tokenize<T: Real>(x: &Tensor<T>, level: AttentionLevel) -> Result<Tensor<T>> {
    let (c, h, w) = map_dims(x.shape())?;
    let layout = TokenLayout::new(c, h, w, level)?;
    let data = layout.index.iter().map(|&i| x.data()[i]).collect();
    Tensor::new(&layout.shape(), data)
}

/// Inverse of [`tokenize`].
pub fn detokenize<T: Real>(
    tokens: &Tensor<T>,
    (c, h, w): (usize, usize, usize),
    level: AttentionLevel,
) -> Result<Tensor<T>> {
    let layout = TokenLayout::new(c, h, w, level)?;
    if tokens.shape() != layout.shape() {
        return Err(Error::shape("detokenize", format!("{:?} vs {:?}", tokens.shape(), layout.shape())));
    }
    let mut out = vec![T::zero(); tokens.numel()];
    for (i, &dst) in layout.index.iter().enumerate() {
        out[dst] = tokens.data()[i];
    }
    Tensor::new(&[c, h, w], out)
}

/// Exact parameter count of one attention block: `3·C·d`, plus `d·C` for the
/// output projection when `d ≠ C`. There are no bias terms.
pub fn attention_param_count(channels: usize, d: usize, _level: AttentionLevel) -> usize {
    3 * channels * d + if d != channels { d * channels } else { 0 }
}

/// Learnable projections shared by both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub channels: usize,
    pub d: usize,
    pub level: AttentionLevel,
    /// `d×C`
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    /// `C×d`, present iff `d ≠ C`.
    pub wo: Option<Tensor<T>>,
}

impl<T: Real> AttentionParams<T> {
    pub fn new(channels: usize, d: usize, level: AttentionLevel, rng: &mut Rng) -> Result<Self> {
        if channels == 0 || d == 0 {
            return Err(Error::config("attention channels and d must be positive"));
        }
        let wq = Tensor::init_fan_in(&[d, channels], channels, rng);
        let wk = Tensor::init_fan_in(&[d, channels], channels, rng);
        let wv = Tensor::init_fan_in(&[d, channels], channels, rng);
        let wo = (d != channels).then(|| Tensor::init_fan_in(&[channels, d], d, rng));
        Ok(AttentionParams { channels, d, level, wq, wk, wv, wo })
    }

    pub fn param_count(&self) -> usize {
        self.wq.numel() + self.wk.numel() + self.wv.numel() + self.wo.as_ref().map_or(0, |w| w.numel())
    }

    /// Zeroes `Wv` and `Wo`, turning the block into the identity map.
    pub fn zero_value_path(&mut self) {
        self.wv.data_mut().iter_mut().for_each(|v| *v = T::zero());
        if let Some(wo) = &mut self.wo {
            wo.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> AttentionVars {
        let mut leaf = |t: &Tensor<T>| {
            let mut t = t.clone();
            t.requires_grad = requires_grad;
            tape.leaf(t)
        };
        AttentionVars {
            channels: self.channels,
            d: self.d,
            level: self.level,
            wq: leaf(&self.wq),
            wk: leaf(&self.wk),
            wv: leaf(&self.wv),
            wo: self.wo.as_ref().map(leaf),
        }
    }
}

/// [`AttentionParams`] recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionVars {
    pub channels: usize,
    pub d: usize,
    pub level: AttentionLevel,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Option<Var>,
}

/// Intermediates of one mutual-attention call, retained for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionActivations {
    pub level: AttentionLevel,
    pub height: usize,
    pub width: usize,
    /// Tokenized projections, `[groups, tokens, width]`.
    pub q1: Var,
    pub q2: Var,
    pub k1: Var,
    pub k2: Var,
    pub v1: Var,
    pub v2: Var,
    /// Post-softmax weights `[groups, tokens, tokens]` reweighting branch 1 / 2.
    pub weight_map_1: Var,
    pub weight_map_2: Var,
    /// The term added to each input, `C×H×W`.
    pub weighted_1: Var,
    pub weighted_2: Var,
}

impl AttentionActivations {
    /// Reduces a branch's weight map to one value per pixel (`H·W`, row-major).
    ///
    /// Token levels report the mean weight each key pixel receives across the
    /// queries of its group. `Individual` reports the mean of the diagonal
    /// channel weights, i.e. how much each channel keeps of itself. The literal
    /// individual reading is constant.
    pub fn spatial_weight_map<T: Real>(&self, tape: &Tape<T>, branch: usize) -> Vec<f64> {
        let a = tape.value(if branch == 1 { self.weight_map_1 } else { self.weight_map_2 });
        let &[groups, n, _] = a.shape() else { unreachable!("weight maps are 3-D") };
        let data = a.data();
        let at = |g: usize, i: usize, j: usize| data[(g * n + i) * n + j].as_f64();
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane];
        match self.level {
            AttentionLevel::Individual => {
                for (p, o) in out.iter_mut().enumerate() {
                    *o = (0..n).map(|c| at(p, c, c)).sum::<f64>() / n as f64;
                }
            }
            AttentionLevel::IndividualLiteral => out.iter_mut().for_each(|o| *o = 1.0),
            level => {
                // Reuse the pixel order of a 1-channel tokenization.
                let layout = TokenLayout::new(1, self.height, self.width, level).expect("validated in forward");
                for g in 0..groups {
                    for j in 0..n {
                        let received = (0..n).map(|i| at(g, i, j)).sum::<f64>() / n as f64;
                        out[layout.index[g * n + j]] = received;
                    }
                }
            }
        }
        out
    }
}

/// Token-level projection `q = x·Wqᵀ` (likewise k, v) of both inputs with one
/// shared set of weights. Inputs are `[tokens, C]` or `[groups, tokens, C]`.
pub fn project_qkv<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    x2: Var,
    p: &AttentionVars,
) -> Result<[Var; 6]> {
    let mut proj = |x: Var, w: Var| -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let c = *shape.last().ok_or_else(|| Error::shape("project_qkv", "scalar input"))?;
        if c != p.channels {
            return Err(Error::shape("project_qkv", format!("token width {c}, expected {}", p.channels)));
        }
        let rows = shape.iter().product::<usize>() / c;
        let flat = tape.reshape(x, &[rows, c])?;
        let wt = tape.transpose(w)?;
        let y = tape.matmul(flat, wt)?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = p.d;
        tape.reshape(y, &out_shape)
    };
    Ok([
        proj(x1, p.wq)?,
        proj(x2, p.wq)?,
        proj(x1, p.wk)?,
        proj(x2, p.wk)?,
        proj(x1, p.wv)?,
        proj(x2, p.wv)?,
    ])
}

struct Projected {
    q: Var,
    k: Var,
    v: Var,
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    layout: TokenLayout,
    inverse: Vec<usize>,
}

fn geometry<T: Real>(tape: &Tape<T>, x: Var, p: &AttentionVars) -> Result<Geometry> {
    let (c, h, w) = map_dims(tape.shape(x))?;
    if c != p.channels {
        return Err(Error::shape("attention", format!("{c} channels, block expects {}", p.channels)));
    }
    let layout = TokenLayout::new(p.d, h, w, p.level)?;
    let inverse = layout.inverse();
    Ok(Geometry { c, h, w, layout, inverse })
}

/// Projects a map pointwise to `d` channels and tokenizes q, k, v.
fn project_map<T: Real>(tape: &mut Tape<T>, x: Var, p: &AttentionVars, g: &Geometry) -> Result<Projected> {
    let flat = tape.reshape(x, &[g.c, g.h * g.w])?;
    let shape = g.layout.shape();
    let mut one = |w: Var| -> Result<Var> {
        let y = tape.matmul(w, flat)?;
        tape.gather(y, g.layout.index.clone(), &shape)
    };
    Ok(Projected { q: one(p.wq)?, k: one(p.wk)?, v: one(p.wv)? })
}

/// `x + softmax(q_other·k_ownᵀ/√d)·v_own`, returning (output, weights, added term).
fn reweight<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    query: Var,
    own: &Projected,
    p: &AttentionVars,
    g: &Geometry,
) -> Result<(Var, Var, Var)> {
    let kt = tape.transpose(own.k)?;
    let scores = tape.matmul(query, kt)?;
    let scores = tape.scale(scores, 1.0 / (p.d as f64).sqrt())?;
    let weights = tape.softmax(scores, 2)?;
    let mixed = tape.matmul(weights, own.v)?;
    let plane = tape.gather(mixed, g.inverse.clone(), &[p.d, g.h * g.w])?;
    let plane = match p.wo {
        Some(wo) => tape.matmul(wo, plane)?,
        None => plane,
    };
    let term = tape.reshape(plane, &[g.c, g.h, g.w])?;
    let y = tape.add(x, term)?;
    Ok((y, weights, term))
}

/// Mutual attention between two `C×H×W` maps. Returns `(y1, y2, activations)`.
pub fn mutual_attention<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    x2: Var,
    p: &AttentionVars,
) -> Result<(Var, Var, AttentionActivations)> {
    if tape.shape(x1) != tape.shape(x2) {
        return Err(Error::shape(
            "mutual_attention",
            format!("{:?} vs {:?}", tape.shape(x1), tape.shape(x2)),
        ));
    }
    let g = geometry(tape, x1, p)?;
    let b1 = project_map(tape, x1, p, &g)?;
    let b2 = project_map(tape, x2, p, &g)?;
    let (y1, weight_map_1, weighted_1) = reweight(tape, x1, b2.q, &b1, p, &g)?;
    let (y2, weight_map_2, weighted_2) = reweight(tape, x2, b1.q, &b2, p, &g)?;
    let acts = AttentionActivations {
        level: p.level,
        height: g.h,
        width: g.w,
        q1: b1.q,
        q2: b2.q,
        k1: b1.k,
        k2: b2.k,
        v1: b1.v,
        v2: b2.v,
        weight_map_1,
        weight_map_2,
        weighted_1,
        weighted_2,
    };
    Ok((y1, y2, acts))
}

/// Self attention: `x + softmax(q·kᵀ/√d)·v` with everything drawn from `x`.
pub fn self_attention<T: Real>(tape: &mut Tape<T>, x: Var, p: &AttentionVars) -> Result<Var> {
    let g = geometry(tape, x, p)?;
    let own = project_map(tape, x, p, &g)?;
    let (y, _, _) = reweight(tape, x, own.q, &own, p, &g)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEVELS: [AttentionLevel; 4] = [
        AttentionLevel::Global,
        AttentionLevel::Local { h: 2, w: 2 },
        AttentionLevel::Individual,
        AttentionLevel::IndividualLiteral,
    ];

    fn rand_map(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        Tensor::uniform(&[c, h, w], -1.0, 1.0, &mut Rng::new(seed))
    }

    #[test]
    fn global_tokens_are_row_major_pixels() {
        let x = Tensor::<f64>::from_f64(&[3, 2, 2], &(0..12).map(f64::from).collect::<Vec<_>>()).unwrap();
        let t = tokenize(&x, AttentionLevel::Global).unwrap();
        assert_eq!(t.shape(), &[1, 4, 3]);
        // token p holds channels (p, 4 + p, 8 + p)
        assert_eq!(&t.data()[..6], &[0.0, 4.0, 8.0, 1.0, 5.0, 9.0]);
    }

    #[test]
    fn local_group_counts() {
        let x = rand_map(5, 4, 4, 1);
        let t = tokenize(&x, AttentionLevel::Local { h: 2, w: 2 }).unwrap();
        assert_eq!(t.shape(), &[4, 4, 5]);
        let t = tokenize(&x, AttentionLevel::Individual).unwrap();
        assert_eq!(t.shape(), &[16, 5, 1]);
        let t = tokenize(&x, AttentionLevel::IndividualLiteral).unwrap();
        assert_eq!(t.shape(), &[16, 1, 5]);
    }

    #[test]
    fn local_window_must_divide() {
        let x = rand_map(2, 4, 6, 1);
        assert!(matches!(tokenize(&x, AttentionLevel::Local { h: 3, w: 3 }), Err(Error::Config(_))));
        assert!(matches!(tokenize(&x, AttentionLevel::Local { h: 0, w: 2 }), Err(Error::Config(_))));
        assert!(tokenize(&x, AttentionLevel::Local { h: 2, w: 3 }).is_ok());
    }

    #[test]
    fn detokenize_inverts_every_level() {
        let x = rand_map(3, 4, 6, 2);
        for level in LEVELS.into_iter().chain([AttentionLevel::Local { h: 4, w: 3 }]) {
            let t = tokenize(&x, level).unwrap();
            assert!(detokenize(&t, (3, 4, 6), level).unwrap().bit_eq(&x), "{level:?}");
        }
    }

    fn params(c: usize, d: usize, level: AttentionLevel, seed: u64) -> AttentionParams<f64> {
        AttentionParams::new(c, d, level, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn projection_examples() {
        let mut tape = Tape::<f64>::new();
        let mut p = params(2, 2, AttentionLevel::Global, 0);
        p.wq = Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        p.wk = Tensor::from_f64(&[2, 2], &[2.0, 0.0, 0.0, 2.0]).unwrap();
        let vars = p.bind(&mut tape, false);
        let x1 = tape.constant(Tensor::from_f64(&[1, 2], &[1.0, 2.0]).unwrap());
        let [q1, _, k1, ..] = project_qkv(&mut tape, x1, x1, &vars).unwrap();
        assert_eq!(tape.value(q1).data(), &[1.0, 2.0]);
        assert_eq!(tape.value(k1).data(), &[2.0, 4.0]);

        p.zero_value_path();
        p.wq.data_mut().iter_mut().for_each(|v| *v = 0.0);
        p.wk.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let vars = p.bind(&mut tape, false);
        let out = project_qkv(&mut tape, x1, x1, &vars).unwrap();
        assert!(out.iter().all(|v| tape.value(*v).data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn identity_projection_passes_tokens_through() {
        let mut tape = Tape::<f64>::new();
        let mut p = params(3, 3, AttentionLevel::Global, 0);
        let eye = Tensor::from_f64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        p.wq = eye.clone();
        p.wk = eye.clone();
        p.wv = eye;
        let vars = p.bind(&mut tape, false);
        let x = tape.constant(Tensor::uniform(&[4, 3], -1.0, 1.0, &mut Rng::new(5)));
        for v in project_qkv(&mut tape, x, x, &vars).unwrap() {
            assert_eq!(tape.value(v).data(), tape.value(x).data());
        }
    }

    #[test]
    fn projection_rejects_wrong_width() {
        let mut tape = Tape::<f64>::new();
        let vars = params(3, 3, AttentionLevel::Global, 0).bind(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[4, 2]));
        assert!(project_qkv(&mut tape, x, x, &vars).is_err());
    }

    #[test]
    fn param_count_examples() {
        assert_eq!(attention_param_count(8, 8, AttentionLevel::Global), 192);
        assert_eq!(attention_param_count(8, 4, AttentionLevel::Individual), 128);
        assert_eq!(attention_param_count(1, 1, AttentionLevel::Global), 3);
        for (c, d) in [(8, 8), (8, 4), (3, 5)] {
            assert_eq!(params(c, d, AttentionLevel::Global, 0).param_count(), attention_param_count(c, d, AttentionLevel::Global));
        }
    }

    #[test]
    fn value_path_zero_gives_identity() {
        for level in LEVELS {
            for d in [4, 2] {
                let mut p = params(4, d, level, 3);
                p.zero_value_path();
                let mut tape = Tape::new();
                let vars = p.bind(&mut tape, false);
                let x1 = tape.constant(rand_map(4, 4, 4, 10));
                let x2 = tape.constant(rand_map(4, 4, 4, 11));
                let (y1, y2, _) = mutual_attention(&mut tape, x1, x2, &vars).unwrap();
                assert!(tape.value(y1).bit_eq(tape.value(x1)), "{level:?} d={d}");
                assert!(tape.value(y2).bit_eq(tape.value(x2)), "{level:?} d={d}");
            }
        }
    }

    #[test]
    fn swap_and_self_consistency() {
        for level in LEVELS {
            let p = params(3, 3, level, 4);
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape, false);
            let a = tape.constant(rand_map(3, 4, 4, 20));
            let b = tape.constant(rand_map(3, 4, 4, 21));
            let (y1, y2, _) = mutual_attention(&mut tape, a, b, &vars).unwrap();
            let (z1, z2, _) = mutual_attention(&mut tape, b, a, &vars).unwrap();
            assert!(tape.value(y1).bit_eq(tape.value(z2)));
            assert!(tape.value(y2).bit_eq(tape.value(z1)));

            let (s1, s2, _) = mutual_attention(&mut tape, a, a, &vars).unwrap();
            assert!(tape.value(s1).bit_eq(tape.value(s2)));
            let sa = self_attention(&mut tape, a, &vars).unwrap();
            assert!(tape.value(sa).bit_eq(tape.value(s1)), "{level:?}");
        }
    }

    #[test]
    fn literal_individual_ignores_the_other_image() {
        let p = params(3, 3, AttentionLevel::IndividualLiteral, 4);
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, false);
        let a = tape.constant(rand_map(3, 2, 2, 1));
        let b = tape.constant(rand_map(3, 2, 2, 2));
        let c = tape.constant(rand_map(3, 2, 2, 3));
        let (y_ab, _, _) = mutual_attention(&mut tape, a, b, &vars).unwrap();
        let (y_ac, _, _) = mutual_attention(&mut tape, a, c, &vars).unwrap();
        assert!(tape.value(y_ab).bit_eq(tape.value(y_ac)));
    }

    #[test]
    fn channel_token_individual_depends_on_the_other_image() {
        let p = params(3, 3, AttentionLevel::Individual, 4);
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, false);
        let a = tape.constant(rand_map(3, 2, 2, 1));
        let b = tape.constant(rand_map(3, 2, 2, 2));
        let c = tape.constant(rand_map(3, 2, 2, 3));
        let (y_ab, _, _) = mutual_attention(&mut tape, a, b, &vars).unwrap();
        let (y_ac, _, _) = mutual_attention(&mut tape, a, c, &vars).unwrap();
        assert!(tape.value(y_ab).max_abs_diff(tape.value(y_ac)) > 1e-6);
    }

    #[test]
    fn weight_rows_are_distributions() {
        for level in LEVELS {
            let p = params(4, 4, level, 8);
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape, false);
            let a = tape.constant(rand_map(4, 4, 4, 1).scale(5.0));
            let b = tape.constant(rand_map(4, 4, 4, 2).scale(5.0));
            let (_, _, acts) = mutual_attention(&mut tape, a, b, &vars).unwrap();
            for wm in [acts.weight_map_1, acts.weight_map_2] {
                let t = tape.value(wm);
                let n = *t.shape().last().unwrap();
                for row in t.data().chunks(n) {
                    let s: f64 = row.iter().sum();
                    assert!((s - 1.0).abs() < 1e-6);
                    assert!(row.iter().all(|&v| v > 0.0));
                }
            }
        }
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let p = params(3, 3, AttentionLevel::Global, 0);
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, false);
        let a = tape.constant(rand_map(3, 2, 2, 1));
        let b = tape.constant(rand_map(3, 2, 4, 2));
        assert!(mutual_attention(&mut tape, a, b, &vars).is_err());
        let wrong_c = tape.constant(rand_map(2, 2, 2, 2));
        assert!(mutual_attention(&mut tape, wrong_c, wrong_c, &vars).is_err());
    }
}
