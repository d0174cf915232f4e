#![allow(dead_code)]

use masnet::attention::AttentionLevel;
use masnet::model::{FusionStrategy, ModelConfig, Variant};
use masnet::tensor::UpsampleMode;
use masnet::{Rng, Tape, Tensor, Var};

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// `Σ wᵢ·vᵢ` with fixed random weights, so no coordinate of the gradient is
/// structurally zero.
pub fn probe_sum(tape: &mut Tape<f64>, v: Var, seed: u64) -> masnet::Result<Var> {
    let shape = tape.shape(v).to_vec();
    let w = tape.constant(Tensor::uniform(&shape, 0.5, 1.5, &mut Rng::new(seed ^ 0xABCD)));
    let p = tape.mul(v, w)?;
    tape.sum(p)
}

/// Every level that fits an `h×w` map, with all divisor windows for `Local`.
pub fn levels_for(h: usize, w: usize) -> Vec<AttentionLevel> {
    let mut out = vec![AttentionLevel::Global, AttentionLevel::Individual, AttentionLevel::IndividualLiteral];
    for wh in (1..=h).filter(|&d| h.is_multiple_of(d)) {
        for ww in (1..=w).filter(|&d| w.is_multiple_of(d)) {
            out.push(AttentionLevel::Local { h: wh, w: ww });
        }
    }
    out
}

/// Plain-loop mutual attention on row-major `C×H×W` buffers.
///
/// Projections are `d×C` matrices; `wo` is `C×d`. Each query pixel (or query
/// channel, for the channel-token reading) attends to the keys it may see:
/// every pixel (global), the pixels of its own window (local), the `d`
/// projected channels of its own pixel (individual), or only itself
/// (literal individual).
#[allow(clippy::too_many_arguments)]
pub fn naive_mutual(
    x1: &[f64],
    x2: &[f64],
    (c, h, w): (usize, usize, usize),
    d: usize,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    wo: Option<&[f64]>,
    level: AttentionLevel,
) -> (Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let project = |m: &[f64], x: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d * hw];
        for o in 0..d {
            for p in 0..hw {
                let mut s = 0.0;
                for i in 0..c {
                    s += m[o * c + i] * x[i * hw + p];
                }
                out[o * hw + p] = s;
            }
        }
        out
    };
    let (q1, k1, v1) = (project(wq, x1), project(wk, x1), project(wv, x1));
    let (q2, k2, v2) = (project(wq, x2), project(wk, x2), project(wv, x2));
    let scale = 1.0 / (d as f64).sqrt();

    let same_group = |p: usize, r: usize| -> bool {
        match level {
            AttentionLevel::Global => true,
            AttentionLevel::Local { h: wh, w: ww } => {
                (p / w) / wh == (r / w) / wh && (p % w) / ww == (r % w) / ww
            }
            _ => unreachable!(),
        }
    };
    let softmax = |s: &mut Vec<f64>| {
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in s.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in s.iter_mut() {
            *v /= z;
        }
    };

    let branch = |x: &[f64], q: &[f64], k: &[f64], v: &[f64]| -> Vec<f64> {
        let mut mixed = vec![0.0; d * hw];
        match level {
            AttentionLevel::Global | AttentionLevel::Local { .. } => {
                for p in 0..hw {
                    let keys: Vec<usize> = (0..hw).filter(|&r| same_group(p, r)).collect();
                    let mut s: Vec<f64> = keys
                        .iter()
                        .map(|&r| (0..d).map(|o| q[o * hw + p] * k[o * hw + r]).sum::<f64>() * scale)
                        .collect();
                    softmax(&mut s);
                    for o in 0..d {
                        mixed[o * hw + p] = keys.iter().zip(&s).map(|(&r, a)| a * v[o * hw + r]).sum();
                    }
                }
            }
            AttentionLevel::Individual => {
                for p in 0..hw {
                    for a in 0..d {
                        let mut s: Vec<f64> = (0..d).map(|b| q[a * hw + p] * k[b * hw + p] * scale).collect();
                        softmax(&mut s);
                        mixed[a * hw + p] = (0..d).map(|b| s[b] * v[b * hw + p]).sum();
                    }
                }
            }
            AttentionLevel::IndividualLiteral => mixed.copy_from_slice(v),
        }
        let term = match wo {
            Some(wo) => {
                let mut t = vec![0.0; c * hw];
                for i in 0..c {
                    for p in 0..hw {
                        t[i * hw + p] = (0..d).map(|o| wo[i * d + o] * mixed[o * hw + p]).sum();
                    }
                }
                t
            }
            None => mixed,
        };
        x.iter().zip(&term).map(|(a, b)| a + b).collect()
    };
    (branch(x1, &q2, &k1, &v1), branch(x2, &q1, &k2, &v2))
}

/// A random valid configuration for the siamese variants.
pub fn random_config(rng: &mut Rng) -> ModelConfig {
    let stages = 1 + rng.below(3);
    let mut width = 3 + rng.below(4);
    let mut channels = Vec::new();
    for _ in 0..stages {
        width += rng.below(5);
        channels.push(width);
    }
    let mut attention: Vec<bool> = (0..stages).map(|_| rng.bernoulli(0.6)).collect();
    if !attention.contains(&true) {
        attention[rng.below(stages)] = true;
    }
    let level = match rng.below(3) {
        0 => AttentionLevel::Global,
        1 => AttentionLevel::Local { h: 1, w: 1 },
        _ => AttentionLevel::Individual,
    };
    ModelConfig {
        variant: Variant::MASNet,
        channels,
        attention,
        level,
        d: if rng.bernoulli(0.5) { None } else { Some(1 + rng.below(8)) },
        fusion: [FusionStrategy::StackPointwise, FusionStrategy::Add, FusionStrategy::Diff][rng.below(3)],
        upsample: if rng.bernoulli(0.5) { UpsampleMode::Nearest } else { UpsampleMode::Bilinear },
    }
}

pub struct GradCase {
    pub name: String,
    pub seeds: usize,
    pub worst: f64,
}

fn attention_vars(c: usize, d: usize, level: AttentionLevel, v: &[Var]) -> masnet::attention::AttentionVars {
    masnet::attention::AttentionVars { channels: c, d, level, wq: v[0], wk: v[1], wv: v[2], wo: v.get(3).copied() }
}

/// Finite-difference checks of every differentiable primitive and of both
/// attention blocks at every level, `seeds` random instances each. Returns
/// the worst relative error per case.
pub fn gradient_suite(seeds: u64) -> masnet::Result<Vec<GradCase>> {
    use masnet::tensor::{grad_check_many, UpsampleMode};
    let mut cases = Vec::new();
    let mut run = |name: &str, f: &dyn Fn(u64) -> masnet::Result<f64>| -> masnet::Result<()> {
        let mut worst = 0.0f64;
        for s in 0..seeds {
            worst = worst.max(f(s)?);
        }
        cases.push(GradCase { name: name.to_string(), seeds: seeds as usize, worst });
        Ok(())
    };
    let u = |shape: &[usize], rng: &mut Rng| Tensor::<f64>::uniform(shape, -1.0, 1.0, rng);

    run("matmul", &|s| {
        let mut r = Rng::new(s);
        let (m, k, n) = (1 + r.below(4), 1 + r.below(4), 1 + r.below(4));
        let ins = [u(&[m, k], &mut r), u(&[k, n], &mut r)];
        Ok(grad_check_many(|t, v| { let y = t.matmul(v[0], v[1])?; probe_sum(t, y, s) }, &ins, EPS, TOL)?.max_rel_err)
    })?;
    run("batched matmul", &|s| {
        let mut r = Rng::new(s);
        let ins = [u(&[3, 2, 4], &mut r), u(&[3, 4, 2], &mut r)];
        Ok(grad_check_many(|t, v| { let y = t.matmul(v[0], v[1])?; probe_sum(t, y, s) }, &ins, EPS, TOL)?.max_rel_err)
    })?;
    run("softmax", &|s| {
        let mut r = Rng::new(s);
        let axis = r.below(3);
        let ins = [Tensor::<f64>::uniform(&[2, 3, 4], -3.0, 3.0, &mut r)];
        Ok(grad_check_many(|t, v| { let y = t.softmax(v[0], axis)?; probe_sum(t, y, s) }, &ins, EPS, TOL)?.max_rel_err)
    })?;
    run("conv2d", &|s| {
        let mut r = Rng::new(s);
        let (stride, pad) = (1 + r.below(2), r.below(2));
        let kk = [1, 3][r.below(2)];
        let ins = [u(&[2, 5, 5], &mut r), u(&[3, 2, kk, kk], &mut r), u(&[3], &mut r)];
        Ok(grad_check_many(
            |t, v| { let y = t.conv2d(v[0], v[1], Some(v[2]), stride, pad)?; probe_sum(t, y, s) },
            &ins, EPS, TOL,
        )?.max_rel_err)
    })?;
    run("elementwise", &|s| {
        let mut r = Rng::new(s);
        // keep relu inputs away from the kink
        let mut a = u(&[3, 4], &mut r);
        a.data_mut().iter_mut().for_each(|v| if v.abs() < 0.05 { *v += 0.1 });
        let ins = [a, u(&[3, 4], &mut r), u(&[], &mut r)];
        Ok(grad_check_many(
            |t, v| {
                let p = t.mul(v[0], v[1])?;
                let q = t.sub(p, v[2])?;
                let q = t.relu(q)?;
                let q = t.add(q, v[0])?;
                let q = t.scale(q, 1.7)?;
                let q = t.relu(q)?;
                probe_sum(t, q, s)
            },
            &ins, EPS, TOL,
        )?.max_rel_err)
    })?;
    run("upsample", &|s| {
        let mut r = Rng::new(s);
        let mode = if s % 2 == 0 { UpsampleMode::Nearest } else { UpsampleMode::Bilinear };
        let ins = [u(&[2, 3, 2], &mut r)];
        Ok(grad_check_many(|t, v| { let y = t.upsample2x(v[0], mode)?; probe_sum(t, y, s) }, &ins, EPS, TOL)?.max_rel_err)
    })?;
    run("cross-entropy", &|s| {
        let mut r = Rng::new(s);
        let targets: Vec<usize> = (0..12).map(|_| r.below(2)).collect();
        let ins = [Tensor::<f64>::uniform(&[2, 3, 4], -2.0, 2.0, &mut r)];
        Ok(grad_check_many(|t, v| { let p = t.softmax(v[0], 0)?; let l = t.relu(p)?; t.cross_entropy(l, &targets) }, &ins, EPS, TOL)?
            .max_rel_err
            .max(grad_check_many(|t, v| t.cross_entropy(v[0], &targets), &ins, EPS, TOL)?.max_rel_err))
    })?;

    for (name, level) in [
        ("global", AttentionLevel::Global),
        ("local", AttentionLevel::Local { h: 2, w: 1 }),
        ("individual", AttentionLevel::Individual),
        ("individual-literal", AttentionLevel::IndividualLiteral),
    ] {
        for mutual in [false, true] {
            let label = format!("{} attention ({name})", if mutual { "mutual" } else { "self" });
            run(&label, &|s| {
                let mut r = Rng::new(s);
                let (c, h, w) = (2, 2, 3);
                // alternate d = C and d ≠ C (the latter adds an output projection)
                let d = if s % 2 == 0 { c } else { 3 };
                let mut ins = vec![u(&[c, h, w], &mut r), u(&[c, h, w], &mut r)];
                for _ in 0..3 {
                    ins.push(u(&[d, c], &mut r));
                }
                if d != c {
                    ins.push(u(&[c, d], &mut r));
                }
                Ok(grad_check_many(
                    |t, v| {
                        let p = attention_vars(c, d, level, &v[2..]);
                        if mutual {
                            let (y1, y2, _) = masnet::attention::mutual_attention(t, v[0], v[1], &p)?;
                            let a = probe_sum(t, y1, s)?;
                            let b = probe_sum(t, y2, s + 1)?;
                            t.add(a, b)
                        } else {
                            let y = masnet::attention::self_attention(t, v[0], &p)?;
                            probe_sum(t, y, s)
                        }
                    },
                    &ins, EPS, TOL,
                )?.max_rel_err)
            })?;
        }
    }
    Ok(cases)
}
