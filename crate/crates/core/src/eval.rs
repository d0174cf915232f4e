//! Change-class metrics, dataset evaluation, cross-validation, seed-repeated
//! variant comparison, and attention-map export.

use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use crate::data::netpbm::write_gray;
use crate::data::{kfold_split, ChangeMask, ImagePair, Sample};
use crate::error::{Error, Result};
use crate::model::{argmax_change, Model, ModelConfig, Variant};
use crate::tensor::{Real, Tape, Tensor};
use crate::training::{train, TrainConfig};

/// Pixel tallies for the change class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Tallies a binary prediction (`H·W`, row-major, 1 = change) against truth.
pub fn confusion(pred: &[u8], truth: &ChangeMask) -> Result<ConfusionCounts> {
    if pred.len() != truth.data().len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predicted pixels vs {}x{} mask", pred.len(), truth.height(), truth.width()),
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth.data()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `TP / (TP + FN + FP)`, or 0 when nothing is predicted or labelled change.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let den = c.tp + c.fn_ + c.fp;
    if den == 0 {
        0.0
    } else {
        c.tp as f64 / den as f64
    }
}

/// `2TP / (2TP + FN + FP)`, or 0 on a zero denominator.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let den = 2 * c.tp + c.fn_ + c.fp;
    if den == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub iou: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub per_image: Vec<(String, ConfusionCounts)>,
}

impl MetricReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        MetricReport { iou: iou(&counts), f1: f1(&counts), counts, per_image: Vec::new() }
    }

    /// `key = value` lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let c = &self.counts;
        let mut s = format!(
            "iou = {}\nf1 = {}\ntp = {}\nfp = {}\nfn = {}\ntn = {}\nimages = {}\n",
            self.iou,
            self.f1,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            self.per_image.len()
        );
        for (name, c) in &self.per_image {
            let _ = writeln!(s, "image.{name}.iou = {}", iou(c));
        }
        s
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "IoU  {:.2}", 100.0 * self.iou)?;
        writeln!(f, "F1   {:.2}", 100.0 * self.f1)?;
        let c = &self.counts;
        write!(f, "TP {}  FP {}  FN {}  TN {}", c.tp, c.fp, c.fn_, c.tn)
    }
}

/// Thresholded prediction for one pair.
pub fn predict_mask<T: Real>(model: &Model<T>, pair: &ImagePair) -> Result<Vec<u8>> {
    let logits = model.predict(&pair.image_a.cast(), &pair.image_b.cast())?;
    Ok(argmax_change(&logits))
}

/// Micro-aggregated metrics: all pixels of all images are pooled before the
/// ratios are taken.
pub fn evaluate<T: Real>(model: &Model<T>, dataset: &[Sample]) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let per_image = dataset
        .iter()
        .map(|s| Ok((s.name().to_string(), confusion(&predict_mask(model, &s.pair)?, &s.mask)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricReport::from_counts(per_image.iter().map(|(_, c)| *c).sum());
    report.per_image = per_image;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_names: Vec<String>,
    /// One report per seed.
    pub reports: Vec<MetricReport>,
    /// Mean IoU across seeds.
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub mean_iou: f64,
}

impl CrossValReport {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for f in &self.folds {
            let _ = writeln!(s, "fold.{}.iou = {}", f.fold, f.iou);
            let _ = writeln!(s, "fold.{}.test = {}", f.fold, f.test_names.join(","));
        }
        let _ = writeln!(s, "mean.iou = {}", self.mean_iou);
        s
    }
}

impl fmt::Display for CrossValReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8}", "")?;
        for r in &self.folds {
            write!(f, "{:>9}", format!("fold {}", r.fold + 1))?;
        }
        writeln!(f, "{:>9}", "mean")?;
        write!(f, "{:<8}", "IoU")?;
        for r in &self.folds {
            write!(f, "{:>9.2}", 100.0 * r.iou)?;
        }
        write!(f, "{:>9.2}", 100.0 * self.mean_iou)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Trains on `k − 1` folds and tests on the held-out one, for every fold and
/// every seed. Folds follow [`kfold_split`] over the sample names.
pub fn crossval(
    config: &ModelConfig,
    dataset: &[Sample],
    k: usize,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<CrossValReport> {
    if seeds.is_empty() {
        return Err(Error::config("crossval needs at least one seed"));
    }
    let names: Vec<&str> = dataset.iter().map(Sample::name).collect();
    let folds = kfold_split(&names, k)?;
    let mut results = Vec::with_capacity(k);
    for (fold, test_names) in folds.iter().enumerate() {
        let (test, train_set): (Vec<Sample>, Vec<Sample>) =
            dataset.iter().cloned().partition(|s| test_names.contains(&s.name()));
        let reports = seeds
            .iter()
            .map(|&seed| {
                let cfg = TrainConfig { seed, ..train_cfg.clone() };
                let outcome = train(config, &train_set, &[], &cfg, None)?;
                evaluate(&outcome.model, &test)
            })
            .collect::<Result<Vec<_>>>()?;
        let ious: Vec<f64> = reports.iter().map(|r| r.iou).collect();
        results.push(FoldResult {
            fold,
            test_names: test_names.iter().map(|s| s.to_string()).collect(),
            reports,
            iou: mean(&ious),
        });
    }
    let mean_iou = mean(&results.iter().map(|r| r.iou).collect::<Vec<_>>());
    Ok(CrossValReport { folds: results, mean_iou })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRow {
    pub label: String,
    pub ious: Vec<f64>,
    pub mean: f64,
    /// `max − min` over seeds.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<VariantRow>,
    /// Mean IoU of the first MASNet row minus the first vanilla row.
    pub delta: Option<f64>,
}

impl Comparison {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(s, "row.{i}.variant = {}", r.label);
            let _ = writeln!(s, "row.{i}.mean = {}", r.mean);
            let _ = writeln!(s, "row.{i}.spread = {}", r.spread);
            let ious: Vec<String> = r.ious.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "row.{i}.ious = {}", ious.join(","));
        }
        if let Some(d) = self.delta {
            let _ = writeln!(s, "delta.masnet_minus_vanilla = {d}");
        }
        s
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:>16}", "variant", "IoU")?;
        for r in &self.rows {
            writeln!(f, "{:<14}{:>16}", r.label, format!("{:.2}±{:.2}", 100.0 * r.mean, 100.0 * r.spread / 2.0))?;
        }
        match self.delta {
            Some(d) => write!(f, "MASNet − vanilla: {:+.2}", 100.0 * d),
            None => write!(f, "MASNet − vanilla: n/a"),
        }
    }
}

/// Trains each configuration with seeds `base, base + 1, …` and evaluates on
/// `test`. Rows report the mean and the max−min spread of the IoU; the
/// printed `±` is half the spread.
pub fn compare_variants(
    configs: &[ModelConfig],
    train_set: &[Sample],
    test: &[Sample],
    train_cfg: &TrainConfig,
    n_seeds: usize,
) -> Result<Comparison> {
    if n_seeds == 0 {
        return Err(Error::config("compare needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let ious = (0..n_seeds as u64)
            .map(|s| {
                let cfg = TrainConfig { seed: train_cfg.seed.wrapping_add(s), ..train_cfg.clone() };
                let outcome = train(config, train_set, &[], &cfg, None)?;
                Ok(evaluate(&outcome.model, test)?.iou)
            })
            .collect::<Result<Vec<f64>>>()?;
        let max = ious.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ious.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(VariantRow { label: config.variant.to_string(), mean: mean(&ious), spread: max - min, ious });
    }
    let find = |v: Variant| rows.iter().find(|r| r.label == v.to_string()).map(|r| r.mean);
    let delta = find(Variant::MASNet).zip(find(Variant::VanillaSiamese)).map(|(m, v)| m - v);
    Ok(Comparison { rows, delta })
}

/// Min-max normalizes to `[0, 255]`; constant maps become all zero.
pub fn normalize_map(values: &[f64]) -> Vec<u8> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0; values.len()];
    }
    values.iter().map(|v| ((v - min) / (max - min) * 255.0).round() as u8).collect()
}

fn channel_mean<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    let &[c, h, w] = t.shape() else { unreachable!("feature maps are C×H×W") };
    let d = t.data();
    (0..h * w)
        .map(|p| (0..c).map(|ch| d[ch * h * w + p].as_f64()).sum::<f64>() / c as f64)
        .collect()
}

/// Writes `stage{s}_branch{b}_{weights,values}.pgm` for each attention stage.
/// `weights` is the reduced post-softmax map, `values` the channel mean of
/// the attended term added to the residual.
pub fn export_attention_maps<T: Real>(model: &Model<T>, pair: &ImagePair, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if model.config().variant != Variant::MASNet {
        return Err(Error::config(format!("attention maps need a masnet checkpoint, got {}", model.config().variant)));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, false);
    let x1 = tape.constant(pair.image_a.cast());
    let x2 = tape.constant(pair.image_b.cast());
    let encoded = model.siamese_encode(&mut tape, &b, x1, x2)?;
    let mut written = Vec::new();
    for (stage, acts) in encoded.activations.iter().enumerate() {
        let Some(acts) = acts else { continue };
        for branch in 1..=2 {
            let weighted = if branch == 1 { acts.weighted_1 } else { acts.weighted_2 };
            let maps = [
                ("weights", acts.spatial_weight_map(&tape, branch)),
                ("values", channel_mean(tape.value(weighted))),
            ];
            for (kind, values) in maps {
                let path = out_dir.join(format!("stage{stage}_branch{branch}_{kind}.pgm"));
                write_gray(&path, acts.width, acts.height, &normalize_map(&values))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
