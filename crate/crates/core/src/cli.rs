//! The `masnet` command line.
//!
//! Every setting is a `key = value` pair. Values come from built-in defaults,
//! then an optional `--config FILE`, then `--key value` flags. The resolved set
//! is echoed to `OUT/config-<command>.txt`; passing that file back through
//! `--config` repeats the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::attention::AttentionLevel;
use crate::data::{generate_dataset, load_dataset, write_dataset, Sample, SynthConfig};
use crate::error::Error;
use crate::eval::{compare_variants, crossval, evaluate, export_attention_maps};
use crate::model::{parse_upsample, read_checkpoint, FusionStrategy, ModelConfig, Variant};
use crate::training::{train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    Train,
    Eval,
    Crossval,
    Compare,
    AttnMaps,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::GenData, Command::Train, Command::Eval, Command::Crossval, Command::Compare, Command::AttnMaps];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Crossval => "crossval",
            Command::Compare => "compare",
            Command::AttnMaps => "attn-maps",
        }
    }

    fn about(self) -> &'static str {
        match self {
            Command::GenData => "write a synthetic A/ B/ label/ dataset",
            Command::Train => "train one model; checkpoints and a loss log",
            Command::Eval => "IoU and F1 of a checkpoint on a dataset",
            Command::Crossval => "k-fold cross-validation",
            Command::Compare => "seed-repeated vanilla vs MASNet vs early-fusion",
            Command::AttnMaps => "export mutual-attention maps of one pair",
        }
    }

    fn groups(self) -> &'static [Group] {
        use Group::*;
        match self {
            Command::GenData => &[Common, Synth],
            Command::Train => &[Common, Source, Synth, Model, Optim, Train],
            Command::Eval => &[Common, Source, Synth, Checkpoint],
            Command::Crossval => &[Common, Source, Synth, Model, Optim, Folds, Seeds],
            Command::Compare => &[Common, Source, Synth, Model, Optim, Seeds, Test],
            Command::AttnMaps => &[Common, Source, Synth, Checkpoint, Pair],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Common,
    Source,
    Synth,
    Model,
    Optim,
    Train,
    Checkpoint,
    Folds,
    Seeds,
    Test,
    Pair,
}

struct Key {
    name: &'static str,
    default: &'static str,
    group: Group,
    help: &'static str,
}

const fn key(name: &'static str, default: &'static str, group: Group, help: &'static str) -> Key {
    Key { name, default, group, help }
}

const KEYS: &[Key] = &[
    key("out", "out", Group::Common, "output directory"),
    key("seed", "0", Group::Common, "root seed for data, init, and augmentation"),
    key("data", "", Group::Source, "dataset directory (A/ B/ label/); empty generates synthetic pairs"),
    key("pairs", "200", Group::Synth, "synthetic pairs"),
    key("size", "64", Group::Synth, "synthetic image side"),
    key("persistent-shapes", "4", Group::Synth, "unchanged shapes per scene"),
    key("change-shapes", "2", Group::Synth, "added or removed shapes per scene"),
    key("jitter", "0.1", Group::Synth, "photometric jitter amplitude in [0, 1)"),
    key("noise", "0.02", Group::Synth, "pixel noise amplitude in [0, 1)"),
    key("variant", "masnet", Group::Model, "vanilla | masnet | early-fusion"),
    key("channels", "8,16", Group::Model, "encoder stage widths"),
    key("attention", "1,1", Group::Model, "per-stage attention switches"),
    key("level", "individual", Group::Model, "global | local:HxW | individual | individual-literal"),
    key("d", "auto", Group::Model, "projection width; auto = stage width"),
    key("fusion", "stack", Group::Model, "stack | add | diff"),
    key("upsample", "nearest", Group::Model, "nearest | bilinear"),
    key("lr", "6e-5", Group::Optim, "base learning rate"),
    key("weight-decay", "0.01", Group::Optim, "decoupled weight decay"),
    key("beta1", "0.9", Group::Optim, "first-moment decay"),
    key("beta2", "0.999", Group::Optim, "second-moment decay"),
    key("epsilon", "1e-8", Group::Optim, "AdamW epsilon"),
    key("warmup", "150", Group::Optim, "warmup iterations"),
    key("iters", "2000", Group::Optim, "training iterations"),
    key("power", "1.0", Group::Optim, "poly decay power"),
    key("batch", "4", Group::Optim, "batch size"),
    key("crop", "64", Group::Optim, "training crop side"),
    key("augment", "true", Group::Optim, "scale, crop, flip, rotate, and switch pairs"),
    key("checkpoint-every", "500", Group::Train, "checkpoint and validation cadence; 0 disables"),
    key("val", "", Group::Train, "validation dataset directory for best-checkpoint selection"),
    key("checkpoint", "", Group::Checkpoint, "checkpoint file"),
    key("folds", "4", Group::Folds, "number of folds"),
    key("seeds", "3", Group::Seeds, "repeats with seeds seed, seed+1, ..."),
    key("test", "", Group::Test, "test dataset directory; empty generates test-pairs synthetic pairs"),
    key("test-pairs", "50", Group::Test, "synthetic test pairs"),
    key("variants", "vanilla,masnet,early-fusion", Group::Test, "variants to compare"),
    key("pair", "", Group::Pair, "sample name; empty takes the first"),
];

/// Resolved settings for one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    fn keys(command: Command) -> impl Iterator<Item = &'static Key> {
        KEYS.iter().filter(move |k| command.groups().contains(&k.group))
    }

    /// Defaults, overlaid by `file` entries, overlaid by `flags`.
    pub fn resolve(command: Command, file: &[(String, String)], flags: &[(String, String)]) -> CliResult<Self> {
        let mut values: BTreeMap<&'static str, String> =
            Self::keys(command).map(|k| (k.name, k.default.to_string())).collect();
        for (source, pairs) in [("config", file), ("flag", flags)] {
            for (k, v) in pairs {
                let Some(slot) = Self::keys(command).find(|key| key.name == k) else {
                    let token = if source == "flag" { format!("--{k}") } else { k.clone() };
                    return Err(usage(format!("unknown {source} `{token}` for `{}`", command.name())));
                };
                values.insert(slot.name, v.clone());
            }
        }
        Ok(RunConfig { command, values })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not a {} key", self.command.name()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let raw = self.get(key);
        raw.parse().map_err(|_| usage(format!("bad value `{raw}` for `{key}`")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        Some(self.get(key)).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    fn required_path(&self, key: &str) -> CliResult<PathBuf> {
        self.path(key).ok_or_else(|| usage(format!("`{}` needs --{key}", self.command.name())))
    }

    fn out(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    /// `config-<command>.txt`, so commands sharing an output directory keep
    /// their own echo.
    pub fn echo_file_name(&self) -> String {
        format!("config-{}.txt", self.command.name())
    }

    /// The `key = value` echo written next to every run's outputs.
    pub fn echo(&self) -> String {
        let mut s = format!("# masnet {}\n", self.command.name());
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn synth_config(&self) -> CliResult<SynthConfig> {
        Ok(SynthConfig {
            size: self.parse("size")?,
            persistent_shapes: self.parse("persistent-shapes")?,
            change_shapes: self.parse("change-shapes")?,
            jitter: self.parse("jitter")?,
            noise: self.parse("noise")?,
            seed: self.parse("seed")?,
        })
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let list = |key: &str| -> CliResult<Vec<String>> {
            Ok(self.get(key).split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        };
        let channels = list("channels")?
            .iter()
            .map(|c| c.parse().map_err(|_| usage(format!("bad channel width `{c}`"))))
            .collect::<CliResult<Vec<usize>>>()?;
        let attention = list("attention")?
            .iter()
            .map(|a| parse_bool(a).ok_or_else(|| usage(format!("bad attention switch `{a}`"))))
            .collect::<CliResult<Vec<bool>>>()?;
        let d = match self.get("d") {
            "auto" => None,
            s => Some(s.parse().map_err(|_| usage(format!("bad value `{s}` for `d`")))?),
        };
        let config = ModelConfig {
            variant: self.get("variant").parse::<Variant>().map_err(|e| usage(e.to_string()))?,
            channels,
            attention,
            level: self.get("level").parse::<AttentionLevel>().map_err(|e| usage(e.to_string()))?,
            d,
            fusion: self.get("fusion").parse::<FusionStrategy>().map_err(|e| usage(e.to_string()))?,
            upsample: parse_upsample(self.get("upsample")).map_err(|e| usage(e.to_string()))?,
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        Ok(config)
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let augment = self.get("augment");
        let cfg = TrainConfig {
            base_lr: self.parse("lr")?,
            weight_decay: self.parse("weight-decay")?,
            beta1: self.parse("beta1")?,
            beta2: self.parse("beta2")?,
            epsilon: self.parse("epsilon")?,
            warmup_iters: self.parse("warmup")?,
            max_iters: self.parse("iters")?,
            poly_power: self.parse("power")?,
            batch_size: self.parse("batch")?,
            crop_size: self.parse("crop")?,
            checkpoint_every: if self.values.contains_key("checkpoint-every") { self.parse("checkpoint-every")? } else { 0 },
            augment: parse_bool(augment).ok_or_else(|| usage(format!("bad value `{augment}` for `augment`")))?,
            seed: self.parse("seed")?,
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    /// The `data` directory, or `count` synthetic pairs when it is empty.
    fn dataset(&self, count_key: &str) -> CliResult<Vec<Sample>> {
        match self.path("data") {
            Some(dir) => Ok(load_dataset(&dir)?),
            None => {
                let synth = self.synth_config()?;
                synth.validate().map_err(|e| usage(e.to_string()))?;
                Ok(generate_dataset(&synth, self.parse(count_key)?)?)
            }
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

type Flags = (Option<PathBuf>, Vec<(String, String)>);

/// Splits `args` (after the subcommand) into a config file path and flags.
fn parse_flags(args: &[String]) -> CliResult<Flags> {
    let mut config = None;
    let mut flags = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            return Err(usage(format!("unexpected argument `{arg}`")));
        };
        let (k, v) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| usage(format!("`{arg}` needs a value")))?;
                (body.to_string(), v.clone())
            }
        };
        if k == "config" {
            config = Some(PathBuf::from(v));
        } else {
            flags.push((k, v));
        }
    }
    Ok((config, flags))
}

pub fn help_text() -> String {
    let mut s = String::from("masnet <command> [--config FILE] [--key value ...]\n\ncommands:\n");
    for c in Command::ALL {
        let _ = writeln!(s, "  {:<10} {}", c.name(), c.about());
    }
    s.push_str("\nkeys (a command accepts the subset it uses):\n");
    for k in KEYS {
        let default = if k.default.is_empty() { String::new() } else { format!(" [{}]", k.default) };
        let _ = writeln!(s, "  --{:<18} {}{}", k.name, k.help, default);
    }
    s
}

/// Parses `argv` (without the program name) into a resolved configuration.
pub fn parse_args(args: &[String]) -> CliResult<RunConfig> {
    let Some(name) = args.first() else {
        return Err(usage("missing command"));
    };
    let command = Command::ALL
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| usage(format!("unknown command `{name}`")))?;
    let (config_path, flags) = parse_flags(&args[1..])?;
    let file = match config_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    RunConfig::resolve(command, &file, &flags)
}

fn write_report(out: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    let dir = out.join("reports");
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(Error::from)?;
    Ok(path)
}

fn load_model(path: &Path) -> CliResult<crate::model::Model<f32>> {
    let file = fs::File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(read_checkpoint(std::io::BufReader::new(file))?)
}

/// Executes a resolved configuration, printing a summary to `stdout`.
pub fn execute(run: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    let out = run.out();
    // Validate everything before touching the file system.
    let synth = run.synth_config()?;
    let model_cfg = match run.command {
        Command::Train | Command::Crossval | Command::Compare => Some(run.model_config()?),
        _ => None,
    };
    let train_cfg = match run.command {
        Command::Train | Command::Crossval | Command::Compare => Some(run.train_config()?),
        _ => None,
    };
    fs::create_dir_all(&out).map_err(Error::from)?;
    fs::write(out.join(run.echo_file_name()), run.echo()).map_err(Error::from)?;
    let say = |stdout: &mut dyn Write, s: String| writeln!(stdout, "{s}").map_err(Error::from);

    match run.command {
        Command::GenData => {
            synth.validate().map_err(|e| usage(e.to_string()))?;
            let samples = generate_dataset(&synth, run.parse("pairs")?)?;
            write_dataset(&out, &samples)?;
            say(stdout, format!("wrote {} pairs to {}", samples.len(), out.display()))?;
        }
        Command::Train => {
            let (model_cfg, train_cfg) = (model_cfg.unwrap(), train_cfg.unwrap());
            let data = run.dataset("pairs")?;
            let val = match run.path("val") {
                Some(dir) => load_dataset(&dir)?,
                None => Vec::new(),
            };
            let outcome = train(&model_cfg, &data, &val, &train_cfg, Some(&out))?;
            let last = outcome.log.last().expect("max_iters > warmup >= 0");
            let mut report = format!("iters = {}\nfinal_loss = {}\n", outcome.log.len(), last.loss);
            if let Some((iter, iou, _)) = &outcome.best {
                let _ = write!(report, "best_iter = {iter}\nbest_val_iou = {iou}\n");
            }
            write_report(&out, "train.txt", &report)?;
            say(stdout, format!("trained {} iterations, final loss {:.4}", outcome.log.len(), last.loss))?;
            if let Some((iter, iou, _)) = &outcome.best {
                say(stdout, format!("best validation IoU {:.2} at iteration {iter}", 100.0 * iou))?;
            }
        }
        Command::Eval => {
            let model = load_model(&run.required_path("checkpoint")?)?;
            let report = evaluate(&model, &run.dataset("pairs")?)?;
            write_report(&out, "eval.txt", &report.to_key_values())?;
            say(stdout, report.to_string())?;
        }
        Command::Crossval => {
            let data = run.dataset("pairs")?;
            let seeds = seed_list(run)?;
            let report = crossval(&model_cfg.unwrap(), &data, run.parse("folds")?, &train_cfg.unwrap(), &seeds)?;
            write_report(&out, "crossval.txt", &report.to_key_values())?;
            say(stdout, report.to_string())?;
        }
        Command::Compare => {
            let base = model_cfg.unwrap();
            let configs = run
                .get("variants")
                .split(',')
                .map(|v| v.trim().parse::<Variant>().map(|v| base.with_variant(v)).map_err(|e| usage(e.to_string())))
                .collect::<CliResult<Vec<_>>>()?;
            let (train_set, test) = match (run.path("data"), run.path("test")) {
                (Some(d), Some(t)) => (load_dataset(&d)?, load_dataset(&t)?),
                (None, None) => {
                    let n: usize = run.parse("pairs")?;
                    let mut all = generate_dataset(&synth, n + run.parse::<usize>("test-pairs")?)?;
                    let test = all.split_off(n);
                    (all, test)
                }
                _ => return Err(usage("compare needs both --data and --test, or neither")),
            };
            let table = compare_variants(&configs, &train_set, &test, &train_cfg.unwrap(), run.parse("seeds")?)?;
            write_report(&out, "compare.txt", &table.to_key_values())?;
            say(stdout, table.to_string())?;
        }
        Command::AttnMaps => {
            let model = load_model(&run.required_path("checkpoint")?)?;
            let data = run.dataset("pairs")?;
            let sample = match run.path("pair") {
                Some(name) => {
                    let name = name.to_string_lossy().into_owned();
                    data.iter()
                        .find(|s| s.name() == name)
                        .ok_or_else(|| Error::Dataset(format!("no pair named `{name}`")))?
                }
                None => data.first().ok_or_else(|| Error::Dataset("dataset is empty".into()))?,
            };
            let files = export_attention_maps(&model, &sample.pair, &out.join("maps"))?;
            say(stdout, format!("wrote {} maps for pair {} to {}", files.len(), sample.name(), out.join("maps").display()))?;
        }
    }
    Ok(())
}

fn seed_list(run: &RunConfig) -> CliResult<Vec<u64>> {
    let base: u64 = run.parse("seed")?;
    let n: u64 = run.parse("seeds")?;
    Ok((0..n).map(|i| base.wrapping_add(i)).collect())
}

/// Runs the command line and returns the process exit code.
pub fn main_with(args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if args.is_empty() || matches!(args[0].as_str(), "help" | "--help" | "-h") {
        let _ = write!(stdout, "{}", help_text());
        return if args.is_empty() { EXIT_USAGE } else { EXIT_OK };
    }
    let result = parse_args(args).and_then(|run| execute(&run, stdout));
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}\nrun `masnet help` for the list of commands and keys");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}
