use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn masnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masnet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = masnet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Relative path → bytes for every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Names of the files whose contents differ between two snapshots.
fn differing(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}

/// Runs `f` twice into a fresh `root` and snapshots both results. The same
/// path is reused because echoed configs record it.
fn twice(root: &Path, f: impl Fn()) -> (BTreeMap<PathBuf, Vec<u8>>, BTreeMap<PathBuf, Vec<u8>>) {
    f();
    let first = snapshot(root);
    fs::remove_dir_all(root).unwrap();
    f();
    (first, snapshot(root))
}

#[test]
fn gen_data_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let (first, second) =
        twice(&d, || drop(ok(&["gen-data", "--out", d.to_str().unwrap(), "--pairs", "4", "--size", "32", "--seed", "7"])));
    assert_eq!(first.len(), 3 * 4 + 1);
    assert_eq!(differing(&first, &second), Vec::<PathBuf>::new());
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let out = masnet(&["train", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    assert_eq!(masnet(&["nope"]).status.code(), Some(1));
    assert_eq!(masnet(&["help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = masnet(&["eval", "--out", tmp.path().to_str().unwrap(), "--checkpoint", "/nonexistent.masn", "--pairs", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.txt");
    fs::write(&cfg, "# small corpus\npairs = 2\nsize = 8\n").unwrap();
    let out = tmp.path().join("d");
    ok(&["gen-data", "--config", cfg.to_str().unwrap(), "--size", "16", "--out", out.to_str().unwrap()]);
    let echo = fs::read_to_string(out.join("config-gen-data.txt")).unwrap();
    assert!(echo.contains("pairs = 2\n") && echo.contains("size = 16\n"));
    assert_eq!(fs::read_dir(out.join("A")).unwrap().count(), 2);
}

fn pipeline(root: &Path, data: &Path) {
    let d = data.to_str().unwrap();
    let out = root.to_str().unwrap();
    ok(&["train", "--out", out, "--data", d, "--iters", "40", "--warmup", "5", "--lr", "2e-3", "--crop", "32", "--checkpoint-every", "20", "--val", d, "--seed", "3"]);
    let ckpt = root.join("checkpoints/final.masn");
    ok(&["eval", "--out", out, "--data", d, "--checkpoint", ckpt.to_str().unwrap()]);
    ok(&["attn-maps", "--out", out, "--data", d, "--checkpoint", ckpt.to_str().unwrap(), "--pair", "0003"]);
}

#[test]
fn pipeline_round_trip_is_reproducible() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-data", "--out", data.to_str().unwrap(), "--pairs", "20", "--size", "32", "--seed", "1"]);

    let run1 = tmp.path().join("run1");
    let (first, second) = twice(&run1, || pipeline(&run1, &data));
    assert_eq!(differing(&first, &second), Vec::<PathBuf>::new());
    for key in ["checkpoints/final.masn", "checkpoints/best.masn", "logs/train.log", "reports/eval.txt", "reports/train.txt", "maps/stage0_branch1_weights.pgm", "maps/stage1_branch2_values.pgm"] {
        assert!(first.contains_key(Path::new(key)), "missing {key}");
    }
    let report = String::from_utf8(first[Path::new("reports/eval.txt")].clone()).unwrap();
    assert!(report.lines().any(|l| l.starts_with("iou = ")) && report.lines().any(|l| l.starts_with("f1 = ")));

    // The echoed config replays the training run exactly.
    let run3 = tmp.path().join("run3");
    let echo = tmp.path().join("run1/config-train.txt");
    ok(&["train", "--config", echo.to_str().unwrap(), "--out", run3.to_str().unwrap()]);
    assert_eq!(fs::read(run3.join("checkpoints/final.masn")).unwrap(), first[Path::new("checkpoints/final.masn")]);
    assert!(start.elapsed() < Duration::from_secs(300));
}
