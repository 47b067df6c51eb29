use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dsmstcn::formats::manifest::Manifest;

const SMALL: &str = r#"
[synth]
subjects = 3
background_s = [10.0, 12.0]
confusers_per_background = 1
[synth.reps]
ankle_plantarflexors = 3
knee_bends = 3
abdominal_muscles = 2
chair_rising_pairs = 2
[train]
epochs = 1
batch_size = 4
[train.model]
num_layers = 3
num_filters = 4
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsmstcn")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the config and a synthesized dataset into `dir`.
fn setup(dir: &Path) -> (String, String) {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.join("data");
    let o = run(&["synth", "--config", path(&cfg), "--out", path(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (path(&cfg).to_string(), path(&data).to_string())
}

fn listing(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = walk(dir).into_iter().map(|p| p.strip_prefix(dir).unwrap().display().to_string()).collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn synth_is_deterministic_and_creates_missing_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, _) = setup(tmp.path());
    let nested = tmp.path().join("a/b/c");
    let o = run(&["synth", "--config", &cfg, "--out", path(&nested)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("manifest.json"));
    let files = listing(&nested);
    assert_eq!(files.iter().filter(|f| f.starts_with("signals/")).count(), 3);
    assert_eq!(files.iter().filter(|f| f.starts_with("annotations/")).count(), 3);
    assert_eq!(files.iter().filter(|f| f.ends_with("manifest.json")).count(), 1);
    for f in &files {
        assert_eq!(fs::read(nested.join(f)).unwrap(), fs::read(tmp.path().join("data").join(f)).unwrap(), "{f}");
    }
    let m = Manifest::read(&nested).unwrap();
    assert!(m.complete);
    assert_eq!(m.files.len(), 6);
}

#[test]
fn synth_refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(tmp.path());
    assert_eq!(code(&run(&["synth", "--config", &cfg, "--out", &data])), 1);
    assert_eq!(code(&run(&["synth", "--config", &cfg, "--out", &data, "--force"])), 0);
    assert_eq!(code(&run(&["synth", "--config", &cfg, "--out", &data, "--seed", "3", "--force"])), 0);
    assert_eq!(Manifest::read(Path::new(&data)).unwrap().seeds["synth"], 3);
}

#[test]
fn invalid_inputs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&["synth", "--bogus"])), 1);
    assert_eq!(code(&run(&["train", "--out", path(&out), "--data", path(&out), "--mode", "triple"])), 1);
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[synth]\nsubjects = 1\n").unwrap();
    assert_eq!(code(&run(&["synth", "--config", path(&bad), "--out", path(&out)])), 1);
    fs::write(&bad, "[synth]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&run(&["synth", "--config", path(&bad), "--out", path(&out)])), 1);
    fs::write(&bad, "[synth]\nbackground_s = [2.0, 3.0]\n").unwrap();
    assert_eq!(code(&run(&["synth", "--config", path(&bad), "--out", path(&out)])), 1);
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["protocol", "--data", path(&tmp.path().join("none")), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(tmp.path());
    let tr = tmp.path().join("train");
    let o = run(&["train", "--config", &cfg, "--data", &data, "--out", path(&tr), "--fold", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::read(&tr).unwrap();
    assert!(m.complete && m.seeds.contains_key("fold00/lab01"));
    let ckpt = tr.join("checkpoint.bin");
    let log = fs::read_to_string(tr.join("run.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("step ")) && log.contains("stage1/ce_micro="));

    let ev = tmp.path().join("eval");
    let o = run(&["eval", "--config", &cfg, "--data", &data, "--out", path(&ev), "--checkpoint", path(&ckpt), "--fold", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "report.tsv", "summary.json", "stages/stage1.tsv", "stages/stage4.tsv"] {
        assert!(ev.join(f).exists(), "{f}");
    }

    // A different architecture must not load these weights.
    let o = run(&["eval", "--config", &cfg, "--data", &data, "--out", path(&ev), "--checkpoint", path(&ckpt), "--mode", "ablation_no_micro"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        assert_eq!(code(&run(&["train", "--config", &cfg, "--data", &data, "--out", path(out), "--epochs", "0"])), 0);
    }
    assert_eq!(fs::read(a.join("checkpoint.bin")).unwrap(), fs::read(b.join("checkpoint.bin")).unwrap());
    let c = tmp.path().join("c");
    assert_eq!(code(&run(&["train", "--config", &cfg, "--data", &data, "--out", path(&c), "--epochs", "0", "--seed", "5"])), 0);
    assert_ne!(fs::read(a.join("checkpoint.bin")).unwrap(), fs::read(c.join("checkpoint.bin")).unwrap());
}

#[test]
fn protocol_outputs_stay_under_out_and_parallelism_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(tmp.path());
    let before = listing(tmp.path());
    let p1 = tmp.path().join("p1");
    let p2 = tmp.path().join("p2");
    assert_eq!(code(&run(&["protocol", "--config", &cfg, "--data", &data, "--out", path(&p1), "--jobs", "1"])), 0);
    assert_eq!(code(&run(&["protocol", "--config", &cfg, "--data", &data, "--out", path(&p2), "--jobs", "3"])), 0);
    let after: Vec<String> = listing(tmp.path()).into_iter().filter(|f| !f.starts_with("p1/") && !f.starts_with("p2/")).collect();
    assert_eq!(before, after);
    assert_eq!(fs::read(p1.join("report.tsv")).unwrap(), fs::read(p2.join("report.tsv")).unwrap());
    let files = listing(&p1);
    assert_eq!(files.iter().filter(|f| f.ends_with("checkpoint.bin")).count(), 3);

    // Aggregating the fold reports reproduces the protocol report.
    let agg = tmp.path().join("agg");
    let mut args = vec!["aggregate".to_string(), "--out".into(), path(&agg).into()];
    args.extend((0..3).map(|k| path(&p1.join(format!("folds/fold{k:02}/report.tsv"))).to_string()));
    let o = Command::new(env!("CARGO_BIN_EXE_dsmstcn")).args(&args).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(agg.join("report.tsv")).unwrap(), fs::read(p1.join("report.tsv")).unwrap());
}

#[test]
fn selfcheck_lists_four_families_and_catches_a_fault() {
    let o = run(&["selfcheck"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    let families: Vec<&str> = text.lines().map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(families, ["gradient", "receptive_field", "metrics_oracle", "loss_values"]);
    assert!(text.lines().all(|l| l.starts_with("PASS")));

    let o = run(&["selfcheck", "--inject-gradient-fault"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("FAIL gradient")));
}
