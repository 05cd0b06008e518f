use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wsfn::checkpoint::Checkpoint;
use wsfn::config::RunConfig;
use wsfn::metrics;

fn wsfn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsfn"))
        .args(args)
        .current_dir(cwd)
        .env("WSFN_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = wsfn(args, cwd);
    assert_eq!(
        code(&out),
        0,
        "{args:?}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY: &str = r#"
seed = 4

[data]
count = 8
train = 6

[nft]
blocks = 1
channels = 8
mlp_hidden = 8
heads = 2
fourier_size = 4

[inr2array]
latent_dim = 8
decoder_hidden = 8
splits = ["train"]

[classifier]
blocks = 1
mlp_hidden = 8

[train]
steps = 6
batch_size = 2
eval_every = 3
dumps = 1
"#;

/// A temp dir holding `tiny.toml` and a fitted 8-net dataset under `data/`.
fn tiny_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    ok(&["gen-data", "--config", "tiny.toml"], dir.path());
    ok(&["fit-sirens", "--config", "tiny.toml"], dir.path());
    dir
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wsfn(&["no-such-command"], dir.path())), 2);
    assert_eq!(
        code(&wsfn(&["verify", "--term3", "sideways"], dir.path())),
        2
    );
    assert_eq!(
        code(&wsfn(&["verify", "--config", "missing.toml"], dir.path())),
        2
    );

    fs::write(dir.path().join("bad.toml"), "[train]\nstepz = 3\n").unwrap();
    let out = wsfn(&["gen-data", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));

    // Training without a dataset is a missing input.
    assert_eq!(
        code(&wsfn(&["train-edit", "--data", "nowhere"], dir.path())),
        2
    );
    assert_eq!(code(&wsfn(&["--help"], dir.path())), 0);
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &[
            "verify", "--suite", "minimal", "--suite", "oracle", "--trials", "3",
        ],
        dir.path(),
    );
    assert!(out.contains("checks passed"));
    let csv = fs::read_to_string(dir.path().join("runs/verify.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("name,direction,tolerance,achieved,pass"));
    assert!(lines.clone().count() > 0);
    assert!(lines.all(|l| l.ends_with(",true")));

    let out = wsfn(
        &[
            "verify",
            "--break-coupling",
            "--suite",
            "equivariance",
            "--trials",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr
            .lines()
            .any(|l| l.starts_with("FAIL equivariance/sa/") && l.ends_with(",false")),
        "{stderr}"
    );
}

#[test]
fn datasets_are_byte_identical_across_runs() {
    let a = tiny_workspace();
    let b = tiny_workspace();
    let files = files_under(&a.path().join("data"));
    assert_eq!(files, files_under(&b.path().join("data")));
    assert!(files.len() > 8);
    for f in &files {
        let x = fs::read(a.path().join("data").join(f)).unwrap();
        let y = fs::read(b.path().join("data").join(f)).unwrap();
        assert!(x == y, "{} differs", f.display());
    }
}

#[test]
fn end_to_end_with_resume() {
    let dir = tiny_workspace();
    let cwd = dir.path();

    // Straight six steps.
    ok(
        &[
            "train-inr2array",
            "--config",
            "tiny.toml",
            "--out",
            "straight",
        ],
        cwd,
    );
    // Three steps, then resume to six.
    fs::write(
        cwd.join("half.toml"),
        TINY.replace("steps = 6", "steps = 3"),
    )
    .unwrap();
    ok(
        &[
            "train-inr2array",
            "--config",
            "half.toml",
            "--out",
            "resumed",
        ],
        cwd,
    );
    ok(
        &[
            "train-inr2array",
            "--config",
            "tiny.toml",
            "--out",
            "resumed",
            "--checkpoint",
            "resumed/inr2array.ckpt",
        ],
        cwd,
    );
    let straight = fs::read_to_string(cwd.join("straight/inr2array.metrics.csv")).unwrap();
    let resumed = fs::read_to_string(cwd.join("resumed/inr2array.metrics.csv")).unwrap();
    assert_eq!(straight, resumed);
    let a = Checkpoint::load(&cwd.join("straight/inr2array.ckpt")).unwrap();
    let b = Checkpoint::load(&cwd.join("resumed/inr2array.ckpt")).unwrap();
    assert_eq!(a.step, 6);
    assert_eq!(a.params, b.params);
    assert!(cwd.join("straight/recon").read_dir().unwrap().count() > 0);

    // The stored config echo reproduces the run.
    let echoed = RunConfig::parse(&a.config).unwrap();
    assert_eq!(echoed.train.steps, 6);
    assert_eq!(echoed.nft.channels, 8);

    // Encoding is invariant to hidden-neuron permutations of every net.
    ok(
        &[
            "encode",
            "--config",
            "tiny.toml",
            "--encoder",
            "straight/inr2array.ckpt",
            "--out",
            "enc",
        ],
        cwd,
    );
    let plain = fs::read_to_string(cwd.join("enc/latents.txt")).unwrap();
    ok(
        &[
            "encode",
            "--config",
            "tiny.toml",
            "--encoder",
            "straight/inr2array.ckpt",
            "--out",
            "enc",
            "--permute",
        ],
        cwd,
    );
    let permuted = fs::read_to_string(cwd.join("enc/latents.txt")).unwrap();
    let parse = |text: &str| -> Vec<f64> {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .flat_map(|l| {
                l.split_whitespace()
                    .skip(3)
                    .map(|v| v.parse::<f64>().unwrap())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let (p, q) = (parse(&plain), parse(&permuted));
    assert_eq!(p.len(), 8 * 4 * 8);
    let gap = p
        .iter()
        .zip(&q)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-10, "latent gap {gap}");

    ok(
        &["train-edit", "--config", "tiny.toml", "--out", "straight"],
        cwd,
    );
    let out = ok(
        &[
            "train-classify",
            "--config",
            "tiny.toml",
            "--out",
            "straight",
            "--encoder",
            "straight/inr2array.ckpt",
        ],
        cwd,
    );
    assert!(out.contains("accuracy: train"));

    let out = ok(
        &[
            "eval",
            "--config",
            "tiny.toml",
            "--checkpoint",
            "straight/editor.ckpt",
            "--out",
            "straight",
        ],
        cwd,
    );
    assert!(out.contains("train/edit_mse") && out.contains("train/identity_mse"));
    let out = ok(
        &[
            "eval",
            "--config",
            "tiny.toml",
            "--checkpoint",
            "straight/classifier.ckpt",
            "--out",
            "straight",
        ],
        cwd,
    );
    assert!(out.contains("test/accuracy"));

    let report = ok(
        &["report", "--config", "tiny.toml", "--out", "straight"],
        cwd,
    );
    for run in ["inr2array", "editor", "classifier", "eval"] {
        assert!(
            report.lines().any(|l| l.starts_with(run)),
            "{run} missing from\n{report}"
        );
    }
    let log = metrics::read(&cwd.join("straight/editor.metrics.csv")).unwrap();
    assert!(log.iter().any(|r| r.step == 6 && r.split == "eval"));

    // A classifier checkpoint cannot seed an encoder.
    let out = wsfn(
        &[
            "encode",
            "--config",
            "tiny.toml",
            "--encoder",
            "straight/classifier.ckpt",
        ],
        cwd,
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let dir = tiny_workspace();
    let cwd = dir.path();
    fs::write(cwd.join("one.toml"), TINY.replace("steps = 6", "steps = 1")).unwrap();
    ok(&["train-edit", "--config", "one.toml"], cwd);
    let path = cwd.join("runs/editor.ckpt");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    fs::write(&path, bytes).unwrap();
    let out = wsfn(
        &[
            "eval",
            "--config",
            "one.toml",
            "--checkpoint",
            "runs/editor.ckpt",
        ],
        cwd,
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

#[test]
fn presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            RunConfig::load(&p).unwrap_or_else(|err| panic!("{}: {err}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
