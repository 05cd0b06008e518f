//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 6 to 8 train desk-scale models from the presets in `configs/`
//! and take several minutes on one core.

use std::alloc::{GlobalAlloc, Layout, System};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use wsfn::commands;
use wsfn::config::RunConfig;
use wsfn::dataset;
use wsfn::verify::{CheckRecord, Direction, Suite, VerifyOptions};
use wsfn_core::data::zoo::Split;
use wsfn_core::layers::{SelfAttention, Term3Mode, WsVar};
use wsfn_core::models::SirenNetwork;
use wsfn_core::precision::Precision;
use wsfn_core::rng::seeded;
use wsfn_core::{NeuronPermutation, ParamSet, Tape, WeightSpaceFeature, WeightSpaceSpec};

struct Counting;

static TRACKING: AtomicBool = AtomicBool::new(false);
static LARGEST: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        if TRACKING.load(Ordering::Relaxed) {
            LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        }
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        if TRACKING.load(Ordering::Relaxed) {
            LARGEST.fetch_max(new_size, Ordering::Relaxed);
        }
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static ALLOCATOR: Counting = Counting;

/// Largest single allocation, in bytes, made while `f` runs.
fn largest_allocation<T>(f: impl FnOnce() -> T) -> (T, usize) {
    LARGEST.store(0, Ordering::Relaxed);
    TRACKING.store(true, Ordering::Relaxed);
    let out = f();
    TRACKING.store(false, Ordering::Relaxed);
    (out, LARGEST.load(Ordering::Relaxed))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn preset(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn worst(records: &[CheckRecord], direction: Direction) -> f64 {
    let vals = records
        .iter()
        .filter(|r| r.direction == direction)
        .map(|r| r.achieved);
    match direction {
        Direction::AtMost => vals.fold(0.0, f64::max),
        Direction::AtLeast => vals.fold(f64::INFINITY, f64::min),
    }
}

fn suite(out: &Path, suite: Suite, break_coupling: bool) -> (commands::VerifyOutcome, f64) {
    let mut cfg = RunConfig::default();
    cfg.paths.out = out.join(suite.name());
    let opts = VerifyOptions {
        precision: Precision::F64,
        scaled: None,
        term3: None,
        break_coupling,
        trials: 20,
        seed: cfg.seed,
    };
    let t = Instant::now();
    let outcome = commands::verify(&cfg, &opts, &[suite], true).expect("verify runs");
    (outcome, t.elapsed().as_secs_f64())
}

fn property_suite(out: &Path, which: Suite, limit_s: Option<f64>) -> Outcome {
    let (o, secs) = suite(out, which, false);
    let failed = o.records.iter().filter(|r| !r.pass).count();
    let in_time = limit_s.is_none_or(|l| secs <= l);
    let mut detail = format!(
        "{} of {} checks pass ({} advertised), worst upper-bounded value {:.2e}",
        o.records.len() - failed,
        o.records.len(),
        o.advertised,
        worst(&o.records, Direction::AtMost)
    );
    if o.records.iter().any(|r| r.direction == Direction::AtLeast) {
        detail.push_str(&format!(
            ", smallest required gap {:.2e}",
            worst(&o.records, Direction::AtLeast)
        ));
    }
    detail.push_str(&format!(", {secs:.1}s"));
    outcome(o.passed() && in_time, detail)
}

fn negative_control(out: &Path) -> Outcome {
    let (o, _) = suite(out, Suite::Equivariance, true);
    let failing = o.records.iter().filter(|r| !r.pass).count();
    let sa = o
        .records
        .iter()
        .filter(|r| !r.pass && r.name.starts_with("equivariance/sa/"))
        .count();
    outcome(
        !o.passed() && sa > 0,
        format!(
            "--break-coupling fails {failing} of {} equivariance checks ({sa} self-attention)",
            o.records.len()
        ),
    )
}

fn permuted_net(net: &SirenNetwork, seed: u64) -> SirenNetwork {
    let sigma = NeuronPermutation::random(net.spec(), &mut seeded(seed));
    SirenNetwork::new(sigma.apply(&net.weights).unwrap(), net.omega0).unwrap()
}

/// Generates and fits the 64-net blob dataset into `dir`; returns seconds.
fn build_data(cfg: &RunConfig) -> f64 {
    let t = Instant::now();
    commands::gen_data(cfg).expect("gen-data");
    commands::fit_sirens(cfg).expect("fit-sirens");
    t.elapsed().as_secs_f64()
}

fn inr2array(work: &Path, data: &Path) -> (Outcome, PathBuf) {
    let mut cfg = preset("inr2array.toml");
    cfg.paths.data = data.to_path_buf();
    cfg.paths.out = work.join("inr2array");
    let fit_s = build_data(&cfg);
    let s = commands::train_inr2array(&cfg).expect("train-inr2array");
    let ratio = s.initial / s.best;

    let (_, model, params) = commands::load_encoder(&s.checkpoint).unwrap();
    let ds = dataset::load_dataset(data).unwrap();
    let mut gap: f64 = 0.0;
    let mut moved: f64 = f64::INFINITY;
    for (i, e) in ds.entries.iter().enumerate() {
        let p = permuted_net(&e.net, 1000 + i as u64);
        moved = moved.min(p.weights.max_abs_diff(&e.net.weights));
        let z = model.encode_value(&params, &e.net, Precision::F32).unwrap();
        let zp = model.encode_value(&params, &p, Precision::F32).unwrap();
        gap = gap.max(z.max_abs_diff(&zp));
    }
    let minutes = (fit_s + s.seconds) / 60.0;
    let pass = ratio >= 10.0 && s.steps <= 2000 && gap <= 1e-6 && moved > 0.0 && minutes <= 20.0;
    let detail = format!(
        "{} nets, loss {:.4} at step 0 -> best {:.4} (last {:.4}), drop {ratio:.1}x (need 10x); \
         f32 latent gap {gap:.2e} (need 1e-6) with every net moved by its permutation; {minutes:.1} min",
        ds.entries.len(),
        s.initial,
        s.best,
        s.last,
    );
    (outcome(pass, detail), s.checkpoint)
}

fn classification(work: &Path, data: &Path, encoder: &Path) -> Outcome {
    let mut cfg = preset("classify.toml");
    cfg.paths.data = data.to_path_buf();
    cfg.paths.out = work.join("classify");
    cfg.paths.encoder = Some(encoder.to_path_buf());
    let t = Instant::now();
    let s = commands::train_classify(&cfg).expect("train-classify");
    let minutes = t.elapsed().as_secs_f64() / 60.0;

    let (enc_cfg, model, _) = commands::load_encoder(encoder).unwrap();
    let ck = wsfn::checkpoint::Checkpoint::load(&s.train.checkpoint).unwrap();
    let ds = dataset::load_dataset(data).unwrap();
    let classifier = commands::build_classifier(&enc_cfg, 2).unwrap();
    let test = ds.split(Split::Test);
    let mut gap: f64 = 0.0;
    for (i, e) in test.iter().enumerate() {
        let a = commands::classify_logits(&model, &classifier, &ck.params, &e.net, Precision::F64)
            .unwrap();
        let b = commands::classify_logits(
            &model,
            &classifier,
            &ck.params,
            &permuted_net(&e.net, 2000 + i as u64),
            Precision::F64,
        )
        .unwrap();
        gap = gap.max(a.max_abs_diff(&b));
    }
    let pass = s.train_accuracy >= 0.9 && gap <= 1e-8 && minutes <= 10.0 && !test.is_empty();
    outcome(
        pass,
        format!(
            "train {} / test {}, train accuracy {:.3} (need 0.90), test accuracy {:.3}; \
             test logit gap under permutation {gap:.2e} (need 1e-8); {minutes:.1} min",
            ds.split(Split::Train).len(),
            test.len(),
            s.train_accuracy,
            s.test_accuracy
        ),
    )
}

fn editing(work: &Path, data: &Path) -> Outcome {
    let mut cfg = preset("edit.toml");
    cfg.paths.data = data.to_path_buf();
    cfg.paths.out = work.join("edit");
    let s = commands::train_edit(&cfg).expect("train-edit");
    let ratio = s.initial / s.best;
    let log = wsfn::metrics::read(&wsfn::commands::metrics_path(
        &cfg.paths.out,
        commands::EDITOR,
    ))
    .unwrap();
    let identity = log
        .iter()
        .find(|r| r.metric == "identity_mse")
        .map_or(f64::NAN, |r| r.value);

    let ck = wsfn::checkpoint::Checkpoint::load(&s.checkpoint).unwrap();
    let editor = commands::build_editor(&cfg).unwrap();
    let ds = dataset::load_dataset(data).unwrap();
    let mut gap: f64 = 0.0;
    let mut shift: f64 = f64::INFINITY;
    for (i, e) in ds.split(Split::Train).iter().take(16).enumerate() {
        let sigma = NeuronPermutation::random(e.net.spec(), &mut seeded(3000 + i as u64));
        let moved = SirenNetwork::new(sigma.apply(&e.net.weights).unwrap(), e.net.omega0).unwrap();
        shift = shift.min(moved.weights.max_abs_diff(&e.net.weights));
        let lhs = sigma
            .apply(
                &editor
                    .edited_net(&ck.params, &e.net, Precision::F32)
                    .unwrap()
                    .weights,
            )
            .unwrap();
        let rhs = editor
            .edited_net(&ck.params, &moved, Precision::F32)
            .unwrap()
            .weights;
        gap = gap.max(lhs.max_abs_diff(&rhs));
    }
    let pass = ratio >= 3.0 && s.steps <= 2000 && gap <= 1e-5 && shift > 0.0;
    outcome(
        pass,
        format!(
            "{} train nets, edit MSE {:.5} at init -> best {:.5} (last {:.5}), drop {ratio:.2}x (need 3x), \
             unedited MSE {identity:.5}; f32 equivariance gap {gap:.2e} (need 1e-5); {:.1} min",
            ds.split(Split::Train).len(),
            s.initial,
            s.best,
            s.last,
            s.seconds / 60.0
        ),
    )
}

fn sa_forward(sa: &SelfAttention, params: &ParamSet, u: &WeightSpaceFeature) -> WeightSpaceFeature {
    let tape = Tape::with_precision(Precision::F64);
    let p = params.bind_frozen(&tape);
    let x = WsVar::constant(&tape, u);
    sa.forward(&p, &x, None)
        .unwrap()
        .to_feature(&u.spec)
        .unwrap()
}

fn seconds_per_forward(n: usize, channels: usize) -> f64 {
    let spec = WeightSpaceSpec::new([n, n, n, n], channels).unwrap();
    let mut rng = seeded(n as u64);
    let sa = SelfAttention::new("sa", channels, 1);
    let mut params = ParamSet::new();
    sa.init(&mut params, &mut rng);
    let u = WeightSpaceFeature::random(&spec, 1.0, &mut rng);
    sa_forward(&sa, &params, &u);
    let reps = (4096 / (n * n)).max(2);
    (0..5)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(sa_forward(&sa, &params, &u));
            }
            t.elapsed().as_secs_f64() / reps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn cost_scaling() -> Outcome {
    let c = 4;
    let times: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| seconds_per_forward(n, c))
        .collect();
    let ratios = [times[1] / times[0], times[2] / times[1]];

    let big = WeightSpaceSpec::new([32, 32, 32, 32], c).unwrap();
    let dim = big.dim();
    let mut rng = seeded(9);
    let sa = SelfAttention::new("sa", c, 1);
    let mut params = ParamSet::new();
    sa.init(&mut params, &mut rng);
    let u = WeightSpaceFeature::random(&big, 1.0, &mut rng);
    let (_, rowcol_peak) = largest_allocation(|| sa_forward(&sa, &params, &u));
    let matrix = dim * dim * std::mem::size_of::<f64>();

    // The counter does see a dim² matrix when the exact term builds one.
    let small = WeightSpaceSpec::new([8, 8, 8], c).unwrap();
    let mut exact = SelfAttention::new("sa", c, 1);
    exact.term3 = Term3Mode::Exact;
    let mut ep = ParamSet::new();
    exact.init(&mut ep, &mut rng);
    let us = WeightSpaceFeature::random(&small, 1.0, &mut rng);
    let (_, exact_peak) = largest_allocation(|| sa_forward(&exact, &ep, &us));
    let small_matrix = small.dim() * small.dim() * std::mem::size_of::<f64>();

    let pass =
        ratios.iter().all(|&r| r <= 12.0) && rowcol_peak < matrix && exact_peak >= small_matrix;
    outcome(
        pass,
        format!(
            "forward {:.2e}/{:.2e}/{:.2e} s at n=8/16/32, ratios {:.2} and {:.2} (need <= 12); \
             rowcol largest allocation {} B vs dim^2 matrix {} B (dim {dim}); exact-mode control {} B >= {} B",
            times[0], times[1], times[2], ratios[0], ratios[1], rowcol_peak, matrix, exact_peak, small_matrix
        ),
    )
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temp dir");
    let out = work.path();
    let data = out.join("data");
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |id: usize, o: Outcome| {
        println!(
            "criterion {id:>2}: {} | {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, o));
    };

    report(1, property_suite(out, Suite::Equivariance, Some(300.0)));
    report(2, property_suite(out, Suite::Minimal, None));
    report(3, property_suite(out, Suite::Invariance, None));
    report(4, property_suite(out, Suite::Oracle, None));
    report(5, property_suite(out, Suite::Gradient, None));
    let (c6, encoder) = inr2array(out, &data);
    report(6, c6);
    report(7, classification(out, &data, &encoder));
    report(8, editing(out, &data));
    report(9, cost_scaling());
    report(10, negative_control(out));

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(id, _)| *id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
