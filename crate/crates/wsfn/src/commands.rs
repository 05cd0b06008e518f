//! The subcommands behind the `wsfn` binary.
//!
//! Every command takes a validated [`RunConfig`] and reads or writes under
//! `paths.data` and `paths.out`. Training commands share one loop that logs
//! metrics, evaluates every `train.eval_every` steps and writes a latest and
//! a best checkpoint.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use wsfn_core::data::{gen_signals, zoo, EditTransform, InrDataset, InrEntry, SignalSample, Split};
use wsfn_core::layers::Dropout;
use wsfn_core::models::classifier::{argmax, cross_entropy};
use wsfn_core::models::train::{self, Objective, TrainState};
use wsfn_core::models::{Editor, HeadKind, Inr2Array, LatentClassifier, SirenNetwork};
use wsfn_core::rng;
use wsfn_core::{
    Bound, NeuronPermutation, ParamSet, Precision, Tape, Tensor, Var, WeightSpaceFeature,
};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{self, SignalMeta, DATASET_VERSION};
use crate::error::{Error, Result};
use crate::exec::Threaded;
use crate::metrics::{self, MetricsLog};
use crate::ppm;
use crate::verify::{self, CheckRecord, Suite, VerifyOptions};

const SIGNAL_TAG: u64 = 0x5167;
const INIT_TAG: u64 = 0x1417;
const PERMUTE_TAG: u64 = 0x9e47;

pub const INR2ARRAY: &str = "inr2array";
pub const EDITOR: &str = "editor";
pub const CLASSIFIER: &str = "classifier";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

pub fn checkpoint_path(out: &Path, kind: &str) -> PathBuf {
    out.join(format!("{kind}.ckpt"))
}

pub fn best_checkpoint_path(out: &Path, kind: &str) -> PathBuf {
    out.join(format!("{kind}.best.ckpt"))
}

pub fn metrics_path(out: &Path, kind: &str) -> PathBuf {
    out.join(format!("{kind}.metrics.csv"))
}

// ---------------------------------------------------------------- verify

pub struct VerifyOutcome {
    pub advertised: usize,
    pub records: Vec<CheckRecord>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.records.len() == self.advertised && self.records.iter().all(|r| r.pass)
    }
}

/// Runs the selected suites and writes `verify.csv` under `paths.out`.
pub fn verify(
    cfg: &RunConfig,
    opts: &VerifyOptions,
    suites: &[Suite],
    quiet: bool,
) -> Result<VerifyOutcome> {
    let plan = verify::plan(opts, suites);
    let advertised = plan.count();
    if !quiet {
        eprintln!("running {advertised} checks");
    }
    let records = plan.run(|r| {
        if !r.pass {
            eprintln!("FAIL {r}");
        }
    });
    create_dir(&cfg.paths.out)?;
    let path = cfg.paths.out.join("verify.csv");
    let mut text = String::from(CheckRecord::csv_header());
    text.push('\n');
    for r in &records {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    fs::write(&path, text).map_err(Error::io(&path))?;
    Ok(VerifyOutcome {
        advertised,
        records,
    })
}

// ---------------------------------------------------------------- data

pub fn gen_data(cfg: &RunConfig) -> Result<Vec<SignalSample>> {
    let kind = cfg.signal_kind()?;
    if cfg.data.count == 0 {
        return Err(Error::Config("data.count must be positive".into()));
    }
    let signals = gen_signals(
        kind,
        cfg.data.count,
        cfg.data.size,
        &mut rng::derived(cfg.seed, SIGNAL_TAG),
    );
    let meta = SignalMeta {
        version: DATASET_VERSION,
        kind: kind.name().into(),
        size: cfg.data.size,
        seed: cfg.seed,
        count: cfg.data.count,
    };
    dataset::save_signals(&cfg.paths.data, &meta, &signals)?;
    Ok(signals)
}

/// Fits one SIREN per stored signal, in parallel, and writes the dataset.
pub fn fit_sirens(cfg: &RunConfig) -> Result<InrDataset> {
    let (_, signals) = dataset::load_signals(&cfg.paths.data)?;
    let zoo_cfg = cfg.zoo()?;
    let fits =
        Threaded::from_env().par_map(signals.len(), &|i| zoo::fit_one(&signals[i], &zoo_cfg, i));
    let fits = fits.into_iter().collect::<wsfn_core::Result<Vec<_>>>()?;
    let ds = zoo::assemble(&signals, fits, &zoo_cfg)?;
    dataset::save_dataset(&cfg.paths.data, &ds)?;
    Ok(ds)
}

fn load_data(cfg: &RunConfig) -> Result<(InrDataset, Vec<SignalSample>)> {
    let ds = dataset::load_dataset(&cfg.paths.data)?;
    let (_, signals) = dataset::load_signals(&cfg.paths.data)?;
    if ds.spec.layer_widths != cfg.data.widths {
        return Err(Error::Config(format!(
            "dataset holds SIRENs with widths {:?} but the config asks for {:?}",
            ds.spec.layer_widths, cfg.data.widths
        )));
    }
    Ok((ds, signals))
}

// ---------------------------------------------------------------- objectives

/// Patchwise reconstruction loss over a list of SIRENs.
pub struct ReconObjective<'a> {
    pub model: &'a Inr2Array,
    pub nets: Vec<&'a SirenNetwork>,
    pub targets: Vec<Tensor>,
}

impl<'a> ReconObjective<'a> {
    pub fn new(model: &'a Inr2Array, nets: Vec<&'a SirenNetwork>) -> Result<Self> {
        let targets = nets
            .iter()
            .map(|n| model.targets(n))
            .collect::<wsfn_core::Result<_>>()?;
        Ok(Self {
            model,
            nets,
            targets,
        })
    }
}

impl Objective for ReconObjective<'_> {
    fn len(&self) -> usize {
        self.nets.len()
    }

    fn loss<'t>(
        &self,
        p: &Bound<'t>,
        index: usize,
        dropout: Option<&Dropout>,
    ) -> wsfn_core::Result<Var<'t>> {
        self.model
            .loss(p, self.nets[index], &self.targets[index], dropout)
    }
}

/// Image-space MSE of edited SIRENs against transformed source images.
pub struct EditObjective<'a> {
    pub editor: &'a Editor,
    pub nets: Vec<&'a SirenNetwork>,
    pub targets: Vec<Tensor>,
}

impl Objective for EditObjective<'_> {
    fn len(&self) -> usize {
        self.nets.len()
    }

    fn loss<'t>(
        &self,
        p: &Bound<'t>,
        index: usize,
        dropout: Option<&Dropout>,
    ) -> wsfn_core::Result<Var<'t>> {
        self.editor
            .loss(p, self.nets[index], &self.targets[index], dropout)
    }
}

/// Cross-entropy of a latent classifier on precomputed latent arrays.
pub struct ClassifyObjective<'a> {
    pub classifier: &'a LatentClassifier,
    pub latents: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Objective for ClassifyObjective<'_> {
    fn len(&self) -> usize {
        self.latents.len()
    }

    fn loss<'t>(
        &self,
        p: &Bound<'t>,
        index: usize,
        dropout: Option<&Dropout>,
    ) -> wsfn_core::Result<Var<'t>> {
        let z = p.tape().constant(self.latents[index].clone());
        cross_entropy(self.classifier.forward(p, z, dropout)?, self.labels[index])
    }

    fn trainable(&self, name: &str) -> bool {
        name.starts_with("cls.")
    }
}

// ---------------------------------------------------------------- training loop

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub kind: String,
    pub steps: u64,
    /// Primary metric at step 0.
    pub initial: f64,
    pub last: f64,
    pub best: f64,
    pub checkpoint: PathBuf,
    pub seconds: f64,
}

fn check_finite(name: &str, value: f64, step: u64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(wsfn_core::Error::Diverged(format!("{name} is {value} at step {step}")).into())
    }
}

/// Trains `obj` from `params` (or the configured checkpoint), evaluating with
/// `eval` at step 0 and every `eval_every` steps. `eval` logs what it likes
/// and returns the primary metric, lower is better.
fn train_loop<O: Objective>(
    cfg: &RunConfig,
    kind: &str,
    obj: &O,
    params: ParamSet,
    mut eval: impl FnMut(&ParamSet, u64, &mut MetricsLog) -> Result<f64>,
) -> Result<TrainSummary> {
    let out = &cfg.paths.out;
    create_dir(out)?;
    let mpath = metrics_path(out, kind);
    let adam = cfg.adam();
    let mut state = match &cfg.paths.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.kind != kind {
                return Err(Error::Config(format!(
                    "{} holds a {} checkpoint, expected {kind}",
                    path.display(),
                    ck.kind
                )));
            }
            metrics::truncate_after(&mpath, ck.step)?;
            ck.into_state(adam)
        }
        None => {
            if mpath.exists() {
                fs::remove_file(&mpath).map_err(Error::io(&mpath))?;
            }
            TrainState::new(params, adam)
        }
    };
    let mut log = MetricsLog::open(&mpath)?;
    let tcfg = cfg.train_config();
    let every = cfg.train.eval_every.max(1);
    let rendered = cfg.render();
    let started = Instant::now();

    let initial = if state.step == 0 {
        let m = eval(&state.params, 0, &mut log)?;
        check_finite("evaluation metric", m, 0)?;
        state.offer_best(m);
        m
    } else {
        metrics::read(&mpath)?
            .iter()
            .find(|r| r.step == 0 && r.split == "eval" && r.metric == "objective")
            .map_or(f64::NAN, |r| r.value)
    };
    let mut last = initial;
    if state.step == 0 {
        log.log(0, "eval", "objective", initial)?;
    }

    let save = |state: &TrainState, metric: f64, path: &Path| -> Result<()> {
        let mut ck = Checkpoint::from_state(kind, rendered.clone(), state);
        ck.metrics.insert("objective".into(), metric);
        ck.save(path)
    };

    let exec = Threaded::from_env();
    let mut failure: Option<Error> = None;
    let outcome = train::run(obj, &mut state, &tcfg, &exec, |st, info| {
        let mut step = || -> Result<()> {
            log.log(info.step, "train", "loss", info.loss)?;
            if info.step % every == 0 || info.step == tcfg.steps {
                let m = eval(&st.params, info.step, &mut log)?;
                check_finite("evaluation metric", m, info.step)?;
                log.log(info.step, "eval", "objective", m)?;
                last = m;
                save(st, m, &checkpoint_path(out, kind))?;
                if st.offer_best(m) {
                    save(st, m, &best_checkpoint_path(out, kind))?;
                }
                eprintln!(
                    "{kind} step {} loss {:.5} eval {m:.5}",
                    info.step, info.loss
                );
            }
            Ok(())
        };
        step().map_err(|e| {
            let core = match &e {
                Error::Core(wsfn_core::Error::Diverged(m)) => wsfn_core::Error::Diverged(m.clone()),
                other => wsfn_core::Error::Data(other.to_string()),
            };
            failure = Some(e);
            core
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    outcome?;

    Ok(TrainSummary {
        kind: kind.into(),
        steps: state.step,
        initial,
        last,
        best: state.best.as_ref().map_or(last, |b| b.0),
        checkpoint: checkpoint_path(out, kind),
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn entries_in<'a>(ds: &'a InrDataset, splits: &[Split]) -> Vec<&'a InrEntry> {
    ds.entries
        .iter()
        .filter(|e| splits.contains(&e.split))
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

// ---------------------------------------------------------------- inr2array

pub fn build_inr2array(cfg: &RunConfig) -> Result<Inr2Array> {
    let mut c = cfg.inr2array()?;
    c.encoder.break_coupling = false;
    Ok(Inr2Array::new(c)?)
}

/// Fresh Inr2Array parameters, with input statistics from `nets`.
pub fn init_inr2array(
    cfg: &RunConfig,
    model: &Inr2Array,
    nets: &[&SirenNetwork],
) -> Result<ParamSet> {
    let mut params = ParamSet::new();
    model.init(&mut params, &mut rng::derived(cfg.seed, INIT_TAG))?;
    if cfg.nft.input_norm {
        let feats: Vec<&WeightSpaceFeature> = nets.iter().map(|n| &n.weights).collect();
        model.encoder.set_input_norm(&mut params, &feats)?;
    }
    Ok(params)
}

fn dump_reconstructions(
    dir: &Path,
    step: u64,
    model: &Inr2Array,
    params: &ParamSet,
    entries: &[&InrEntry],
) -> Result<()> {
    create_dir(dir)?;
    let (h, w) = (model.grid.h, model.grid.w);
    for e in entries {
        let original = e.net.render(h, w)?;
        let recon = model.render_reconstruction(params, &e.net)?;
        let pair = Tensor::concat(&[&original, &recon], 1)?;
        ppm::write(
            &dir.join(format!("step{step:06}_{:05}.ppm", e.source)),
            &pair,
        )?;
    }
    Ok(())
}

pub fn train_inr2array(cfg: &RunConfig) -> Result<TrainSummary> {
    let (ds, _) = load_data(cfg)?;
    let model = build_inr2array(cfg)?;
    let splits = cfg.splits()?;
    let train_entries = entries_in(&ds, &splits);
    if train_entries.is_empty() {
        return Err(Error::Config(format!(
            "no dataset entries in splits {:?}",
            cfg.inr2array.splits
        )));
    }
    let held: Vec<&InrEntry> = ds
        .entries
        .iter()
        .filter(|e| !splits.contains(&e.split))
        .collect();
    let nets: Vec<&SirenNetwork> = train_entries.iter().map(|e| &e.net).collect();
    let params = init_inr2array(cfg, &model, &nets)?;
    let obj = ReconObjective::new(&model, nets)?;
    let held_obj = ReconObjective::new(&model, held.iter().map(|e| &e.net).collect())?;
    let all: Vec<usize> = (0..obj.len()).collect();
    let held_all: Vec<usize> = (0..held_obj.len()).collect();
    let precision = cfg.precision();
    let dump_dir = cfg.paths.out.join("recon");
    let dump_from = if held.is_empty() {
        &train_entries
    } else {
        &held
    };
    let dumps: Vec<&InrEntry> = dump_from.iter().take(cfg.train.dumps).copied().collect();

    train_loop(cfg, INR2ARRAY, &obj, params, |p, step, log| {
        let loss = train::evaluate(&obj, p, &all, precision)?;
        log.log(step, "fit", "recon_loss", loss)?;
        if !held_all.is_empty() {
            log.log(
                step,
                "heldout",
                "recon_loss",
                train::evaluate(&held_obj, p, &held_all, precision)?,
            )?;
        }
        dump_reconstructions(&dump_dir, step, &model, p, &dumps)?;
        Ok(loss)
    })
}

// ---------------------------------------------------------------- editing

pub fn build_editor(cfg: &RunConfig) -> Result<Editor> {
    let size = cfg.data.size;
    Ok(Editor::new(
        cfg.nft(1, HeadKind::EquivariantDelta)?,
        (size, size),
    )?)
}

pub fn edit_targets(
    transform: EditTransform,
    entries: &[&InrEntry],
    signals: &[SignalSample],
) -> Result<Vec<Tensor>> {
    entries
        .iter()
        .map(|e| {
            let s = signals.get(e.source).ok_or_else(|| {
                Error::Config(format!(
                    "dataset refers to signal {} which does not exist",
                    e.source
                ))
            })?;
            Ok(transform.apply(&s.image)?)
        })
        .collect()
}

/// MSE of the unedited SIRENs against the edit targets.
pub fn identity_edit_mse(entries: &[&InrEntry], targets: &[Tensor]) -> Result<f64> {
    let mut v = Vec::new();
    for (e, t) in entries.iter().zip(targets) {
        let s = t.shape();
        let r = e.net.render(s[0], s[1])?;
        v.push(r.sub(t)?.data().iter().map(|x| x * x).sum::<f64>() / t.numel() as f64);
    }
    Ok(mean(&v))
}

pub fn train_edit(cfg: &RunConfig) -> Result<TrainSummary> {
    let (ds, signals) = load_data(cfg)?;
    let transform = cfg.transform()?;
    let editor = build_editor(cfg)?;
    let train_entries = ds.split(Split::Train);
    let test_entries = ds.split(Split::Test);
    if train_entries.is_empty() {
        return Err(Error::Config("dataset has no training entries".into()));
    }
    let obj = EditObjective {
        editor: &editor,
        nets: train_entries.iter().map(|e| &e.net).collect(),
        targets: edit_targets(transform, &train_entries, &signals)?,
    };
    let test_obj = EditObjective {
        editor: &editor,
        nets: test_entries.iter().map(|e| &e.net).collect(),
        targets: edit_targets(transform, &test_entries, &signals)?,
    };
    let mut params = ParamSet::new();
    editor
        .nft
        .init(&mut params, &mut rng::derived(cfg.seed, INIT_TAG));
    if cfg.nft.input_norm {
        let feats: Vec<&WeightSpaceFeature> = obj.nets.iter().map(|n| &n.weights).collect();
        editor.nft.set_input_norm(&mut params, &feats)?;
    }
    let all: Vec<usize> = (0..obj.len()).collect();
    let test_all: Vec<usize> = (0..test_obj.len()).collect();
    let precision = cfg.precision();
    let baseline = identity_edit_mse(&train_entries, &obj.targets)?;

    train_loop(cfg, EDITOR, &obj, params, |p, step, log| {
        let mse = train::evaluate(&obj, p, &all, precision)?;
        log.log(step, "train", "edit_mse", mse)?;
        if step == 0 {
            log.log(0, "train", "identity_mse", baseline)?;
        }
        if !test_all.is_empty() {
            log.log(
                step,
                "test",
                "edit_mse",
                train::evaluate(&test_obj, p, &test_all, precision)?,
            )?;
        }
        Ok(mse)
    })
}

// ---------------------------------------------------------------- classification

/// The Inr2Array an encoder checkpoint was trained as, with its parameters.
pub fn load_encoder(path: &Path) -> Result<(RunConfig, Inr2Array, ParamSet)> {
    let ck = Checkpoint::load(path)?;
    if ck.kind != INR2ARRAY {
        return Err(Error::Config(format!(
            "{} holds a {} checkpoint, expected {INR2ARRAY}",
            path.display(),
            ck.kind
        )));
    }
    let enc_cfg = RunConfig::parse(&ck.config)?;
    let model = build_inr2array(&enc_cfg)?;
    Ok((enc_cfg, model, ck.params))
}

pub fn encode_all(
    model: &Inr2Array,
    params: &ParamSet,
    nets: &[&SirenNetwork],
    precision: Precision,
) -> Result<Vec<Tensor>> {
    let out = Threaded::from_env().par_map(nets.len(), &|i| {
        model.encode_value(params, nets[i], precision)
    });
    Ok(out.into_iter().collect::<wsfn_core::Result<_>>()?)
}

pub fn build_classifier(cfg: &RunConfig, classes: usize) -> Result<LatentClassifier> {
    let c = cfg.classifier(cfg.inr2array.latents, cfg.inr2array.latent_dim, classes);
    Ok(LatentClassifier::new(c)?)
}

/// Class logits of `net` under a classifier checkpoint's parameters, which
/// hold the frozen encoder alongside the classifier.
pub fn classify_logits(
    model: &Inr2Array,
    classifier: &LatentClassifier,
    params: &ParamSet,
    net: &SirenNetwork,
    precision: Precision,
) -> Result<Tensor> {
    let tape = Tape::with_precision(precision);
    let p = params.bind_frozen(&tape);
    let z = model.encode(&p, net, None)?;
    Ok((*classifier.forward(&p, z, None)?.value()).clone())
}

fn accuracy(
    classifier: &LatentClassifier,
    params: &ParamSet,
    latents: &[Tensor],
    labels: &[usize],
    precision: Precision,
) -> Result<f64> {
    let mut hits = 0usize;
    for (z, &y) in latents.iter().zip(labels) {
        let tape = Tape::with_precision(precision);
        let p = params.bind_frozen(&tape);
        let logits = classifier
            .forward(&p, tape.constant(z.clone()), None)?
            .value();
        hits += usize::from(argmax(&logits) == y);
    }
    Ok(hits as f64 / latents.len().max(1) as f64)
}

/// Encoder settings copied into the classifier's config so the checkpoint
/// alone describes the full model.
fn with_encoder_sections(cfg: &RunConfig, enc: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.data.widths = enc.data.widths.clone();
    c.data.size = enc.data.size;
    c.data.omega0 = enc.data.omega0;
    c.nft = enc.nft.clone();
    c.inr2array = enc.inr2array.clone();
    c.term3 = enc.term3;
    c.scaled = enc.scaled;
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySummary {
    pub train: TrainSummary,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn train_classify(cfg: &RunConfig) -> Result<ClassifySummary> {
    let enc_path = cfg
        .paths
        .encoder
        .clone()
        .ok_or_else(|| Error::Config("train-classify needs paths.encoder".into()))?;
    let (enc_cfg, model, enc_params) = load_encoder(&enc_path)?;
    let cfg = with_encoder_sections(cfg, &enc_cfg);
    let (ds, _) = load_data(&cfg)?;
    let precision = cfg.precision();
    let train_entries = ds.split(Split::Train);
    let test_entries = ds.split(Split::Test);
    if train_entries.is_empty() {
        return Err(Error::Config("dataset has no training entries".into()));
    }
    let classes = ds.entries.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    let classifier = build_classifier(&cfg, classes)?;

    let latents = |entries: &[&InrEntry]| {
        encode_all(
            &model,
            &enc_params,
            &entries.iter().map(|e| &e.net).collect::<Vec<_>>(),
            precision,
        )
    };
    let obj = ClassifyObjective {
        classifier: &classifier,
        latents: latents(&train_entries)?,
        labels: train_entries.iter().map(|e| e.label).collect(),
    };
    let test_latents = latents(&test_entries)?;
    let test_labels: Vec<usize> = test_entries.iter().map(|e| e.label).collect();

    let mut params = ParamSet::new();
    classifier.init(&mut params, &mut rng::derived(cfg.seed, INIT_TAG));
    for (name, t) in enc_params.iter() {
        params.insert_frozen(name.clone(), t.clone());
    }
    let all: Vec<usize> = (0..obj.len()).collect();
    let mut accs = (0.0, 0.0);

    let summary = train_loop(&cfg, CLASSIFIER, &obj, params, |p, step, log| {
        let loss = train::evaluate(&obj, p, &all, precision)?;
        let train_acc = accuracy(&classifier, p, &obj.latents, &obj.labels, precision)?;
        let test_acc = accuracy(&classifier, p, &test_latents, &test_labels, precision)?;
        log.log(step, "train", "xent", loss)?;
        log.log(step, "train", "accuracy", train_acc)?;
        if !test_latents.is_empty() {
            log.log(step, "test", "accuracy", test_acc)?;
        }
        accs = (train_acc, test_acc);
        Ok(loss)
    })?;
    Ok(ClassifySummary {
        train: summary,
        train_accuracy: accs.0,
        test_accuracy: accs.1,
    })
}

// ---------------------------------------------------------------- encode

pub struct EncodedEntry {
    pub source: usize,
    pub split: Split,
    pub label: usize,
    pub latent: Tensor,
}

/// Encodes every dataset entry with the encoder at `paths.encoder` (or
/// `paths.checkpoint`), optionally after a random hidden-neuron permutation of
/// each net, and writes `latents.txt` under `paths.out`.
pub fn encode(cfg: &RunConfig, permute: bool) -> Result<Vec<EncodedEntry>> {
    let path = cfg
        .paths
        .encoder
        .clone()
        .or_else(|| cfg.paths.checkpoint.clone())
        .ok_or_else(|| Error::Config("encode needs paths.encoder".into()))?;
    let (enc_cfg, model, params) = load_encoder(&path)?;
    let ds = dataset::load_dataset(&cfg.paths.data)?;
    let nets: Vec<SirenNetwork> = ds
        .entries
        .iter()
        .map(|e| {
            if !permute {
                return Ok(e.net.clone());
            }
            let mut r = rng::derived(cfg.seed, PERMUTE_TAG + e.source as u64);
            let sigma = NeuronPermutation::random_hidden(e.net.spec(), &mut r);
            Ok(SirenNetwork::new(
                sigma.apply(&e.net.weights)?,
                e.net.omega0,
            )?)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&SirenNetwork> = nets.iter().collect();
    let latents = encode_all(&model, &params, &refs, cfg.precision())?;
    let out: Vec<EncodedEntry> = ds
        .entries
        .iter()
        .zip(latents)
        .map(|(e, latent)| EncodedEntry {
            source: e.source,
            split: e.split,
            label: e.label,
            latent,
        })
        .collect();

    create_dir(&cfg.paths.out)?;
    let file = cfg.paths.out.join("latents.txt");
    let m = enc_cfg.inr2array.latents;
    let d = enc_cfg.inr2array.latent_dim;
    let mut text = format!("# source split label then {m}x{d} latent values, row-major\n");
    for e in &out {
        let values: Vec<String> = e.latent.data().iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&format!(
            "{} {} {} {}\n",
            e.source,
            e.split.name(),
            e.label,
            values.join(" ")
        ));
    }
    fs::write(&file, text).map_err(Error::io(&file))?;
    Ok(out)
}

// ---------------------------------------------------------------- eval

/// Evaluates the checkpoint at `paths.checkpoint` on every split, logs to
/// `eval.metrics.csv` and returns `"split/metric"` values.
pub fn eval(cfg: &RunConfig) -> Result<BTreeMap<String, f64>> {
    let path = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config("eval needs paths.checkpoint".into()))?;
    let ck = Checkpoint::load(&path)?;
    let ck_cfg = RunConfig::parse(&ck.config)?;
    let mut run_cfg = ck_cfg.clone();
    run_cfg.paths.data = cfg.paths.data.clone();
    run_cfg.f32 = cfg.f32;
    let (ds, signals) = load_data(&run_cfg)?;
    let precision = cfg.precision();
    let mut results = BTreeMap::new();
    for split in Split::ALL {
        let entries = ds.split(split);
        if entries.is_empty() {
            continue;
        }
        let idx: Vec<usize> = (0..entries.len()).collect();
        let nets: Vec<&SirenNetwork> = entries.iter().map(|e| &e.net).collect();
        let name = split.name();
        match ck.kind.as_str() {
            INR2ARRAY => {
                let model = build_inr2array(&run_cfg)?;
                let obj = ReconObjective::new(&model, nets)?;
                results.insert(
                    format!("{name}/recon_loss"),
                    train::evaluate(&obj, &ck.params, &idx, precision)?,
                );
            }
            EDITOR => {
                let editor = build_editor(&run_cfg)?;
                let targets = edit_targets(run_cfg.transform()?, &entries, &signals)?;
                results.insert(
                    format!("{name}/identity_mse"),
                    identity_edit_mse(&entries, &targets)?,
                );
                let obj = EditObjective {
                    editor: &editor,
                    nets,
                    targets,
                };
                results.insert(
                    format!("{name}/edit_mse"),
                    train::evaluate(&obj, &ck.params, &idx, precision)?,
                );
            }
            CLASSIFIER => {
                let model = build_inr2array(&run_cfg)?;
                let classes = ds.entries.iter().map(|e| e.label).max().unwrap_or(0) + 1;
                let classifier = build_classifier(&run_cfg, classes)?;
                let mut hits = 0usize;
                for e in &entries {
                    let logits =
                        classify_logits(&model, &classifier, &ck.params, &e.net, precision)?;
                    hits += usize::from(argmax(&logits) == e.label);
                }
                results.insert(
                    format!("{name}/accuracy"),
                    hits as f64 / entries.len() as f64,
                );
            }
            other => {
                return Err(Error::Config(format!(
                    "cannot evaluate a {other} checkpoint"
                )))
            }
        }
    }
    create_dir(&cfg.paths.out)?;
    let mut log = MetricsLog::open(&metrics_path(&cfg.paths.out, "eval"))?;
    for (key, v) in &results {
        let (split, metric) = key.split_once('/').expect("keys are split/metric");
        log.log(ck.step, split, &format!("{}_{metric}", ck.kind), *v)?;
    }
    Ok(results)
}

// ---------------------------------------------------------------- report

/// Latest value of every metric in each `*.metrics.csv` under `paths.out`,
/// as a plain-text table. Also written to `report.txt`.
pub fn report(cfg: &RunConfig) -> Result<String> {
    let out = &cfg.paths.out;
    let mut logs: Vec<PathBuf> = fs::read_dir(out)
        .map_err(Error::io(out))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".metrics.csv"))
        .collect();
    logs.sort();
    if logs.is_empty() {
        return Err(Error::Config(format!(
            "no metrics logs under {}",
            out.display()
        )));
    }
    let mut text = format!(
        "{:<12} {:>8} {:<8} {:<16} {:>14}\n",
        "run", "step", "split", "metric", "value"
    );
    for path in &logs {
        let name = path
            .file_name()
            .map(|n| {
                n.to_string_lossy()
                    .trim_end_matches(".metrics.csv")
                    .to_string()
            })
            .unwrap_or_default();
        for r in metrics::latest(&metrics::read(path)?) {
            text.push_str(&format!(
                "{name:<12} {:>8} {:<8} {:<16} {:>14.6}\n",
                r.step, r.split, r.metric, r.value
            ));
        }
    }
    let file = out.join("report.txt");
    fs::write(&file, &text).map_err(Error::io(&file))?;
    Ok(text)
}
