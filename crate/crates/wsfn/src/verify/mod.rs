//! Self-contained property suites: equivariance, invariance, minimal
//! equivariance, oracle equivalence and gradient fidelity.
//!
//! Checks are planned up front so the advertised count is known before any
//! of them run. Each plan entry produces a fixed number of records.

pub mod oracle;

use std::fmt;

use wsfn_core::autodiff::{Tape, Var};
use wsfn_core::gradcheck::check_params;
use wsfn_core::layers::minimal::MIN_FALSE_SYMMETRY_GAP;
use wsfn_core::layers::{
    minimal_equivariance_suite, Block, ConvAdapter, CrossAttention, FourierLift, LayerEnc,
    SelfAttention, Term3Mode, WsVar,
};
use wsfn_core::models::{
    DecoderInit, HeadKind, Inr2Array, Inr2ArrayConfig, Nft, NftConfig, SirenNetwork,
};
use wsfn_core::rng::{self, WsRng};
use wsfn_core::{
    Bound, NeuronPermutation, ParamSet, Precision, Result, Tensor, WeightSpaceFeature,
    WeightSpaceSpec,
};

pub const F64_TOL: f64 = 1e-10;
pub const F32_TOL: f64 = 1e-4;
pub const BLOCK_GRAD_TOL: f64 = 1e-4;
pub const MODEL_GRAD_TOL: f64 = 1e-3;
const GRAD_COORDS: usize = 5;

pub const EQUIVARIANCE_SPECS: [&[usize]; 3] = [&[2, 3, 2], &[2, 3, 4, 2], &[3, 3, 3, 3]];
const CHANNELS: [usize; 3] = [1, 2, 8];
const HEADS: [usize; 2] = [1, 2];
const MODES: [Term3Mode; 2] = [Term3Mode::Exact, Term3Mode::RowColSum];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Pass when the achieved value is at most the tolerance.
    AtMost,
    /// Pass when the achieved value is at least the tolerance.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub direction: Direction,
    pub tolerance: f64,
    pub achieved: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn csv_header() -> &'static str {
        "name,direction,tolerance,achieved,pass"
    }
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::AtMost => "le",
            Direction::AtLeast => "ge",
        };
        write!(
            f,
            "{},{dir},{:e},{:e},{}",
            self.name, self.tolerance, self.achieved, self.pass
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub precision: Precision,
    /// `None` sweeps both settings.
    pub scaled: Option<bool>,
    /// `None` sweeps both modes.
    pub term3: Option<Term3Mode>,
    /// Negative control: mis-couples adjacent layers inside self-attention.
    pub break_coupling: bool,
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            precision: Precision::F64,
            scaled: None,
            term3: None,
            break_coupling: false,
            trials: 20,
            seed: 0,
        }
    }
}

impl VerifyOptions {
    pub fn tolerance(&self) -> f64 {
        match self.precision {
            Precision::F64 => F64_TOL,
            Precision::F32 => F32_TOL,
        }
    }

    fn scales(&self) -> Vec<bool> {
        self.scaled.map_or(vec![true, false], |s| vec![s])
    }

    fn modes(&self) -> Vec<Term3Mode> {
        self.term3.map_or(MODES.to_vec(), |m| vec![m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Equivariance,
    Invariance,
    Minimal,
    Oracle,
    Gradient,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Equivariance,
        Suite::Invariance,
        Suite::Minimal,
        Suite::Oracle,
        Suite::Gradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Equivariance => "equivariance",
            Suite::Invariance => "invariance",
            Suite::Minimal => "minimal",
            Suite::Oracle => "oracle",
            Suite::Gradient => "gradient",
        }
    }
}

type Thunk = Box<dyn FnOnce(&mut WsRng) -> Result<Vec<f64>>>;

/// A group of checks computed together.
pub struct Planned {
    pub suite: Suite,
    checks: Vec<(String, Direction, f64)>,
    thunk: Thunk,
}

pub struct Plan {
    pub groups: Vec<Planned>,
    seed: u64,
}

impl Plan {
    pub fn count(&self) -> usize {
        self.groups.iter().map(|g| g.checks.len()).sum()
    }

    /// Runs every group, calling `each` on each record as it completes.
    pub fn run(self, mut each: impl FnMut(&CheckRecord)) -> Vec<CheckRecord> {
        let mut out = Vec::with_capacity(self.count());
        for (n, group) in self.groups.into_iter().enumerate() {
            let mut r = rng::derived(self.seed, n as u64);
            let values = (group.thunk)(&mut r);
            for (k, (name, direction, tolerance)) in group.checks.into_iter().enumerate() {
                let achieved = match &values {
                    Ok(v) => v.get(k).copied().unwrap_or(f64::NAN),
                    Err(_) => f64::NAN,
                };
                let pass = match direction {
                    Direction::AtMost => achieved <= tolerance,
                    Direction::AtLeast => achieved >= tolerance,
                };
                let name = match &values {
                    Err(e) => format!("{name} (error: {e})"),
                    Ok(_) => name,
                };
                let rec = CheckRecord {
                    name,
                    direction,
                    tolerance,
                    achieved,
                    pass,
                };
                each(&rec);
                out.push(rec);
            }
        }
        out
    }
}

fn spec_name(widths: &[usize]) -> String {
    widths
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn scale_name(s: bool) -> &'static str {
    if s {
        "scaled"
    } else {
        "unscaled"
    }
}

type WsFn<'a> = dyn for<'t> Fn(&Bound<'t>, &WsVar<'t>) -> Result<WsVar<'t>> + 'a;
type InvFn<'a> = dyn for<'t> Fn(&Bound<'t>, &WsVar<'t>) -> Result<Var<'t>> + 'a;

fn apply_ws(
    params: &ParamSet,
    precision: Precision,
    u: &WeightSpaceFeature,
    f: &WsFn<'_>,
) -> Result<WeightSpaceFeature> {
    let tape = Tape::with_precision(precision);
    let p = params.bind_frozen(&tape);
    let out = f(&p, &WsVar::constant(&tape, u))?;
    if out
        .weights
        .iter()
        .zip(&u.weights)
        .all(|(o, i)| o.shape() == i.shape())
    {
        out.to_feature(&u.spec)
    } else {
        out.value()
    }
}

fn apply_inv(
    params: &ParamSet,
    precision: Precision,
    u: &WeightSpaceFeature,
    f: &InvFn<'_>,
) -> Result<Tensor> {
    let tape = Tape::with_precision(precision);
    let p = params.bind_frozen(&tape);
    Ok((*f(&p, &WsVar::constant(&tape, u))?.value()).clone())
}

fn draw_sigma(spec: &WeightSpaceSpec, hidden_only: bool, rng: &mut WsRng) -> NeuronPermutation {
    if hidden_only {
        NeuronPermutation::random_hidden(spec, rng)
    } else {
        NeuronPermutation::random(spec, rng)
    }
}

/// Worst `‖σ·f(U) − f(σU)‖_∞` over `trials` random inputs and permutations.
pub fn equivariance_gap(
    spec: &WeightSpaceSpec,
    params: &ParamSet,
    precision: Precision,
    trials: usize,
    hidden_only: bool,
    rng: &mut WsRng,
    f: &WsFn<'_>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u = WeightSpaceFeature::random(spec, 1.0, rng);
        let sigma = draw_sigma(spec, hidden_only, rng);
        let lhs = sigma.apply(&apply_ws(params, precision, &u, f)?)?;
        let rhs = apply_ws(params, precision, &sigma.apply(&u)?, f)?;
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    Ok(worst)
}

/// Worst `‖f(σU) − f(U)‖_∞` over `trials` random inputs and permutations.
pub fn invariance_gap(
    spec: &WeightSpaceSpec,
    params: &ParamSet,
    precision: Precision,
    trials: usize,
    hidden_only: bool,
    rng: &mut WsRng,
    f: &InvFn<'_>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u = WeightSpaceFeature::random(spec, 1.0, rng);
        let sigma = draw_sigma(spec, hidden_only, rng);
        let a = apply_inv(params, precision, &u, f)?;
        let b = apply_inv(params, precision, &sigma.apply(&u)?, f)?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    Ok(worst)
}

fn sa_layer(c: usize, heads: usize, term3: Term3Mode, scaled: bool, broken: bool) -> SelfAttention {
    let mut sa = SelfAttention::new("sa", c, heads);
    sa.term3 = term3;
    sa.scaled = scaled;
    sa.break_coupling = broken;
    sa
}

fn block_layer(c: usize, heads: usize, term3: Term3Mode, scaled: bool, broken: bool) -> Block {
    let mut b = Block::new("block", c, heads, 2 * c);
    b.sa = {
        let mut sa = sa_layer(c, heads, term3, scaled, broken);
        sa.prefix = b.sa.prefix.clone();
        sa
    };
    b
}

fn nft_config(
    num_layers: usize,
    head: HeadKind,
    heads: usize,
    term3: Term3Mode,
    scaled: bool,
    broken: bool,
) -> NftConfig {
    let mut c = NftConfig::new(1, num_layers, head);
    c.num_blocks = 2;
    c.channels = 8;
    c.mlp_hidden = 16;
    c.heads = heads;
    c.fourier_size = 4;
    c.term3 = term3;
    c.scaled = scaled;
    c.break_coupling = broken;
    c
}

fn conv_filters(num_layers: usize) -> Vec<usize> {
    (0..num_layers)
        .map(|i| if i % 2 == 0 { 3 } else { 5 })
        .collect()
}

fn equivariance_checks(opts: &VerifyOptions, plan: &mut Vec<Planned>) {
    let (prec, tol, trials, broken) = (
        opts.precision,
        opts.tolerance(),
        opts.trials,
        opts.break_coupling,
    );
    let mut add = |name: String, thunk: Thunk| {
        plan.push(Planned {
            suite: Suite::Equivariance,
            checks: vec![(format!("equivariance/{name}"), Direction::AtMost, tol)],
            thunk,
        });
    };
    for widths in EQUIVARIANCE_SPECS {
        let sn = spec_name(widths);
        let l = widths.len() - 1;
        for c in CHANNELS {
            let spec = WeightSpaceSpec::new(widths, c).expect("valid sweep spec");
            let s = spec.clone();
            add(
                format!("layer_enc/{sn}/c{c}"),
                Box::new(move |r| {
                    let enc = LayerEnc::new("enc", l, c);
                    let mut p = ParamSet::new();
                    enc.init(&mut p, r);
                    Ok(vec![equivariance_gap(
                        &s,
                        &p,
                        prec,
                        trials,
                        false,
                        r,
                        &|b, u| enc.forward(b, u),
                    )?])
                }),
            );
            let s = spec.clone();
            add(
                format!("fourier/{sn}/c{c}"),
                Box::new(move |r| {
                    let lift = FourierLift::new("fourier.B", c, 4, 3.0);
                    let mut p = ParamSet::new();
                    lift.init(&mut p, r);
                    Ok(vec![equivariance_gap(
                        &s,
                        &p,
                        prec,
                        trials,
                        false,
                        r,
                        &|b, u| lift.forward(b, u),
                    )?])
                }),
            );
            for h in HEADS {
                if c % h != 0 || (c == 1 && h > 1) {
                    continue;
                }
                for mode in opts.modes() {
                    for scaled in opts.scales() {
                        let tag = format!("{sn}/c{c}/h{h}/{}/{}", mode.name(), scale_name(scaled));
                        let s = spec.clone();
                        add(
                            format!("sa/{tag}"),
                            Box::new(move |r| {
                                let sa = sa_layer(c, h, mode, scaled, broken);
                                let mut p = ParamSet::new();
                                sa.init(&mut p, r);
                                Ok(vec![equivariance_gap(
                                    &s,
                                    &p,
                                    prec,
                                    trials,
                                    false,
                                    r,
                                    &|b, u| sa.forward(b, u, None),
                                )?])
                            }),
                        );
                        let s = spec.clone();
                        add(
                            format!("block/{tag}"),
                            Box::new(move |r| {
                                let block = block_layer(c, h, mode, scaled, broken);
                                let mut p = ParamSet::new();
                                block.init(&mut p, r);
                                Ok(vec![equivariance_gap(
                                    &s,
                                    &p,
                                    prec,
                                    trials,
                                    false,
                                    r,
                                    &|b, u| block.forward(b, u, None),
                                )?])
                            }),
                        );
                    }
                }
            }
        }
        for mode in opts.modes() {
            for scaled in opts.scales() {
                let tag = format!("{sn}/{}/{}", mode.name(), scale_name(scaled));
                add(
                    format!(
                        "conv/{sn}/k{}/{}/{}",
                        spec_name(&conv_filters(l)),
                        mode.name(),
                        scale_name(scaled)
                    ),
                    Box::new(move |r| {
                        let spec = WeightSpaceSpec::conv(widths, conv_filters(l), 2)?;
                        let adapter = ConvAdapter::new("conv", &spec, 4);
                        let block = block_layer(4, 2, mode, scaled, broken);
                        let mut p = ParamSet::new();
                        adapter.init(&mut p, r);
                        block.init(&mut p, r);
                        let gap = equivariance_gap(&spec, &p, prec, trials, false, r, &|b, u| {
                            let x = adapter.project(b, u)?;
                            adapter.unproject(b, &block.forward(b, &x, None)?)
                        })?;
                        Ok(vec![gap])
                    }),
                );
                for h in HEADS {
                    add(
                        format!("nft/{tag}/h{h}"),
                        Box::new(move |r| {
                            let spec = WeightSpaceSpec::new(widths, 1)?;
                            let nft = Nft::new(nft_config(
                                l,
                                HeadKind::EquivariantDelta,
                                h,
                                mode,
                                scaled,
                                broken,
                            ))?;
                            let mut p = ParamSet::new();
                            nft.init(&mut p, r);
                            Ok(vec![equivariance_gap(
                                &spec,
                                &p,
                                prec,
                                trials,
                                false,
                                r,
                                &|b, u| nft.forward(b, u, None)?.delta(),
                            )?])
                        }),
                    );
                }
                add(
                    format!("nft_io_enc/{tag}"),
                    Box::new(move |r| {
                        let spec = WeightSpaceSpec::new(widths, 1)?;
                        let mut cfg =
                            nft_config(l, HeadKind::EquivariantDelta, 2, mode, scaled, broken);
                        cfg.io_enc = Some((widths[0], widths[l]));
                        cfg.layer_enc_per_block = true;
                        let nft = Nft::new(cfg)?;
                        let mut p = ParamSet::new();
                        nft.init(&mut p, r);
                        Ok(vec![equivariance_gap(
                            &spec,
                            &p,
                            prec,
                            trials,
                            true,
                            r,
                            &|b, u| nft.forward(b, u, None)?.delta(),
                        )?])
                    }),
                );
            }
        }
    }
}

fn invariance_checks(opts: &VerifyOptions, plan: &mut Vec<Planned>) {
    let (prec, tol, trials, broken) = (
        opts.precision,
        opts.tolerance(),
        opts.trials,
        opts.break_coupling,
    );
    let mut add = |name: String, thunk: Thunk| {
        plan.push(Planned {
            suite: Suite::Invariance,
            checks: vec![(format!("invariance/{name}"), Direction::AtMost, tol)],
            thunk,
        });
    };
    for widths in EQUIVARIANCE_SPECS {
        let sn = spec_name(widths);
        let l = widths.len() - 1;
        for c in CHANNELS {
            for scaled in opts.scales() {
                add(
                    format!("ca/{sn}/c{c}/{}", scale_name(scaled)),
                    Box::new(move |r| {
                        let spec = WeightSpaceSpec::new(widths, c)?;
                        let mut ca = CrossAttention::new("ca", c, 3, 4);
                        ca.scaled = scaled;
                        let mut p = ParamSet::new();
                        ca.init(&mut p, r);
                        Ok(vec![invariance_gap(
                            &spec,
                            &p,
                            prec,
                            trials,
                            false,
                            r,
                            &|b, u| ca.forward(b, u, None),
                        )?])
                    }),
                );
            }
        }
        for mode in opts.modes() {
            for scaled in opts.scales() {
                for h in HEADS {
                    let tag = format!("{sn}/{}/{}/h{h}", mode.name(), scale_name(scaled));
                    let heads = [
                        (
                            "nft_scalar",
                            HeadKind::InvariantScalar {
                                m: 3,
                                d: 4,
                                outputs: 2,
                            },
                        ),
                        ("nft_array", HeadKind::InvariantArray { m: 3, d: 4 }),
                    ];
                    for (kind, head) in heads {
                        add(
                            format!("{kind}/{tag}"),
                            Box::new(move |r| {
                                let spec = WeightSpaceSpec::new(widths, 1)?;
                                let nft = Nft::new(nft_config(l, head, h, mode, scaled, broken))?;
                                let mut p = ParamSet::new();
                                nft.init(&mut p, r);
                                Ok(vec![invariance_gap(
                                    &spec,
                                    &p,
                                    prec,
                                    trials,
                                    false,
                                    r,
                                    &|b, u| nft.forward(b, u, None)?.var(),
                                )?])
                            }),
                        );
                    }
                }
            }
        }
    }
}

fn minimal_checks(opts: &VerifyOptions, plan: &mut Vec<Planned>) {
    let trials = opts.trials;
    for widths in EQUIVARIANCE_SPECS {
        let sn = spec_name(widths);
        for mode in opts.modes() {
            for scaled in opts.scales() {
                let tag = format!("minimal/{sn}/{}/{}", mode.name(), scale_name(scaled));
                let checks = vec![
                    (
                        format!("{tag}/true_permutations"),
                        Direction::AtMost,
                        F64_TOL,
                    ),
                    (
                        format!("{tag}/cross_layer"),
                        Direction::AtLeast,
                        MIN_FALSE_SYMMETRY_GAP,
                    ),
                    (
                        format!("{tag}/row_col_decoupled"),
                        Direction::AtLeast,
                        MIN_FALSE_SYMMETRY_GAP,
                    ),
                    (
                        format!("{tag}/adjacent_decoupled"),
                        Direction::AtLeast,
                        MIN_FALSE_SYMMETRY_GAP,
                    ),
                ];
                let names: Vec<String> = checks
                    .iter()
                    .map(|c| c.0.rsplit('/').next().unwrap_or_default().to_string())
                    .collect();
                plan.push(Planned {
                    suite: Suite::Minimal,
                    checks,
                    thunk: Box::new(move |r| {
                        let spec = WeightSpaceSpec::new(widths, 1)?;
                        let records = minimal_equivariance_suite(&spec, mode, scaled, trials, r)?;
                        Ok(names
                            .iter()
                            .map(|n| {
                                records
                                    .iter()
                                    .find(|g| &g.name == n)
                                    .map_or(f64::NAN, |g| g.gap)
                            })
                            .collect())
                    }),
                });
            }
        }
    }
}

fn oracle_checks(opts: &VerifyOptions, plan: &mut Vec<Planned>) {
    let (prec, tol, broken) = (opts.precision, opts.tolerance(), opts.break_coupling);
    let specs: [&[usize]; 2] = [&[1, 2, 1], &[2, 3, 2]];
    for widths in specs {
        for (c, h) in [(1, 1), (2, 1), (2, 2)] {
            for mode in opts.modes() {
                for scaled in opts.scales() {
                    for identity in [false, true] {
                        let name = format!(
                            "oracle/{}/c{c}/h{h}/{}/{}/{}",
                            spec_name(widths),
                            mode.name(),
                            scale_name(scaled),
                            if identity { "identity" } else { "random" }
                        );
                        plan.push(Planned {
                            suite: Suite::Oracle,
                            checks: vec![(name, Direction::AtMost, tol)],
                            thunk: Box::new(move |r| {
                                let spec = WeightSpaceSpec::new(widths, c)?;
                                let sa = sa_layer(c, h, mode, scaled, broken);
                                let mut p = ParamSet::new();
                                if identity {
                                    sa.init_identity(&mut p);
                                } else {
                                    sa.init(&mut p, r);
                                }
                                let u = WeightSpaceFeature::random(&spec, 1.0, r);
                                let fast = apply_ws(&p, prec, &u, &|b, x| sa.forward(b, x, None))?;
                                let theta = [p.get("sa.q")?, p.get("sa.k")?, p.get("sa.v")?];
                                let slow = oracle::self_attention(&u, theta, h, mode, scaled);
                                Ok(vec![fast.max_abs_diff(&slow)])
                            }),
                        });
                    }
                }
            }
        }
    }
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output entry matters.
fn probe_loss<'t>(out: &WsVar<'t>, probe: &WeightSpaceFeature) -> Result<Var<'t>> {
    let tape = out.weights[0].tape();
    let mut total = tape.constant(Tensor::scalar(0.0));
    for (x, r) in out
        .weights
        .iter()
        .chain(&out.biases)
        .zip(probe.weights.iter().chain(&probe.biases))
    {
        total = total.add(x.mul(tape.constant(r.clone()))?.sum())?;
    }
    Ok(total)
}

fn tiny_inr2array() -> Result<Inr2ArrayConfig> {
    let target = WeightSpaceSpec::new([2, 4, 1], 1)?;
    let mut encoder = NftConfig::new(1, 2, HeadKind::InvariantArray { m: 4, d: 4 });
    encoder.num_blocks = 1;
    encoder.channels = 4;
    encoder.mlp_hidden = 8;
    encoder.fourier_size = 2;
    Ok(Inr2ArrayConfig {
        target,
        encoder,
        latents: 4,
        latent_dim: 4,
        decoder_hidden: 8,
        decoder_init: DecoderInit::SirenBias,
        image: (4, 4),
        patches: (2, 2),
        omega0: 30.0,
    })
}

fn gradient_checks(opts: &VerifyOptions, plan: &mut Vec<Planned>) {
    let seed = opts.seed;
    let broken = opts.break_coupling;
    for mode in opts.modes() {
        let spec = WeightSpaceSpec::new([2, 3, 2], 4).expect("valid spec");
        let block = block_layer(4, 2, mode, true, broken);
        let mut params = ParamSet::new();
        block.init(&mut params, &mut rng::derived(seed, 1 << 32));
        let names = params.trainable_names();
        plan.push(Planned {
            suite: Suite::Gradient,
            checks: names
                .iter()
                .map(|n| {
                    (
                        format!("gradient/block/{}/{n}", mode.name()),
                        Direction::AtMost,
                        BLOCK_GRAD_TOL,
                    )
                })
                .collect(),
            thunk: Box::new(move |r| {
                let u = WeightSpaceFeature::random(&spec, 1.0, r);
                let probe = WeightSpaceFeature::random(&spec, 1.0, r);
                let records = check_params(&params, GRAD_COORDS, r, |p| {
                    let x = WsVar::constant(p.tape(), &u);
                    probe_loss(&block.forward(p, &x, None)?, &probe)
                })?;
                Ok(names
                    .iter()
                    .map(|n| {
                        records
                            .iter()
                            .find(|g| &g.name == n)
                            .map_or(f64::NAN, |g| g.rel_err)
                    })
                    .collect())
            }),
        });
    }

    let model = Inr2Array::new(tiny_inr2array().expect("valid config")).expect("valid model");
    let mut params = ParamSet::new();
    let mut init = rng::derived(seed, (1 << 32) + 1);
    model
        .init(&mut params, &mut init)
        .expect("tiny decoder initializes");
    let net = SirenNetwork::init(&model.config.target, 30.0, &mut init).expect("valid spec");
    let names = params.trainable_names();
    plan.push(Planned {
        suite: Suite::Gradient,
        checks: names
            .iter()
            .map(|n| {
                (
                    format!("gradient/inr2array/{n}"),
                    Direction::AtMost,
                    MODEL_GRAD_TOL,
                )
            })
            .collect(),
        thunk: Box::new(move |r| {
            let targets = model.targets(&net)?;
            let records = check_params(&params, GRAD_COORDS, r, |p| {
                model.loss(p, &net, &targets, None)
            })?;
            Ok(names
                .iter()
                .map(|n| {
                    records
                        .iter()
                        .find(|g| &g.name == n)
                        .map_or(f64::NAN, |g| g.rel_err)
                })
                .collect())
        }),
    });
}

/// Every check of the selected suites.
pub fn plan(opts: &VerifyOptions, suites: &[Suite]) -> Plan {
    let mut groups = Vec::new();
    for suite in suites {
        match suite {
            Suite::Equivariance => equivariance_checks(opts, &mut groups),
            Suite::Invariance => invariance_checks(opts, &mut groups),
            Suite::Minimal => minimal_checks(opts, &mut groups),
            Suite::Oracle => oracle_checks(opts, &mut groups),
            Suite::Gradient => gradient_checks(opts, &mut groups),
        }
    }
    Plan {
        groups,
        seed: opts.seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            trials: 2,
            scaled: Some(true),
            term3: Some(Term3Mode::RowColSum),
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn record_count_matches_plan() {
        let plan = plan(&quick(), &[Suite::Minimal, Suite::Oracle]);
        let advertised = plan.count();
        let records = plan.run(|_| {});
        assert_eq!(records.len(), advertised);
        assert!(records.iter().all(|r| r.pass), "{records:#?}");
    }

    #[test]
    fn broken_coupling_fails_oracle() {
        let opts = VerifyOptions {
            break_coupling: true,
            ..quick()
        };
        let records = plan(&opts, &[Suite::Oracle]).run(|_| {});
        assert!(records.iter().any(|r| !r.pass));
    }

    #[test]
    fn record_renders_as_csv() {
        let r = CheckRecord {
            name: "a/b".into(),
            direction: Direction::AtLeast,
            tolerance: 1e-3,
            achieved: 0.5,
            pass: true,
        };
        assert_eq!(r.to_string(), "a/b,ge,1e-3,5e-1,true");
    }
}
