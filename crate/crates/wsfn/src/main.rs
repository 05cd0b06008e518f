use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wsfn::commands;
use wsfn::config::{RunConfig, Task, Term3};
use wsfn::verify::{Suite, VerifyOptions};
use wsfn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wsfn",
    version,
    about = "Weight-space functional transformers at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `paths.out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory (overrides `paths.data`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Round every intermediate to single precision.
    #[arg(long)]
    f32: bool,
    /// Disable the `1/√d` logit scaling in attention.
    #[arg(long)]
    no_scale: bool,
    #[arg(long, value_enum)]
    term3: Option<Term3Arg>,
    /// Checkpoint to resume from or evaluate (overrides `paths.checkpoint`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Encoder checkpoint (overrides `paths.encoder`).
    #[arg(long)]
    encoder: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Term3Arg {
    Exact,
    Rowcol,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Equivariance,
    Invariance,
    Minimal,
    Oracle,
    Gradient,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suites and print one record per failing check.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Negative control: mis-couple adjacent layers in self-attention.
        #[arg(long)]
        break_coupling: bool,
        /// Random permutations per check.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Restrict to these suites (repeatable); all by default.
        #[arg(long, value_enum)]
        suite: Vec<SuiteArg>,
    },
    /// Generate the synthetic signal set.
    GenData(Common),
    /// Fit one SIREN per signal and write the dataset.
    FitSirens(Common),
    /// Train the Inr2Array autoencoder.
    TrainInr2array(Common),
    /// Train an equivariant editing NFT.
    TrainEdit(Common),
    /// Train a classifier on frozen Inr2Array latents.
    TrainClassify(Common),
    /// Encode every dataset entry with a trained encoder.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Apply a random hidden-neuron permutation to each net before encoding.
        #[arg(long)]
        permute: bool,
    },
    /// Evaluate a checkpoint on every split.
    Eval(Common),
    /// Print the latest metrics of every run log under the output directory.
    Report(Common),
}

fn load_config(common: &Common, task: Task) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.task = task;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.paths.out = out.clone();
    }
    if let Some(data) = &common.data {
        cfg.paths.data = data.clone();
    }
    if let Some(ck) = &common.checkpoint {
        cfg.paths.checkpoint = Some(ck.clone());
    }
    if let Some(enc) = &common.encoder {
        cfg.paths.encoder = Some(enc.clone());
    }
    cfg.f32 |= common.f32;
    if common.no_scale {
        cfg.scaled = false;
    }
    match common.term3 {
        Some(Term3Arg::Exact) => cfg.term3 = Term3::Exact,
        Some(Term3Arg::Rowcol) => cfg.term3 = Term3::Rowcol,
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_train(s: &commands::TrainSummary) {
    println!(
        "{}: {} steps in {:.1}s, objective {:.6} -> {:.6} (best {:.6}), checkpoint {}",
        s.kind,
        s.steps,
        s.seconds,
        s.initial,
        s.last,
        s.best,
        s.checkpoint.display()
    );
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify {
            common,
            break_coupling,
            trials,
            suite,
        } => {
            let cfg = load_config(&common, Task::Verify)?;
            let opts = VerifyOptions {
                precision: cfg.precision(),
                // The sweep covers both settings unless a flag narrows it.
                scaled: common.no_scale.then_some(false),
                term3: common.term3.map(|_| cfg.term3.into()),
                break_coupling,
                trials,
                seed: cfg.seed,
            };
            let suites: Vec<Suite> = if suite.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suite
                    .iter()
                    .map(|s| match s {
                        SuiteArg::Equivariance => Suite::Equivariance,
                        SuiteArg::Invariance => Suite::Invariance,
                        SuiteArg::Minimal => Suite::Minimal,
                        SuiteArg::Oracle => Suite::Oracle,
                        SuiteArg::Gradient => Suite::Gradient,
                    })
                    .collect()
            };
            let outcome = commands::verify(&cfg, &opts, &suites, false)?;
            let failed = outcome.records.iter().filter(|r| !r.pass).count();
            println!(
                "{} of {} checks passed ({} advertised); report in {}",
                outcome.records.len() - failed,
                outcome.records.len(),
                outcome.advertised,
                cfg.paths.out.join("verify.csv").display()
            );
            Ok(outcome.passed())
        }
        Command::GenData(common) => {
            let cfg = load_config(&common, Task::GenData)?;
            let signals = commands::gen_data(&cfg)?;
            println!(
                "wrote {} signals to {}",
                signals.len(),
                cfg.paths.data.display()
            );
            Ok(true)
        }
        Command::FitSirens(common) => {
            let cfg = load_config(&common, Task::FitSirens)?;
            let ds = commands::fit_sirens(&cfg)?;
            let psnr: f64 =
                ds.entries.iter().map(|e| e.psnr).sum::<f64>() / ds.entries.len().max(1) as f64;
            println!(
                "accepted {} nets (mean PSNR {psnr:.2} dB), rejected {}; dataset in {}",
                ds.entries.len(),
                ds.rejected.len(),
                cfg.paths.data.display()
            );
            Ok(true)
        }
        Command::TrainInr2array(common) => {
            let cfg = load_config(&common, Task::TrainInr2array)?;
            print_train(&commands::train_inr2array(&cfg)?);
            Ok(true)
        }
        Command::TrainEdit(common) => {
            let cfg = load_config(&common, Task::TrainEdit)?;
            print_train(&commands::train_edit(&cfg)?);
            Ok(true)
        }
        Command::TrainClassify(common) => {
            let cfg = load_config(&common, Task::TrainClassify)?;
            let s = commands::train_classify(&cfg)?;
            print_train(&s.train);
            println!(
                "accuracy: train {:.4}, test {:.4}",
                s.train_accuracy, s.test_accuracy
            );
            Ok(true)
        }
        Command::Encode { common, permute } => {
            let cfg = load_config(&common, Task::Encode)?;
            let out = commands::encode(&cfg, permute)?;
            println!(
                "encoded {} nets into {}",
                out.len(),
                cfg.paths.out.join("latents.txt").display()
            );
            Ok(true)
        }
        Command::Eval(common) => {
            let cfg = load_config(&common, Task::Eval)?;
            for (k, v) in commands::eval(&cfg)? {
                println!("{k} {v:.6}");
            }
            Ok(true)
        }
        Command::Report(common) => {
            let cfg = load_config(&common, Task::Report)?;
            print!("{}", commands::report(&cfg)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
