//! Datasets of independently fitted SIRENs.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::models::siren::{fit_siren, FitConfig, FitResult, SirenNetwork};
use crate::rng;
use crate::weight_space::WeightSpaceSpec;

use super::signals::SignalSample;

/// Fits below this PSNR are excluded from a dataset.
pub const PSNR_FLOOR_DB: f64 = 20.0;
/// Largest tolerated fraction of excluded fits.
pub const MAX_REJECT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZooConfig {
    pub spec: WeightSpaceSpec,
    pub fit: FitConfig,
    pub seed: u64,
    /// Accepted nets are assigned in order: this many to train, then to
    /// val, the rest to test.
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InrEntry {
    /// Index of the source signal.
    pub source: usize,
    pub label: usize,
    pub split: Split,
    pub net: SirenNetwork,
    pub psnr: f64,
    pub fit_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InrDataset {
    pub spec: WeightSpaceSpec,
    pub fit: FitConfig,
    pub seed: u64,
    pub entries: Vec<InrEntry>,
    /// Sources whose fit fell below the PSNR floor.
    pub rejected: Vec<usize>,
}

impl InrDataset {
    pub fn split(&self, split: Split) -> Vec<&InrEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

/// Seed for the fit of source `index`.
pub fn fit_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

/// Fits source `index` with its own independently seeded initialization.
pub fn fit_one(signal: &SignalSample, config: &ZooConfig, index: usize) -> Result<FitResult> {
    let mut r = rng::seeded(fit_seed(config.seed, index));
    fit_siren(&signal.image, &config.spec, &config.fit, &mut r)
}

/// Applies the PSNR filter and split assignment to finished fits.
pub fn assemble(
    signals: &[SignalSample],
    fits: Vec<FitResult>,
    config: &ZooConfig,
) -> Result<InrDataset> {
    if signals.is_empty() {
        return Err(Error::Data("no signals to fit".into()));
    }
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for (i, (signal, fit)) in signals.iter().zip(fits).enumerate() {
        if fit.psnr < PSNR_FLOOR_DB {
            rejected.push(i);
            continue;
        }
        let n = entries.len();
        let split = if n < config.train {
            Split::Train
        } else if n < config.train + config.val {
            Split::Val
        } else {
            Split::Test
        };
        entries.push(InrEntry {
            source: i,
            label: signal.label,
            split,
            net: fit.net,
            psnr: fit.psnr,
            fit_seed: fit_seed(config.seed, i),
        });
    }
    if rejected.len() as f64 > MAX_REJECT_FRACTION * signals.len() as f64 {
        return Err(Error::Data(format!(
            "{} of {} fits fell below {PSNR_FLOOR_DB} dB; the signal generator and SIREN spec do not match",
            rejected.len(),
            signals.len()
        )));
    }
    Ok(InrDataset {
        spec: config.spec.with_channels(1),
        fit: config.fit.clone(),
        seed: config.seed,
        entries,
        rejected,
    })
}

/// Fits every signal serially and assembles the dataset.
pub fn build_inr_dataset(signals: &[SignalSample], config: &ZooConfig) -> Result<InrDataset> {
    let fits = signals
        .iter()
        .enumerate()
        .map(|(i, s)| fit_one(s, config, i))
        .collect::<Result<Vec<_>>>()?;
    assemble(signals, fits, config)
}
