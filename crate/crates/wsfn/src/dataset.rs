//! On-disk signal sets and SIREN datasets.
//!
//! ```text
//! <dir>/signals/meta.toml          generator kind, size, seed, count
//! <dir>/signals/index.txt          "<id> <sha256 of blob> <sha256 of descriptor>"
//! <dir>/signals/<id>.bin|.toml     image blob and descriptor
//! <dir>/dataset.toml               spec, fit settings, seed, rejected sources
//! <dir>/<split>/index.txt          same index format, one directory per split
//! <dir>/<split>/<id>.bin|.toml     flattened weights then biases, descriptor
//! ```
//!
//! Blobs are little-endian `f64`. All files are written deterministically so
//! that equal seeds give byte-identical directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wsfn_core::data::{InrDataset, InrEntry, SignalParams, SignalSample, Split};
use wsfn_core::models::{FitConfig, SirenNetwork};
use wsfn_core::{Tensor, WeightSpaceFeature, WeightSpaceSpec};

use crate::blob;
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalMeta {
    pub version: u32,
    pub kind: String,
    pub size: usize,
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalDescriptor {
    label: usize,
    shape: Vec<usize>,
    centers: Vec<[f64; 2]>,
    sigma: f64,
    orientation: f64,
    contrast: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    version: u32,
    widths: Vec<usize>,
    channels: usize,
    omega0: f64,
    fit_steps: usize,
    fit_lr: f64,
    seed: u64,
    rejected: Vec<usize>,
    entries: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDescriptor {
    source: usize,
    label: usize,
    split: String,
    psnr: f64,
    fit_seed: u64,
    omega0: f64,
    scalars: usize,
}

fn entry_id(source: usize) -> String {
    format!("{source:05}")
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(Error::io(path))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::io(path))
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("descriptors always serialize")
}

fn from_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `(id, blob, descriptor)` triples plus their index into `dir`.
fn write_entries(dir: &Path, entries: &[(String, Vec<u8>, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut index = String::new();
    for (id, bytes, desc) in entries {
        write(&dir.join(format!("{id}.bin")), bytes)?;
        write(&dir.join(format!("{id}.toml")), desc.as_bytes())?;
        index.push_str(&format!(
            "{id} {} {}\n",
            blob::sha256_hex(bytes),
            blob::sha256_hex(desc.as_bytes())
        ));
    }
    write(&dir.join("index.txt"), index.as_bytes())
}

/// Reads every indexed entry of `dir`, checking both hashes.
fn read_entries(dir: &Path) -> Result<Vec<(String, Vec<u8>, PathBuf)>> {
    let index_path = dir.join("index.txt");
    let index = String::from_utf8(read(&index_path)?)
        .map_err(|_| Error::format(&index_path, "not UTF-8"))?;
    let mut out = Vec::new();
    for (n, line) in index.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, blob_hash, desc_hash] = fields[..] else {
            return Err(Error::format(
                &index_path,
                format!("line {}: expected three fields", n + 1),
            ));
        };
        let bin = dir.join(format!("{id}.bin"));
        let desc = dir.join(format!("{id}.toml"));
        let bytes = read(&bin)?;
        for (path, data, expected) in [
            (&bin, bytes.clone(), blob_hash),
            (&desc, read(&desc)?, desc_hash),
        ] {
            let found = blob::sha256_hex(&data);
            if found != expected {
                return Err(Error::Hash {
                    path: path.clone(),
                    expected: expected.into(),
                    found,
                });
            }
        }
        out.push((id.to_string(), bytes, desc));
    }
    Ok(out)
}

pub fn save_signals(dir: &Path, meta: &SignalMeta, signals: &[SignalSample]) -> Result<()> {
    let sdir = dir.join("signals");
    let entries: Vec<_> = signals
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut bytes = Vec::new();
            blob::encode(&s.image, &mut bytes);
            let desc = SignalDescriptor {
                label: s.label,
                shape: s.image.shape().to_vec(),
                centers: s.params.centers.iter().map(|&(x, y)| [x, y]).collect(),
                sigma: s.params.sigma,
                orientation: s.params.orientation,
                contrast: s.params.contrast,
            };
            (entry_id(i), bytes, to_toml(&desc))
        })
        .collect();
    write_entries(&sdir, &entries)?;
    write(&sdir.join("meta.toml"), to_toml(meta).as_bytes())
}

pub fn load_signals(dir: &Path) -> Result<(SignalMeta, Vec<SignalSample>)> {
    let sdir = dir.join("signals");
    let meta: SignalMeta = from_toml(&sdir.join("meta.toml"))?;
    if meta.version != DATASET_VERSION {
        return Err(Error::Version {
            path: sdir.join("meta.toml"),
            found: meta.version,
            expected: DATASET_VERSION,
        });
    }
    let mut signals = Vec::new();
    for (id, bytes, desc_path) in read_entries(&sdir)? {
        let d: SignalDescriptor = from_toml(&desc_path)?;
        let image = blob::decode(&d.shape, &bytes)
            .ok_or_else(|| Error::format(&desc_path, format!("{id}: bad image blob")))?;
        signals.push(SignalSample {
            image,
            label: d.label,
            params: SignalParams {
                centers: d.centers.iter().map(|c| (c[0], c[1])).collect(),
                sigma: d.sigma,
                orientation: d.orientation,
                contrast: d.contrast,
            },
        });
    }
    if signals.len() != meta.count {
        return Err(Error::format(
            &sdir,
            format!(
                "index lists {} signals, meta says {}",
                signals.len(),
                meta.count
            ),
        ));
    }
    Ok((meta, signals))
}

pub fn save_dataset(dir: &Path, ds: &InrDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let meta = DatasetMeta {
        version: DATASET_VERSION,
        widths: ds.spec.layer_widths.clone(),
        channels: ds.spec.channels,
        omega0: ds.fit.omega0,
        fit_steps: ds.fit.steps,
        fit_lr: ds.fit.lr,
        seed: ds.seed,
        rejected: ds.rejected.clone(),
        entries: ds.entries.len(),
    };
    write(&dir.join("dataset.toml"), to_toml(&meta).as_bytes())?;
    for split in Split::ALL {
        let entries: Vec<_> = ds
            .split(split)
            .into_iter()
            .map(|e| {
                let flat = e.net.weights.flatten();
                let mut bytes = Vec::new();
                blob::encode(&flat, &mut bytes);
                let desc = EntryDescriptor {
                    source: e.source,
                    label: e.label,
                    split: split.name().into(),
                    psnr: e.psnr,
                    fit_seed: e.fit_seed,
                    omega0: e.net.omega0,
                    scalars: flat.numel(),
                };
                (entry_id(e.source), bytes, to_toml(&desc))
            })
            .collect();
        write_entries(&dir.join(split.name()), &entries)?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<InrDataset> {
    let meta_path = dir.join("dataset.toml");
    let meta: DatasetMeta = from_toml(&meta_path)?;
    if meta.version != DATASET_VERSION {
        return Err(Error::Version {
            path: meta_path,
            found: meta.version,
            expected: DATASET_VERSION,
        });
    }
    let spec = WeightSpaceSpec::new(meta.widths.clone(), meta.channels)?;
    let mut entries = Vec::new();
    for split in Split::ALL {
        for (id, bytes, desc_path) in read_entries(&dir.join(split.name()))? {
            let d: EntryDescriptor = from_toml(&desc_path)?;
            if d.split != split.name() {
                return Err(Error::format(
                    &desc_path,
                    format!(
                        "entry {id} is tagged {} but stored under {}",
                        d.split,
                        split.name()
                    ),
                ));
            }
            let flat = blob::decode(&[d.scalars], &bytes)
                .ok_or_else(|| Error::format(&desc_path, format!("{id}: bad weight blob")))?;
            let weights = WeightSpaceFeature::unflatten(&flat, &spec)?;
            entries.push(InrEntry {
                source: d.source,
                label: d.label,
                split,
                net: SirenNetwork::new(weights, d.omega0)?,
                psnr: d.psnr,
                fit_seed: d.fit_seed,
            });
        }
    }
    if entries.len() != meta.entries {
        return Err(Error::format(
            &meta_path,
            format!(
                "found {} entries, manifest says {}",
                entries.len(),
                meta.entries
            ),
        ));
    }
    entries.sort_by_key(|e| e.source);
    Ok(InrDataset {
        spec,
        fit: FitConfig {
            steps: meta.fit_steps,
            lr: meta.fit_lr,
            omega0: meta.omega0,
        },
        seed: meta.seed,
        entries,
        rejected: meta.rejected,
    })
}

/// Source image of every entry, in entry order.
pub fn source_images(ds: &InrDataset, signals: &[SignalSample]) -> Result<Vec<Tensor>> {
    ds.entries
        .iter()
        .map(|e| {
            signals
                .get(e.source)
                .map(|s| s.image.clone())
                .ok_or_else(|| {
                    Error::Config(format!(
                        "dataset refers to signal {} which does not exist",
                        e.source
                    ))
                })
        })
        .collect()
}
