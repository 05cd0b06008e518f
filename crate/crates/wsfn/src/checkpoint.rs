//! Single-file checkpoint container.
//!
//! Layout: one header line `wsfn-checkpoint <version> <manifest bytes>`, a
//! TOML manifest, then the raw little-endian `f64` blobs of every tensor in
//! manifest order. The manifest records the SHA-256 of the whole blob
//! section.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wsfn_core::models::train::TrainState;
use wsfn_core::optim::{Adam, AdamConfig};
use wsfn_core::{ParamSet, Tensor};

use crate::blob;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "wsfn-checkpoint";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    group: Group,
    shape: Vec<usize>,
    dtype: String,
    frozen: bool,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    kind: String,
    step: u64,
    adam_step: Option<u64>,
    blobs_sha256: String,
    config: String,
    metrics: BTreeMap<String, f64>,
    tensor: Vec<TensorEntry>,
}

/// Adam moments and update count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Which model the parameters belong to, e.g. `inr2array`.
    pub kind: String,
    pub step: u64,
    /// The run configuration in its rendered form.
    pub config: String,
    pub metrics: BTreeMap<String, f64>,
    pub params: ParamSet,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, params: ParamSet) -> Self {
        Self {
            kind: kind.into(),
            step: 0,
            config: String::new(),
            metrics: BTreeMap::new(),
            params,
            optimizer: None,
        }
    }

    pub fn from_state(kind: impl Into<String>, config: String, state: &TrainState) -> Self {
        Self {
            kind: kind.into(),
            step: state.step,
            config,
            metrics: BTreeMap::new(),
            params: state.params.clone(),
            optimizer: Some(OptimizerState {
                step: state.opt.step,
                m: state.opt.m.clone(),
                v: state.opt.v.clone(),
            }),
        }
    }

    /// Rebuilds a training state, with fresh moments if none were saved.
    pub fn into_state(self, adam: AdamConfig) -> TrainState {
        let mut opt = Adam::new(adam);
        if let Some(o) = self.optimizer {
            opt.step = o.step;
            opt.m = o.m;
            opt.v = o.v;
        }
        TrainState {
            params: self.params,
            opt,
            step: self.step,
            best: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blobs = Vec::new();
        let mut entries = Vec::new();
        let mut push = |name: &str, group: Group, t: &Tensor, frozen: bool, blobs: &mut Vec<u8>| {
            entries.push(TensorEntry {
                name: name.to_string(),
                group,
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                frozen,
                offset: blobs.len(),
            });
            blob::encode(t, blobs);
        };
        for (name, t) in self.params.iter() {
            push(
                name,
                Group::Param,
                t,
                self.params.is_frozen(name),
                &mut blobs,
            );
        }
        if let Some(o) = &self.optimizer {
            for (name, t) in &o.m {
                push(name, Group::AdamM, t, false, &mut blobs);
            }
            for (name, t) in &o.v {
                push(name, Group::AdamV, t, false, &mut blobs);
            }
        }
        let manifest = Manifest {
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            step: self.step,
            adam_step: self.optimizer.as_ref().map(|o| o.step),
            blobs_sha256: blob::sha256_hex(&blobs),
            config: self.config.clone(),
            metrics: self.metrics.clone(),
            tensor: entries,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = format!("{MAGIC} {FORMAT_VERSION} {}\n", text.len()).into_bytes();
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&blobs);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not text"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 3 || fields[0] != MAGIC {
            return Err(bad("not a wsfn checkpoint"));
        }
        let version: u32 = fields[1].parse().map_err(|_| bad("bad version field"))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.into(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len: usize = fields[2].parse().map_err(|_| bad("bad manifest length"))?;
        let start = nl + 1;
        let manifest_bytes = bytes
            .get(start..start + len)
            .ok_or_else(|| bad("truncated manifest"))?;
        let text = std::str::from_utf8(manifest_bytes).map_err(|_| bad("manifest is not text"))?;
        let manifest: Manifest =
            toml::from_str(text).map_err(|e| bad(&format!("manifest: {e}")))?;
        if manifest.version != version {
            return Err(bad("header and manifest versions differ"));
        }
        let blobs = &bytes[start + len..];
        let found = blob::sha256_hex(blobs);
        if found != manifest.blobs_sha256 {
            return Err(Error::Hash {
                path: path.into(),
                expected: manifest.blobs_sha256,
                found,
            });
        }

        let mut params = ParamSet::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for e in &manifest.tensor {
            if e.dtype != "f64" {
                return Err(bad(&format!(
                    "tensor {}: unsupported dtype {}",
                    e.name, e.dtype
                )));
            }
            let n: usize = e.shape.iter().product();
            let slice = blobs
                .get(e.offset..e.offset + 8 * n)
                .ok_or_else(|| bad(&format!("tensor {} runs past the end of the file", e.name)))?;
            let t = blob::decode(&e.shape, slice)
                .ok_or_else(|| bad(&format!("tensor {} is malformed", e.name)))?;
            match e.group {
                Group::Param if e.frozen => params.insert_frozen(e.name.clone(), t),
                Group::Param => params.insert(e.name.clone(), t),
                Group::AdamM => {
                    m.insert(e.name.clone(), t);
                }
                Group::AdamV => {
                    v.insert(e.name.clone(), t);
                }
            }
        }
        Ok(Self {
            kind: manifest.kind,
            step: manifest.step,
            config: manifest.config,
            metrics: manifest.metrics,
            params,
            optimizer: manifest.adam_step.map(|step| OptimizerState { step, m, v }),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(Error::io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(Error::io(path))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamSet::new();
        params.insert("block0.sa.q", Tensor::from_fn([2, 2], |i| i as f64 / 3.0));
        params.insert_frozen(
            "fourier.B",
            Tensor::new([1, 2], vec![-1.5, 1e-300]).unwrap(),
        );
        let mut ck = Checkpoint::new("test", params);
        ck.step = 7;
        ck.config = "[train]\nsteps = 7\n".into();
        ck.metrics.insert("loss".into(), 0.1 + 0.2);
        let mut m = BTreeMap::new();
        m.insert("block0.sa.q".to_string(), Tensor::full([2, 2], 0.25));
        ck.optimizer = Some(OptimizerState {
            step: 7,
            m: m.clone(),
            v: m,
        });
        ck
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, ck);
        assert!(back.params.is_frozen("fourier.B"));
        assert_eq!(back.metrics["loss"].to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn corruption_and_versions_are_detected() {
        let bytes = sample().to_bytes().unwrap();
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(
            Checkpoint::from_bytes(&flipped, Path::new("x")),
            Err(Error::Hash { .. })
        ));

        let mut versioned = bytes.clone();
        let at = "wsfn-checkpoint ".len();
        assert_eq!(versioned[at], b'1');
        versioned[at] = b'9';
        assert!(matches!(
            Checkpoint::from_bytes(&versioned, Path::new("x")),
            Err(Error::Version { found: 9, .. })
        ));
        assert!(Checkpoint::from_bytes(b"hello\n", Path::new("x")).is_err());
    }
}
