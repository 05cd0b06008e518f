//! Run configuration: TOML with one section per concern. Every field has a
//! default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wsfn_core::data::{EditTransform, SignalKind, Split, ZooConfig};
use wsfn_core::layers::Term3Mode;
use wsfn_core::models::train::TrainConfig;
use wsfn_core::models::{
    ClassifierConfig, DecoderInit, FitConfig, HeadKind, Inr2ArrayConfig, NftConfig,
};
use wsfn_core::optim::AdamConfig;
use wsfn_core::precision::Precision;
use wsfn_core::WeightSpaceSpec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Verify,
    GenData,
    FitSirens,
    TrainInr2array,
    TrainEdit,
    TrainClassify,
    Encode,
    Eval,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term3 {
    Exact,
    #[default]
    Rowcol,
}

impl From<Term3> for Term3Mode {
    fn from(t: Term3) -> Self {
        match t {
            Term3::Exact => Term3Mode::Exact,
            Term3::Rowcol => Term3Mode::RowColSum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub f32: bool,
    /// Logit scaling by `1/√d` in every attention.
    pub scaled: bool,
    pub term3: Term3,
    pub data: DataSection,
    pub nft: NftSection,
    pub inr2array: Inr2ArraySection,
    pub editor: EditorSection,
    pub classifier: ClassifierSection,
    pub train: TrainSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub kind: String,
    pub count: usize,
    pub size: usize,
    pub widths: Vec<usize>,
    pub omega0: f64,
    pub fit_steps: usize,
    pub fit_lr: f64,
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NftSection {
    pub blocks: usize,
    pub channels: usize,
    pub mlp_hidden: usize,
    pub heads: usize,
    pub fourier_scale: f64,
    pub fourier_size: usize,
    pub dropout: f64,
    pub layer_enc_per_block: bool,
    pub io_enc: bool,
    /// Standardize each layer's weights and biases with training-set
    /// statistics before the Fourier lift.
    pub input_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inr2ArraySection {
    pub latents: usize,
    pub latent_dim: usize,
    pub decoder_hidden: usize,
    /// `siren` or `zero`.
    pub decoder_init: String,
    /// Splits the autoencoder trains on.
    pub splits: Vec<String>,
    /// Learning-rate multiplier for decoder parameters.
    pub decoder_lr_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditorSection {
    pub transform: String,
    pub delta_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub blocks: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: usize,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    /// Validation and checkpoint interval in steps.
    pub eval_every: u64,
    /// Reconstruction dumps per validation round.
    pub dumps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Dataset directory written by `gen-data`/`fit-sirens`.
    pub data: PathBuf,
    /// Trained Inr2Array checkpoint used as the frozen encoder.
    pub encoder: Option<PathBuf>,
    /// Checkpoint to resume from or evaluate.
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::default(),
            seed: 0,
            f32: false,
            scaled: true,
            term3: Term3::default(),
            data: DataSection::default(),
            nft: NftSection::default(),
            inr2array: Inr2ArraySection::default(),
            editor: EditorSection::default(),
            classifier: ClassifierSection::default(),
            train: TrainSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            kind: "blobs2class".into(),
            count: 64,
            size: 16,
            widths: vec![2, 16, 16, 1],
            omega0: 30.0,
            fit_steps: 300,
            fit_lr: 1e-3,
            train: 48,
            val: 0,
        }
    }
}

impl Default for NftSection {
    fn default() -> Self {
        Self {
            blocks: 3,
            channels: 64,
            mlp_hidden: 64,
            heads: 4,
            fourier_scale: 3.0,
            fourier_size: 32,
            dropout: 0.0,
            layer_enc_per_block: false,
            io_enc: false,
            input_norm: true,
        }
    }
}

impl Default for Inr2ArraySection {
    fn default() -> Self {
        Self {
            latents: 4,
            latent_dim: 32,
            decoder_hidden: 64,
            decoder_init: "siren".into(),
            splits: vec!["train".into(), "val".into(), "test".into()],
            decoder_lr_scale: 1.0,
        }
    }
}

impl Default for EditorSection {
    fn default() -> Self {
        Self {
            transform: "dilate".into(),
            delta_scale: 0.1,
        }
    }
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            blocks: 2,
            heads: 2,
            mlp_hidden: 64,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            lr: 1e-3,
            warmup: 50,
            weight_decay: 0.0,
            clip_norm: None,
            eval_every: 100,
            dumps: 2,
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data".into(),
            encoder: None,
            checkpoint: None,
            out: "runs".into(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.signal_kind()?;
        self.transform()?;
        self.splits()?;
        self.decoder_init()?;
        self.spec()?;
        if self.data.train + self.data.val > self.data.count {
            return Err(Error::Config(format!(
                "train ({}) + val ({}) exceeds count ({})",
                self.data.train, self.data.val, self.data.count
            )));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.train.lr.is_nan() || self.train.lr < 0.0 {
            return Err(Error::Config("lr must be non-negative".into()));
        }
        Ok(())
    }

    pub fn precision(&self) -> Precision {
        if self.f32 {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    pub fn signal_kind(&self) -> Result<SignalKind> {
        self.data
            .kind
            .parse()
            .map_err(|e: wsfn_core::Error| Error::Config(e.to_string()))
    }

    pub fn transform(&self) -> Result<EditTransform> {
        self.editor
            .transform
            .parse()
            .map_err(|e: wsfn_core::Error| Error::Config(e.to_string()))
    }

    pub fn splits(&self) -> Result<Vec<Split>> {
        self.inr2array
            .splits
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|e: wsfn_core::Error| Error::Config(e.to_string()))
            })
            .collect()
    }

    pub fn decoder_init(&self) -> Result<DecoderInit> {
        match self.inr2array.decoder_init.as_str() {
            "siren" => Ok(DecoderInit::SirenBias),
            "zero" => Ok(DecoderInit::Zero),
            other => Err(Error::Config(format!(
                "unknown decoder_init {other:?} (expected siren or zero)"
            ))),
        }
    }

    /// SIREN weight-space spec, one channel.
    pub fn spec(&self) -> Result<WeightSpaceSpec> {
        WeightSpaceSpec::new(self.data.widths.clone(), 1).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn zoo(&self) -> Result<ZooConfig> {
        Ok(ZooConfig {
            spec: self.spec()?,
            fit: self.fit(),
            seed: self.seed,
            train: self.data.train,
            val: self.data.val,
        })
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            steps: self.data.fit_steps,
            lr: self.data.fit_lr,
            omega0: self.data.omega0,
        }
    }

    pub fn nft(&self, in_channels: usize, head: HeadKind) -> Result<NftConfig> {
        let spec = self.spec()?;
        let n = &self.nft;
        let mut c = NftConfig::new(in_channels, spec.num_layers(), head);
        c.num_blocks = n.blocks;
        c.channels = n.channels;
        c.mlp_hidden = n.mlp_hidden;
        c.heads = n.heads;
        c.fourier_scale = n.fourier_scale;
        c.fourier_size = n.fourier_size;
        c.dropout_p = n.dropout;
        c.term3 = self.term3.into();
        c.scaled = self.scaled;
        c.layer_enc_per_block = n.layer_enc_per_block;
        c.io_enc = n.io_enc.then(|| {
            (
                spec.layer_widths[0],
                *spec.layer_widths.last().expect("non-empty widths"),
            )
        });
        c.delta_scale = self.editor.delta_scale;
        c.validate()?;
        Ok(c)
    }

    pub fn inr2array(&self) -> Result<Inr2ArrayConfig> {
        let a = &self.inr2array;
        let side = (a.latents as f64).sqrt().round() as usize;
        if side * side != a.latents {
            return Err(Error::Config(format!(
                "latents must be a square number of patches, got {}",
                a.latents
            )));
        }
        let head = HeadKind::InvariantArray {
            m: a.latents,
            d: a.latent_dim,
        };
        Ok(Inr2ArrayConfig {
            target: self.spec()?,
            encoder: self.nft(1, head)?,
            latents: a.latents,
            latent_dim: a.latent_dim,
            decoder_hidden: a.decoder_hidden,
            decoder_init: self.decoder_init()?,
            image: (self.data.size, self.data.size),
            patches: (side, side),
            omega0: self.data.omega0,
        })
    }

    pub fn classifier(&self, tokens: usize, dim: usize, classes: usize) -> ClassifierConfig {
        let mut c = ClassifierConfig::new(tokens, dim, classes);
        c.blocks = self.classifier.blocks;
        c.heads = self.classifier.heads;
        c.mlp_hidden = self.classifier.mlp_hidden;
        c.dropout_p = self.nft.dropout;
        c
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.train.lr,
            warmup: self.train.warmup,
            weight_decay: self.train.weight_decay,
            clip_norm: self.train.clip_norm,
            lr_scale: if self.inr2array.decoder_lr_scale == 1.0 {
                Vec::new()
            } else {
                vec![("dec.".into(), self.inr2array.decoder_lr_scale)]
            },
            ..AdamConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            adam: self.adam(),
            seed: self.seed,
            dropout_p: self.nft.dropout,
            precision: self.precision(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn edited_config_round_trips() {
        let mut c = RunConfig {
            task: Task::TrainEdit,
            term3: Term3::Exact,
            ..RunConfig::default()
        };
        c.train.clip_norm = Some(0.5);
        c.train.lr = 3e-4;
        c.paths.encoder = Some("runs/enc.ckpt".into());
        c.data.widths = vec![2, 8, 1];
        assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn partial_files_use_defaults() {
        let c = RunConfig::parse("seed = 4\n[train]\nsteps = 10\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.steps, 10);
        assert_eq!(c.train.lr, TrainSection::default().lr);
        assert_eq!(c.data, DataSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 4\n").is_err());
        assert!(RunConfig::parse("[train]\nstep = 4\n").is_err());
        assert!(RunConfig::parse("[nope]\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::parse("term3 = \"approx\"\n").is_err());
        assert!(RunConfig::parse("[editor]\ntransform = \"blur\"\n").is_err());
        assert!(RunConfig::parse("[data]\ntrain = 70\n").is_err());
        assert!(RunConfig::parse("[inr2array]\nsplits = [\"holdout\"]\n").is_err());
    }
}
