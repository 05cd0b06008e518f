//! Stacks of NFT blocks with equivariant or invariant heads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::layers::block::LN_EPS;
use crate::layers::{
    Block, CrossAttention, Dropout, FourierLift, LayerEnc, PointwiseMlp, Term3Mode, WsVar,
};
use crate::params::{Bound, ParamSet};
use crate::rng;
use crate::tensor::Tensor;
use crate::weight_space::WeightSpaceFeature;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadKind {
    /// Per-entry projection back to the input channels, scaled by
    /// `delta_scale`.
    EquivariantDelta,
    /// Cross-attention pooling to `[m, d]`, flattened and fed to a two-layer
    /// MLP with `outputs` logits.
    InvariantScalar { m: usize, d: usize, outputs: usize },
    /// Cross-attention pooling to an `[m, d]` latent array.
    InvariantArray { m: usize, d: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NftConfig {
    pub in_channels: usize,
    pub num_layers: usize,
    pub num_blocks: usize,
    pub channels: usize,
    pub mlp_hidden: usize,
    pub heads: usize,
    pub fourier_scale: f64,
    pub fourier_size: usize,
    pub dropout_p: f64,
    pub term3: Term3Mode,
    pub scaled: bool,
    pub head: HeadKind,
    /// Re-applies the layer encodings before every block.
    pub layer_enc_per_block: bool,
    /// `(n_0, n_L)` to enable input/output neuron encodings.
    pub io_enc: Option<(usize, usize)>,
    pub delta_scale: f64,
    pub break_coupling: bool,
}

impl NftConfig {
    pub fn new(in_channels: usize, num_layers: usize, head: HeadKind) -> Self {
        Self {
            in_channels,
            num_layers,
            num_blocks: 2,
            channels: 16,
            mlp_hidden: 32,
            heads: 2,
            fourier_scale: 3.0,
            fourier_size: 8,
            dropout_p: 0.0,
            term3: Term3Mode::RowColSum,
            scaled: crate::layers::scaled_dot_product(),
            head,
            layer_enc_per_block: false,
            io_enc: None,
            delta_scale: 0.1,
            break_coupling: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.in_channels == 0
            || self.num_layers == 0
            || self.channels == 0
            || self.fourier_size == 0
        {
            return bad("channel counts, layer count and fourier size must be positive");
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide {} channels",
                self.heads, self.channels
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout must lie in [0, 1)");
        }
        match self.head {
            HeadKind::InvariantScalar { m, d, outputs } if m == 0 || d == 0 || outputs == 0 => {
                bad("empty invariant head")
            }
            HeadKind::InvariantArray { m, d } if m == 0 || d == 0 => bad("empty invariant head"),
            _ => Ok(()),
        }
    }
}

pub enum NftOutput<'t> {
    Delta(WsVar<'t>),
    Scalar(Var<'t>),
    Array(Var<'t>),
}

impl<'t> NftOutput<'t> {
    pub fn delta(self) -> Result<WsVar<'t>> {
        match self {
            NftOutput::Delta(d) => Ok(d),
            _ => Err(Error::Config(
                "model does not have an equivariant head".into(),
            )),
        }
    }

    pub fn var(self) -> Result<Var<'t>> {
        match self {
            NftOutput::Scalar(v) | NftOutput::Array(v) => Ok(v),
            NftOutput::Delta(_) => Err(Error::Config(
                "model does not have an invariant head".into(),
            )),
        }
    }
}

/// Fourier lift, optional channel projection, layer encodings, blocks and a
/// head. Parameters live in a [`ParamSet`] under fixed names.
#[derive(Debug, Clone)]
pub struct Nft {
    pub config: NftConfig,
    pub fourier: FourierLift,
    pub enc: LayerEnc,
    pub blocks: Vec<Block>,
    pub ca: Option<CrossAttention>,
    pub head_mlp: Option<PointwiseMlp>,
}

impl Nft {
    pub fn new(config: NftConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let fourier = FourierLift::new(
            "fourier.B",
            config.in_channels,
            config.fourier_size,
            config.fourier_scale,
        );
        let mut enc = LayerEnc::new("enc", config.num_layers, c);
        enc.io = config.io_enc;
        let blocks = (0..config.num_blocks)
            .map(|t| {
                let mut b = Block::new(format!("block{t}"), c, config.heads, config.mlp_hidden);
                b.sa.term3 = config.term3;
                b.sa.scaled = config.scaled;
                b.sa.break_coupling = config.break_coupling;
                b
            })
            .collect();
        let (ca, head_mlp) = match config.head {
            HeadKind::EquivariantDelta => (None, None),
            HeadKind::InvariantArray { m, d } => (Some(CrossAttention::new("ca", c, m, d)), None),
            HeadKind::InvariantScalar { m, d, outputs } => (
                Some(CrossAttention::new("ca", c, m, d)),
                Some(PointwiseMlp::new("head.mlp", m * d, config.mlp_hidden).with_out(outputs)),
            ),
        };
        let mut nft = Self {
            config,
            fourier,
            enc,
            blocks,
            ca,
            head_mlp,
        };
        if let Some(ca) = nft.ca.as_mut() {
            ca.scaled = nft.config.scaled;
        }
        Ok(nft)
    }

    fn needs_in_proj(&self) -> bool {
        self.fourier.out_channels() != self.config.channels
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let c = self.config.channels;
        self.fourier.init(params, rng);
        if self.needs_in_proj() {
            params.insert("in.proj", rng::xavier(c, self.fourier.out_channels(), rng));
        }
        self.enc.init(params, rng);
        for b in &self.blocks {
            b.init(params, rng);
        }
        if let Some(ca) = &self.ca {
            ca.init(params, rng);
        }
        if let Some(mlp) = &self.head_mlp {
            mlp.init(params, rng);
        }
        params.insert("head.ln.gain", Tensor::ones([c]));
        params.insert("head.ln.bias", Tensor::zeros([c]));
        if self.config.head == HeadKind::EquivariantDelta {
            params.insert("head.out.w", rng::xavier(self.config.in_channels, c, rng));
            params.insert("head.out.b", Tensor::zeros([self.config.in_channels]));
        }
    }

    /// Stores per-layer input statistics as frozen `norm.{w|b}.{i}` entries
    /// (`[mean, std]`); inputs are standardized with them before the lift.
    /// Per-layer scalars commute with neuron permutations.
    pub fn set_input_norm(
        &self,
        params: &mut ParamSet,
        samples: &[&WeightSpaceFeature],
    ) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Data(
                "input statistics need at least one sample".into(),
            ));
        }
        for i in 0..self.config.num_layers {
            for (kind, pick) in [("w", 0usize), ("b", 1)] {
                let mut n = 0.0;
                let mut sum = 0.0;
                let mut sq = 0.0;
                for u in samples {
                    let t = if pick == 0 {
                        &u.weights[i]
                    } else {
                        &u.biases[i]
                    };
                    for &v in t.data() {
                        n += 1.0;
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / n;
                let std = libm::sqrt((sq / n - mean * mean).max(0.0)).max(1e-8);
                params.insert_frozen(
                    format!("norm.{kind}.{i}"),
                    Tensor::new([2], vec![mean, std])?,
                );
            }
        }
        Ok(())
    }

    fn normalize<'t>(&self, p: &Bound<'t>, u: &WsVar<'t>) -> Result<WsVar<'t>> {
        let mut out = u.clone();
        for i in 0..u.num_layers() {
            for (kind, x) in [("w", &mut out.weights[i]), ("b", &mut out.biases[i])] {
                if let Some(stats) = p.try_get(&format!("norm.{kind}.{i}")) {
                    let s = stats.value();
                    let (mean, std) = (s.data()[0], s.data()[1]);
                    *x = x.add_scalar(-mean).scale(1.0 / std);
                }
            }
        }
        Ok(out)
    }

    /// Runs the stack up to (not including) the head.
    pub fn trunk<'t>(
        &self,
        p: &Bound<'t>,
        u: &WsVar<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<WsVar<'t>> {
        if u.num_layers() != self.config.num_layers {
            return Err(Error::SpecMismatch(format!(
                "model built for {} layers got {}",
                self.config.num_layers,
                u.num_layers()
            )));
        }
        let u = self.normalize(p, u)?;
        let mut x = self.fourier.forward(p, &u)?;
        if self.needs_in_proj() {
            let proj = p.get("in.proj")?;
            x = x.map(|v| v.linear(proj, None))?;
        }
        x = self.enc.forward(p, &x)?;
        for (t, block) in self.blocks.iter().enumerate() {
            if t > 0 && self.config.layer_enc_per_block {
                x = self.enc.forward(p, &x)?;
            }
            x = block.forward(p, &x, dropout)?;
        }
        Ok(x)
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        u: &WsVar<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<NftOutput<'t>> {
        let x = self.trunk(p, u, dropout)?;
        let (gain, bias) = (p.get("head.ln.gain")?, p.get("head.ln.bias")?);
        let x = x.map(|v| v.layernorm(gain, bias, LN_EPS))?;
        match self.config.head {
            HeadKind::EquivariantDelta => {
                let (w, b) = (p.get("head.out.w")?, p.get("head.out.b")?);
                let s = self.config.delta_scale;
                let out = x.map(|v| Ok(v.linear(w, Some(b))?.scale(s)))?;
                Ok(NftOutput::Delta(out))
            }
            HeadKind::InvariantArray { .. } => {
                let ca = self.ca.as_ref().expect("array head has cross-attention");
                Ok(NftOutput::Array(ca.forward(p, &x, dropout)?))
            }
            HeadKind::InvariantScalar { m, d, .. } => {
                let ca = self.ca.as_ref().expect("scalar head has cross-attention");
                let pooled = ca.forward(p, &x, dropout)?.reshape([1, m * d])?;
                let mlp = self.head_mlp.as_ref().expect("scalar head has an mlp");
                let y = mlp.forward(p, pooled, dropout)?;
                let k = y.shape()[1];
                Ok(NftOutput::Scalar(y.reshape([k])?))
            }
        }
    }
}
