//! A small transformer classifier over the `M` vectors of a latent array.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::layers::block::LN_EPS;
use crate::layers::{Dropout, PointwiseMlp};
use crate::params::{Bound, ParamSet};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub tokens: usize,
    pub dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub classes: usize,
    pub dropout_p: f64,
}

impl ClassifierConfig {
    pub fn new(tokens: usize, dim: usize, classes: usize) -> Self {
        Self {
            tokens,
            dim,
            blocks: 2,
            heads: 2,
            mlp_hidden: 2 * dim,
            classes,
            dropout_p: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LatentClassifier {
    pub config: ClassifierConfig,
    mlps: Vec<PointwiseMlp>,
}

impl LatentClassifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        if config.heads == 0 || !config.dim.is_multiple_of(config.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide {}",
                config.heads, config.dim
            )));
        }
        if config.classes == 0 || config.tokens == 0 {
            return Err(Error::Config("classifier needs tokens and classes".into()));
        }
        let mlps = (0..config.blocks)
            .map(|t| PointwiseMlp::new(format!("cls.block{t}.mlp"), config.dim, config.mlp_hidden))
            .collect();
        Ok(Self { config, mlps })
    }

    fn name(t: usize, part: &str) -> String {
        format!("cls.block{t}.{part}")
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let d = self.config.dim;
        params.insert("cls.pos", rng::normal(&[self.config.tokens, d], 0.02, rng));
        for (t, mlp) in self.mlps.iter().enumerate() {
            for w in ["q", "k", "v", "o"] {
                params.insert(Self::name(t, &format!("attn.{w}")), rng::xavier(d, d, rng));
            }
            for ln in ["ln1", "ln2"] {
                params.insert(Self::name(t, &format!("{ln}.gain")), Tensor::ones([d]));
                params.insert(Self::name(t, &format!("{ln}.bias")), Tensor::zeros([d]));
            }
            mlp.init(params, rng);
        }
        params.insert("cls.ln.gain", Tensor::ones([d]));
        params.insert("cls.ln.bias", Tensor::zeros([d]));
        params.insert("cls.out.w", rng::xavier(self.config.classes, d, rng));
        params.insert("cls.out.b", Tensor::zeros([self.config.classes]));
    }

    fn ln<'t>(p: &Bound<'t>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
        x.layernorm(
            p.get(&format!("{prefix}.gain"))?,
            p.get(&format!("{prefix}.bias"))?,
            LN_EPS,
        )
    }

    /// Logits `[K]` for one latent array `z: [M, d]`.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        z: Var<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        let (m, d, h) = (self.config.tokens, self.config.dim, self.config.heads);
        if z.shape() != [m, d] {
            return Err(Error::shape("classifier", &z.shape(), &[m, d]));
        }
        let dh = d / h;
        let mut x = z.add(p.get("cls.pos")?)?;
        for (t, mlp) in self.mlps.iter().enumerate() {
            let y = Self::ln(p, &Self::name(t, "ln1"), x)?;
            let split = |w: &str| -> Result<Var<'t>> {
                y.linear(p.get(&Self::name(t, &format!("attn.{w}")))?, None)?
                    .reshape([m, h, dh])?
                    .permute(&[1, 0, 2])
            };
            let (q, k, v) = (split("q")?, split("k")?, split("v")?);
            let weights = q.bmm_t(k)?.scale(1.0 / libm::sqrt(dh as f64)).softmax()?;
            let weights = crate::layers::attention::maybe_dropout(weights, dropout)?;
            let a = weights.bmm(v)?.permute(&[1, 0, 2])?.reshape([m, d])?;
            x = x.add(a.linear(p.get(&Self::name(t, "attn.o"))?, None)?)?;
            let y = Self::ln(p, &Self::name(t, "ln2"), x)?;
            x = x.add(mlp.forward(p, y, dropout)?)?;
        }
        let pooled = x.sum_leading(1)?.scale(1.0 / m as f64);
        let pooled = Self::ln(p, "cls.ln", pooled)?;
        pooled.linear(p.get("cls.out.w")?, Some(p.get("cls.out.b")?))
    }
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy<'t>(logits: Var<'t>, label: usize) -> Result<Var<'t>> {
    let k = logits.shape()[0];
    if label >= k {
        return Err(Error::Data(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    Ok(logits.log_softmax()?.narrow(0, label, 1)?.sum().neg())
}

pub fn argmax(x: &Tensor) -> usize {
    let mut best = 0;
    for (i, &v) in x.data().iter().enumerate() {
        if v > x.data()[best] {
            best = i;
        }
    }
    best
}
