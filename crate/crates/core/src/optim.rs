//! Adam and AdamW with linear learning-rate warmup.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW) weight decay.
    pub weight_decay: f64,
    pub warmup: usize,
    /// Rescales the global gradient to at most this norm when set.
    pub clip_norm: Option<f64>,
    /// Learning-rate multipliers for parameters whose name starts with the
    /// given prefix. The first matching prefix applies.
    pub lr_scale: Vec<(String, f64)>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            warmup: 0,
            clip_norm: None,
            lr_scale: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    /// Number of updates taken so far.
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Learning rate used by update number `s` (1-based): `lr·s/warmup`
    /// during warmup, `lr` afterwards.
    pub fn lr_at(&self, s: u64) -> f64 {
        let w = self.config.warmup as u64;
        if s < w {
            self.config.lr * s as f64 / w as f64
        } else {
            self.config.lr
        }
    }

    fn scale_for(&self, name: &str) -> f64 {
        self.config
            .lr_scale
            .iter()
            .find(|(prefix, _)| name.starts_with(prefix.as_str()))
            .map_or(1.0, |&(_, s)| s)
    }

    /// Applies one update to every trainable tensor of `params` that has an
    /// entry in `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        let mut scale = 1.0;
        if let Some(max_norm) = self.config.clip_norm {
            let norm = libm::sqrt(
                grads
                    .values()
                    .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>(),
            );
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        self.step += 1;
        let t = self.step;
        let lr = self.lr_at(t);
        let c = self.config.clone();
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for name in params.trainable_names() {
            let Some(g) = grads.get(&name) else { continue };
            let lr = lr * self.scale_for(&name);
            let p = params.get_mut(&name)?;
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", g.shape(), p.shape()));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let v = self
                .v
                .entry(name)
                .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let gi = g.data()[i] * scale;
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gi;
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gi * gi;
                let update = (md[i] / bc1) / (libm::sqrt(vd[i] / bc2) + c.eps);
                *x -= lr * (update + c.weight_decay * *x);
            }
        }
        Ok(())
    }
}
