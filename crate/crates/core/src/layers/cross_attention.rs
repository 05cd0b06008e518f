//! Invariant pooling of a weight-space feature by learned queries.

use alloc::format;
use alloc::string::String;

use rand::Rng;

use super::attention::{logit_scale, maybe_dropout, scaled_dot_product, Dropout};
use super::feature::WsVar;
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng;

/// `M` learned queries `e_m ∈ R^d` attending over every weight and bias
/// entry, keyed by `θ_K u` and valued by `θ_V u`. The result `[M, d]` is
/// invariant to any neuron permutation.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub prefix: String,
    pub channels: usize,
    pub queries: usize,
    pub dim: usize,
    pub scaled: bool,
}

impl CrossAttention {
    pub fn new(prefix: impl Into<String>, channels: usize, queries: usize, dim: usize) -> Self {
        Self {
            prefix: prefix.into(),
            channels,
            queries,
            dim,
            scaled: scaled_dot_product(),
        }
    }

    pub fn name(&self, which: &str) -> String {
        format!("{}.{which}", self.prefix)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        params.insert(
            self.name("e"),
            rng::normal(&[self.queries, self.dim], 1.0, rng),
        );
        params.insert(self.name("k"), rng::xavier(self.dim, self.channels, rng));
        params.insert(self.name("v"), rng::xavier(self.dim, self.channels, rng));
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        u: &WsVar<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        if self.queries == 0 {
            return Err(Error::Config(
                "cross-attention needs at least one query".into(),
            ));
        }
        if u.channels() != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: u.channels(),
            });
        }
        let tokens = u.tokens()?;
        self.pool(p, tokens, dropout)
    }

    /// Pools a `[T, c]` token matrix.
    pub fn pool<'t>(
        &self,
        p: &Bound<'t>,
        tokens: Var<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        let e = p.get(&self.name("e"))?;
        let keys = tokens.linear(p.get(&self.name("k"))?, None)?;
        let values = tokens.linear(p.get(&self.name("v"))?, None)?;
        let logits = e.matmul_t(keys)?.scale(logit_scale(self.scaled, self.dim));
        maybe_dropout(logits.softmax()?, dropout)?.matmul(values)
    }
}
