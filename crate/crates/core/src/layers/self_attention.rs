//! Neuron-permutation equivariant weight-space self-attention.
//!
//! For weight layer `i` (zero-based, `W_i: [n_{i+1}, n_i, c]`) the output is
//! the sum of three attentions sharing one set of `θ_Q, θ_K, θ_V`:
//!
//! 1. each row of `Q_i` attends over the columns of `K_{i-1}`, the rows of
//!    `K_i` and the bias vector `k_{i-1}`; all of these are `[n_i, c]`
//!    arrays indexed by neuron layer `i`,
//! 2. each column of `Q_i`, and the bias vector `q_i`, attends over the
//!    columns of `K_i`, the rows of `K_{i+1}` and the bias vector `k_i`;
//!    all `[n_{i+1}, c]` arrays indexed by neuron layer `i + 1`,
//! 3. a global term: either exact attention between every weight and bias
//!    entry, or attention between the per-layer weight sums and bias sums,
//!    broadcast back over each layer.
//!
//! Sets that fall outside the network (layer `-1`, layer `L`) are omitted.
//! Rows and columns are compared with flattened dot products; heads split
//! the channel axis.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::attention::{logit_scale, maybe_dropout, scaled_dot_product, Dropout};
use super::feature::WsVar;
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng;
use crate::tensor::Tensor;

/// Largest `dim(U)` for which exact all-pairs global attention is allowed.
pub const EXACT_TERM3_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Term3Mode {
    Exact,
    #[default]
    RowColSum,
}

impl Term3Mode {
    pub fn name(self) -> &'static str {
        match self {
            Term3Mode::Exact => "exact",
            Term3Mode::RowColSum => "rowcol",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub prefix: String,
    pub channels: usize,
    pub heads: usize,
    pub term3: Term3Mode,
    pub scaled: bool,
    /// Negative control: feeds the previous layer's columns into the row
    /// attention with their entries reversed, which breaks the coupling
    /// between adjacent layers.
    pub break_coupling: bool,
}

impl SelfAttention {
    pub fn new(prefix: impl Into<String>, channels: usize, heads: usize) -> Self {
        Self {
            prefix: prefix.into(),
            channels,
            heads,
            term3: Term3Mode::default(),
            scaled: scaled_dot_product(),
            break_coupling: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide {} channels",
                self.heads, self.channels
            )));
        }
        Ok(())
    }

    pub fn name(&self, which: &str) -> String {
        format!("{}.{which}", self.prefix)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        for which in ["q", "k", "v"] {
            params.insert(
                self.name(which),
                rng::xavier(self.channels, self.channels, rng),
            );
        }
    }

    /// Sets `θ_Q = θ_K = θ_V = I`.
    pub fn init_identity(&self, params: &mut ParamSet) {
        for which in ["q", "k", "v"] {
            params.insert(self.name(which), Tensor::eye(self.channels));
        }
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        u: &WsVar<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<WsVar<'t>> {
        self.validate()?;
        if u.channels() != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: u.channels(),
            });
        }
        for w in &u.weights {
            if w.shape()[2] != self.channels {
                return Err(Error::ChannelMismatch {
                    expected: self.channels,
                    got: w.shape()[2],
                });
            }
        }
        let widths = u.layer_widths();
        let dim: usize = (0..u.num_layers())
            .map(|i| widths[i + 1] * widths[i] + widths[i + 1])
            .sum();
        if self.term3 == Term3Mode::Exact && dim > EXACT_TERM3_LIMIT {
            return Err(Error::ExactTermTooLarge {
                dim,
                limit: EXACT_TERM3_LIMIT,
            });
        }

        let (tq, tk, tv) = (
            p.get(&self.name("q"))?,
            p.get(&self.name("k"))?,
            p.get(&self.name("v"))?,
        );
        let proj = |m: Var<'t>| u.map(|x| x.linear(m, None));
        let q = proj(tq)?;
        let k = proj(tk)?;
        let v = proj(tv)?;

        let l = u.num_layers();
        let h = self.heads;
        let mut weights = Vec::with_capacity(l);
        let mut biases = Vec::with_capacity(l);
        for i in 0..l {
            let (n_out, n_in) = (widths[i + 1], widths[i]);

            // term 1: rows of layer i against neuron layer i
            let mut keys = Vec::new();
            let mut vals = Vec::new();
            if i > 0 {
                let (kc, vc) = if self.break_coupling {
                    (
                        reverse_rows(k.weights[i - 1])?,
                        reverse_rows(v.weights[i - 1])?,
                    )
                } else {
                    (k.weights[i - 1], v.weights[i - 1])
                };
                keys.push(cols_form(kc, h)?);
                vals.push(cols_form(vc, h)?);
            }
            keys.push(rows_form(k.weights[i], h)?);
            vals.push(rows_form(v.weights[i], h)?);
            if i > 0 {
                keys.push(bias_form(k.biases[i - 1], h)?);
                vals.push(bias_form(v.biases[i - 1], h)?);
            }
            let queries = rows_form(q.weights[i], h)?;
            let out = self.attend(queries, &keys, &vals, n_in * (self.channels / h), dropout)?;
            let term1 = from_rows_form(out, n_out, n_in, self.channels)?;

            // term 2: columns of layer i (and its bias) against neuron layer i+1
            let mut keys = Vec::new();
            let mut vals = Vec::new();
            keys.push(cols_form(k.weights[i], h)?);
            vals.push(cols_form(v.weights[i], h)?);
            if i + 1 < l {
                keys.push(rows_form(k.weights[i + 1], h)?);
                vals.push(rows_form(v.weights[i + 1], h)?);
            }
            keys.push(bias_form(k.biases[i], h)?);
            vals.push(bias_form(v.biases[i], h)?);
            let queries = Var::concat(
                &[cols_form(q.weights[i], h)?, bias_form(q.biases[i], h)?],
                1,
            )?;
            let out = self.attend(queries, &keys, &vals, n_out * (self.channels / h), dropout)?;
            let term2_w = from_cols_form(out.narrow(1, 0, n_in)?, n_out, n_in, self.channels)?;
            let term2_b = from_bias_form(out.narrow(1, n_in, 1)?, n_out, self.channels)?;

            weights.push(term1.add(term2_w)?);
            biases.push(term2_b);
        }

        let global = match self.term3 {
            Term3Mode::Exact => self.exact_global(&q, &k, &v, dropout)?,
            Term3Mode::RowColSum => self.rowcol_global(u, tq, tk, tv, dropout)?,
        };
        for i in 0..l {
            weights[i] = weights[i].add(global.weights[i])?;
            biases[i] = biases[i].add(global.biases[i])?;
        }
        Ok(WsVar { weights, biases })
    }

    /// Multi-head attention of `[h, m, d]` queries over the union of
    /// `[h, n_s, d]` key/value sets.
    fn attend<'t>(
        &self,
        queries: Var<'t>,
        keys: &[Var<'t>],
        values: &[Var<'t>],
        dot_len: usize,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        let k = if keys.len() == 1 {
            keys[0]
        } else {
            Var::concat(keys, 1)?
        };
        let v = if values.len() == 1 {
            values[0]
        } else {
            Var::concat(values, 1)?
        };
        let logits = queries.bmm_t(k)?.scale(logit_scale(self.scaled, dot_len));
        let weights = maybe_dropout(logits.softmax()?, dropout)?;
        weights.bmm(v)
    }

    fn exact_global<'t>(
        &self,
        q: &WsVar<'t>,
        k: &WsVar<'t>,
        v: &WsVar<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<WsVar<'t>> {
        let h = self.heads;
        let d = self.channels / h;
        let heads_first = |x: Var<'t>| -> Result<Var<'t>> {
            let n = x.shape()[0];
            x.reshape([n, h, d])?.permute(&[1, 0, 2])
        };
        let qt = heads_first(q.tokens()?)?;
        let kt = heads_first(k.tokens()?)?;
        let vt = heads_first(v.tokens()?)?;
        let out = self.attend(qt, &[kt], &[vt], d, dropout)?;
        let n = out.shape()[1];
        let tokens = out.permute(&[1, 0, 2])?.reshape([n, self.channels])?;
        q.from_tokens(tokens)
    }

    fn rowcol_global<'t>(
        &self,
        u: &WsVar<'t>,
        tq: Var<'t>,
        tk: Var<'t>,
        tv: Var<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<WsVar<'t>> {
        let l = u.num_layers();
        let c = self.channels;
        let h = self.heads;
        let d = c / h;
        let mut sums = Vec::with_capacity(2 * l);
        for w in &u.weights {
            sums.push(w.sum_leading(2)?.reshape([1, c])?);
        }
        for b in &u.biases {
            sums.push(b.sum_leading(1)?.reshape([1, c])?);
        }
        let tokens = Var::concat(&sums, 0)?;
        let heads_first = |m: Var<'t>| -> Result<Var<'t>> {
            tokens
                .linear(m, None)?
                .reshape([2 * l, h, d])?
                .permute(&[1, 0, 2])
        };
        let out = self.attend(
            heads_first(tq)?,
            &[heads_first(tk)?],
            &[heads_first(tv)?],
            d,
            dropout,
        )?;
        let out = out.permute(&[1, 0, 2])?.reshape([2 * l, c])?;
        let mut weights = Vec::with_capacity(l);
        let mut biases = Vec::with_capacity(l);
        for i in 0..l {
            let [n_out, n_in] = [u.weights[i].shape()[0], u.weights[i].shape()[1]];
            let zeros_w = u.weights[i]
                .tape()
                .constant(Tensor::zeros([n_out, n_in, c]));
            weights.push(zeros_w.add(out.narrow(0, i, 1)?.reshape([c])?)?);
            let zeros_b = u.biases[i].tape().constant(Tensor::zeros([n_out, c]));
            biases.push(zeros_b.add(out.narrow(0, l + i, 1)?.reshape([c])?)?);
        }
        Ok(WsVar { weights, biases })
    }
}

/// `[a, b, c]` → `[h, a, b·c/h]`: one flattened row per entry along `a`.
fn rows_form(x: Var<'_>, h: usize) -> Result<Var<'_>> {
    let s = x.shape();
    let (a, b, c) = (s[0], s[1], s[2]);
    x.reshape([a, b, h, c / h])?
        .permute(&[2, 0, 1, 3])?
        .reshape([h, a, b * (c / h)])
}

/// `[a, b, c]` → `[h, b, a·c/h]`: one flattened column per entry along `b`.
fn cols_form(x: Var<'_>, h: usize) -> Result<Var<'_>> {
    let s = x.shape();
    let (a, b, c) = (s[0], s[1], s[2]);
    x.reshape([a, b, h, c / h])?
        .permute(&[2, 1, 0, 3])?
        .reshape([h, b, a * (c / h)])
}

/// `[a, c]` → `[h, 1, a·c/h]`: the whole bias vector as one array.
fn bias_form(x: Var<'_>, h: usize) -> Result<Var<'_>> {
    let s = x.shape();
    let (a, c) = (s[0], s[1]);
    x.reshape([a, h, c / h])?
        .permute(&[1, 0, 2])?
        .reshape([h, 1, a * (c / h)])
}

fn from_rows_form(y: Var<'_>, a: usize, b: usize, c: usize) -> Result<Var<'_>> {
    let h = y.shape()[0];
    y.reshape([h, a, b, c / h])?
        .permute(&[1, 2, 0, 3])?
        .reshape([a, b, c])
}

fn from_cols_form(y: Var<'_>, a: usize, b: usize, c: usize) -> Result<Var<'_>> {
    let h = y.shape()[0];
    y.reshape([h, b, a, c / h])?
        .permute(&[2, 1, 0, 3])?
        .reshape([a, b, c])
}

fn from_bias_form(y: Var<'_>, a: usize, c: usize) -> Result<Var<'_>> {
    let h = y.shape()[0];
    y.reshape([h, a, c / h])?
        .permute(&[1, 0, 2])?
        .reshape([a, c])
}

/// Reverses the row axis of `[a, b, c]`.
fn reverse_rows(x: Var<'_>) -> Result<Var<'_>> {
    let a = x.shape()[0];
    let rows: Vec<Var<'_>> = (0..a)
        .rev()
        .map(|r| x.narrow(0, r, 1))
        .collect::<Result<_>>()?;
    Var::concat(&rows, 0)
}
