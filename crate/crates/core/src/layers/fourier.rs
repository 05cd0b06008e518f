//! Random Fourier feature lift of the channel axis.

use alloc::format;
use alloc::string::String;

use rand::Rng;

use super::feature::WsVar;
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng;

/// Maps each entry `u ∈ R^{c_in}` to `[sin(uB), cos(uB)] ∈ R^{2F}` with a
/// frozen `B ~ N(0, scale²)` of shape `[c_in, F]`.
#[derive(Debug, Clone)]
pub struct FourierLift {
    pub name: String,
    pub in_channels: usize,
    pub size: usize,
    pub scale: f64,
}

impl FourierLift {
    pub fn new(name: impl Into<String>, in_channels: usize, size: usize, scale: f64) -> Self {
        Self {
            name: name.into(),
            in_channels,
            size,
            scale,
        }
    }

    pub fn out_channels(&self) -> usize {
        2 * self.size
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        params.insert_frozen(
            self.name.clone(),
            rng::normal(&[self.in_channels, self.size], self.scale, rng),
        );
    }

    pub fn lift<'t>(&self, b: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        let c = *shape.last().expect("rank >= 1");
        if c != self.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels,
                got: c,
            });
        }
        let rest: usize = shape[..shape.len() - 1].iter().product();
        let proj = x.reshape([rest, c])?.matmul(b)?;
        let out = Var::concat(&[proj.sin(), proj.cos()], 1)?;
        let mut out_shape = shape;
        *out_shape.last_mut().expect("rank >= 1") = self.out_channels();
        out.reshape(out_shape)
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, u: &WsVar<'t>) -> Result<WsVar<'t>> {
        let b = p.get(&self.name)?;
        if b.shape() != [self.in_channels, self.size] {
            return Err(Error::Config(format!(
                "{} has shape {:?}",
                self.name,
                b.shape()
            )));
        }
        u.map(|x| self.lift(b, x))
    }
}
