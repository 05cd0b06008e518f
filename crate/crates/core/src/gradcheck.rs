//! Finite-difference checks of tape gradients against parameter sets.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::params::{Bound, ParamSet};
use crate::precision::Precision;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradRecord {
    pub name: String,
    pub coords: usize,
    /// `max |analytic − numeric| / max(max |analytic|, max |numeric|, 1e-7)`
    /// over the sampled coordinates.
    pub rel_err: f64,
}

/// Compares reverse-mode gradients of `loss` with central differences on
/// `coords` random coordinates of every trainable tensor in `params`.
pub fn check_params<F>(
    params: &ParamSet,
    coords: usize,
    rng: &mut impl Rng,
    loss: F,
) -> Result<Vec<GradRecord>>
where
    F: for<'t> Fn(&Bound<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::with_precision(Precision::F64);
    let bound = params.bind(&tape);
    let root = loss(&bound)?;
    let grads = bound.grads(&tape.backward(root)?);

    let eval = |p: &ParamSet| -> Result<f64> {
        let tape = Tape::with_precision(Precision::F64);
        Ok(loss(&p.bind_frozen(&tape))?.value().item())
    };

    let mut records = Vec::new();
    let mut probe = params.clone();
    for name in params.trainable_names() {
        let analytic = &grads[&name];
        let n = analytic.numel();
        let picks = sample(rng, n, coords.min(n)).into_vec();
        let (mut num_max, mut ana_max, mut diff_max) = (0.0f64, 0.0f64, 0.0f64);
        for &i in &picks {
            let orig = params.get(&name)?.data()[i];
            probe.get_mut(&name)?.data_mut()[i] = orig + FD_STEP;
            let up = eval(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig - FD_STEP;
            let down = eval(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.data()[i];
            num_max = num_max.max(numeric.abs());
            ana_max = ana_max.max(a.abs());
            diff_max = diff_max.max((a - numeric).abs());
        }
        records.push(GradRecord {
            name,
            coords: picks.len(),
            rel_err: diff_max / num_max.max(ana_max).max(1e-7),
        });
    }
    Ok(records)
}
