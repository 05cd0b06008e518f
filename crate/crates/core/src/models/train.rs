//! Minibatch training loop shared by every model.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::Dropout;
use crate::optim::{Adam, AdamConfig};
use crate::params::{Bound, ParamSet};
use crate::precision::Precision;
use crate::rng;
use crate::tensor::Tensor;

/// A per-example differentiable loss over an indexed training set.
pub trait Objective: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn loss<'t>(&self, p: &Bound<'t>, index: usize, dropout: Option<&Dropout>) -> Result<Var<'t>>;

    /// Names of parameters that receive updates; all by default.
    fn trainable(&self, _name: &str) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub dropout_p: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            batch_size: 4,
            adam: AdamConfig::default(),
            seed: 0,
            dropout_p: 0.0,
            precision: Precision::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamSet,
    pub opt: Adam,
    /// Completed steps.
    pub step: u64,
    pub best: Option<(f64, ParamSet)>,
}

impl TrainState {
    pub fn new(params: ParamSet, adam: AdamConfig) -> Self {
        Self {
            params,
            opt: Adam::new(adam),
            step: 0,
            best: None,
        }
    }

    /// Keeps a copy of the parameters if `metric` is the lowest seen.
    pub fn offer_best(&mut self, metric: f64) -> bool {
        let better = self.best.as_ref().is_none_or(|(m, _)| metric < *m);
        if better {
            self.best = Some((metric, self.params.clone()));
        }
        better
    }
}

/// Loss value and parameter adjoints for one example.
pub type SampleGrad = (f64, BTreeMap<String, Tensor>);

/// Runs independent per-example jobs, returning results in index order.
pub trait Executor {
    fn map(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Result<SampleGrad> + Sync),
    ) -> Vec<Result<SampleGrad>>;
}

pub struct Serial;

impl Executor for Serial {
    fn map(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Result<SampleGrad> + Sync),
    ) -> Vec<Result<SampleGrad>> {
        (0..n).map(f).collect()
    }
}

/// Loss and adjoints of one example with the given dropout stream.
pub fn sample_grad<O: Objective + ?Sized>(
    obj: &O,
    params: &ParamSet,
    index: usize,
    precision: Precision,
    dropout: Option<Dropout>,
) -> Result<SampleGrad> {
    let tape = Tape::with_precision(precision);
    let p = params.bind_with(&tape, |n| obj.trainable(n));
    let loss = obj.loss(&p, index, dropout.as_ref())?;
    let value = loss.value().item();
    if !value.is_finite() {
        return Ok((value, BTreeMap::new()));
    }
    Ok((value, p.grads(&tape.backward(loss)?)))
}

/// Mean loss over `indices` without gradients or dropout.
pub fn evaluate<O: Objective + ?Sized>(
    obj: &O,
    params: &ParamSet,
    indices: &[usize],
    precision: Precision,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        let tape = Tape::with_precision(precision);
        let p = params.bind_frozen(&tape);
        total += obj.loss(&p, i, None)?.value().item();
    }
    Ok(total / indices.len().max(1) as f64)
}

/// The examples drawn at `step` (0-based). Depends only on the seed and step.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    let mut r = rng::derived(seed, 2 * step);
    let mut idx = sample(&mut r, n, batch.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Number of completed steps, including this one.
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
}

/// Trains from `state.step` until `config.steps`, calling `hook` after every
/// step.
pub fn run<O: Objective + ?Sized>(
    obj: &O,
    state: &mut TrainState,
    config: &TrainConfig,
    exec: &dyn Executor,
    mut hook: impl FnMut(&mut TrainState, StepInfo) -> Result<()>,
) -> Result<()> {
    if obj.len() == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    while state.step < config.steps {
        let step = state.step;
        let indices = batch_indices(config.seed, step, obj.len(), config.batch_size);
        let results = {
            let params = &state.params;
            let job = |k: usize| -> Result<SampleGrad> {
                let dropout = (config.dropout_p > 0.0).then(|| {
                    Dropout::new(
                        config.dropout_p,
                        rng::derived(config.seed, 2 * step + 1 + ((k as u64) << 40)),
                    )
                });
                sample_grad(obj, params, indices[k], config.precision, dropout)
            };
            let job: Box<dyn Fn(usize) -> Result<SampleGrad> + Sync> = Box::new(job);
            exec.map(indices.len(), job.as_ref())
        };
        let mut loss = 0.0;
        let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
        let scale = 1.0 / indices.len() as f64;
        for r in results {
            let (l, g) = r?;
            if !l.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss is {l} at step {step}; lower the learning rate"
                )));
            }
            loss += l * scale;
            for (name, t) in g {
                match grads.get_mut(&name) {
                    Some(acc) => acc.add_assign_scaled(&t, scale),
                    None => {
                        grads.insert(name, t.scale(scale));
                    }
                }
            }
        }
        let lr = state.opt.lr_at(state.opt.step + 1);
        state.opt.step(&mut state.params, &grads)?;
        state.step += 1;
        let info = StepInfo {
            step: state.step,
            loss,
            lr,
        };
        hook(state, info)?;
    }
    Ok(())
}
