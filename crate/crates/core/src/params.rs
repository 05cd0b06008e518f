//! Named parameter storage and binding onto a tape.
//!
//! Names follow the checkpoint convention (`block0.sa.q`, `enc.phi.1`,
//! `ca.e`, `fourier.B`, ...). Frozen entries are bound as constants.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn insert_frozen(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.frozen.insert(name.clone());
        self.tensors.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) {
        if frozen {
            self.frozen.insert(name.to_string());
        } else {
            self.frozen.remove(name);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|n| !self.frozen.contains(*n))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Adds every entry of `other`, keeping its frozen flags.
    pub fn extend(&mut self, other: ParamSet) {
        for (name, t) in other.tensors {
            if other.frozen.contains(&name) {
                self.insert_frozen(name, t);
            } else {
                self.insert(name, t);
            }
        }
    }

    /// Entries whose names start with `prefix`, with the prefix kept.
    pub fn subset(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, t) in self.tensors.range(prefix.to_string()..) {
            if !name.starts_with(prefix) {
                break;
            }
            if self.frozen.contains(name) {
                out.insert_frozen(name.clone(), t.clone());
            } else {
                out.insert(name.clone(), t.clone());
            }
        }
        out
    }

    /// Places every tensor on `tape`: trainable entries as leaves that
    /// receive adjoints, frozen entries as constants.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        self.bind_with(tape, |_| true)
    }

    /// Like [`ParamSet::bind`] but every entry is a constant.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        self.bind_with(tape, |_| false)
    }

    pub fn bind_with<'t>(&self, tape: &'t Tape, trainable: impl Fn(&str) -> bool) -> Bound<'t> {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if self.frozen.contains(name) || !trainable(name) {
                    tape.constant(t.clone())
                } else {
                    tape.param(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { tape, vars }
    }
}

/// Parameters placed on a tape.
pub struct Bound<'t> {
    tape: &'t Tape,
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<Var<'t>> {
        self.vars.get(name).copied()
    }

    /// Collects the adjoint of every bound entry that has one.
    pub fn grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter_map(|(name, v)| grads.get(*v).map(|g| (name.clone(), g.clone())))
            .collect()
    }
}
