//! Reverse-mode differentiation over a Wengert tape.
//!
//! Every op appends one node holding its value, its parent ids and a closure
//! mapping the node's adjoint to parent adjoints. Node ids are assigned in
//! creation order, so walking ids backwards from the root is a reverse
//! topological traversal that visits each node once.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::precision::{self, Precision};
use crate::tensor::{self, Tensor};

type BackwardFn = Box<dyn Fn(&Tensor, &[Rc<Tensor>], &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    single: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A tape using the process-wide default precision.
    pub fn new() -> Self {
        Self::with_precision(precision::precision())
    }

    pub fn with_precision(p: Precision) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            single: p == Precision::F32,
        }
    }

    pub fn precision(&self) -> Precision {
        if self.single {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(
        &self,
        mut value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        leaf_grad: bool,
    ) -> usize {
        if self.single {
            precision::round_in_place(value.data_mut());
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = leaf_grad || parents.iter().any(|&p| nodes[p].requires_grad);
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            backward: if requires_grad { backward } else { None },
            requires_grad,
        });
        id
    }

    /// A value that never receives an adjoint.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        let id = self.push(value, Vec::new(), None, false);
        Var { tape: self, id }
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        let id = self.push(value, Vec::new(), None, true);
        Var { tape: self, id }
    }

    fn op(&self, value: Tensor, parents: &[Var<'_>], backward: BackwardFn) -> Var<'_> {
        let id = self.push(
            value,
            parents.iter().map(|v| v.id).collect(),
            Some(backward),
            false,
        );
        Var { tape: self, id }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Adjoints of every trainable leaf with respect to the scalar `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; root.id + 1];
        adjoints[root.id] = Some(Tensor::from_parts(root_value.shape().to_vec(), vec![1.0]));
        let mut leaves = Vec::new();
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(adj) = adjoints[id].take() else {
                continue;
            };
            match &node.backward {
                None => leaves.push((id, adj)),
                Some(f) => {
                    let parent_values: Vec<Rc<Tensor>> = node
                        .parents
                        .iter()
                        .map(|&p| nodes[p].value.clone())
                        .collect();
                    let grads = f(&adj, &parent_values, &node.value);
                    for (&p, g) in node.parents.iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !nodes[p].requires_grad {
                            continue;
                        }
                        debug_assert_eq!(g.shape(), nodes[p].value.shape());
                        match &mut adjoints[p] {
                            Some(acc) => acc.add_assign_scaled(&g, 1.0),
                            slot => *slot = Some(g),
                        }
                    }
                }
            }
        }
        // trainable leaves that the root does not depend on get zero adjoints
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && node.backward.is_none() && node.parents.is_empty() {
                grads[id] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        for (id, g) in leaves {
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn unary<'t>(x: Var<'t>, value: Tensor, backward: BackwardFn) -> Var<'t> {
    x.tape.op(value, &[x], backward)
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            core::ptr::eq(self.tape, other.tape),
            "vars from different tapes cannot be combined"
        );
    }

    /// Elementwise sum; `other` broadcasts onto `self` along trailing axes.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = self.value().add(&other.value())?;
        Ok(self.tape.op(
            value,
            &[self, other],
            Box::new(|g, p, _| vec![Some(g.clone()), Some(tensor::reduce_to(g, p[1].shape()))]),
        ))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = self.value().sub(&other.value())?;
        Ok(self.tape.op(
            value,
            &[self, other],
            Box::new(|g, p, _| {
                vec![
                    Some(g.clone()),
                    Some(tensor::reduce_to(&g.scale(-1.0), p[1].shape())),
                ]
            }),
        ))
    }

    /// Elementwise product; `other` broadcasts onto `self`.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = self.value().mul(&other.value())?;
        Ok(self.tape.op(
            value,
            &[self, other],
            Box::new(|g, p, _| {
                let ga = g.mul(&p[1]).expect("broadcast checked in forward");
                let gb_full = g.zip_map(&p[0], "mul", |a, b| a * b).expect("same shape");
                vec![Some(ga), Some(tensor::reduce_to(&gb_full, p[1].shape()))]
            }),
        ))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        unary(
            self,
            self.value().scale(s),
            Box::new(move |g, _, _| vec![Some(g.scale(s))]),
        )
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        unary(
            self,
            self.value().map(|x| x + s),
            Box::new(|g, _, _| vec![Some(g.clone())]),
        )
    }

    fn pointwise(self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let value = self.value().map(f);
        unary(
            self,
            value,
            Box::new(move |g, p, out| {
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(p[0].data())
                    .zip(out.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), d))]
            }),
        )
    }

    pub fn sin(self) -> Var<'t> {
        self.pointwise(libm::sin, |x, _| libm::cos(x))
    }

    pub fn cos(self) -> Var<'t> {
        self.pointwise(libm::cos, |x, _| -libm::sin(x))
    }

    pub fn exp(self) -> Var<'t> {
        self.pointwise(libm::exp, |_, y| y)
    }

    pub fn square(self) -> Var<'t> {
        self.pointwise(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn relu(self) -> Var<'t> {
        self.pointwise(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(self) -> Var<'t> {
        const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
        const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
        self.pointwise(
            |x| 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
            |x, _| {
                0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
                    + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
            },
        )
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(unary(
            self,
            value,
            Box::new(|g, p, _| {
                vec![Some(Tensor::from_parts(
                    p[0].shape().to_vec(),
                    g.data().to_vec(),
                ))]
            }),
        ))
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let value = self.value().permute(axes)?;
        let inv = tensor::inverse_axes(axes);
        Ok(unary(
            self,
            value,
            Box::new(move |g, _, _| vec![Some(tensor::permute_data(g, &inv))]),
        ))
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let value = self.value().narrow(axis, start, len)?;
        Ok(unary(
            self,
            value,
            Box::new(move |g, p, _| {
                let shape = p[0].shape();
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let dim = shape[axis];
                let mut full = vec![0.0; p[0].numel()];
                for o in 0..outer {
                    let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                    let base = o * dim * inner + start * inner;
                    full[base..base + len * inner].copy_from_slice(src);
                }
                vec![Some(Tensor::from_parts(shape.to_vec(), full))]
            }),
        ))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or(Error::InvalidShape {
            shape: Vec::new(),
            reason: "concat of zero tensors".into(),
        })?;
        for p in parts {
            first.same_tape(p);
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|v| v.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| &**v).collect();
        let value = tensor::concat_data(&refs, axis)?;
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        Ok(first.tape.op(
            value,
            parts,
            Box::new(move |g, _, _| {
                let mut start = 0;
                extents
                    .iter()
                    .map(|&len| {
                        let piece = g
                            .narrow(axis, start, len)
                            .expect("extents recorded in forward");
                        start += len;
                        Some(piece)
                    })
                    .collect()
            }),
        ))
    }

    /// Matrix product of rank-2 vars.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.batched(other, false, "matmul")
    }

    /// `self · otherᵀ` for rank-2 vars.
    pub fn matmul_t(self, other: Var<'t>) -> Result<Var<'t>> {
        self.batched(other, true, "matmul_t")
    }

    /// Batched matrix product `[B,m,k]·[B,k,n]`.
    pub fn bmm(self, other: Var<'t>) -> Result<Var<'t>> {
        self.batched(other, false, "bmm")
    }

    /// Batched `[B,m,k]·[B,n,k]ᵀ`.
    pub fn bmm_t(self, other: Var<'t>) -> Result<Var<'t>> {
        self.batched(other, true, "bmm_t")
    }

    fn batched(self, other: Var<'t>, trans_b: bool, op: &'static str) -> Result<Var<'t>> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let (batch, m, k, n) = batch_dims(a.shape(), b.shape(), trans_b, op)?;
        let mut out = vec![0.0; batch * m * n];
        for t in 0..batch {
            let av = &a.data()[t * m * k..(t + 1) * m * k];
            let bv = &b.data()[t * k * n..(t + 1) * k * n];
            let ov = &mut out[t * m * n..(t + 1) * m * n];
            if trans_b {
                tensor::gemm_nt(av, bv, ov, m, k, n);
            } else {
                tensor::gemm_nn(av, bv, ov, m, k, n);
            }
        }
        let shape = if a.rank() == 2 {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        Ok(self.tape.op(
            Tensor::from_parts(shape, out),
            &[self, other],
            Box::new(move |g, p, _| {
                let (a, b) = (&p[0], &p[1]);
                let mut ga = vec![0.0; a.numel()];
                let mut gb = vec![0.0; b.numel()];
                for t in 0..batch {
                    let gv = &g.data()[t * m * n..(t + 1) * m * n];
                    let av = &a.data()[t * m * k..(t + 1) * m * k];
                    let bv = &b.data()[t * k * n..(t + 1) * k * n];
                    let gav = &mut ga[t * m * k..(t + 1) * m * k];
                    let gbv = &mut gb[t * k * n..(t + 1) * k * n];
                    if trans_b {
                        // c = a bᵀ: da = g b, db = gᵀ a
                        tensor::gemm_nn(gv, bv, gav, m, n, k);
                        tensor::gemm_tn(gv, av, gbv, n, m, k);
                    } else {
                        // c = a b: da = g bᵀ, db = aᵀ g
                        tensor::gemm_nt(gv, bv, gav, m, n, k);
                        tensor::gemm_tn(av, gv, gbv, k, m, n);
                    }
                }
                vec![
                    Some(Tensor::from_parts(a.shape().to_vec(), ga)),
                    Some(Tensor::from_parts(b.shape().to_vec(), gb)),
                ]
            }),
        ))
    }

    /// Pointwise affine map over the last axis: `x·wᵀ + b` with `w: [out, in]`.
    pub fn linear(self, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
        let shape = self.shape();
        let w_shape = weight.shape();
        let (d_in, lead) = match shape.split_last() {
            Some((&d, lead)) => (d, lead.to_vec()),
            None => return Err(Error::shape("linear", &shape, &w_shape)),
        };
        if w_shape.len() != 2 || w_shape[1] != d_in {
            return Err(Error::shape("linear", &shape, &w_shape));
        }
        let rows: usize = lead.iter().product();
        let mut y = self.reshape([rows, d_in])?.matmul_t(weight)?;
        if let Some(b) = bias {
            y = y.add(b)?;
        }
        let mut out_shape = lead;
        out_shape.push(w_shape[0]);
        y.reshape(out_shape)
    }

    /// Softmax along the last axis.
    pub fn softmax(self) -> Result<Var<'t>> {
        let value = self.value().softmax()?;
        let n = *value.shape().last().expect("softmax checked rank");
        Ok(unary(
            self,
            value,
            Box::new(move |g, _, y| {
                let mut d = Vec::with_capacity(g.numel());
                for (gr, yr) in g.data().chunks(n).zip(y.data().chunks(n)) {
                    let s = tensor::dot(gr, yr);
                    d.extend(gr.iter().zip(yr).map(|(&gi, &yi)| yi * (gi - s)));
                }
                vec![Some(Tensor::from_parts(g.shape().to_vec(), d))]
            }),
        ))
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax(self) -> Result<Var<'t>> {
        let x = self.value();
        let n = *x
            .shape()
            .last()
            .ok_or(Error::EmptyAxis { op: "log_softmax" })?;
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(unary(
            self,
            Tensor::from_parts(x.shape().to_vec(), data),
            Box::new(move |g, _, y| {
                let mut d = Vec::with_capacity(g.numel());
                for (gr, yr) in g.data().chunks(n).zip(y.data().chunks(n)) {
                    let s: f64 = gr.iter().sum();
                    d.extend(gr.iter().zip(yr).map(|(&gi, &yi)| gi - libm::exp(yi) * s));
                }
                vec![Some(Tensor::from_parts(g.shape().to_vec(), d))]
            }),
        ))
    }

    /// Layer normalization over the last axis followed by `gain`/`bias`.
    pub fn layernorm(self, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Result<Var<'t>> {
        let x = self.value();
        let c = *x
            .shape()
            .last()
            .ok_or(Error::EmptyAxis { op: "layernorm" })?;
        if gain.shape() != [c] || bias.shape() != [c] {
            return Err(Error::shape("layernorm", x.shape(), &gain.shape()));
        }
        let gv = gain.value();
        let bv = bias.value();
        let rows = x.numel() / c;
        let mut xhat = Vec::with_capacity(x.numel());
        let mut rstd = Vec::with_capacity(rows);
        for row in x.data().chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let r = 1.0 / libm::sqrt(var + eps);
            rstd.push(r);
            xhat.extend(row.iter().map(|v| (v - mean) * r));
        }
        let out: Vec<f64> = xhat
            .chunks(c)
            .flat_map(|row| {
                row.iter()
                    .zip(gv.data())
                    .zip(bv.data())
                    .map(|((&h, &g), &b)| h * g + b)
            })
            .collect();
        let shape = x.shape().to_vec();
        Ok(self.tape.op(
            Tensor::from_parts(shape.clone(), out),
            &[self, gain, bias],
            Box::new(move |g, p, _| {
                let gain = p[1].data();
                let mut dx = Vec::with_capacity(g.numel());
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                for ((grow, hrow), &r) in g.data().chunks(c).zip(xhat.chunks(c)).zip(&rstd) {
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for i in 0..c {
                        let dh = grow[i] * gain[i];
                        sum_dh += dh;
                        sum_dh_h += dh * hrow[i];
                        dgain[i] += grow[i] * hrow[i];
                        dbias[i] += grow[i];
                    }
                    let cf = c as f64;
                    for i in 0..c {
                        let dh = grow[i] * gain[i];
                        dx.push(r / cf * (cf * dh - sum_dh - hrow[i] * sum_dh_h));
                    }
                }
                vec![
                    Some(Tensor::from_parts(shape.clone(), dx)),
                    Some(Tensor::from_parts(vec![c], dgain)),
                    Some(Tensor::from_parts(vec![c], dbias)),
                ]
            }),
        ))
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum(self) -> Var<'t> {
        let value = Tensor::scalar(self.value().sum());
        unary(
            self,
            value,
            Box::new(|g, p, _| vec![Some(Tensor::full(p[0].shape().to_vec(), g.item()))]),
        )
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums over the first `k` axes.
    pub fn sum_leading(self, k: usize) -> Result<Var<'t>> {
        let x = self.value();
        if k == 0 || k >= x.rank() {
            return Err(Error::InvalidShape {
                shape: x.shape().to_vec(),
                reason: alloc::format!("sum_leading({k}) needs 0 < k < rank"),
            });
        }
        let rest: Vec<usize> = x.shape()[k..].to_vec();
        let inner: usize = rest.iter().product();
        let mut out = vec![0.0; inner];
        for chunk in x.data().chunks(inner) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        Ok(unary(
            self,
            Tensor::from_parts(rest, out),
            Box::new(move |g, p, _| {
                let reps = p[0].numel() / inner;
                let mut d = Vec::with_capacity(p[0].numel());
                for _ in 0..reps {
                    d.extend_from_slice(g.data());
                }
                vec![Some(Tensor::from_parts(p[0].shape().to_vec(), d))]
            }),
        ))
    }
}

fn batch_dims(
    a: &[usize],
    b: &[usize],
    trans_b: bool,
    op: &'static str,
) -> Result<(usize, usize, usize, usize)> {
    let err = || Error::shape(op, a, b);
    let (batch, m, k, bk, n) = match (a, b) {
        ([m, k], [r, c]) => {
            let (bk, n) = if trans_b { (*c, *r) } else { (*r, *c) };
            (1, *m, *k, bk, n)
        }
        ([ba, m, k], [bb, r, c]) if ba == bb => {
            let (bk, n) = if trans_b { (*c, *r) } else { (*r, *c) };
            (*ba, *m, *k, bk, n)
        }
        _ => return Err(err()),
    };
    if k != bk {
        return Err(err());
    }
    Ok((batch, m, k, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of a scalar function of one tensor.
    pub(crate) fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
        let h = 1e-5;
        let mut g = Tensor::zeros(x.shape().to_vec());
        for i in 0..x.numel() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
        let diff = a.max_abs_diff(b);
        diff / a.max_abs().max(b.max_abs()).max(1e-8)
    }

    fn sample(shape: &[usize], seed: f64) -> Tensor {
        Tensor::from_fn(shape.to_vec(), |i| libm::sin(seed + 1.7 * i as f64) * 1.3)
    }

    fn check(x: Tensor, build: impl for<'t> Fn(Var<'t>) -> Var<'t>) {
        let tape = Tape::with_precision(Precision::F64);
        let xv = tape.param(x.clone());
        let y = build(xv);
        let g = tape.backward(y).unwrap();
        let analytic = g.get(xv).unwrap().clone();
        let numeric = numeric_grad(&x, |x| {
            let tape = Tape::with_precision(Precision::F64);
            build(tape.constant(x.clone())).value().item()
        });
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-6, "rel err {e}: {analytic:?} vs {numeric:?}");
    }

    #[test]
    fn square_gradient() {
        let tape = Tape::with_precision(Precision::F64);
        let x = tape.param(Tensor::scalar(3.0));
        let y = x.square();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let tape = Tape::with_precision(Precision::F64);
        let x = tape.param(Tensor::zeros([2]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn softmax_dot_matches_finite_differences() {
        let v = sample(&[5], 0.3);
        check(sample(&[5], 1.1), move |x| {
            let vv = x.tape().constant(v.clone());
            x.softmax().unwrap().mul(vv).unwrap().sum()
        });
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        let w = sample(&[3, 4], 2.0);
        check(sample(&[2, 4], 0.5), |x| {
            x.matmul_t(x.tape().constant(w.clone()))
                .unwrap()
                .square()
                .sum()
        });
        let w2 = sample(&[4, 3], 0.9);
        check(sample(&[2, 4], 0.5), |x| {
            x.matmul(x.tape().constant(w2.clone())).unwrap().sin().sum()
        });
        check(sample(&[2, 3, 4], 0.1), |x| x.bmm_t(x).unwrap().cos().sum());
        let b3 = sample(&[2, 4, 2], 0.4);
        check(sample(&[2, 3, 4], 0.1), |x| {
            x.bmm(x.tape().constant(b3.clone())).unwrap().square().sum()
        });
        check(sample(&[2, 3, 4], 0.2), |x| {
            x.permute(&[2, 0, 1])
                .unwrap()
                .narrow(0, 1, 2)
                .unwrap()
                .square()
                .sum()
        });
        check(sample(&[3, 5], 0.7), |x| {
            x.log_softmax().unwrap().narrow(1, 2, 1).unwrap().sum()
        });
        check(sample(&[4, 3], 0.3), |x| x.gelu().exp().mean());
        check(sample(&[3, 2, 4], 0.3), |x| {
            x.sum_leading(2).unwrap().square().sum()
        });
        check(sample(&[2, 3], 0.8), |x| {
            Var::concat(&[x, x.scale(2.0)], 0)
                .unwrap()
                .relu()
                .square()
                .sum()
        });
        let b = sample(&[3], 0.6);
        check(sample(&[2, 3], 0.8), |x| {
            let bv = x.tape().constant(b.clone());
            x.mul(bv)
                .unwrap()
                .sub(bv)
                .unwrap()
                .add(x)
                .unwrap()
                .square()
                .sum()
        });
    }

    #[test]
    fn broadcast_operand_gradients() {
        let x = sample(&[2, 3], 0.2);
        check(sample(&[3], 1.5), |b| {
            let xv = b.tape().constant(x.clone());
            xv.mul(b).unwrap().sub(b).unwrap().square().sum()
        });
    }

    #[test]
    fn layernorm_gradients_and_values() {
        let tape = Tape::with_precision(Precision::F64);
        let x = tape.constant(Tensor::new(vec![2], vec![1.0, 3.0]).unwrap());
        let g = tape.constant(Tensor::ones([2]));
        let b = tape.constant(Tensor::zeros([2]));
        let y = x.layernorm(g, b, 1e-5).unwrap().value();
        // mean 2, var 1 => ±1/sqrt(1+eps)
        let expect = 1.0 / libm::sqrt(1.0 + 1e-5);
        assert!((y.data()[0] + expect).abs() < 1e-15 && (y.data()[1] - expect).abs() < 1e-15);

        let c = tape.constant(Tensor::full([3], 4.0));
        let g3 = tape.constant(Tensor::ones([3]));
        let b3 = tape.constant(Tensor::zeros([3]));
        assert_eq!(c.layernorm(g3, b3, 1e-5).unwrap().value().max_abs(), 0.0);

        let zero_gain = tape.constant(Tensor::zeros([3]));
        let bias = tape.constant(Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap());
        let xr = tape.constant(sample(&[4, 3], 0.1));
        let out = xr.layernorm(zero_gain, bias, 1e-5).unwrap().value();
        for row in out.data().chunks(3) {
            assert_eq!(row, &[0.5, -1.0, 2.0]);
        }

        let gain = sample(&[3], 0.9);
        let shift = sample(&[3], 0.2);
        check(sample(&[4, 3], 0.4), |x| {
            let t = x.tape();
            x.layernorm(t.constant(gain.clone()), t.constant(shift.clone()), 1e-5)
                .unwrap()
                .sin()
                .sum()
        });
        let xs = sample(&[4, 3], 0.4);
        check(gain.clone(), |g| {
            let t = g.tape();
            t.constant(xs.clone())
                .layernorm(g, t.constant(shift.clone()), 1e-5)
                .unwrap()
                .sin()
                .sum()
        });
    }

    #[test]
    fn unused_leaf_gets_zero_adjoint() {
        let tape = Tape::with_precision(Precision::F64);
        let x = tape.param(Tensor::ones([2, 2]));
        let unused = tape.param(Tensor::ones([3]));
        let y = x.square().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused).unwrap(), &Tensor::zeros([3]));
        assert_eq!(g.get(x).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn f32_mode_rounds_values() {
        let tape = Tape::with_precision(Precision::F32);
        let x = tape.constant(Tensor::scalar(0.1));
        assert_eq!(x.value().item(), 0.1f32 as f64);
    }
}
