//! Dot-product attention over a set of key-value pairs.

use alloc::vec::Vec;
use core::cell::RefCell;
use core::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::rng::WsRng;
use crate::tensor::Tensor;

static SCALED: AtomicBool = AtomicBool::new(true);

/// Default for the `1/√d` logit scaling picked up by layer configs.
pub fn scaled_dot_product() -> bool {
    SCALED.load(Ordering::SeqCst)
}

pub fn set_scaled_dot_product(on: bool) {
    SCALED.store(on, Ordering::SeqCst);
}

/// Logit scale for dot products of length `d`.
pub(crate) fn logit_scale(scaled: bool, d: usize) -> f64 {
    if scaled {
        1.0 / libm::sqrt(d as f64)
    } else {
        1.0
    }
}

/// Inverted dropout used on attention weights and MLP hidden units during
/// training.
pub struct Dropout {
    pub p: f64,
    rng: RefCell<WsRng>,
}

impl Dropout {
    pub fn new(p: f64, rng: WsRng) -> Self {
        Self {
            p,
            rng: RefCell::new(rng),
        }
    }

    pub fn apply<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        if self.p <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.p;
        let mut rng = self.rng.borrow_mut();
        let mask = Tensor::from_fn(x.shape(), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        x.mul(x.tape().constant(mask))
    }
}

pub(crate) fn maybe_dropout<'t>(x: Var<'t>, dropout: Option<&Dropout>) -> Result<Var<'t>> {
    match dropout {
        Some(d) => d.apply(x),
        None => Ok(x),
    }
}

/// `Σ_p v_p · softmax_p(scale · q·k_p)` with `heads` heads splitting the last
/// (channel) axis of queries, keys and values. Queries and keys may be
/// arrays of any equal shape; their dot product runs over all entries of a
/// head. The output has the shape of a value.
pub fn attn<'t>(
    q: Var<'t>,
    keys: &[Var<'t>],
    values: &[Var<'t>],
    heads: usize,
    scaled: bool,
) -> Result<Var<'t>> {
    if keys.is_empty() || keys.len() != values.len() {
        return Err(Error::EmptyKeyValueSet);
    }
    let q_shape = q.shape();
    let v_shape = values[0].shape();
    for k in keys {
        if k.shape() != q_shape {
            return Err(Error::shape("attn key", &k.shape(), &q_shape));
        }
    }
    for v in values {
        if v.shape() != v_shape {
            return Err(Error::shape("attn value", &v.shape(), &v_shape));
        }
    }
    let split = |shape: &[usize]| -> Result<(usize, usize)> {
        let c = *shape.last().expect("tensors have rank >= 1");
        if heads == 0 || !c.is_multiple_of(heads) {
            return Err(Error::Config(alloc::format!(
                "{heads} heads do not divide {c} channels"
            )));
        }
        Ok((shape.iter().product::<usize>() / c, c / heads))
    };
    let (rest_q, dq) = split(&q_shape)?;
    let (rest_v, dv) = split(&v_shape)?;
    let n = keys.len();
    // [.., h, d] -> [h, .., d] flattened per head
    let per_head = |x: Var<'t>, rest: usize, d: usize| -> Result<Var<'t>> {
        x.reshape([rest, heads, d])?
            .permute(&[1, 0, 2])?
            .reshape([heads, 1, rest * d])
    };
    let qh = per_head(q, rest_q, dq)?;
    let kh: Vec<Var<'t>> = keys
        .iter()
        .map(|&k| per_head(k, rest_q, dq))
        .collect::<Result<_>>()?;
    let vh: Vec<Var<'t>> = values
        .iter()
        .map(|&v| per_head(v, rest_v, dv))
        .collect::<Result<_>>()?;
    let k_all = Var::concat(&kh, 1)?;
    let v_all = Var::concat(&vh, 1)?;
    let logits = qh.bmm_t(k_all)?.scale(logit_scale(scaled, rest_q * dq));
    debug_assert_eq!(logits.shape(), [heads, 1, n]);
    let weights = logits.softmax()?;
    let out = weights.bmm(v_all)?;
    out.reshape([heads, rest_v, dv])?
        .permute(&[1, 0, 2])?
        .reshape(v_shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::precision::Precision;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn singleton_set_returns_value() {
        let tape = Tape::with_precision(Precision::F64);
        let q = tape.constant(t(&[2], &[3.0, -7.0]));
        let k = tape.constant(t(&[2], &[0.1, 0.2]));
        let v = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let out = attn(q, &[k], &[v], 1, true).unwrap().value();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn orthogonal_query_averages() {
        let tape = Tape::with_precision(Precision::F64);
        let q = tape.constant(t(&[2], &[1.0, 0.0]));
        let k1 = tape.constant(t(&[2], &[0.0, 1.0]));
        let k2 = tape.constant(t(&[2], &[0.0, -1.0]));
        let v1 = tape.constant(t(&[2], &[2.0, 0.0]));
        let v2 = tape.constant(t(&[2], &[0.0, 4.0]));
        let out = attn(q, &[k1, k2], &[v1, v2], 1, true).unwrap().value();
        assert!(out.max_abs_diff(&t(&[2], &[1.0, 2.0])) < 1e-15);
    }

    #[test]
    fn unscaled_hand_softmax() {
        let tape = Tape::with_precision(Precision::F64);
        let q = tape.constant(t(&[1], &[1.0]));
        let keys = [
            tape.constant(t(&[1], &[0.0])),
            tape.constant(t(&[1], &[libm::log(3.0)])),
        ];
        let values = [
            tape.constant(t(&[1], &[0.0])),
            tape.constant(t(&[1], &[4.0])),
        ];
        let out = attn(q, &keys, &values, 1, false).unwrap().value();
        assert!((out.item() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let tape = Tape::with_precision(Precision::F64);
        let q = tape.constant(Tensor::zeros([2]));
        assert!(matches!(
            attn(q, &[], &[], 1, true),
            Err(Error::EmptyKeyValueSet)
        ));
        let bad = tape.constant(Tensor::zeros([3]));
        assert!(attn(q, &[bad], &[bad], 1, true).is_err());
    }

    #[test]
    fn set_order_does_not_matter() {
        let tape = Tape::with_precision(Precision::F64);
        let mk = |s: f64| tape.constant(Tensor::from_fn([3, 4], |i| libm::sin(s + i as f64)));
        let q = mk(0.0);
        let keys: Vec<_> = (1..5).map(|i| mk(i as f64)).collect();
        let values: Vec<_> = (5..9).map(|i| mk(i as f64 * 0.3)).collect();
        let a = attn(q, &keys, &values, 2, true).unwrap().value();
        let rk: Vec<_> = keys.iter().rev().copied().collect();
        let rv: Vec<_> = values.iter().rev().copied().collect();
        let b = attn(q, &rk, &rv, 2, true).unwrap().value();
        assert!(a.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn multi_head_is_per_head_single_head() {
        let tape = Tape::with_precision(Precision::F64);
        let mk = |s: f64| Tensor::from_fn([3, 4], |i| libm::sin(s + 0.7 * i as f64));
        let q = mk(0.0);
        let ks: Vec<Tensor> = (1..4).map(|i| mk(i as f64)).collect();
        let vs: Vec<Tensor> = (4..7).map(|i| mk(i as f64)).collect();
        let cv = |x: &Tensor| tape.constant(x.clone());
        let full = attn(
            cv(&q),
            &ks.iter().map(cv).collect::<Vec<_>>(),
            &vs.iter().map(cv).collect::<Vec<_>>(),
            2,
            true,
        )
        .unwrap()
        .value();
        for h in 0..2 {
            let head = |x: &Tensor| {
                tape.constant(
                    x.permute(&[1, 0])
                        .unwrap()
                        .narrow(0, 2 * h, 2)
                        .unwrap()
                        .permute(&[1, 0])
                        .unwrap(),
                )
            };
            let single = attn(
                head(&q),
                &ks.iter().map(head).collect::<Vec<_>>(),
                &vs.iter().map(head).collect::<Vec<_>>(),
                1,
                true,
            )
            .unwrap()
            .value();
            let expect = full
                .permute(&[1, 0])
                .unwrap()
                .narrow(0, 2 * h, 2)
                .unwrap()
                .permute(&[1, 0])
                .unwrap();
            assert!(single.max_abs_diff(&expect) < 1e-14);
        }
    }
}
