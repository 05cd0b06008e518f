//! Dense row-major `f64` tensors and the numeric kernels behind the tape ops.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimension extents must be positive".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: alloc::format!("expected {n} elements, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    /// Constructor for internal kernels where the length is correct by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::from_parts(shape, vec![value; n])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::from_parts(shape, (0..n).map(&mut f).collect())
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn([n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row-major strides derived from the shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[offset(&self.shape, index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = offset(&self.shape, index);
        self.data[o] = value;
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != self.numel() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        Ok(Self::from_parts(shape, self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn zip_map(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        broadcast_zip(self, other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        broadcast_zip(self, other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        broadcast_zip(self, other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub fn add_assign_scaled(&mut self, other: &Tensor, s: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = as_matrix(self, "matmul")?;
        let (k2, n) = as_matrix(other, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// `self · otherᵀ` for rank-2 tensors.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = as_matrix(self, "matmul_t")?;
        let (n, k2) = as_matrix(other, "matmul_t")?;
        if k != k2 {
            return Err(Error::shape("matmul_t", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Self> {
        as_matrix(self, "transpose")?;
        self.permute(&[1, 0])
    }

    /// Reorders axes: output axis `d` is input axis `axes[d]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank
            || axes
                .iter()
                .any(|&a| a >= rank || core::mem::replace(&mut seen[a], true))
        {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: alloc::format!("invalid axis permutation {axes:?}"),
            });
        }
        Ok(permute_data(self, axes))
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Self> {
        concat_data(parts, axis)
    }

    /// `len` consecutive slices starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        if axis >= self.rank() || len == 0 || start + len > self.shape[axis] {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: alloc::format!("narrow axis {axis} [{start}, {})", start + len),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let dim = self.shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Self::from_parts(shape, data))
    }

    /// Softmax along the last axis with max subtraction.
    pub fn softmax(&self) -> Result<Self> {
        let n = *self
            .shape
            .last()
            .ok_or(Error::EmptyAxis { op: "softmax" })?;
        let mut data = self.data.clone();
        for row in data.chunks_mut(n) {
            softmax_row(row);
        }
        Ok(Self::from_parts(self.shape.clone(), data))
    }
}

pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - max);
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

fn offset(shape: &[usize], index: &[usize]) -> usize {
    assert_eq!(shape.len(), index.len(), "index rank mismatch");
    index.iter().zip(shape).fold(0, |acc, (&i, &d)| {
        assert!(i < d, "index {i} out of bounds for extent {d}");
        acc * d + i
    })
}

fn as_matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: alloc::format!("{op} expects a rank-2 tensor"),
        }),
    }
}

/// Right-aligned broadcast check: every axis of `b` equals the matching axis
/// of `a` or is 1, and `b` has no more axes than `a`.
pub(crate) fn broadcastable(a: &[usize], b: &[usize]) -> bool {
    if b.len() > a.len() {
        return false;
    }
    let lead = a.len() - b.len();
    b.iter()
        .zip(&a[lead..])
        .all(|(&bd, &ad)| bd == ad || bd == 1)
}

/// Maps each flat index of `a_shape` to the flat index of `b_shape` under
/// right-aligned broadcasting.
pub(crate) fn broadcast_index_map(a_shape: &[usize], b_shape: &[usize]) -> Vec<usize> {
    let n: usize = a_shape.iter().product();
    let lead = a_shape.len() - b_shape.len();
    let b_strides = strides_of(b_shape);
    // stride of b along each axis of a (0 where broadcast)
    let eff: Vec<usize> = (0..a_shape.len())
        .map(|d| {
            if d < lead || b_shape[d - lead] == 1 {
                0
            } else {
                b_strides[d - lead]
            }
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; a_shape.len()];
    let mut pos = 0usize;
    for _ in 0..n {
        out.push(pos);
        for d in (0..a_shape.len()).rev() {
            idx[d] += 1;
            pos += eff[d];
            if idx[d] < a_shape[d] {
                break;
            }
            pos -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

pub(crate) fn broadcast_zip(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape == b.shape {
        return a.zip_map(b, op, f);
    }
    if !broadcastable(&a.shape, &b.shape) {
        return Err(Error::shape(op, &a.shape, &b.shape));
    }
    let bn = b.numel();
    let data: Vec<f64> = if a.shape.ends_with(&b.shape) {
        a.data
            .chunks(bn)
            .flat_map(|chunk| chunk.iter().zip(&b.data).map(|(&x, &y)| f(x, y)))
            .collect()
    } else {
        let map = broadcast_index_map(&a.shape, &b.shape);
        a.data
            .iter()
            .zip(map)
            .map(|(&x, j)| f(x, b.data[j]))
            .collect()
    };
    Ok(Tensor::from_parts(a.shape.clone(), data))
}

/// Sums `grad` (shaped like the broadcast result) back down to `b_shape`.
pub(crate) fn reduce_to(grad: &Tensor, b_shape: &[usize]) -> Tensor {
    if grad.shape() == b_shape {
        return grad.clone();
    }
    let bn: usize = b_shape.iter().product();
    let mut out = vec![0.0; bn];
    if grad.shape().ends_with(b_shape) {
        for chunk in grad.data().chunks(bn) {
            for (o, g) in out.iter_mut().zip(chunk) {
                *o += g;
            }
        }
    } else {
        let map = broadcast_index_map(grad.shape(), b_shape);
        for (g, j) in grad.data().iter().zip(map) {
            out[j] += g;
        }
    }
    Tensor::from_parts(b_shape.to_vec(), out)
}

pub(crate) fn permute_data(t: &Tensor, axes: &[usize]) -> Tensor {
    let rank = t.rank();
    let in_strides = t.strides();
    let out_shape: Vec<usize> = axes.iter().map(|&a| t.shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = t.numel();
    let mut data = Vec::with_capacity(n);
    if rank == 0 {
        return t.clone();
    }
    // innermost axis handled as a tight loop
    let last = rank - 1;
    let inner = out_shape[last];
    let inner_stride = src_strides[last];
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    let outer = n / inner;
    for _ in 0..outer {
        if inner_stride == 1 {
            data.extend_from_slice(&t.data[base..base + inner]);
        } else {
            data.extend((0..inner).map(|i| t.data[base + i * inner_stride]));
        }
        for d in (0..last).rev() {
            idx[d] += 1;
            base += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            base -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(out_shape, data)
}

pub(crate) fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (d, &a) in axes.iter().enumerate() {
        inv[a] = d;
    }
    inv
}

pub(crate) fn concat_data(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or(Error::InvalidShape {
        shape: Vec::new(),
        reason: "concat of zero tensors".into(),
    })?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::InvalidShape {
            shape: first.shape.clone(),
            reason: alloc::format!("concat axis {axis} out of range"),
        });
    }
    for p in parts {
        let same = p.rank() == rank
            && p.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !same {
            return Err(Error::shape("concat", &first.shape, &p.shape));
        }
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape[axis] * inner;
            data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape.clone();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, data))
}

/// `out += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += s * bv;
            }
        }
    }
}

/// `out += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out += a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let s = a[p * m + i];
            if s == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += s * bv;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(Tensor::eye(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn selector_row() {
        let r = t(&[1, 2], &[1., 0.])
            .matmul(&t(&[2, 1], &[5., 7.]))
            .unwrap();
        assert_eq!(r.data(), &[5.0]);
    }

    #[test]
    fn matmul_rejects_mismatch_naming_both_shapes() {
        let err = Tensor::zeros([3, 4])
            .matmul(&Tensor::zeros([3, 2]))
            .unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[3, 4]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = Tensor::from_fn([3, 4], |i| libm::sin(i as f64 * 0.7) * 2.0);
        let b = Tensor::from_fn([4, 2], |i| libm::cos(i as f64 * 1.3) - 0.2);
        let c = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a.get(&[i, p]) * b.get(&[p, j]);
                }
                assert!((c.get(&[i, j]) - s).abs() < 1e-12);
            }
        }
        let bt = b.transpose().unwrap();
        assert!(a.matmul_t(&bt).unwrap().max_abs_diff(&c) < 1e-12);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn permute_round_trip() {
        let a = Tensor::from_fn([2, 3, 4], |i| i as f64);
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), a.get(&[1, 2, 3]));
        let back = p.permute(&inverse_axes(&[2, 0, 1])).unwrap();
        assert_eq!(back, a);
        assert!(a.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn broadcast_trailing_only() {
        let a = Tensor::from_fn([2, 3], |i| i as f64);
        let row = t(&[3], &[10., 20., 30.]);
        assert_eq!(a.add(&row).unwrap().data(), &[10., 21., 32., 13., 24., 35.]);
        let col = t(&[2, 1], &[100., 200.]);
        assert_eq!(
            a.add(&col).unwrap().data(),
            &[100., 101., 102., 203., 204., 205.]
        );
        assert!(a.add(&t(&[2], &[1., 2.])).is_err());
        let g = reduce_to(&Tensor::ones([2, 3]), &[2, 1]);
        assert_eq!(g.data(), &[3.0, 3.0]);
    }

    #[test]
    fn concat_and_narrow() {
        let a = Tensor::from_fn([2, 1, 2], |i| i as f64);
        let b = Tensor::from_fn([2, 2, 2], |i| 10.0 + i as f64);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2]);
        assert_eq!(c.narrow(1, 1, 2).unwrap(), b);
        assert_eq!(c.narrow(1, 0, 1).unwrap(), a);
    }

    #[test]
    fn softmax_cases() {
        let u = t(&[3], &[0., 0., 0.]).softmax().unwrap();
        for &x in u.data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let w = t(&[2], &[0.0, libm::log(3.0)]).softmax().unwrap();
        assert!((w.data()[0] - 0.25).abs() < 1e-15 && (w.data()[1] - 0.75).abs() < 1e-15);
        let big = t(&[2], &[1000., 0.]).softmax().unwrap();
        assert!((big.data()[0] - 1.0).abs() < 1e-15 && big.data()[1] < 1e-300);
    }
}
