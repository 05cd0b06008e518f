//! Weight spaces of feedforward networks and the neuron permutation group.
//!
//! Layer indices are zero-based in code: `weights[i]` connects neuron layer
//! `i` (width `layer_widths[i]`) to neuron layer `i + 1`, so it has shape
//! `[n_{i+1}, n_i, k·c]`. A [`NeuronPermutation`] holds one permutation per
//! neuron layer `0..=L`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeightSpaceSpec {
    pub layer_widths: Vec<usize>,
    /// Per weight layer filter width; `None` means fully connected.
    pub filter_widths: Option<Vec<usize>>,
    pub channels: usize,
}

impl WeightSpaceSpec {
    pub fn new(layer_widths: impl Into<Vec<usize>>, channels: usize) -> Result<Self> {
        let spec = Self {
            layer_widths: layer_widths.into(),
            filter_widths: None,
            channels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn conv(
        layer_widths: impl Into<Vec<usize>>,
        filter_widths: impl Into<Vec<usize>>,
        channels: usize,
    ) -> Result<Self> {
        let spec = Self {
            layer_widths: layer_widths.into(),
            filter_widths: Some(filter_widths.into()),
            channels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec("need at least one weight layer".into()));
        }
        if self.layer_widths.contains(&0) || self.channels == 0 {
            return Err(Error::InvalidSpec(
                "widths and channels must be positive".into(),
            ));
        }
        if let Some(k) = &self.filter_widths {
            if k.len() != self.num_layers() || k.contains(&0) {
                return Err(Error::InvalidSpec(format!(
                    "need {} positive filter widths, got {k:?}",
                    self.num_layers()
                )));
            }
        }
        Ok(())
    }

    /// Number of weight layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn filter_width(&self, layer: usize) -> usize {
        self.filter_widths.as_ref().map_or(1, |k| k[layer])
    }

    pub fn weight_shape(&self, layer: usize) -> [usize; 3] {
        [
            self.layer_widths[layer + 1],
            self.layer_widths[layer],
            self.filter_width(layer) * self.channels,
        ]
    }

    pub fn bias_shape(&self, layer: usize) -> [usize; 2] {
        [self.layer_widths[layer + 1], self.channels]
    }

    /// Number of weight entries, `Σ n_i·n_{i-1}·k_i`.
    pub fn dim_weights(&self) -> usize {
        (0..self.num_layers())
            .map(|i| self.layer_widths[i + 1] * self.layer_widths[i] * self.filter_width(i))
            .sum()
    }

    /// Number of weight and bias entries.
    pub fn dim(&self) -> usize {
        self.dim_weights() + self.layer_widths[1..].iter().sum::<usize>()
    }

    /// Total scalar count including channels.
    pub fn num_scalars(&self) -> usize {
        (0..self.num_layers())
            .map(|i| {
                self.weight_shape(i).iter().product::<usize>()
                    + self.bias_shape(i).iter().product::<usize>()
            })
            .sum()
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        Self {
            channels,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpaceFeature {
    pub spec: WeightSpaceSpec,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl WeightSpaceFeature {
    pub fn new(spec: WeightSpaceSpec, weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let l = spec.num_layers();
        if weights.len() != l || biases.len() != l {
            return Err(Error::SpecMismatch(format!(
                "expected {l} weight and bias tensors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for i in 0..l {
            if weights[i].shape() != spec.weight_shape(i) {
                return Err(Error::shape(
                    "weight layer",
                    weights[i].shape(),
                    &spec.weight_shape(i),
                ));
            }
            if biases[i].shape() != spec.bias_shape(i) {
                return Err(Error::shape(
                    "bias layer",
                    biases[i].shape(),
                    &spec.bias_shape(i),
                ));
            }
        }
        Ok(Self {
            spec,
            weights,
            biases,
        })
    }

    pub fn zeros(spec: &WeightSpaceSpec) -> Self {
        let l = spec.num_layers();
        Self {
            spec: spec.clone(),
            weights: (0..l)
                .map(|i| Tensor::zeros(spec.weight_shape(i)))
                .collect(),
            biases: (0..l).map(|i| Tensor::zeros(spec.bias_shape(i))).collect(),
        }
    }

    /// Entries drawn i.i.d. from `N(0, std²)`.
    pub fn random(spec: &WeightSpaceSpec, std: f64, rng: &mut impl Rng) -> Self {
        let l = spec.num_layers();
        let weights = (0..l)
            .map(|i| rng::normal(&spec.weight_shape(i), std, rng))
            .collect();
        let biases = (0..l)
            .map(|i| rng::normal(&spec.bias_shape(i), std, rng))
            .collect();
        Self {
            spec: spec.clone(),
            weights,
            biases,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(
            self.spec, other.spec,
            "comparing features of different specs"
        );
        self.weights
            .iter()
            .zip(&other.weights)
            .chain(self.biases.iter().zip(&other.biases))
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(Tensor::is_finite)
    }

    /// Flattens as `w.0, b.0, w.1, b.1, ...`, each row-major.
    pub fn flatten(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.spec.num_scalars());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            data.extend_from_slice(w.data());
            data.extend_from_slice(b.data());
        }
        let n = data.len();
        Tensor::from_parts(vec![n], data)
    }

    pub fn unflatten(flat: &Tensor, spec: &WeightSpaceSpec) -> Result<Self> {
        spec.validate()?;
        if flat.numel() != spec.num_scalars() {
            return Err(Error::SpecMismatch(format!(
                "flat length {} does not match spec size {}",
                flat.numel(),
                spec.num_scalars()
            )));
        }
        let mut pos = 0;
        let mut take = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            let t = Tensor::from_parts(shape.to_vec(), flat.data()[pos..pos + n].to_vec());
            pos += n;
            t
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..spec.num_layers() {
            weights.push(take(&spec.weight_shape(i)));
            biases.push(take(&spec.bias_shape(i)));
        }
        Ok(Self {
            spec: spec.clone(),
            weights,
            biases,
        })
    }

    /// Per-layer sums over all weight entries, `[L, channels]`.
    pub fn row_col_sums(&self) -> Tensor {
        let c = self.weights[0].shape()[2];
        let l = self.num_layers();
        let mut out = vec![0.0; l * c];
        for (i, w) in self.weights.iter().enumerate() {
            assert_eq!(w.shape()[2], c, "row_col_sums needs uniform channels");
            for entry in w.data().chunks(c) {
                for (o, v) in out[i * c..(i + 1) * c].iter_mut().zip(entry) {
                    *o += v;
                }
            }
        }
        Tensor::from_parts(vec![l, c], out)
    }

    /// Evaluates the network these weights describe (single channel) with ReLU
    /// hidden activations and an affine output layer.
    pub fn relu_mlp_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.spec.channels != 1 || self.spec.filter_widths.is_some() {
            return Err(Error::SpecMismatch(
                "MLP evaluation needs c = 1, fully connected".into(),
            ));
        }
        if x.len() != self.spec.layer_widths[0] {
            return Err(Error::shape(
                "relu_mlp_forward",
                &[x.len()],
                &self.spec.layer_widths[..1],
            ));
        }
        let mut h = x.to_vec();
        let l = self.num_layers();
        for i in 0..l {
            let [rows, cols, _] = self.spec.weight_shape(i);
            let w = self.weights[i].data();
            let b = self.biases[i].data();
            let mut next: Vec<f64> = (0..rows)
                .map(|r| b[r] + (0..cols).map(|c| w[r * cols + c] * h[c]).sum::<f64>())
                .collect();
            if i + 1 < l {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            h = next;
        }
        Ok(h)
    }
}

/// One permutation per neuron layer; `perms[i][j]` is the image of neuron `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronPermutation {
    pub perms: Vec<Vec<usize>>,
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter()
        .all(|&x| x < p.len() && !core::mem::replace(&mut seen[x], true))
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &x) in p.iter().enumerate() {
        inv[x] = i;
    }
    inv
}

impl NeuronPermutation {
    pub fn new(perms: Vec<Vec<usize>>) -> Result<Self> {
        for (i, p) in perms.iter().enumerate() {
            if !is_permutation(p) {
                return Err(Error::InvalidPermutation(format!("layer {i}: {p:?}")));
            }
        }
        Ok(Self { perms })
    }

    pub fn identity(spec: &WeightSpaceSpec) -> Self {
        Self {
            perms: spec
                .layer_widths
                .iter()
                .map(|&n| (0..n).collect())
                .collect(),
        }
    }

    /// Uniform permutation of every neuron layer, input and output included.
    pub fn random(spec: &WeightSpaceSpec, rng: &mut impl Rng) -> Self {
        let perms = spec
            .layer_widths
            .iter()
            .map(|&n| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        Self { perms }
    }

    /// Uniform permutation of hidden layers only; input and output fixed.
    pub fn random_hidden(spec: &WeightSpaceSpec, rng: &mut impl Rng) -> Self {
        let mut sigma = Self::random(spec, rng);
        let last = sigma.perms.len() - 1;
        for i in [0, last] {
            sigma.perms[i] = (0..sigma.perms[i].len()).collect();
        }
        sigma
    }

    pub fn is_compatible(&self, spec: &WeightSpaceSpec) -> bool {
        self.perms.len() == spec.layer_widths.len()
            && self
                .perms
                .iter()
                .zip(&spec.layer_widths)
                .all(|(p, &n)| p.len() == n)
    }

    /// `(self ∘ other)(j) = self(other(j))` per layer.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.perms.len() != other.perms.len()
            || self
                .perms
                .iter()
                .zip(&other.perms)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::InvalidPermutation(
                "composing incompatible permutations".into(),
            ));
        }
        Ok(Self {
            perms: self
                .perms
                .iter()
                .zip(&other.perms)
                .map(|(a, b)| b.iter().map(|&j| a[j]).collect())
                .collect(),
        })
    }

    pub fn inverse(&self) -> Self {
        Self {
            perms: self.perms.iter().map(|p| invert(p)).collect(),
        }
    }

    fn check(&self, spec: &WeightSpaceSpec) -> Result<()> {
        if self.is_compatible(spec) {
            Ok(())
        } else {
            Err(Error::SpecMismatch(format!(
                "permutation sizes {:?} do not match widths {:?}",
                self.perms.iter().map(Vec::len).collect::<Vec<_>>(),
                spec.layer_widths
            )))
        }
    }

    /// `[σW]_{jk} = W_{σ_i⁻¹(j), σ_{i-1}⁻¹(k)}` and `[σb]_j = b_{σ_i⁻¹(j)}`;
    /// channel and filter axes ride along.
    pub fn apply(&self, u: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        self.check(&u.spec)?;
        let mut out = u.clone();
        for i in 0..u.num_layers() {
            let rows = &self.perms[i + 1];
            let cols = &self.perms[i];
            let [n_out, n_in, c] = u.spec.weight_shape(i);
            let src = u.weights[i].data();
            let dst = out.weights[i].data_mut();
            for r in 0..n_out {
                for k in 0..n_in {
                    let from = (r * n_in + k) * c;
                    let to = (rows[r] * n_in + cols[k]) * c;
                    dst[to..to + c].copy_from_slice(&src[from..from + c]);
                }
            }
            let bc = u.spec.channels;
            let src = u.biases[i].data();
            let dst = out.biases[i].data_mut();
            for r in 0..n_out {
                dst[rows[r] * bc..(rows[r] + 1) * bc].copy_from_slice(&src[r * bc..(r + 1) * bc]);
            }
        }
        Ok(out)
    }

    /// The induced bijection on weight indices.
    pub fn index_map(&self, spec: &WeightSpaceSpec) -> Result<IndexMap> {
        self.check(spec)?;
        let image = index_set(spec)
            .into_iter()
            .map(|(i, j, k)| (i, self.perms[i + 1][j], self.perms[i][k]))
            .collect();
        IndexMap::new(spec, image)
    }
}

/// Weight index `(layer, row, column)`.
pub type WeightIndex = (usize, usize, usize);

/// All weight indices in layer-major, row-major order.
pub fn index_set(spec: &WeightSpaceSpec) -> Vec<WeightIndex> {
    let mut out = Vec::with_capacity(spec.dim_weights());
    for i in 0..spec.num_layers() {
        for j in 0..spec.layer_widths[i + 1] {
            for k in 0..spec.layer_widths[i] {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn index_position(spec: &WeightSpaceSpec, (i, j, k): WeightIndex) -> Option<usize> {
    if i >= spec.num_layers() || j >= spec.layer_widths[i + 1] || k >= spec.layer_widths[i] {
        return None;
    }
    let before: usize = (0..i)
        .map(|l| spec.layer_widths[l + 1] * spec.layer_widths[l])
        .sum();
    Some(before + j * spec.layer_widths[i] + k)
}

/// A bijection on the weight index set; `image[p]` is where the index at
/// canonical position `p` is sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    pub spec: WeightSpaceSpec,
    pub image: Vec<WeightIndex>,
}

impl IndexMap {
    pub fn new(spec: &WeightSpaceSpec, image: Vec<WeightIndex>) -> Result<Self> {
        let n = spec.dim_weights();
        if image.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "index map has {} entries, need {n}",
                image.len()
            )));
        }
        let mut seen = vec![false; n];
        for &t in &image {
            let p = index_position(spec, t)
                .ok_or_else(|| Error::InvalidPermutation(format!("index {t:?} out of range")))?;
            if core::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidPermutation(format!("index {t:?} hit twice")));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            image,
        })
    }

    pub fn identity(spec: &WeightSpaceSpec) -> Self {
        Self {
            spec: spec.clone(),
            image: index_set(spec),
        }
    }

    pub fn get(&self, idx: WeightIndex) -> WeightIndex {
        let p = index_position(&self.spec, idx).expect("index in range");
        self.image[p]
    }

    pub fn inverse(&self) -> Self {
        let all = index_set(&self.spec);
        let mut image = all.clone();
        for (p, &t) in self.image.iter().enumerate() {
            image[index_position(&self.spec, t).expect("validated")] = all[p];
        }
        Self {
            spec: self.spec.clone(),
            image,
        }
    }

    /// Moves the weight entry at `α` to `τ(α)`; biases are untouched.
    pub fn apply(&self, u: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        if u.spec.layer_widths != self.spec.layer_widths {
            return Err(Error::SpecMismatch(
                "index map built for another spec".into(),
            ));
        }
        let c = u.weights[0].shape()[2];
        if u.weights.iter().any(|w| w.shape()[2] != c) {
            return Err(Error::SpecMismatch(
                "index maps need uniform channel counts".into(),
            ));
        }
        let mut out = u.clone();
        for (&(i, j, k), &(ti, tj, tk)) in index_set(&u.spec).iter().zip(&self.image) {
            let src_n = u.spec.layer_widths[i];
            let dst_n = u.spec.layer_widths[ti];
            let from = (j * src_n + k) * c;
            let to = (tj * dst_n + tk) * c;
            let vals: Vec<f64> = u.weights[i].data()[from..from + c].to_vec();
            out.weights[ti].data_mut()[to..to + c].copy_from_slice(&vals);
        }
        Ok(out)
    }

    /// True iff the map has the form `(i, j, k) ↦ (i, σ_{i+1}(j), σ_i(k))`
    /// for a single family of neuron permutations.
    pub fn is_np_member(&self) -> bool {
        let spec = &self.spec;
        let widths = &spec.layer_widths;
        // neuron layer -> permutation implied so far
        let mut implied: Vec<Option<Vec<usize>>> = vec![None; widths.len()];
        for i in 0..spec.num_layers() {
            let (n_out, n_in) = (widths[i + 1], widths[i]);
            let mut row_perm = vec![usize::MAX; n_out];
            let mut col_perm = vec![usize::MAX; n_in];
            for j in 0..n_out {
                for k in 0..n_in {
                    let (ti, tj, tk) = self.get((i, j, k));
                    if ti != i {
                        return false;
                    }
                    if row_perm[j] == usize::MAX {
                        row_perm[j] = tj;
                    } else if row_perm[j] != tj {
                        return false;
                    }
                    if col_perm[k] == usize::MAX {
                        col_perm[k] = tk;
                    } else if col_perm[k] != tk {
                        return false;
                    }
                }
            }
            for (layer, perm) in [(i, col_perm), (i + 1, row_perm)] {
                match &implied[layer] {
                    Some(prev) if *prev != perm => return false,
                    _ => implied[layer] = Some(perm),
                }
            }
        }
        true
    }
}

/// The three classes of weight-index bijections outside the neuron
/// permutation group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FalseSymmetryKind {
    /// Moves a weight into a different layer.
    CrossLayer,
    /// Rows and columns of one layer do not permute independently.
    RowColDecoupled,
    /// A layer's columns permute differently from the previous layer's rows.
    AdjacentDecoupled,
}

impl FalseSymmetryKind {
    pub const ALL: [FalseSymmetryKind; 3] = [
        FalseSymmetryKind::CrossLayer,
        FalseSymmetryKind::RowColDecoupled,
        FalseSymmetryKind::AdjacentDecoupled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FalseSymmetryKind::CrossLayer => "cross_layer",
            FalseSymmetryKind::RowColDecoupled => "row_col_decoupled",
            FalseSymmetryKind::AdjacentDecoupled => "adjacent_decoupled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalseSymmetry {
    pub kind: FalseSymmetryKind,
    pub map: IndexMap,
    /// The layer whose structure the map breaks.
    pub layer: usize,
}

/// Builds a false symmetry of the requested class together with the input
/// on which self-attention with identity projections separates `τ·f(U)` from
/// `f(τU)`:
///
/// - cross-layer: swaps `W¹₀₀ ↔ W²₀₀`; witness is all-zero (the layer
///   encodings carry the difference),
/// - row/column decoupled: swaps rows `j ↔ p` inside column `k` only;
///   witness is zero except `W_{jk} = W_{jq} = 1`,
/// - adjacent decoupled: swaps columns `k ↔ k'` of layer `i` without
///   touching layer `i-1`; witness is zero except `Wⁱ_{jk} = Wⁱ⁻¹_{kq} = 1`.
pub fn false_symmetry(
    kind: FalseSymmetryKind,
    spec: &WeightSpaceSpec,
    rng: &mut impl Rng,
) -> Result<(FalseSymmetry, WeightSpaceFeature)> {
    spec.validate()?;
    let widths = &spec.layer_widths;
    let l = spec.num_layers();
    let mut image = index_set(spec);
    let mut witness = WeightSpaceFeature::zeros(spec);
    let c = spec.weight_shape(0)[2];
    let set_one = |w: &mut WeightSpaceFeature, (i, j, k): WeightIndex| {
        let n_in = widths[i];
        let o = (j * n_in + k) * c;
        for v in &mut w.weights[i].data_mut()[o..o + c] {
            *v = 1.0;
        }
    };
    let swap = |image: &mut Vec<WeightIndex>, a: WeightIndex, b: WeightIndex| {
        let pa = index_position(spec, a).expect("in range");
        let pb = index_position(spec, b).expect("in range");
        image.swap(pa, pb);
    };
    let layer = match kind {
        FalseSymmetryKind::CrossLayer => {
            if l < 2 {
                return Err(Error::SpecTooSmall {
                    kind: "cross_layer",
                    requirement: "at least two weight layers",
                });
            }
            let i = rng.random_range(0..l - 1);
            swap(&mut image, (i, 0, 0), (i + 1, 0, 0));
            i
        }
        FalseSymmetryKind::RowColDecoupled => {
            let candidates: Vec<usize> = (0..l)
                .filter(|&i| widths[i + 1] >= 2 && widths[i] >= 2)
                .collect();
            if candidates.is_empty() {
                return Err(Error::SpecTooSmall {
                    kind: "row_col_decoupled",
                    requirement: "some weight layer with n_i >= 2 and n_{i-1} >= 2",
                });
            }
            let i = candidates[rng.random_range(0..candidates.len())];
            let (j, p) = distinct_pair(widths[i + 1], rng);
            let (k, q) = distinct_pair(widths[i], rng);
            // (i,j,k) -> (i,p,k) while (i,j,q) keeps row j
            swap(&mut image, (i, j, k), (i, p, k));
            set_one(&mut witness, (i, j, k));
            set_one(&mut witness, (i, j, q));
            i
        }
        FalseSymmetryKind::AdjacentDecoupled => {
            let candidates: Vec<usize> = (1..l).filter(|&i| widths[i] >= 2).collect();
            if candidates.is_empty() {
                return Err(Error::SpecTooSmall {
                    kind: "adjacent_decoupled",
                    requirement: "a hidden layer with n_i >= 2",
                });
            }
            let i = candidates[rng.random_range(0..candidates.len())];
            let (k, k2) = distinct_pair(widths[i], rng);
            for row in 0..widths[i + 1] {
                swap(&mut image, (i, row, k), (i, row, k2));
            }
            let j = rng.random_range(0..widths[i + 1]);
            let q = rng.random_range(0..widths[i - 1]);
            set_one(&mut witness, (i, j, k));
            set_one(&mut witness, (i - 1, k, q));
            i
        }
    };
    let map = IndexMap::new(spec, image)?;
    Ok((FalseSymmetry { kind, map, layer }, witness))
}

fn distinct_pair(n: usize, rng: &mut impl Rng) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spec(w: &[usize], c: usize) -> WeightSpaceSpec {
        WeightSpaceSpec::new(w.to_vec(), c).unwrap()
    }

    #[test]
    fn dims() {
        let s = spec(&[2, 3, 2], 1);
        assert_eq!(s.dim_weights(), 12);
        assert_eq!(s.dim(), 17);
        assert_eq!(WeightSpaceFeature::zeros(&s).flatten().numel(), 17);
        let conv = WeightSpaceSpec::conv(vec![2, 3, 2], vec![3, 5], 2).unwrap();
        assert_eq!(conv.dim_weights(), 6 * 3 + 6 * 5);
        assert_eq!(conv.weight_shape(1), [2, 3, 10]);
        assert!(WeightSpaceSpec::conv(vec![2, 3, 2], vec![3], 1).is_err());
        assert!(WeightSpaceSpec::new(vec![2], 1).is_err());
    }

    #[test]
    fn swap_hidden_example() {
        let s = spec(&[2, 2, 2], 1);
        let w1 = Tensor::new(vec![2, 2, 1], vec![1., 2., 3., 4.]).unwrap();
        let w2 = Tensor::new(vec![2, 2, 1], vec![5., 6., 7., 8.]).unwrap();
        let u = WeightSpaceFeature::new(
            s.clone(),
            vec![w1, w2],
            vec![Tensor::zeros([2, 1]), Tensor::zeros([2, 1])],
        )
        .unwrap();
        let sigma = NeuronPermutation::new(vec![vec![0, 1], vec![1, 0], vec![0, 1]]).unwrap();
        let out = sigma.apply(&u).unwrap();
        assert_eq!(out.weights[0].data(), &[3., 4., 1., 2.]);
        assert_eq!(out.weights[1].data(), &[6., 5., 8., 7.]);
        assert_eq!(NeuronPermutation::identity(&s).apply(&u).unwrap(), u);
    }

    #[test]
    fn action_laws() {
        let s = spec(&[2, 3, 4, 2], 2);
        let mut rng = seeded(3);
        let u = WeightSpaceFeature::random(&s, 1.0, &mut rng);
        for _ in 0..10 {
            let a = NeuronPermutation::random(&s, &mut rng);
            let b = NeuronPermutation::random(&s, &mut rng);
            let lhs = a.apply(&b.apply(&u).unwrap()).unwrap();
            let rhs = a.compose(&b).unwrap().apply(&u).unwrap();
            assert_eq!(lhs, rhs);
            assert_eq!(a.inverse().apply(&a.apply(&u).unwrap()).unwrap(), u);
        }
    }

    #[test]
    fn perm_validation() {
        assert!(NeuronPermutation::new(vec![vec![0, 0]]).is_err());
        let s = spec(&[2, 3], 1);
        let bad = NeuronPermutation::new(vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert!(bad.apply(&WeightSpaceFeature::zeros(&s)).is_err());
    }

    #[test]
    fn singleton_layers_force_identity() {
        let s = spec(&[1, 1, 1], 1);
        let mut rng = seeded(0);
        assert_eq!(
            NeuronPermutation::random(&s, &mut rng),
            NeuronPermutation::identity(&s)
        );
    }

    #[test]
    fn random_perm_seed_determinism() {
        let s = spec(&[3, 5, 4], 1);
        let a = NeuronPermutation::random(&s, &mut seeded(9));
        let b = NeuronPermutation::random(&s, &mut seeded(9));
        assert_eq!(a, b);
    }

    #[test]
    fn random_perm_is_uniform() {
        let s = spec(&[3, 1], 1);
        let mut rng = seeded(1234);
        let mut counts = alloc::collections::BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let p = NeuronPermutation::random(&s, &mut rng);
            *counts.entry(p.perms[0].clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let mut chi2 = 0.0;
        for &c in counts.values() {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.02, "{freq}");
            let e = draws as f64 / 6.0;
            chi2 += (c as f64 - e) * (c as f64 - e) / e;
        }
        // 5 dof, 99.9% quantile
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }

    #[test]
    fn relu_mlp_is_invariant_to_hidden_permutations() {
        let s = spec(&[3, 5, 4, 2], 1);
        let mut rng = seeded(5);
        let u = WeightSpaceFeature::random(&s, 1.0, &mut rng);
        for t in 0..10 {
            let sigma = NeuronPermutation::random_hidden(&s, &mut rng);
            let pu = sigma.apply(&u).unwrap();
            let x = [0.3 * t as f64, -1.0, 0.5];
            let a = u.relu_mlp_forward(&x).unwrap();
            let b = pu.relu_mlp_forward(&x).unwrap();
            for (a, b) in a.iter().zip(&b) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn flatten_round_trips() {
        let s = spec(&[2, 3, 2], 2);
        let mut rng = seeded(2);
        let u = WeightSpaceFeature::random(&s, 1.0, &mut rng);
        assert_eq!(WeightSpaceFeature::unflatten(&u.flatten(), &s).unwrap(), u);
        let v = rng::normal(&[s.num_scalars()], 1.0, &mut rng);
        assert_eq!(WeightSpaceFeature::unflatten(&v, &s).unwrap().flatten(), v);
        assert!(WeightSpaceFeature::unflatten(&Tensor::zeros([3]), &s).is_err());
    }

    #[test]
    fn row_col_sums_cases() {
        let s = spec(&[3, 2, 1], 1);
        let mut u = WeightSpaceFeature::zeros(&s);
        u.weights[0] = Tensor::ones([2, 3, 1]);
        assert_eq!(u.row_col_sums().data(), &[6.0, 0.0]);

        let s = spec(&[2, 3, 4, 2], 3);
        let mut rng = seeded(8);
        let u = WeightSpaceFeature::random(&s, 1.0, &mut rng);
        let sums = u.row_col_sums();
        for i in 0..3 {
            let [r, k, c] = s.weight_shape(i);
            for ch in 0..c {
                let mut acc = 0.0;
                for a in 0..r {
                    for b in 0..k {
                        acc += u.weights[i].get(&[a, b, ch]);
                    }
                }
                assert!((sums.get(&[i, ch]) - acc).abs() < 1e-12);
            }
        }
        let sigma = NeuronPermutation::random(&s, &mut rng);
        let p = sigma.apply(&u).unwrap().row_col_sums();
        assert!(p.max_abs_diff(&sums) < 1e-12);
    }

    #[test]
    fn np_maps_are_members_false_symmetries_are_not() {
        let s = spec(&[2, 3, 4, 2], 1);
        let mut rng = seeded(11);
        for _ in 0..20 {
            let sigma = NeuronPermutation::random(&s, &mut rng);
            assert!(sigma.index_map(&s).unwrap().is_np_member());
        }
        for kind in FalseSymmetryKind::ALL {
            for _ in 0..5 {
                let (fs, _) = false_symmetry(kind, &s, &mut rng).unwrap();
                assert!(!fs.map.is_np_member(), "{kind:?}");
            }
        }
    }

    #[test]
    fn index_map_apply_agrees_with_permutation_apply() {
        let s = spec(&[2, 3, 4, 2], 2);
        let mut rng = seeded(12);
        let mut u = WeightSpaceFeature::random(&s, 1.0, &mut rng);
        for b in &mut u.biases {
            *b = Tensor::zeros(b.shape().to_vec());
        }
        let sigma = NeuronPermutation::random(&s, &mut rng);
        let mut expect = sigma.apply(&u).unwrap();
        for b in &mut expect.biases {
            *b = Tensor::zeros(b.shape().to_vec());
        }
        assert_eq!(sigma.index_map(&s).unwrap().apply(&u).unwrap(), expect);
    }

    #[test]
    fn false_symmetry_round_trip() {
        let s = spec(&[2, 3, 4, 2], 1);
        let mut rng = seeded(13);
        let u = WeightSpaceFeature::random(&s, 1.0, &mut rng);
        for kind in FalseSymmetryKind::ALL {
            let (fs, _) = false_symmetry(kind, &s, &mut rng).unwrap();
            let back = fs.map.inverse().apply(&fs.map.apply(&u).unwrap()).unwrap();
            assert_eq!(back, u);
        }
    }

    #[test]
    fn cross_layer_on_two_by_two() {
        let s = spec(&[2, 2, 2], 1);
        let (fs, witness) =
            false_symmetry(FalseSymmetryKind::CrossLayer, &s, &mut seeded(0)).unwrap();
        assert_eq!(fs.map.get((0, 0, 0)), (1, 0, 0));
        assert_eq!(fs.map.get((1, 0, 0)), (0, 0, 0));
        assert_eq!(witness, WeightSpaceFeature::zeros(&s));
    }

    #[test]
    fn witnesses_follow_construction() {
        let s = spec(&[2, 3, 4, 2], 1);
        let mut rng = seeded(21);
        let (fs, w) = false_symmetry(FalseSymmetryKind::RowColDecoupled, &s, &mut rng).unwrap();
        let i = fs.layer;
        let ones: Vec<WeightIndex> = index_set(&s)
            .into_iter()
            .filter(|&(l, j, k)| w.weights[l].get(&[j, k, 0]) == 1.0)
            .collect();
        assert_eq!(ones.len(), 2);
        assert!(ones.iter().all(|&(l, j, _)| l == i && j == ones[0].1));
        let (_, j2, _) = fs.map.get(ones[0]);
        let (_, j3, _) = fs.map.get(ones[1]);
        assert_ne!(j2, j3, "one entry of the row moves, the other stays");

        let (fs, w) = false_symmetry(FalseSymmetryKind::AdjacentDecoupled, &s, &mut rng).unwrap();
        let i = fs.layer;
        let ones: Vec<WeightIndex> = index_set(&s)
            .into_iter()
            .filter(|&(l, j, k)| w.weights[l].get(&[j, k, 0]) == 1.0)
            .collect();
        assert_eq!(ones.len(), 2);
        let upper = ones.iter().find(|t| t.0 == i).unwrap();
        let lower = ones.iter().find(|t| t.0 == i - 1).unwrap();
        assert_eq!(
            upper.2, lower.1,
            "column of layer i matches row of layer i-1"
        );
    }

    #[test]
    fn too_small_specs_are_rejected() {
        let mut rng = seeded(0);
        let s = spec(&[1, 1], 1);
        assert!(false_symmetry(FalseSymmetryKind::CrossLayer, &s, &mut rng).is_err());
        assert!(false_symmetry(FalseSymmetryKind::RowColDecoupled, &s, &mut rng).is_err());
        let s = spec(&[3, 1, 3], 1);
        assert!(false_symmetry(FalseSymmetryKind::AdjacentDecoupled, &s, &mut rng).is_err());
    }

    /// Every bijection of the 4 weight indices of widths [1,2,1], classified
    /// by `is_np_member`, against the maps induced by enumerating the whole
    /// neuron permutation group.
    #[test]
    fn exhaustive_membership_on_tiny_spec() {
        let s = spec(&[1, 2, 1], 1);
        let all = index_set(&s);
        assert_eq!(all.len(), 4);
        let group: Vec<IndexMap> = [vec![0, 1], vec![1, 0]]
            .into_iter()
            .map(|p| {
                NeuronPermutation::new(vec![vec![0], p, vec![0]])
                    .unwrap()
                    .index_map(&s)
                    .unwrap()
            })
            .collect();
        let mut members = 0;
        let mut total = 0;
        let mut swaps_checked = 0;
        permutations(4, &mut |p| {
            total += 1;
            let image: Vec<WeightIndex> = p.iter().map(|&x| all[x]).collect();
            let map = IndexMap::new(&s, image).unwrap();
            let in_group = group.contains(&map);
            assert_eq!(map.is_np_member(), in_group, "{p:?}");
            if in_group {
                members += 1;
            }
            let moved = p.iter().enumerate().filter(|(i, &x)| *i != x).count();
            if moved == 2 {
                swaps_checked += 1;
                assert!(
                    !map.is_np_member(),
                    "single swap {p:?} is never a neuron permutation here"
                );
            }
        });
        assert_eq!(total, 24);
        assert_eq!(members, 2);
        assert_eq!(swaps_checked, 6);
    }

    fn permutations(n: usize, f: &mut impl FnMut(&[usize])) {
        fn rec(prefix: &mut Vec<usize>, used: &mut [bool], f: &mut impl FnMut(&[usize])) {
            if prefix.len() == used.len() {
                f(prefix);
                return;
            }
            for x in 0..used.len() {
                if !used[x] {
                    used[x] = true;
                    prefix.push(x);
                    rec(prefix, used, f);
                    prefix.pop();
                    used[x] = false;
                }
            }
        }
        rec(&mut Vec::new(), &mut vec![false; n], f);
    }
}
