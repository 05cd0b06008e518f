//! Sinusoidal implicit neural representations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamSet;
use crate::precision::Precision;
use crate::rng;
use crate::tensor::Tensor;
use crate::weight_space::{WeightSpaceFeature, WeightSpaceSpec};

pub const DEFAULT_OMEGA0: f64 = 30.0;

/// A SIREN stored as a one-channel weight-space feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenNetwork {
    pub weights: WeightSpaceFeature,
    pub omega0: f64,
}

impl SirenNetwork {
    pub fn new(weights: WeightSpaceFeature, omega0: f64) -> Result<Self> {
        if weights.spec.channels != 1 || weights.spec.filter_widths.is_some() {
            return Err(Error::InvalidSpec(
                "a SIREN is a one-channel fully connected network".into(),
            ));
        }
        Ok(Self { weights, omega0 })
    }

    /// The usual SIREN initialization: first layer `U(-1/n, 1/n)`, later
    /// layers `U(-√(6/n)/ω₀, √(6/n)/ω₀)`, biases `U(-1/√n, 1/√n)`.
    pub fn init(spec: &WeightSpaceSpec, omega0: f64, rng: &mut impl Rng) -> Result<Self> {
        let spec = spec.with_channels(1);
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..spec.num_layers() {
            let n_in = spec.layer_widths[i] as f64;
            let a = if i == 0 {
                1.0 / n_in
            } else {
                libm::sqrt(6.0 / n_in) / omega0
            };
            weights.push(rng::uniform(&spec.weight_shape(i), -a, a, rng));
            let b = 1.0 / libm::sqrt(n_in);
            biases.push(rng::uniform(&spec.bias_shape(i), -b, b, rng));
        }
        Self::new(WeightSpaceFeature::new(spec, weights, biases)?, omega0)
    }

    pub fn spec(&self) -> &WeightSpaceSpec {
        &self.weights.spec
    }

    /// Evaluates the network at `coords: [B, n_0]`, returning `[B, n_L]`.
    pub fn eval(&self, coords: &Tensor) -> Result<Tensor> {
        let l = self.weights.num_layers();
        let mut h = coords.clone();
        for i in 0..l {
            let [n_out, n_in, _] = self.spec().weight_shape(i);
            let w = self.weights.weights[i].reshape([n_out, n_in])?;
            let mut z = h
                .matmul_t(&w)?
                .add(&self.weights.biases[i].reshape([n_out])?)?;
            if i + 1 < l {
                let s = self.omega0;
                z = z.map(|v| libm::sin(s * v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Renders the network on an `h × w` grid as an `[h, w, n_L]` image.
    pub fn render(&self, h: usize, w: usize) -> Result<Tensor> {
        let out = self.eval(&grid_coords(h, w))?;
        let ch = out.shape()[1];
        out.reshape([h, w, ch])
    }
}

/// Pixel-centre coordinates of an `h × w` image on `[-1, 1]²`, row-major,
/// each row `(x, y)` with `x` along the width.
pub fn grid_coords(h: usize, w: usize) -> Tensor {
    let lin = |n: usize, i: usize| {
        if n == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    };
    let mut data = Vec::with_capacity(2 * h * w);
    for r in 0..h {
        for c in 0..w {
            data.push(lin(w, c));
            data.push(lin(h, r));
        }
    }
    Tensor::new(vec![h * w, 2], data).expect("grid shape")
}

/// SIREN forward on the tape. Weights are `[n_out, n_in]` with `x: [B, n_in]`
/// or batched `[M, n_out, n_in]` with `x: [M, B, n_in]`; biases are `[n_out]`
/// or `[M, n_out]` accordingly.
pub fn siren_forward<'t>(
    weights: &[Var<'t>],
    biases: &[Var<'t>],
    x: Var<'t>,
    omega0: f64,
) -> Result<Var<'t>> {
    let l = weights.len();
    let mut h = x;
    for i in 0..l {
        let w = weights[i];
        let b = biases[i];
        let mut z = if w.shape().len() == 3 {
            let m = b.shape()[0];
            let n = b.shape()[1];
            h.bmm_t(w)?.add(b.reshape([m, 1, n])?)?
        } else {
            h.matmul_t(w)?.add(b)?
        };
        if i + 1 < l {
            z = z.scale(omega0).sin();
        }
        h = z;
    }
    Ok(h)
}

pub fn weight_name(i: usize) -> String {
    format!("w.{i}")
}

pub fn bias_name(i: usize) -> String {
    format!("b.{i}")
}

/// Stores a feature as `w.{i}` / `b.{i}` entries.
pub fn feature_to_params(u: &WeightSpaceFeature) -> ParamSet {
    let mut p = ParamSet::new();
    for i in 0..u.num_layers() {
        p.insert(weight_name(i), u.weights[i].clone());
        p.insert(bias_name(i), u.biases[i].clone());
    }
    p
}

pub fn params_to_feature(p: &ParamSet, spec: &WeightSpaceSpec) -> Result<WeightSpaceFeature> {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for i in 0..spec.num_layers() {
        weights.push(p.get(&weight_name(i))?.clone());
        biases.push(p.get(&bias_name(i))?.clone());
    }
    WeightSpaceFeature::new(spec.clone(), weights, biases)
}

/// Peak signal-to-noise ratio in dB for signals in `[0, 1]`.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * libm::log10(mse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
    pub omega0: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 1e-3,
            omega0: DEFAULT_OMEGA0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub net: SirenNetwork,
    pub init: SirenNetwork,
    pub mse: f64,
    pub psnr: f64,
}

/// Fits a fresh SIREN to `image: [h, w, ch]` with full-batch Adam on the
/// mean squared error.
pub fn fit_siren(
    image: &Tensor,
    spec: &WeightSpaceSpec,
    config: &FitConfig,
    rng: &mut impl Rng,
) -> Result<FitResult> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] < 4 || shape[1] < 4 {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "fit_siren needs an [h, w, ch] image with h, w >= 4".into(),
        });
    }
    let (h, w, ch) = (shape[0], shape[1], shape[2]);
    if spec.layer_widths[0] != 2 || *spec.layer_widths.last().expect("nonempty") != ch {
        return Err(Error::SpecMismatch(format!(
            "SIREN widths {:?} cannot map 2-d coordinates to {ch} channels",
            spec.layer_widths
        )));
    }
    let init = SirenNetwork::init(spec, config.omega0, rng)?;
    let spec = init.spec().clone();
    let coords = grid_coords(h, w);
    let target = image.reshape([h * w, ch])?;
    let mut params = feature_to_params(&init.weights);
    let mut opt = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let l = spec.num_layers();
    let loss_of = |tape: &Tape,
                   params: &ParamSet,
                   trainable: bool|
     -> Result<(f64, Option<BTreeMap<String, Tensor>>)> {
        let p = if trainable {
            params.bind(tape)
        } else {
            params.bind_frozen(tape)
        };
        let ws: Vec<Var<'_>> = (0..l)
            .map(|i| {
                let [o, n, _] = spec.weight_shape(i);
                p.get(&weight_name(i))?.reshape([o, n])
            })
            .collect::<Result<_>>()?;
        let bs: Vec<Var<'_>> = (0..l)
            .map(|i| {
                let o = spec.bias_shape(i)[0];
                p.get(&bias_name(i))?.reshape([o])
            })
            .collect::<Result<_>>()?;
        let y = siren_forward(&ws, &bs, tape.constant(coords.clone()), config.omega0)?;
        let loss = y.sub(tape.constant(target.clone()))?.square().mean();
        let value = loss.value().item();
        if !trainable || !value.is_finite() {
            return Ok((value, None));
        }
        Ok((value, Some(p.grads(&tape.backward(loss)?))))
    };
    for _ in 0..config.steps {
        let tape = Tape::with_precision(Precision::F64);
        let (loss, grads) = loss_of(&tape, &params, true)?;
        let Some(grads) = grads.filter(|_| loss.is_finite()) else {
            return Err(Error::Diverged(format!(
                "SIREN fit loss became non-finite; try a learning rate below {}",
                config.lr
            )));
        };
        opt.step(&mut params, &grads)?;
    }
    let tape = Tape::with_precision(Precision::F64);
    let mse = loss_of(&tape, &params, false)?.0;
    if !mse.is_finite() {
        return Err(Error::Diverged(format!(
            "SIREN fit loss became non-finite; try a learning rate below {}",
            config.lr
        )));
    }
    let net = SirenNetwork::new(params_to_feature(&params, &spec)?, config.omega0)?;
    Ok(FitResult {
        net,
        init,
        mse,
        psnr: psnr(mse),
    })
}
