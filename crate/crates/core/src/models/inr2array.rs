//! Inr2Array: an invariant NFT encoder from SIREN weights to a spatial latent
//! array, and a hypernetwork decoder producing one SIREN per image patch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::nft::{HeadKind, Nft, NftConfig};
use super::siren::{bias_name, siren_forward, weight_name, SirenNetwork, DEFAULT_OMEGA0};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Dropout, WsVar};
use crate::params::{Bound, ParamSet};
use crate::precision::Precision;
use crate::rng;
use crate::tensor::Tensor;
use crate::weight_space::{WeightSpaceFeature, WeightSpaceSpec};

/// An `h × w` pixel grid on `[-1, 1]²` cut into `rows × cols` equal patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub h: usize,
    pub w: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(h: usize, w: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || !h.is_multiple_of(rows) || !w.is_multiple_of(cols) {
            return Err(Error::Config(format!(
                "a {h}x{w} grid cannot be cut into {rows}x{cols} equal patches"
            )));
        }
        Ok(Self { h, w, rows, cols })
    }

    pub fn num_patches(&self) -> usize {
        self.rows * self.cols
    }

    pub fn patch_pixels(&self) -> usize {
        (self.h / self.rows) * (self.w / self.cols)
    }

    /// Patch index of pixel `(r, c)`.
    pub fn patch_of(&self, r: usize, c: usize) -> usize {
        (r / (self.h / self.rows)) * self.cols + c / (self.w / self.cols)
    }

    /// Row-major pixel indices belonging to each patch.
    pub fn pixel_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(self.patch_pixels()); self.num_patches()];
        for r in 0..self.h {
            for c in 0..self.w {
                out[self.patch_of(r, c)].push(r * self.w + c);
            }
        }
        out
    }

    /// Pixel coordinates grouped by patch: `[M, P, 2]`.
    pub fn coords(&self) -> Tensor {
        self.gather(&super::siren::grid_coords(self.h, self.w))
    }

    /// Regroups a row-major `[h·w, k]` per-pixel tensor into `[M, P, k]`.
    pub fn gather(&self, per_pixel: &Tensor) -> Tensor {
        let k = per_pixel.shape()[1];
        let mut data = Vec::with_capacity(per_pixel.numel());
        for idx in self.pixel_indices() {
            for i in idx {
                data.extend_from_slice(&per_pixel.data()[i * k..(i + 1) * k]);
            }
        }
        Tensor::new(vec![self.num_patches(), self.patch_pixels(), k], data).expect("patch layout")
    }

    /// Inverse of [`PatchGrid::gather`].
    pub fn scatter(&self, patches: &Tensor) -> Tensor {
        let k = patches.shape()[2];
        let mut data = vec![0.0; self.h * self.w * k];
        let mut src = patches.data().chunks(k);
        for idx in self.pixel_indices() {
            for i in idx {
                data[i * k..(i + 1) * k].copy_from_slice(src.next().expect("patch layout"));
            }
        }
        Tensor::new(vec![self.h * self.w, k], data).expect("pixel layout")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoderInit {
    /// Zero output weights; output biases hold a freshly initialized SIREN,
    /// so every decoded network starts as that SIREN.
    #[default]
    SirenBias,
    /// Zero output weights and biases: every decoded SIREN starts at zero.
    Zero,
}

/// Per-target-tensor two-layer GELU MLPs mapping a latent `z_i ∈ R^d` to the
/// flattened weights of a SIREN.
#[derive(Debug, Clone)]
pub struct HyperDecoder {
    pub target: WeightSpaceSpec,
    pub latent_dim: usize,
    pub hidden: usize,
    pub init_mode: DecoderInit,
    pub omega0: f64,
}

impl HyperDecoder {
    fn name(tensor: &str, part: &str) -> String {
        format!("dec.{tensor}.{part}")
    }

    /// `(name, numel, output scale)` per target tensor. The scale is the
    /// SIREN init range of that tensor.
    fn targets(&self) -> Vec<(String, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.target.num_layers() {
            let [o, n, _] = self.target.weight_shape(i);
            let fan_in = n as f64;
            let w_scale = if i == 0 {
                1.0 / fan_in
            } else {
                libm::sqrt(6.0 / fan_in) / self.omega0
            };
            out.push((weight_name(i), o * n, w_scale));
            out.push((bias_name(i), o, 1.0 / libm::sqrt(fan_in)));
        }
        out
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        let reference = SirenNetwork::init(&self.target, self.omega0, rng)?;
        for (i, (tensor, numel, _)) in self.targets().into_iter().enumerate() {
            params.insert(
                Self::name(&tensor, "w1"),
                rng::xavier(self.hidden, self.latent_dim, rng),
            );
            params.insert(Self::name(&tensor, "b1"), Tensor::zeros([self.hidden]));
            params.insert(
                Self::name(&tensor, "w2"),
                Tensor::zeros([numel, self.hidden]),
            );
            let b2 = match self.init_mode {
                DecoderInit::Zero => Tensor::zeros([numel]),
                DecoderInit::SirenBias => {
                    let layer = i / 2;
                    let src = if i % 2 == 0 {
                        &reference.weights.weights[layer]
                    } else {
                        &reference.weights.biases[layer]
                    };
                    src.reshape([numel])?
                }
            };
            params.insert(Self::name(&tensor, "b2"), b2);
        }
        Ok(())
    }

    /// Decodes `z: [M, d]` into batched SIREN weights `[M, n_out, n_in]` and
    /// biases `[M, n_out]`.
    pub fn decode<'t>(&self, p: &Bound<'t>, z: Var<'t>) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
        let zs = z.shape();
        if zs.len() != 2 || zs[1] != self.latent_dim {
            return Err(Error::shape("decode", &zs, &[zs[0], self.latent_dim]));
        }
        let m = zs[0];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, (tensor, _, scale)) in self.targets().into_iter().enumerate() {
            let h = z
                .linear(
                    p.get(&Self::name(&tensor, "w1"))?,
                    Some(p.get(&Self::name(&tensor, "b1"))?),
                )?
                .gelu();
            let y = h
                .linear(p.get(&Self::name(&tensor, "w2"))?, None)?
                .scale(scale)
                .add(p.get(&Self::name(&tensor, "b2"))?)?;
            let layer = i / 2;
            if i % 2 == 0 {
                let [o, n, _] = self.target.weight_shape(layer);
                weights.push(y.reshape([m, o, n])?);
            } else {
                biases.push(y);
            }
        }
        Ok((weights, biases))
    }

    /// Decodes a single latent vector into a standalone SIREN.
    pub fn decode_net(&self, params: &ParamSet, z: &Tensor) -> Result<SirenNetwork> {
        let tape = Tape::with_precision(Precision::F64);
        let p = params.bind_frozen(&tape);
        let zv = tape.constant(z.reshape([1, self.latent_dim])?);
        let (ws, bs) = self.decode(&p, zv)?;
        let spec = self.target.with_channels(1);
        let weights = (0..ws.len())
            .map(|i| ws[i].value().reshape(spec.weight_shape(i).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let biases = (0..bs.len())
            .map(|i| bs[i].value().reshape(spec.bias_shape(i).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        SirenNetwork::new(WeightSpaceFeature::new(spec, weights, biases)?, self.omega0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inr2ArrayConfig {
    pub target: WeightSpaceSpec,
    pub encoder: NftConfig,
    pub latents: usize,
    pub latent_dim: usize,
    pub decoder_hidden: usize,
    pub decoder_init: DecoderInit,
    pub image: (usize, usize),
    pub patches: (usize, usize),
    pub omega0: f64,
}

impl Inr2ArrayConfig {
    /// Desk-scale defaults: SIREN 2→16→16→1 on 16×16 images, 2×2 patches,
    /// `d = 32`, encoder of 3 blocks with 64 channels and 4 heads.
    pub fn desk() -> Self {
        let target = WeightSpaceSpec::new([2, 16, 16, 1], 1).expect("valid spec");
        let mut encoder = NftConfig::new(1, 3, HeadKind::InvariantArray { m: 4, d: 32 });
        encoder.num_blocks = 3;
        encoder.channels = 64;
        encoder.heads = 4;
        encoder.mlp_hidden = 64;
        encoder.fourier_size = 32;
        encoder.fourier_scale = 3.0;
        Self {
            target,
            encoder,
            latents: 4,
            latent_dim: 32,
            decoder_hidden: 64,
            decoder_init: DecoderInit::default(),
            image: (16, 16),
            patches: (2, 2),
            omega0: DEFAULT_OMEGA0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inr2Array {
    pub config: Inr2ArrayConfig,
    pub encoder: Nft,
    pub decoder: HyperDecoder,
    pub grid: PatchGrid,
}

impl Inr2Array {
    pub fn new(config: Inr2ArrayConfig) -> Result<Self> {
        let mut enc_cfg = config.encoder.clone();
        enc_cfg.head = HeadKind::InvariantArray {
            m: config.latents,
            d: config.latent_dim,
        };
        enc_cfg.num_layers = config.target.num_layers();
        enc_cfg.in_channels = 1;
        let grid = PatchGrid::new(
            config.image.0,
            config.image.1,
            config.patches.0,
            config.patches.1,
        )?;
        if grid.num_patches() != config.latents {
            return Err(Error::Config(format!(
                "{} patches but {} latent vectors",
                grid.num_patches(),
                config.latents
            )));
        }
        let decoder = HyperDecoder {
            target: config.target.with_channels(1),
            latent_dim: config.latent_dim,
            hidden: config.decoder_hidden,
            init_mode: config.decoder_init,
            omega0: config.omega0,
        };
        Ok(Self {
            encoder: Nft::new(enc_cfg)?,
            decoder,
            grid,
            config,
        })
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.encoder.init(params, rng);
        self.decoder.init(params, rng)
    }

    fn check_net(&self, net: &SirenNetwork) -> Result<()> {
        if net.spec().layer_widths != self.config.target.layer_widths {
            return Err(Error::SpecMismatch(format!(
                "encoder expects SIREN widths {:?}, got {:?}",
                self.config.target.layer_widths,
                net.spec().layer_widths
            )));
        }
        Ok(())
    }

    pub fn encode<'t>(
        &self,
        p: &Bound<'t>,
        net: &SirenNetwork,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        self.check_net(net)?;
        let tape = p.tape();
        let u = WsVar::constant(tape, &net.weights);
        self.encoder.forward(p, &u, dropout)?.var()
    }

    /// Latent array of `net` as a plain tensor, computed at `precision`.
    pub fn encode_value(
        &self,
        params: &ParamSet,
        net: &SirenNetwork,
        precision: Precision,
    ) -> Result<Tensor> {
        let tape = Tape::with_precision(precision);
        let p = params.bind_frozen(&tape);
        Ok((*self.encode(&p, net, None)?.value()).clone())
    }

    /// `SIREN(x; W)` at every pixel, grouped by patch: `[M, P, n_L]`.
    pub fn targets(&self, net: &SirenNetwork) -> Result<Tensor> {
        let coords = super::siren::grid_coords(self.grid.h, self.grid.w);
        Ok(self.grid.gather(&net.eval(&coords)?))
    }

    /// Patchwise reconstruction of `SIREN(·; Ŵ_i)` from a latent array.
    pub fn reconstruct<'t>(&self, p: &Bound<'t>, z: Var<'t>) -> Result<Var<'t>> {
        let (ws, bs) = self.decoder.decode(p, z)?;
        let x = p.tape().constant(self.grid.coords());
        siren_forward(&ws, &bs, x, self.config.omega0)
    }

    /// `Σ_i Σ_{x∈P_i} (SIREN(x; Ŵ_i) − SIREN(x; W))²` with the target branch
    /// held constant. `targets` may be precomputed with
    /// [`Inr2Array::targets`].
    pub fn loss<'t>(
        &self,
        p: &Bound<'t>,
        net: &SirenNetwork,
        targets: &Tensor,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        let z = self.encode(p, net, dropout)?;
        let recon = self.reconstruct(p, z)?;
        Ok(recon
            .sub(p.tape().constant(targets.clone()))?
            .square()
            .sum())
    }

    /// Renders the decoded reconstruction of `net` as an `[h, w, n_L]`
    /// image.
    pub fn render_reconstruction(&self, params: &ParamSet, net: &SirenNetwork) -> Result<Tensor> {
        let tape = Tape::with_precision(Precision::F64);
        let p = params.bind_frozen(&tape);
        let z = self.encode(&p, net, None)?;
        let recon = self.reconstruct(&p, z)?.value();
        let pixels = self.grid.scatter(&recon);
        let k = pixels.shape()[1];
        pixels.reshape([self.grid.h, self.grid.w, k])
    }
}
