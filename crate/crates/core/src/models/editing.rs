//! Weight-space editing: `W' = W + Δ(W)` with an equivariant NFT `Δ`.

use alloc::vec::Vec;

use super::nft::{HeadKind, Nft, NftConfig};
use super::siren::{grid_coords, siren_forward, SirenNetwork};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Dropout, WsVar};
use crate::params::{Bound, ParamSet};
use crate::precision::Precision;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Editor {
    pub nft: Nft,
    pub image: (usize, usize),
}

impl Editor {
    pub fn new(mut config: NftConfig, image: (usize, usize)) -> Result<Self> {
        config.head = HeadKind::EquivariantDelta;
        config.in_channels = 1;
        Ok(Self {
            nft: Nft::new(config)?,
            image,
        })
    }

    /// `W + Δ(W)` on the tape.
    pub fn edit<'t>(
        &self,
        p: &Bound<'t>,
        net: &SirenNetwork,
        dropout: Option<&Dropout>,
    ) -> Result<WsVar<'t>> {
        let u = WsVar::constant(p.tape(), &net.weights);
        let delta = self.nft.forward(p, &u, dropout)?.delta()?;
        u.add(&delta)
    }

    /// Renders an edited feature at every pixel: `[h·w, n_L]`.
    pub fn render<'t>(&self, edited: &WsVar<'t>, omega0: f64) -> Result<Var<'t>> {
        let tape = edited.weights[0].tape();
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for (w, b) in edited.weights.iter().zip(&edited.biases) {
            let s = w.shape();
            ws.push(w.reshape([s[0], s[1]])?);
            bs.push(b.reshape([s[0]])?);
        }
        let x = tape.constant(grid_coords(self.image.0, self.image.1));
        siren_forward(&ws, &bs, x, omega0)
    }

    /// Mean squared error between the edited SIREN and `target: [h, w, ch]`.
    pub fn loss<'t>(
        &self,
        p: &Bound<'t>,
        net: &SirenNetwork,
        target: &Tensor,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        let (h, w) = self.image;
        let ts = target.shape();
        if ts.len() != 3 || ts[0] != h || ts[1] != w {
            return Err(Error::shape("edit target", ts, &[h, w, 1]));
        }
        let edited = self.edit(p, net, dropout)?;
        let out = self.render(&edited, net.omega0)?;
        let t = p.tape().constant(target.reshape([h * w, ts[2]])?);
        Ok(out.sub(t)?.square().mean())
    }

    pub fn edited_net(
        &self,
        params: &ParamSet,
        net: &SirenNetwork,
        precision: Precision,
    ) -> Result<SirenNetwork> {
        let tape = Tape::with_precision(precision);
        let p = params.bind_frozen(&tape);
        let edited = self.edit(&p, net, None)?.to_feature(net.spec())?;
        SirenNetwork::new(edited, net.omega0)
    }
}
