//! Checks that `SA ∘ LayerEnc` is equivariant to neuron permutations and to
//! nothing else, using the three classes of false symmetry.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use super::feature::WsVar;
use super::layer_enc::LayerEnc;
use super::self_attention::{SelfAttention, Term3Mode};
use crate::autodiff::Tape;
use crate::error::Result;
use crate::params::ParamSet;
use crate::precision::Precision;
use crate::tensor::Tensor;
use crate::weight_space::{
    false_symmetry, FalseSymmetryKind, NeuronPermutation, WeightSpaceFeature, WeightSpaceSpec,
};

pub const MIN_FALSE_SYMMETRY_GAP: f64 = 1e-3;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GapRecord {
    pub name: String,
    /// `‖τ·f(U) − f(τU)‖_∞`.
    pub gap: f64,
    pub pass: bool,
}

/// `SA ∘ LayerEnc` on one channel with identity projections and layer
/// encodings `φ_i = i + 1`.
pub struct MinimalComposite {
    pub enc: LayerEnc,
    pub sa: SelfAttention,
    pub params: ParamSet,
}

impl MinimalComposite {
    pub fn new(num_layers: usize, term3: Term3Mode, scaled: bool) -> Self {
        let enc = LayerEnc::new("enc", num_layers, 1);
        let mut sa = SelfAttention::new("sa", 1, 1);
        sa.term3 = term3;
        sa.scaled = scaled;
        let mut params = ParamSet::new();
        sa.init_identity(&mut params);
        for i in 0..num_layers {
            params.insert(enc.phi_name(i), Tensor::full([1], (i + 1) as f64));
        }
        Self { enc, sa, params }
    }

    pub fn eval(&self, u: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        let tape = Tape::with_precision(Precision::F64);
        let p = self.params.bind_frozen(&tape);
        let x = WsVar::constant(&tape, u);
        self.sa
            .forward(&p, &self.enc.forward(&p, &x)?, None)?
            .to_feature(&u.spec)
    }
}

/// Runs `trials` random true permutations, then each false-symmetry class on
/// its witness input. Returns one record per check.
pub fn minimal_equivariance_suite(
    spec: &WeightSpaceSpec,
    term3: Term3Mode,
    scaled: bool,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<Vec<GapRecord>> {
    let spec = spec.with_channels(1);
    let f = MinimalComposite::new(spec.num_layers(), term3, scaled);
    let mut records = Vec::new();

    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u = WeightSpaceFeature::random(&spec, 1.0, rng);
        let sigma = NeuronPermutation::random(&spec, rng);
        let lhs = sigma.apply(&f.eval(&u)?)?;
        let rhs = f.eval(&sigma.apply(&u)?)?;
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    records.push(GapRecord {
        name: "true_permutations".to_string(),
        gap: worst,
        pass: worst <= EQUIVARIANCE_TOL,
    });

    for kind in FalseSymmetryKind::ALL {
        let (tau, witness) = false_symmetry(kind, &spec, rng)?;
        let lhs = tau.map.apply(&f.eval(&witness)?)?;
        let rhs = f.eval(&tau.map.apply(&witness)?)?;
        let gap = lhs.max_abs_diff(&rhs);
        records.push(GapRecord {
            name: kind.name().to_string(),
            gap,
            pass: gap >= MIN_FALSE_SYMMETRY_GAP,
        });
    }
    Ok(records)
}
