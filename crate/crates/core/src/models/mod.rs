//! Models composed from the weight-space layers.

pub mod classifier;
pub mod editing;
pub mod inr2array;
pub mod nft;
pub mod siren;
pub mod train;

pub use classifier::{ClassifierConfig, LatentClassifier};
pub use editing::Editor;
pub use inr2array::{DecoderInit, HyperDecoder, Inr2Array, Inr2ArrayConfig, PatchGrid};
pub use nft::{HeadKind, Nft, NftConfig, NftOutput};
pub use siren::{fit_siren, FitConfig, FitResult, SirenNetwork};
