//! Weight-space layers: self-attention, layer encodings, cross-attention
//! pooling, convolutional adapters, the Fourier channel lift and the NFT
//! block.

pub mod attention;
pub mod block;
pub mod conv;
pub mod cross_attention;
pub mod feature;
pub mod fourier;
pub mod layer_enc;
pub mod minimal;
pub mod self_attention;

pub use attention::{attn, scaled_dot_product, set_scaled_dot_product, Dropout};
pub use block::{Block, PointwiseMlp};
pub use conv::{conv_fold, ConvAdapter};
pub use cross_attention::CrossAttention;
pub use feature::WsVar;
pub use fourier::FourierLift;
pub use layer_enc::LayerEnc;
pub use minimal::{minimal_equivariance_suite, GapRecord, MinimalComposite};
pub use self_attention::{SelfAttention, Term3Mode, EXACT_TERM3_LIMIT};
