//! Model intermediate representation: quantized weights, batch-norm folding,
//! layer and manifest types, and the input tensor transforms.

pub mod bn;
pub mod layer;
pub mod manifest;
pub mod tensor;
pub mod weight;

pub use bn::{apply_scale_exp, fold_bn_into_weights, quantize_bn, BnParams, FoldedAffine};
pub use layer::{BnState, LayerSpec, ShiftDir, WeightMatrix};
pub use manifest::{load_manifest, save_manifest, ModelManifest};
pub use tensor::{channel_shift, reshape_input, reshape_inverse, QuantTensor};
pub use weight::{log_quantize, PowTwoWeight, MAX_EXP, MIN_EXP};
