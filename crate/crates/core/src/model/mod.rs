//! Global encoder-decoder Gaussian forecaster with Baseline, ARU (FF2 fusion)
//! and ARU-Direct heads.

mod backward;
mod config;
mod forward;
mod params;
mod window;

pub use backward::AruGradient;
pub(crate) use backward::backward_window;
pub use config::{CategoricalFeature, FeatureSchema, Head, ModelConfig, Preset};
pub use forward::{
    decode_step, embed_inputs, encode, ff2_combine, forward_window, gaussian_head, softplus,
    Forecast, Mode,
};
pub(crate) use forward::{trace_window, FrozenLocal};
pub use params::{Embedding, Ff2, Ff2Path, Linear, Model, ModelParams};
pub use window::WindowSample;
