//! CSV ingestion, calendar features, scaling, splits and the synthetic
//! benchmark generator.

mod dataset;
mod prepare;
mod scale;
mod split;
mod synth;
mod time;

pub use dataset::{load_csv, write_csv, Dataset, Series, SeriesRecord};
pub use prepare::{prepare, FeatureConfig, PreparedData, PreparedSeries, Preprocessor, TimeEncoding};
pub use scale::{
    fit_min_max, scale_targets, target_scale, unscale_targets, MinMax, ScaleMode, ScalerState,
    FEATURE_CLAMP,
};
pub use split::{split, split_points, Protocol, SplitPoints};
pub use synth::{
    series_name, synth_design, synth_generate, SynthConfig, SynthManifest, SERIES_ID_COLUMN,
    SYNTH_COEFFICIENTS,
};
pub use time::{time_features, Granularity, TimeFeature};
