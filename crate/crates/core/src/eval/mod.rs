//! Metrics, fixed and rolling evaluation, and inference timing.

mod metrics;
mod protocol;
mod report;

pub use metrics::{nd_metric, rmse_metric};
pub use protocol::{
    adapt, eval_fixed, eval_streaming, rolling_windows, time_forward, time_inference, window_context,
    EvalOutput, EvalReport, PreparedWindow, SeriesForecast, SeriesMetrics,
};
pub use report::write_forecast_csv;
