use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{nd_metric, rmse_metric};
use crate::aru::AruState;
use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::model::{decode_step, embed_inputs, encode, forward_window, Mode, Model, WindowSample};

/// Forecasts of one series in target units, all rolls concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesForecast {
    pub series: String,
    pub timestamps: Vec<i64>,
    pub truth: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub series: String,
    /// `None` when the series' test targets are all zero.
    pub nd: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub protocol: String,
    pub rolls: usize,
    pub windows: usize,
    pub nd: f64,
    pub rmse: f64,
    pub inference_seconds: Option<f64>,
    pub per_series: Vec<SeriesMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub forecasts: Vec<SeriesForecast>,
}

/// Window plus ARU state at its origin, ready for a forecast.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub window: WindowSample,
    pub state: Option<AruState>,
}

/// Decoder features of step `t` of a series under encoder context `g`.
fn step_h(model: &Model, data: &PreparedData, series: usize, t: usize, g: &[f64]) -> Result<Vec<f64>> {
    let s = &data.series[series];
    let (n_cat, n_cont) = (data.n_cat(), data.n_cont());
    let v = embed_inputs(
        &model.params,
        &model.config.schema,
        &s.cat[t * n_cat..(t + 1) * n_cat],
        &s.cont[t * n_cont..(t + 1) * n_cont],
    )?;
    Ok(decode_step(&model.params, g, &v))
}

/// Encoder context of a window.
pub fn window_context(model: &Model, window: &WindowSample) -> Result<Vec<f64>> {
    let v = (0..window.encoder_len)
        .map(|t| embed_inputs(&model.params, &model.config.schema, window.step_cat(t), window.step_cont(t)))
        .collect::<Result<Vec<_>>>()?;
    encode(model, &window.y_encoder, &v)
}

/// Apply ARU updates for steps `range` of a series, each with its decoder
/// features recomputed under context `g` and the target in the window's
/// scaled units.
pub fn adapt(
    model: &Model,
    data: &PreparedData,
    series: usize,
    range: std::ops::Range<usize>,
    g: &[f64],
    scale: f64,
    state: &mut AruState,
) -> Result<()> {
    for t in range {
        let h = step_h(model, data, series, t, g)?;
        state.update(&h, data.series[series].y[t] / scale)?;
    }
    Ok(())
}

fn fresh_state(model: &Model) -> Result<Option<AruState>> {
    match (&model.config.aru, model.config.head.uses_aru()) {
        (Some(cfg), true) => Ok(Some(AruState::new(cfg.clone())?)),
        _ => Ok(None),
    }
}

fn check_model(model: &Model, data: &PreparedData) -> Result<()> {
    if data.encoder_len != model.config.encoder_len || data.horizon != model.config.horizon {
        return Err(Error::InvalidConfig(format!(
            "data windows E={} K={} do not match model E={} K={}",
            data.encoder_len, data.horizon, model.config.encoder_len, model.config.horizon
        )));
    }
    if data.schema != model.config.schema {
        return Err(Error::InvalidConfig("data feature schema does not match the model".into()));
    }
    Ok(())
}

/// The per-series windows and origin states of a rolling evaluation.
///
/// Roll 0 starts at the test boundary. Its ARU state replays every earlier
/// step under roll 0's encoder context. Each later roll first adapts on the
/// steps realized since the previous roll, under its own context; that
/// adaptation uses only past targets, so forecasts stay honest.
pub fn rolling_windows(model: &Model, data: &PreparedData, series: usize, rolls: usize) -> Result<Vec<PreparedWindow>> {
    let s = &data.series[series];
    let (e, k) = (data.encoder_len, data.horizon);
    let origin0 = s.split.val_end;
    if origin0 < e || origin0 + rolls * k > s.len() {
        return Err(Error::SeriesTooShort {
            series: s.id.clone(),
            len: s.len(),
            needed: e.max(origin0) + rolls * k,
        });
    }
    let mut state = fresh_state(model)?;
    let mut updated_to = 0;
    let mut out = Vec::with_capacity(rolls);
    for r in 0..rolls {
        let origin = origin0 + r * k;
        let window = data.window(series, origin - e, true)?;
        if let Some(st) = state.as_mut() {
            let g = window_context(model, &window)?;
            adapt(model, data, series, updated_to..origin, &g, window.scale, st)?;
            updated_to = origin;
        }
        out.push(PreparedWindow {
            window,
            state: state.clone(),
        });
    }
    Ok(out)
}

fn forecast_series(model: &Model, data: &PreparedData, series: usize, rolls: usize) -> Result<(SeriesForecast, usize)> {
    let windows = rolling_windows(model, data, series, rolls)?;
    let s = &data.series[series];
    let mut fc = SeriesForecast {
        series: s.id.clone(),
        timestamps: Vec::new(),
        truth: Vec::new(),
        mu: Vec::new(),
        sigma: Vec::new(),
    };
    for pw in &windows {
        let (f, _) = forward_window(model, &pw.window.without_targets(), pw.state.as_ref(), Mode::Infer)?;
        let origin = pw.window.start + pw.window.encoder_len;
        let scale = pw.window.scale;
        for k in 0..pw.window.horizon {
            fc.timestamps.push(s.timestamps[origin + k]);
            fc.truth.push(s.y[origin + k]);
            fc.mu.push(f.mu[k] * scale);
            fc.sigma.push(f.sigma[k] * scale);
        }
    }
    Ok((fc, windows.len()))
}

fn evaluate(model: &Model, data: &PreparedData, rolls: usize, protocol: &str) -> Result<EvalOutput> {
    check_model(model, data)?;
    if data.series.is_empty() || rolls == 0 {
        return Err(Error::Empty("nothing to evaluate".into()));
    }
    let results: Vec<Result<(SeriesForecast, usize)>> = (0..data.series.len())
        .into_par_iter()
        .map(|i| forecast_series(model, data, i, rolls))
        .collect();
    let mut forecasts = Vec::with_capacity(results.len());
    let mut windows = 0;
    for r in results {
        let (f, n) = r?;
        windows += n;
        forecasts.push(f);
    }
    let truth: Vec<f64> = forecasts.iter().flat_map(|f| f.truth.iter().copied()).collect();
    let mu: Vec<f64> = forecasts.iter().flat_map(|f| f.mu.iter().copied()).collect();
    let per_series = forecasts
        .iter()
        .map(|f| {
            Ok(SeriesMetrics {
                series: f.series.clone(),
                nd: nd_metric(&f.truth, &f.mu).ok(),
                rmse: rmse_metric(&f.truth, &f.mu)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalOutput {
        report: EvalReport {
            method: model.config.head.name().to_string(),
            protocol: protocol.to_string(),
            rolls,
            windows,
            nd: nd_metric(&truth, &mu)?,
            rmse: rmse_metric(&truth, &mu)?,
            inference_seconds: None,
            per_series,
        },
        forecasts,
    })
}

/// One forecast per series over its test horizon. ARU state at the origin
/// is a chronological replay of all earlier steps.
pub fn eval_fixed(model: &Model, data: &PreparedData) -> Result<EvalOutput> {
    evaluate(model, data, 1, "fixed")
}

/// `rolls` consecutive horizons per series with frozen global parameters and
/// live ARU adaptation between rolls.
pub fn eval_streaming(model: &Model, data: &PreparedData, rolls: usize) -> Result<EvalOutput> {
    evaluate(model, data, rolls, "streaming")
}

/// Best-of-`repeats` wall-clock seconds of predict-only forward passes over
/// prepared windows, on the calling thread.
pub fn time_forward(model: &Model, windows: &[PreparedWindow], repeats: usize) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("no windows to time".into()));
    }
    let inputs: Vec<WindowSample> = windows.iter().map(|w| w.window.without_targets()).collect();
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let started = Instant::now();
        for (w, pw) in inputs.iter().zip(windows) {
            let out = forward_window(model, w, pw.state.as_ref(), Mode::Infer)?;
            std::hint::black_box(out);
        }
        best = best.min(started.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Inference time for the test windows of `data` (best of 3). State
/// preparation is excluded.
pub fn time_inference(model: &Model, data: &PreparedData, rolls: usize) -> Result<f64> {
    check_model(model, data)?;
    let mut windows = Vec::new();
    for i in 0..data.series.len() {
        windows.extend(rolling_windows(model, data, i, rolls)?);
    }
    // warm-up pass
    time_forward(model, &windows, 1)?;
    time_forward(model, &windows, 3)
}
