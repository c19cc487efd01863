use crate::data::PreparedData;
use crate::error::Result;
use crate::model::WindowSample;

/// Encoder start offsets of the sliding windows over a series of length
/// `len`: `0, stride, 2 stride, ...` while the decoder fits. Empty when the
/// series is shorter than one window.
pub fn window_starts(len: usize, encoder_len: usize, horizon: usize, stride: usize) -> Vec<usize> {
    let span = encoder_len + horizon;
    if stride == 0 || len < span {
        return Vec::new();
    }
    (0..=(len - span) / stride).map(|i| i * stride).collect()
}

/// Sliding windows over `y` (already scaled), with no covariates.
pub fn make_windows(y: &[f64], encoder_len: usize, horizon: usize, stride: usize) -> Vec<WindowSample> {
    window_starts(y.len(), encoder_len, horizon, stride)
        .into_iter()
        .map(|s| WindowSample {
            series: 0,
            start: s,
            encoder_len,
            horizon,
            n_cat: 0,
            n_cont: 0,
            cat: Vec::new(),
            cont: Vec::new(),
            y_encoder: y[s..s + encoder_len].to_vec(),
            y_decoder: Some(y[s + encoder_len..s + encoder_len + horizon].to_vec()),
            scale: 1.0,
        })
        .collect()
}

/// `(series, start)` of every training window, confined to each series'
/// training range. Series too short for a window are skipped with a warning.
pub fn training_index(data: &PreparedData, stride: usize) -> Vec<(usize, usize)> {
    let mut index = Vec::new();
    for (i, s) in data.series.iter().enumerate() {
        let starts = window_starts(s.split.train_end, data.encoder_len, data.horizon, stride);
        if starts.is_empty() {
            log::warn!("series '{}' has no training window; skipped", s.id);
        }
        index.extend(starts.into_iter().map(|st| (i, st)));
    }
    index
}

/// `(series, start)` of the windows whose decoders tile the validation range,
/// one horizon apart.
pub fn validation_index(data: &PreparedData) -> Vec<(usize, usize)> {
    let (e, k) = (data.encoder_len, data.horizon);
    let mut index = Vec::new();
    for (i, s) in data.series.iter().enumerate() {
        let mut origin = s.split.train_end;
        while origin + k <= s.split.val_end {
            if origin >= e {
                index.push((i, origin - e));
            }
            origin += k;
        }
    }
    index
}

pub fn cut_windows(data: &PreparedData, index: &[(usize, usize)], with_targets: bool) -> Result<Vec<WindowSample>> {
    index
        .iter()
        .map(|&(s, start)| data.window(s, start, with_targets))
        .collect()
}
