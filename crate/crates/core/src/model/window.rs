use serde::{Deserialize, Serialize};

/// One encoder/decoder window: `encoder_len` conditioning steps followed by
/// `horizon` forecast steps. Targets are in scaled units; `scale` maps them
/// back to the original series units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub series: usize,
    /// Index of the first encoder step within the series.
    pub start: usize,
    pub encoder_len: usize,
    pub horizon: usize,
    pub n_cat: usize,
    pub n_cont: usize,
    /// Row-major `(encoder_len + horizon) x n_cat`.
    pub cat: Vec<u32>,
    /// Row-major `(encoder_len + horizon) x n_cont`.
    pub cont: Vec<f64>,
    pub y_encoder: Vec<f64>,
    pub y_decoder: Option<Vec<f64>>,
    pub scale: f64,
}

impl WindowSample {
    pub fn len(&self) -> usize {
        self.encoder_len + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step_cat(&self, t: usize) -> &[u32] {
        &self.cat[t * self.n_cat..(t + 1) * self.n_cat]
    }

    pub fn step_cont(&self, t: usize) -> &[f64] {
        &self.cont[t * self.n_cont..(t + 1) * self.n_cont]
    }

    pub fn without_targets(&self) -> WindowSample {
        WindowSample {
            y_decoder: None,
            ..self.clone()
        }
    }
}
