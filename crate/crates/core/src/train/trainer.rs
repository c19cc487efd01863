use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::grad::{batch_loss, batch_loss_and_grad, clip_global_norm};
use super::windows::{cut_windows, training_index, validation_index};
use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::model::{AruGradient, Model};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub stride: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub aru_gradient: AruGradient,
    /// Cap on training windows per epoch, taken from the front of each
    /// epoch's shuffle.
    pub max_windows_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            stride: 1,
            epochs: 10,
            seed: 0,
            clip_norm: 10.0,
            aru_gradient: AruGradient::StopGradient,
            max_windows_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidConfig("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Optimiser progress carried across resumed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    pub epochs_done: usize,
    /// Best validation loss so far (infinite before the first epoch).
    pub best_val: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub const TSV_HEADER: &'static str = "epoch\ttrain_nll\tval_nll\tseconds";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, self.train_nll, self.val_nll, self.seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch of this run, if any epoch
    /// improved on the resumed best.
    pub best: Option<(Model, usize)>,
    pub last: Model,
    pub state: TrainState,
    pub log: Vec<EpochLog>,
}

/// Train for `cfg.epochs` further epochs with Adam on per-window mean NLL.
/// Epoch numbers, shuffles and the Adam step continue from `resume`.
pub fn train(
    mut model: Model,
    data: &PreparedData,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.encoder_len != model.config.encoder_len || data.horizon != model.config.horizon {
        return Err(Error::InvalidConfig(format!(
            "data windows E={} K={} do not match model E={} K={}",
            data.encoder_len, data.horizon, model.config.encoder_len, model.config.horizon
        )));
    }
    if data.schema != model.config.schema {
        return Err(Error::InvalidConfig("data feature schema does not match the model".into()));
    }
    let mut state = resume.unwrap_or_else(|| TrainState {
        adam: AdamState::new(&model.params),
        epochs_done: 0,
        best_val: f64::INFINITY,
    });

    let train_index = training_index(data, cfg.stride);
    if train_index.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let val_windows = cut_windows(data, &validation_index(data), true)?;
    if val_windows.is_empty() {
        log::warn!("no validation windows; selecting on training loss");
    }

    let mut best = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let epoch = state.epochs_done + 1;
        let started = Instant::now();
        let mut order = train_index.clone();
        order.shuffle(&mut rng::stream(cfg.seed, &format!("shuffle/epoch/{epoch}")));
        if let Some(cap) = cfg.max_windows_per_epoch {
            order.truncate(cap.max(1));
        }

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let windows = cut_windows(data, batch, true)?;
            let (loss, mut grad) = batch_loss_and_grad(&model, &windows, cfg.aru_gradient)
                .map_err(|e| diverged(epoch, e))?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite loss or gradient (loss {loss})"),
                });
            }
            clip_global_norm(&mut grad, cfg.clip_norm);
            adam_step(&mut model.params, &grad, &mut state.adam, cfg.learning_rate);
            if !model.params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite parameters after update".into(),
                });
            }
            loss_sum += loss * windows.len() as f64;
        }
        let train_nll = loss_sum / order.len() as f64;
        let val_nll = if val_windows.is_empty() {
            train_nll
        } else {
            batch_loss(&model, &val_windows).map_err(|e| diverged(epoch, e))?
        };
        if !val_nll.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss {val_nll}"),
            });
        }

        state.epochs_done = epoch;
        if val_nll < state.best_val {
            state.best_val = val_nll;
            best = Some((model.clone(), epoch));
        }
        let entry = EpochLog {
            epoch,
            train_nll,
            val_nll,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        best,
        last: model,
        state,
        log,
    })
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Diverged { epoch, detail },
        other => other,
    }
}
