use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{ProtocolKind, RunConfig};
use crate::checkpoint::Checkpoint;
use crate::data::{
    load_csv, prepare, split, synth_generate, write_csv, Dataset, PreparedData, Preprocessor, Protocol,
    SERIES_ID_COLUMN,
};
use crate::error::{Error, Result};
use crate::eval::{eval_fixed, eval_streaming, time_inference, write_forecast_csv, EvalOutput};
use crate::model::{Head, Model};
use crate::train::{train, EpochLog, TrainOutcome};

pub const CONFIG_ECHO: &str = "config.txt";
pub const DATA_FILE: &str = "data.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LAST_FILE: &str = "last.ckpt";
pub const PREPROCESSOR_FILE: &str = "preprocessor.json";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const FORECAST_DIR: &str = "forecasts";
pub const SWEEP_TABLE: &str = "sweep.tsv";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Create the output directory and echo the effective config into it.
fn start_run(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join(CONFIG_ECHO), &cfg.to_text())
}

fn protocol(cfg: &RunConfig) -> Protocol {
    match cfg.protocol {
        ProtocolKind::Fixed => Protocol::Fixed,
        ProtocolKind::Streaming => Protocol::Streaming { rolls: cfg.rolls },
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("'data' must name a CSV file".into()))?;
    load_csv(path, cfg.granularity)
}

/// Write the synthetic dataset CSV and its manifest.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    if cfg.length < cfg.encoder_len + cfg.horizon {
        return Err(Error::InvalidConfig(format!(
            "length {} is shorter than encoder_len + horizon = {}",
            cfg.length,
            cfg.encoder_len + cfg.horizon
        )));
    }
    start_run(cfg)?;
    let (dataset, manifest) = synth_generate(&cfg.synth_config())?;
    let path = cfg.out.join(DATA_FILE);
    write_csv(&dataset, &path)?;
    manifest.save(cfg.out.join(MANIFEST_FILE))?;
    log::info!("wrote {} series to {}", dataset.series.len(), path.display());
    Ok(path)
}

/// Prepared data and training result of one fit.
pub struct Fitted {
    pub preprocessor: Preprocessor,
    pub data: PreparedData,
    pub outcome: TrainOutcome,
}

impl Fitted {
    /// Best-validation model, or the last one when no epoch improved.
    pub fn model(&self) -> &Model {
        self.outcome.best.as_ref().map_or(&self.outcome.last, |(m, _)| m)
    }
}

/// Fit the preprocessor and train a fresh model on `dataset`.
pub fn fit(cfg: &RunConfig, dataset: &Dataset, on_epoch: impl FnMut(&EpochLog)) -> Result<Fitted> {
    let (preprocessor, data) = prepare(dataset, &cfg.features(), cfg.encoder_len, cfg.horizon, protocol(cfg))?;
    let model = Model::new(cfg.model_config(data.schema.clone())?, cfg.seed)?;
    let outcome = train(model, &data, &cfg.train_config(), None, on_epoch)?;
    Ok(Fitted {
        preprocessor,
        data,
        outcome,
    })
}

fn epoch_logger(path: PathBuf, append: bool) -> Result<impl FnMut(&EpochLog)> {
    if !append || !path.exists() {
        write_text(&path, &format!("{}\n", EpochLog::TSV_HEADER))?;
    }
    Ok(move |e: &EpochLog| {
        log::info!("epoch {} train {:.5} val {:.5}", e.epoch, e.train_nll, e.val_nll);
        let line = format!("{}\n", e.to_tsv());
        let res = fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, line.as_bytes()));
        if let Err(err) = res {
            log::error!("cannot append to {}: {err}", path.display());
        }
    })
}

/// Train and write the best checkpoint, the resumable last checkpoint, the
/// preprocessor and the epoch log.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    start_run(cfg)?;
    let dataset = load_dataset(cfg)?;
    let (pre, data, model, resume) = if cfg.resume {
        let last = Checkpoint::load(cfg.out.join(LAST_FILE))?;
        let pre = Preprocessor::load(cfg.out.join(PREPROCESSOR_FILE))?;
        let splits = split(&dataset, cfg.encoder_len, cfg.horizon, protocol(cfg))?;
        let data = pre.transform(&dataset, &splits, cfg.encoder_len, cfg.horizon)?;
        if cfg.model_config(data.schema.clone())? != last.model.config {
            return Err(Error::Checkpoint("run config does not match the checkpoint being resumed".into()));
        }
        let state = last
            .train
            .ok_or_else(|| Error::Checkpoint("checkpoint has no optimiser state to resume".into()))?;
        (pre, data, last.model, Some(state))
    } else {
        let (pre, data) = prepare(&dataset, &cfg.features(), cfg.encoder_len, cfg.horizon, protocol(cfg))?;
        let model = Model::new(cfg.model_config(data.schema.clone())?, cfg.seed)?;
        (pre, data, model, None)
    };
    let resumed = resume.is_some();
    let logger = epoch_logger(cfg.out.join(TRAIN_LOG), resumed)?;
    let outcome = train(model, &data, &cfg.train_config(), resume, logger)?;

    pre.save(cfg.out.join(PREPROCESSOR_FILE))?;
    let best_path = cfg.out.join(MODEL_FILE);
    match &outcome.best {
        Some((m, epoch)) => {
            log::info!("best validation loss at epoch {epoch}");
            Checkpoint::new(m.clone()).save(&best_path)?;
        }
        // A resumed run that never improved keeps the earlier best.
        None if resumed && best_path.exists() => {}
        None => Checkpoint::new(outcome.last.clone()).save(&best_path)?,
    }
    Checkpoint {
        model: outcome.last.clone(),
        train: Some(outcome.state.clone()),
    }
    .save(cfg.out.join(LAST_FILE))?;
    Ok(outcome)
}

/// Evaluate a model on prepared data under the configured protocol.
pub fn evaluate(cfg: &RunConfig, model: &Model, data: &PreparedData) -> Result<EvalOutput> {
    let rolls = match cfg.protocol {
        ProtocolKind::Fixed => 1,
        ProtocolKind::Streaming => cfg.rolls,
    };
    let mut out = match cfg.protocol {
        ProtocolKind::Fixed => eval_fixed(model, data)?,
        ProtocolKind::Streaming => eval_streaming(model, data, rolls)?,
    };
    out.report.inference_seconds = Some(time_inference(model, data, rolls)?);
    Ok(out)
}

/// Load a checkpoint and its preprocessor, evaluate, and write the report
/// and optional per-series forecasts.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutput> {
    start_run(cfg)?;
    let ckpt_path = cfg.checkpoint.clone().unwrap_or_else(|| cfg.out.join(MODEL_FILE));
    let model = Checkpoint::load(&ckpt_path)?.model;
    let pre_path = ckpt_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(PREPROCESSOR_FILE);
    let pre = Preprocessor::load(&pre_path)?;
    if pre.schema != model.config.schema {
        return Err(Error::Checkpoint(format!(
            "{} does not match the checkpoint's feature schema",
            pre_path.display()
        )));
    }
    let (e, k) = (model.config.encoder_len, model.config.horizon);
    if (e, k) != (cfg.encoder_len, cfg.horizon) {
        return Err(Error::Checkpoint(format!(
            "checkpoint has E={e} K={k}, config asks for E={} K={}",
            cfg.encoder_len, cfg.horizon
        )));
    }
    let dataset = load_dataset(cfg)?;
    let splits = split(&dataset, e, k, protocol(cfg))?;
    let data = pre.transform(&dataset, &splits, e, k)?;
    let out = evaluate(cfg, &model, &data)?;
    out.report
        .save(cfg.out.join(REPORT_JSON), cfg.out.join(REPORT_TABLE))?;
    if cfg.emit_forecasts {
        let dir = cfg.out.join(FORECAST_DIR);
        create_dir(&dir)?;
        for f in &out.forecasts {
            write_forecast_csv(f, dir.join(format!("{}.csv", f.series)))?;
        }
    }
    Ok(out)
}

/// One sweep cell result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub length: usize,
    pub head: Head,
    pub with_ids: bool,
    /// Encoder length used, after any shortening for short series.
    pub encoder_len: usize,
    /// `(rmse, nd)`, or the failure message.
    pub result: std::result::Result<(f64, f64), String>,
    pub seconds: f64,
}

impl SweepRow {
    pub const TSV_HEADER: &'static str = "length\thead\tids\tencoder_len\trmse\tnd\tseconds\tstatus";

    pub fn to_tsv(&self) -> String {
        let ids = if self.with_ids { "on" } else { "off" };
        match &self.result {
            Ok((rmse, nd)) => format!(
                "{}\t{}\t{ids}\t{}\t{rmse:.6}\t{nd:.6}\t{:.1}\tok",
                self.length,
                self.head.name(),
                self.encoder_len,
                self.seconds
            ),
            Err(msg) => format!(
                "{}\t{}\t{ids}\t{}\tNaN\tNaN\t{:.1}\terror: {}",
                self.length,
                self.head.name(),
                self.encoder_len,
                self.seconds,
                msg.replace(['\t', '\n'], " ")
            ),
        }
    }
}

/// Config of one sweep cell: synthetic length, head and id toggle applied on
/// top of `cfg`, always under the fixed protocol.
///
/// A series must hold a training window plus the validation and test blocks,
/// `E + 3K` steps. Shorter series get the longest encoder that fits.
pub fn cell_config(cfg: &RunConfig, length: usize, head: Head, with_ids: bool) -> RunConfig {
    let mut c = cfg.clone();
    let fits = length.saturating_sub(3 * c.horizon);
    if fits > 0 && fits < c.encoder_len {
        c.encoder_len = fits;
    }
    c.length = length;
    c.head = head;
    c.with_series_id = with_ids;
    c.protocol = ProtocolKind::Fixed;
    c.categorical.retain(|n| n != SERIES_ID_COLUMN);
    if with_ids {
        c.categorical.push(SERIES_ID_COLUMN.to_string());
    }
    c
}

/// Synthesize, train and evaluate one cell. Returns `(rmse, nd)`.
pub fn sweep_cell(cfg: &RunConfig) -> Result<(f64, f64)> {
    let (dataset, _) = synth_generate(&cfg.synth_config())?;
    let fitted = fit(cfg, &dataset, |e| {
        log::debug!("epoch {} train {:.5} val {:.5}", e.epoch, e.train_nll, e.val_nll)
    })?;
    let out = eval_fixed(fitted.model(), &fitted.data)?;
    Ok((out.report.rmse, out.report.nd))
}

/// Run the length x id x head grid and write the sweep table. Failed cells
/// are recorded and the sweep goes on.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if cfg.lengths.is_empty() || cfg.heads.is_empty() || cfg.id_modes.is_empty() {
        return Err(Error::InvalidConfig("sweep needs lengths, heads and id_modes".into()));
    }
    start_run(cfg)?;
    let path = cfg.out.join(SWEEP_TABLE);
    let mut table = format!("{}\n", SweepRow::TSV_HEADER);
    write_text(&path, &table)?;
    let mut rows = Vec::new();
    for &with_ids in &cfg.id_modes {
        for &length in &cfg.lengths {
            for &head in &cfg.heads {
                let started = Instant::now();
                let cell = cell_config(cfg, length, head, with_ids);
                let result = sweep_cell(&cell).map_err(|e| e.to_string());
                let row = SweepRow {
                    length,
                    head,
                    with_ids,
                    encoder_len: cell.encoder_len,
                    result,
                    seconds: started.elapsed().as_secs_f64(),
                };
                match &row.result {
                    Ok((rmse, nd)) => log::info!("length {length} {head} ids={with_ids}: rmse {rmse:.4} nd {nd:.4}"),
                    Err(msg) => log::error!("length {length} {head} ids={with_ids} failed: {msg}"),
                }
                let _ = writeln!(table, "{}", row.to_tsv());
                write_text(&path, &table)?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
