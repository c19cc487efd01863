//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{FeatureConfig, Granularity, ScaleMode, SynthConfig, TimeEncoding, TimeFeature};
use crate::error::{Error, Result};
use crate::model::{AruGradient, FeatureSchema, Head, ModelConfig, Preset};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Fixed,
    Streaming,
}

impl FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ProtocolKind::Fixed),
            "streaming" => Ok(ProtocolKind::Streaming),
            other => Err(Error::InvalidConfig(format!("unknown protocol '{other}'"))),
        }
    }
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Fixed => "fixed",
            ProtocolKind::Streaming => "streaming",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub granularity: Granularity,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,

    pub preset: Preset,
    pub head: Head,
    pub encoder_len: usize,
    pub horizon: usize,
    pub aging: Vec<f64>,
    pub ridge: f64,
    pub rnn_units: Option<usize>,
    pub hidden_sizes: Option<[usize; 3]>,
    pub ff2_sizes: Option<[usize; 2]>,
    pub encoder_adapt: bool,
    pub sigma_floor: f64,

    pub time_features: Option<Vec<TimeFeature>>,
    pub time_encoding: TimeEncoding,
    pub categorical: Vec<String>,
    pub scale_mode: ScaleMode,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub stride: usize,
    pub clip_norm: f64,
    pub aru_gradient: AruGradient,
    pub max_windows_per_epoch: Option<usize>,
    pub resume: bool,

    pub protocol: ProtocolKind,
    pub rolls: usize,
    pub emit_forecasts: bool,
    pub checkpoint: Option<PathBuf>,

    pub n_series: usize,
    pub length: usize,
    pub gamma: f64,
    pub noise: f64,
    pub with_series_id: bool,

    pub lengths: Vec<usize>,
    pub heads: Vec<Head>,
    pub id_modes: Vec<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            data: None,
            granularity: Granularity::Hourly,
            out: PathBuf::from("out"),
            seed: 0,
            threads: None,

            preset: Preset::Small,
            head: Head::Aru,
            encoder_len: 168,
            horizon: 24,
            aging: vec![1.0],
            ridge: 1.0,
            rnn_units: None,
            hidden_sizes: None,
            ff2_sizes: None,
            encoder_adapt: true,
            sigma_floor: 1e-3,

            time_features: None,
            time_encoding: TimeEncoding::Embed,
            categorical: Vec::new(),
            scale_mode: ScaleMode::Series,

            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            stride: 24,
            clip_norm: train.clip_norm,
            aru_gradient: train.aru_gradient,
            max_windows_per_epoch: None,
            resume: false,

            protocol: ProtocolKind::Fixed,
            rolls: 7,
            emit_forecasts: false,
            checkpoint: None,

            n_series: synth.n_series,
            length: synth.length,
            gamma: synth.gamma,
            noise: synth.noise,
            with_series_id: synth.with_series_id,

            lengths: vec![200, 500, 1000, 2000],
            heads: vec![Head::Baseline, Head::Aru],
            id_modes: vec![false],
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "data",
    "granularity",
    "out",
    "seed",
    "threads",
    "preset",
    "head",
    "encoder_len",
    "horizon",
    "aging",
    "ridge",
    "rnn_units",
    "hidden_sizes",
    "ff2_sizes",
    "encoder_adapt",
    "sigma_floor",
    "time_features",
    "time_encoding",
    "categorical",
    "scale_mode",
    "epochs",
    "batch_size",
    "learning_rate",
    "stride",
    "clip_norm",
    "aru_gradient",
    "max_windows_per_epoch",
    "resume",
    "protocol",
    "rolls",
    "emit_forecasts",
    "checkpoint",
    "n_series",
    "length",
    "gamma",
    "noise",
    "with_series_id",
    "lengths",
    "heads",
    "id_modes",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value '{v}' for '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("bad boolean '{v}' for '{key}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_array<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
    let list: Vec<usize> = parse_list(key, v)?;
    list.try_into()
        .map_err(|_| Error::InvalidConfig(format!("'{key}' needs exactly {N} values")))
}

fn none_or<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v == "none" || v.is_empty() {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
}

fn aru_gradient_name(g: AruGradient) -> &'static str {
    match g {
        AruGradient::StopGradient => "stop-gradient",
        AruGradient::ThroughSolve => "through-solve",
    }
}

fn scale_mode_name(m: ScaleMode) -> &'static str {
    match m {
        ScaleMode::Series => "series",
        ScaleMode::Window => "window",
    }
}

fn time_encoding_name(t: TimeEncoding) -> &'static str {
    match t {
        TimeEncoding::Embed => "embed",
        TimeEncoding::OneHot => "onehot",
    }
}

impl RunConfig {
    /// Set one key from its text value. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "data" => self.data = none_or(v, |s| Ok(PathBuf::from(s)))?,
            "granularity" => self.granularity = v.parse()?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = none_or(v, |s| parse(key, s))?,
            "preset" => self.preset = v.parse()?,
            "head" => self.head = v.parse()?,
            "encoder_len" => self.encoder_len = parse(key, v)?,
            "horizon" => self.horizon = parse(key, v)?,
            "aging" => self.aging = parse_list(key, v)?,
            "ridge" => self.ridge = parse(key, v)?,
            "rnn_units" => self.rnn_units = none_or(v, |s| parse(key, s))?,
            "hidden_sizes" => self.hidden_sizes = none_or(v, |s| parse_array(key, s))?,
            "ff2_sizes" => self.ff2_sizes = none_or(v, |s| parse_array(key, s))?,
            "encoder_adapt" => self.encoder_adapt = parse_bool(key, v)?,
            "sigma_floor" => self.sigma_floor = parse(key, v)?,
            "time_features" => {
                self.time_features = if v == "default" {
                    None
                } else {
                    Some(v.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse()).collect::<Result<_>>()?)
                }
            }
            "time_encoding" => self.time_encoding = v.parse()?,
            "categorical" => self.categorical = parse_list(key, v)?,
            "scale_mode" => self.scale_mode = v.parse()?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "stride" => self.stride = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "aru_gradient" => self.aru_gradient = v.parse()?,
            "max_windows_per_epoch" => self.max_windows_per_epoch = none_or(v, |s| parse(key, s))?,
            "resume" => self.resume = parse_bool(key, v)?,
            "protocol" => self.protocol = v.parse()?,
            "rolls" => self.rolls = parse(key, v)?,
            "emit_forecasts" => self.emit_forecasts = parse_bool(key, v)?,
            "checkpoint" => self.checkpoint = none_or(v, |s| Ok(PathBuf::from(s)))?,
            "n_series" => self.n_series = parse(key, v)?,
            "length" => self.length = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "with_series_id" => self.with_series_id = parse_bool(key, v)?,
            "lengths" => self.lengths = parse_list(key, v)?,
            "heads" => self.heads = parse_list(key, v)?,
            "id_modes" => {
                self.id_modes = v
                    .split(',')
                    .map(|p| parse_bool(key, p.trim()))
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::InvalidConfig(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "data" => opt(&self.data.as_ref().map(|p| p.display().to_string())),
            "granularity" => self.granularity.name().to_string(),
            "out" => self.out.display().to_string(),
            "seed" => self.seed.to_string(),
            "threads" => opt(&self.threads),
            "preset" => self.preset.name().to_string(),
            "head" => self.head.name().to_string(),
            "encoder_len" => self.encoder_len.to_string(),
            "horizon" => self.horizon.to_string(),
            "aging" => join(&self.aging),
            "ridge" => self.ridge.to_string(),
            "rnn_units" => opt(&self.rnn_units),
            "hidden_sizes" => opt(&self.hidden_sizes.map(|a| join(&a))),
            "ff2_sizes" => opt(&self.ff2_sizes.map(|a| join(&a))),
            "encoder_adapt" => self.encoder_adapt.to_string(),
            "sigma_floor" => self.sigma_floor.to_string(),
            "time_features" => self.time_features.as_ref().map_or_else(
                || "default".to_string(),
                |f| f.iter().map(|t| t.name()).collect::<Vec<_>>().join(","),
            ),
            "time_encoding" => time_encoding_name(self.time_encoding).to_string(),
            "categorical" => self.categorical.join(","),
            "scale_mode" => scale_mode_name(self.scale_mode).to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "stride" => self.stride.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "aru_gradient" => aru_gradient_name(self.aru_gradient).to_string(),
            "max_windows_per_epoch" => opt(&self.max_windows_per_epoch),
            "resume" => self.resume.to_string(),
            "protocol" => self.protocol.name().to_string(),
            "rolls" => self.rolls.to_string(),
            "emit_forecasts" => self.emit_forecasts.to_string(),
            "checkpoint" => opt(&self.checkpoint.as_ref().map(|p| p.display().to_string())),
            "n_series" => self.n_series.to_string(),
            "length" => self.length.to_string(),
            "gamma" => self.gamma.to_string(),
            "noise" => self.noise.to_string(),
            "with_series_id" => self.with_series_id.to_string(),
            "lengths" => join(&self.lengths),
            "heads" => self.heads.iter().map(|h| h.name()).collect::<Vec<_>>().join(","),
            "id_modes" => join(&self.id_modes),
            _ => return None,
        };
        Some(s)
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse_text(text: &str, into: &mut RunConfig) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", n + 1))
            })?;
            into.set(k.trim(), v)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        Self::parse_text(&text, &mut cfg)?;
        Ok(cfg)
    }

    /// Every key with its effective value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            time_features: self.time_features.clone(),
            time_encoding: self.time_encoding,
            categorical: self.categorical.clone(),
            scale_mode: self.scale_mode,
        }
    }

    pub fn model_config(&self, schema: FeatureSchema) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::from_preset(
            self.preset,
            self.encoder_len,
            self.horizon,
            schema,
            self.head,
            self.aging.clone(),
            self.ridge,
        )?;
        if let Some(r) = self.rnn_units {
            cfg.rnn_units = r;
        }
        if let Some(h) = self.hidden_sizes {
            cfg.hidden_sizes = h;
            cfg.ff2_sizes = [h[2], h[2]];
            if let Some(aru) = cfg.aru.as_mut() {
                aru.feature_dim = h[2];
            }
        }
        if let Some(f) = self.ff2_sizes {
            cfg.ff2_sizes = f;
        }
        cfg.encoder_adapt = self.encoder_adapt;
        cfg.sigma_floor = self.sigma_floor;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            stride: self.stride,
            epochs: self.epochs,
            seed: self.seed,
            clip_norm: self.clip_norm,
            aru_gradient: self.aru_gradient,
            max_windows_per_epoch: self.max_windows_per_epoch,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_series: self.n_series,
            length: self.length,
            gamma: self.gamma,
            noise: self.noise,
            with_series_id: self.with_series_id,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.set("aging", "1.0, 0.99").unwrap();
        cfg.set("hidden_sizes", "40,30,32").unwrap();
        cfg.set("time_features", "hour,dow").unwrap();
        cfg.set("heads", "baseline,aru,aru-direct").unwrap();
        cfg.set("id_modes", "off,on").unwrap();
        cfg.set("learning_rate", "0.003").unwrap();
        let mut back = RunConfig::default();
        RunConfig::parse_text(&cfg.to_text(), &mut back).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("learning_rte", "1").is_err());
        assert!(cfg.set("epochs", "many").is_err());
        assert!(cfg.set("hidden_sizes", "1,2").is_err());
        assert!(RunConfig::parse_text("epochs 3\n", &mut cfg).is_err());
        RunConfig::parse_text("# comment\nepochs = 3 # trailing\n\n", &mut cfg).unwrap();
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn presets_resolve_to_published_sizes() {
        let mut cfg = RunConfig::default();
        for (p, rnn, hidden) in [("small", 8, [8, 6, 6]), ("medium", 16, [16, 15, 10]), ("large", 50, [32, 20, 15])] {
            cfg.set("preset", p).unwrap();
            let m = cfg.model_config(FeatureSchema::default()).unwrap();
            assert_eq!(m.rnn_units, rnn);
            assert_eq!(m.hidden_sizes, hidden);
            assert_eq!(m.aru.as_ref().unwrap().feature_dim, hidden[2]);
        }
    }

    #[test]
    fn every_key_is_gettable_and_settable() {
        let cfg = RunConfig::default();
        let mut copy = RunConfig::default();
        for key in KEYS {
            let v = cfg.get(key).unwrap();
            copy.set(key, &v).unwrap();
        }
        assert_eq!(copy, cfg);
    }
}
