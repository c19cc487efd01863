use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::scale::{fit_min_max, target_scale, MinMax, ScaleMode, ScalerState};
use super::split::{split, Protocol, SplitPoints};
use super::time::TimeFeature;
use crate::error::{Error, Result};
use crate::model::{CategoricalFeature, FeatureSchema, WindowSample};

/// How calendar features reach the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeEncoding {
    /// Categorical indices with learned embeddings.
    Embed,
    /// One 0/1 continuous column per level.
    OneHot,
}

impl std::str::FromStr for TimeEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embed" => Ok(TimeEncoding::Embed),
            "onehot" => Ok(TimeEncoding::OneHot),
            other => Err(Error::InvalidConfig(format!("unknown time encoding '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Calendar features; `None` uses the granularity's defaults.
    pub time_features: Option<Vec<TimeFeature>>,
    pub time_encoding: TimeEncoding,
    /// Extra CSV columns holding category indices. Other extra columns are
    /// continuous.
    pub categorical: Vec<String>,
    pub scale_mode: ScaleMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            time_features: None,
            time_encoding: TimeEncoding::Embed,
            categorical: Vec::new(),
            scale_mode: ScaleMode::Series,
        }
    }
}

/// Fitted feature pipeline: the network input schema plus training-range
/// scalers. Serialized next to checkpoints so evaluation reuses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub features: FeatureConfig,
    pub schema: FeatureSchema,
    pub scalers: ScalerState,
}

/// One series after feature extraction and scaling. Targets stay in raw
/// units; windows are scaled when they are cut.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub id: String,
    pub timestamps: Vec<i64>,
    pub y: Vec<f64>,
    pub scale: f64,
    /// Row-major `len x n_cat`.
    pub cat: Vec<u32>,
    /// Row-major `len x n_cont`, scaled.
    pub cont: Vec<f64>,
    pub split: SplitPoints,
}

impl PreparedSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub schema: FeatureSchema,
    pub scale_mode: ScaleMode,
    pub encoder_len: usize,
    pub horizon: usize,
    pub series: Vec<PreparedSeries>,
}

enum Column {
    Time(TimeFeature),
    TimeLevel(TimeFeature, usize),
    Extra(usize),
}

fn time_features(dataset: &Dataset, features: &FeatureConfig) -> Vec<TimeFeature> {
    features
        .time_features
        .clone()
        .unwrap_or_else(|| dataset.granularity.default_features())
}

fn layout(dataset: &Dataset, features: &FeatureConfig) -> Result<(Vec<(String, Column)>, Vec<(String, Column)>)> {
    for name in &features.categorical {
        if dataset.column_index(name).is_none() {
            return Err(Error::InvalidConfig(format!("categorical column '{name}' not in dataset")));
        }
    }
    let mut cat = Vec::new();
    let mut cont = Vec::new();
    for f in time_features(dataset, features) {
        match features.time_encoding {
            TimeEncoding::Embed => cat.push((f.name().to_string(), Column::Time(f))),
            TimeEncoding::OneHot => {
                for level in 0..f.cardinality() {
                    cont.push((format!("{}={level}", f.name()), Column::TimeLevel(f, level)));
                }
            }
        }
    }
    for (i, name) in dataset.columns.iter().enumerate() {
        if features.categorical.contains(name) {
            cat.push((name.clone(), Column::Extra(i)));
        } else {
            cont.push((name.clone(), Column::Extra(i)));
        }
    }
    Ok((cat, cont))
}

fn column_values(series: &super::dataset::Series, col: &Column) -> Vec<f64> {
    match col {
        Column::Time(f) => series.timestamps.iter().map(|&t| f.value(t) as f64).collect(),
        Column::TimeLevel(f, level) => series
            .timestamps
            .iter()
            .map(|&t| if f.value(t) == *level { 1.0 } else { 0.0 })
            .collect(),
        Column::Extra(i) => series.columns[*i].clone(),
    }
}

fn category_index(name: &str, v: f64) -> Result<u32> {
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::InvalidConfig(format!(
            "categorical column '{name}' holds non-index value {v}"
        )));
    }
    Ok(v as u32)
}

impl Preprocessor {
    /// Fit the schema and scalers. Only training ranges are read for scaling.
    pub fn fit(dataset: &Dataset, features: &FeatureConfig, splits: &[SplitPoints]) -> Result<Self> {
        if dataset.series.is_empty() {
            return Err(Error::Empty("dataset has no series".into()));
        }
        if splits.len() != dataset.series.len() {
            return Err(Error::shape(dataset.series.len(), splits.len()));
        }
        let (cat_cols, cont_cols) = layout(dataset, features)?;

        let mut categorical = Vec::with_capacity(cat_cols.len());
        for (name, col) in &cat_cols {
            let cardinality = match col {
                Column::Time(f) => f.cardinality(),
                _ => {
                    let mut max = 0u32;
                    for s in &dataset.series {
                        for v in column_values(s, col) {
                            max = max.max(category_index(name, v)?);
                        }
                    }
                    max as usize + 1
                }
            };
            categorical.push(CategoricalFeature::with_default_dim(name.clone(), cardinality));
        }

        let mut continuous = Vec::with_capacity(cont_cols.len());
        for (name, col) in &cont_cols {
            let values: Vec<Vec<f64>> = dataset
                .series
                .iter()
                .zip(splits)
                .map(|(s, sp)| column_values(s, col)[sp.train()].to_vec())
                .collect();
            continuous.push(fit_min_max(name, values.iter().map(Vec::as_slice))?);
        }

        let mut series_scale = BTreeMap::new();
        for (s, sp) in dataset.series.iter().zip(splits) {
            series_scale.insert(s.id.clone(), target_scale(&s.y[sp.train()])?);
        }

        Ok(Preprocessor {
            features: features.clone(),
            schema: FeatureSchema {
                categorical,
                continuous: cont_cols.into_iter().map(|(n, _)| n).collect(),
            },
            scalers: ScalerState {
                mode: features.scale_mode,
                continuous,
                series_scale,
            },
        })
    }

    /// Extract and scale features. Series unseen at fit time get a target
    /// scale from their own training range.
    pub fn transform(
        &self,
        dataset: &Dataset,
        splits: &[SplitPoints],
        encoder_len: usize,
        horizon: usize,
    ) -> Result<PreparedData> {
        if splits.len() != dataset.series.len() {
            return Err(Error::shape(dataset.series.len(), splits.len()));
        }
        let (cat_cols, cont_cols) = layout(dataset, &self.features)?;
        let names: Vec<&str> = cont_cols.iter().map(|(n, _)| n.as_str()).collect();
        if cat_cols.len() != self.schema.categorical.len()
            || names != self.schema.continuous.iter().map(String::as_str).collect::<Vec<_>>()
        {
            return Err(Error::InvalidConfig(
                "dataset columns do not match the fitted feature schema".into(),
            ));
        }
        let n_cat = cat_cols.len();
        let n_cont = cont_cols.len();

        let mut series = Vec::with_capacity(dataset.series.len());
        for (s, sp) in dataset.series.iter().zip(splits) {
            let t_len = s.len();
            let mut cat = vec![0u32; t_len * n_cat];
            for (c, ((name, col), feat)) in cat_cols.iter().zip(&self.schema.categorical).enumerate() {
                for (t, v) in column_values(s, col).into_iter().enumerate() {
                    let idx = category_index(name, v)?;
                    if idx as usize >= feat.cardinality {
                        return Err(Error::CategoryOutOfRange {
                            feature: name.clone(),
                            index: idx as usize,
                            cardinality: feat.cardinality,
                        });
                    }
                    cat[t * n_cat + c] = idx;
                }
            }
            let mut cont = vec![0.0; t_len * n_cont];
            for (c, ((_, col), mm)) in cont_cols.iter().zip(&self.scalers.continuous).enumerate() {
                for (t, v) in column_values(s, col).into_iter().enumerate() {
                    cont[t * n_cont + c] = mm.apply(v);
                }
            }
            let scale = match self.scalers.series_scale.get(&s.id) {
                Some(&v) => v,
                None => target_scale(&s.y[sp.train()])?,
            };
            series.push(PreparedSeries {
                id: s.id.clone(),
                timestamps: s.timestamps.clone(),
                y: s.y.clone(),
                scale,
                cat,
                cont,
                split: *sp,
            });
        }
        Ok(PreparedData {
            schema: self.schema.clone(),
            scale_mode: self.scalers.mode,
            encoder_len,
            horizon,
            series,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn continuous_scaler(&self, name: &str) -> Option<&MinMax> {
        self.scalers.continuous.iter().find(|m| m.name == name)
    }
}

/// Split, fit and transform in one go.
pub fn prepare(
    dataset: &Dataset,
    features: &FeatureConfig,
    encoder_len: usize,
    horizon: usize,
    protocol: Protocol,
) -> Result<(Preprocessor, PreparedData)> {
    let splits = split(dataset, encoder_len, horizon, protocol)?;
    let pre = Preprocessor::fit(dataset, features, &splits)?;
    let data = pre.transform(dataset, &splits, encoder_len, horizon)?;
    Ok((pre, data))
}

impl PreparedData {
    pub fn n_cat(&self) -> usize {
        self.schema.categorical.len()
    }

    pub fn n_cont(&self) -> usize {
        self.schema.continuous.len()
    }

    /// Cut the window whose encoder starts at `start`. Decoder targets are
    /// included when `with_targets` is set.
    pub fn window(&self, series: usize, start: usize, with_targets: bool) -> Result<WindowSample> {
        let s = &self.series[series];
        let (e, k) = (self.encoder_len, self.horizon);
        if start + e + k > s.len() {
            return Err(Error::SeriesTooShort {
                series: s.id.clone(),
                len: s.len(),
                needed: start + e + k,
            });
        }
        let (n_cat, n_cont) = (self.n_cat(), self.n_cont());
        let span = start..start + e + k;
        let y_enc = &s.y[start..start + e];
        let scale = match self.scale_mode {
            ScaleMode::Series => s.scale,
            ScaleMode::Window => target_scale(y_enc)?,
        };
        Ok(WindowSample {
            series,
            start,
            encoder_len: e,
            horizon: k,
            n_cat,
            n_cont,
            cat: s.cat[span.start * n_cat..span.end * n_cat].to_vec(),
            cont: s.cont[span.start * n_cont..span.end * n_cont].to_vec(),
            y_encoder: y_enc.iter().map(|v| v / scale).collect(),
            y_decoder: with_targets.then(|| s.y[start + e..start + e + k].iter().map(|v| v / scale).collect()),
            scale,
        })
    }
}
