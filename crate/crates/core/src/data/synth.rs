use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Series};
use super::time::{Granularity, TimeFeature};
use crate::error::{Error, Result};
use crate::rng;

/// Name of the per-series index column emitted when ids are on.
pub const SERIES_ID_COLUMN: &str = "series_idx";

/// Coefficients per series: bias, hours 1..=23, weekdays 1..=6 (hour 0 and
/// Monday are the reference levels).
pub const SYNTH_COEFFICIENTS: usize = 1 + 23 + 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_series: usize,
    pub length: usize,
    pub gamma: f64,
    pub noise: f64,
    pub with_series_id: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_series: 10,
            length: 2000,
            gamma: 20.0,
            noise: 1.0,
            with_series_id: false,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_series == 0 || self.length == 0 {
            return Err(Error::InvalidConfig("n_series and length must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Generating parameters, written next to the CSV for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub coding: String,
    /// `(series id, coefficients)` in dataset order.
    pub theta: Vec<(String, Vec<f64>)>,
}

impl SynthManifest {
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
}

/// Design row of a timestamp in the generator's coding.
pub fn synth_design(ts: i64) -> [f64; SYNTH_COEFFICIENTS] {
    let mut x = [0.0; SYNTH_COEFFICIENTS];
    x[0] = 1.0;
    let hour = TimeFeature::HourOfDay.value(ts);
    let dow = TimeFeature::DayOfWeek.value(ts);
    if hour > 0 {
        x[hour] = 1.0;
    }
    if dow > 0 {
        x[23 + dow] = 1.0;
    }
    x
}

pub fn series_name(i: usize) -> String {
    format!("s{i:03}")
}

/// Hourly series from epoch 0 with `y = theta . x + noise`, where `x` codes
/// hour-of-day and day-of-week and each coefficient is uniform in
/// `[-gamma, gamma]`. Per-series draws come from their own streams, so the
/// coefficients do not depend on the length or on the id flag.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Dataset, SynthManifest)> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut series = Vec::with_capacity(cfg.n_series);
    let mut theta = Vec::with_capacity(cfg.n_series);
    for i in 0..cfg.n_series {
        let id = series_name(i);
        let mut coef_rng = rng::stream(cfg.seed, &format!("synth/theta/{i}"));
        let coef: Vec<f64> = (0..SYNTH_COEFFICIENTS)
            .map(|_| coef_rng.random_range(-cfg.gamma..=cfg.gamma))
            .collect();
        let mut noise_rng = rng::stream(cfg.seed, &format!("synth/noise/{i}"));
        let timestamps: Vec<i64> = (0..cfg.length as i64).map(|t| t * 3600).collect();
        let y = timestamps
            .iter()
            .map(|&ts| {
                let x = synth_design(ts);
                crate::linalg::dot(&coef, &x) + noise.sample(&mut noise_rng)
            })
            .collect();
        let columns = if cfg.with_series_id {
            vec![vec![i as f64; cfg.length]]
        } else {
            vec![]
        };
        series.push(Series {
            id: id.clone(),
            timestamps,
            y,
            columns,
        });
        theta.push((id, coef));
    }
    let columns = if cfg.with_series_id {
        vec![SERIES_ID_COLUMN.to_string()]
    } else {
        vec![]
    };
    Ok((
        Dataset {
            granularity: Granularity::Hourly,
            columns,
            series,
        },
        SynthManifest {
            config: cfg.clone(),
            coding: "bias, hour=1..23, dow=1..6 (reference levels hour=0, dow=0 Monday)".into(),
            theta,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn cfg(length: usize, gamma: f64) -> SynthConfig {
        SynthConfig {
            length,
            gamma,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn regeneration_is_bitwise_identical() {
        let (a, ma) = synth_generate(&cfg(300, 20.0)).unwrap();
        let (b, mb) = synth_generate(&cfg(300, 20.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let (c, _) = synth_generate(&SynthConfig { seed: 8, ..cfg(300, 20.0) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn id_flag_only_adds_the_id_column() {
        let (off, m_off) = synth_generate(&cfg(200, 1.0)).unwrap();
        let (on, m_on) = synth_generate(&SynthConfig { with_series_id: true, ..cfg(200, 1.0) }).unwrap();
        assert_eq!(m_off.theta, m_on.theta);
        assert_eq!(on.columns, vec![SERIES_ID_COLUMN.to_string()]);
        for (i, (a, b)) in off.series.iter().zip(&on.series).enumerate() {
            assert_eq!(a.y, b.y);
            assert_eq!(a.timestamps, b.timestamps);
            assert_eq!(b.columns, vec![vec![i as f64; 200]]);
        }
    }

    #[test]
    fn coefficients_are_prefix_stable_across_lengths() {
        let (short, ms) = synth_generate(&cfg(200, 20.0)).unwrap();
        let (long, ml) = synth_generate(&cfg(2000, 20.0)).unwrap();
        assert_eq!(ms.theta, ml.theta);
        assert_eq!(short.series[3].y[..], long.series[3].y[..200]);
        for (_, t) in &ms.theta {
            assert!(t.iter().all(|v| v.abs() <= 20.0));
        }
    }

    #[test]
    fn tiny_gamma_leaves_unit_noise() {
        let (d, _) = synth_generate(&cfg(20_000, 1e-9)).unwrap();
        let y = &d.series[0].y;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let rmse = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        assert!((rmse - 1.0).abs() < 0.03, "{rmse}");
    }

    fn ols(d: &Dataset, series: usize) -> (DVector<f64>, DVector<f64>) {
        let s = &d.series[series];
        let n = s.len();
        let x = DMatrix::from_fn(n, SYNTH_COEFFICIENTS, |r, c| synth_design(s.timestamps[r])[c]);
        let y = DVector::from_column_slice(&s.y);
        let xtx = x.transpose() * &x;
        let inv = xtx.try_inverse().unwrap();
        let beta = &inv * x.transpose() * y;
        let se = inv.diagonal().map(f64::sqrt);
        (beta, se)
    }

    #[test]
    fn least_squares_recovers_coefficients_at_5000() {
        // Hour contrasts have a standard error near 0.1 at this length, so the
        // bound is expressed in standard errors.
        let (d, m) = synth_generate(&cfg(5000, 20.0)).unwrap();
        for i in 0..d.series.len() {
            let (beta, se) = ols(&d, i);
            for c in 0..SYNTH_COEFFICIENTS {
                let err = (beta[c] - m.theta[i].1[c]).abs();
                assert!(err <= 4.5 * se[c], "series {i} coef {c}: {err} vs se {}", se[c]);
            }
        }
    }

    #[test]
    fn least_squares_recovers_coefficients_within_a_tenth_on_long_series() {
        let (d, m) = synth_generate(&SynthConfig { n_series: 3, ..cfg(100_000, 20.0) }).unwrap();
        for i in 0..d.series.len() {
            let (beta, _) = ols(&d, i);
            for c in 0..SYNTH_COEFFICIENTS {
                assert!((beta[c] - m.theta[i].1[c]).abs() <= 0.1, "series {i} coef {c}");
            }
        }
    }

    #[test]
    fn design_rows_are_reference_coded() {
        assert_eq!(synth_design(0).iter().sum::<f64>(), 2.0); // bias + Thursday
        let monday_midnight = 4 * 86_400;
        assert_eq!(synth_design(monday_midnight).iter().sum::<f64>(), 1.0);
        assert!(SynthConfig { gamma: 0.0, ..cfg(10, 1.0) }.validate().is_err());
    }
}
