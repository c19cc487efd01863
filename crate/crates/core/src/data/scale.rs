use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous features observed outside the training range are clamped here.
pub const FEATURE_CLAMP: (f64, f64) = (-0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// One target scale per series, from its training range.
    Series,
    /// Each window is scaled by its own encoder range (short series).
    Window,
}

impl std::str::FromStr for ScaleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(ScaleMode::Series),
            "window" => Ok(ScaleMode::Window),
            other => Err(Error::InvalidConfig(format!("unknown scale mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn apply(&self, x: f64) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return 0.0;
        }
        ((x - self.min) / range).clamp(FEATURE_CLAMP.0, FEATURE_CLAMP.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mode: ScaleMode,
    pub continuous: Vec<MinMax>,
    /// Target scale per series id.
    pub series_scale: BTreeMap<String, f64>,
}

impl ScalerState {
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

/// Target scale `1 + mean |y|`. For nonnegative targets this is the usual
/// `1 + mean y`; the absolute value keeps it >= 1 for signed series.
pub fn target_scale(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Empty("no training values to fit a target scale".into()));
    }
    Ok(1.0 + y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64)
}

/// Min/max of one continuous feature over the given training slices.
pub fn fit_min_max<'a>(name: &str, slices: impl IntoIterator<Item = &'a [f64]>) -> Result<MinMax> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for s in slices {
        for &x in s {
            min = min.min(x);
            max = max.max(x);
        }
    }
    if !min.is_finite() {
        return Err(Error::Empty(format!("no training values for feature '{name}'")));
    }
    Ok(MinMax {
        name: name.to_string(),
        min,
        max,
    })
}

pub fn scale_targets(y: &[f64], scale: f64) -> Vec<f64> {
    y.iter().map(|v| v / scale).collect()
}

pub fn unscale_targets(y: &[f64], scale: f64) -> Vec<f64> {
    y.iter().map(|v| v * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn target_scale_formula() {
        let y = [1.0, 2.0, 3.0];
        let s = target_scale(&y).unwrap();
        assert_eq!(s, 3.0);
        assert_eq!(scale_targets(&y, s), vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(target_scale(&[]).is_err());
        assert!(target_scale(&[-4.0, 2.0]).unwrap() >= 1.0);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let mm = fit_min_max("c", [&[5.0, 5.0, 5.0][..]]).unwrap();
        assert_eq!(mm.apply(5.0), 0.0);
        assert_eq!(mm.apply(100.0), 0.0);
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let mm = fit_min_max("c", [&[0.0, 10.0][..]]).unwrap();
        assert_eq!(mm.apply(5.0), 0.5);
        assert_eq!(mm.apply(100.0), 1.5);
        assert_eq!(mm.apply(-100.0), -0.5);
    }

    proptest! {
        #[test]
        fn unscale_inverts_scale(y in prop::collection::vec(-1e4f64..1e4, 1..50)) {
            let s = target_scale(&y).unwrap();
            let back = unscale_targets(&scale_targets(&y, s), s);
            for (a, b) in back.iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn training_values_land_in_unit_interval(x in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let mm = fit_min_max("x", [&x[..]]).unwrap();
            for v in &x {
                let s = mm.apply(*v);
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
