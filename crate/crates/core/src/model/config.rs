use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aru::AruConfig;
use crate::error::{Error, Result};

/// Output head of the forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Gaussian head on the decoder output only.
    Baseline,
    /// Local ARU predictions fused with the decoder output through FF2.
    Aru,
    /// First-bank local prediction emitted directly.
    AruDirect,
}

impl Head {
    pub fn uses_aru(self) -> bool {
        !matches!(self, Head::Baseline)
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Baseline => "baseline",
            Head::Aru => "aru",
            Head::AruDirect => "aru-direct",
        }
    }

    /// Stable integer code, used across the C ABI.
    pub fn code(self) -> u32 {
        match self {
            Head::Baseline => 0,
            Head::Aru => 1,
            Head::AruDirect => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Head::Baseline),
            1 => Ok(Head::Aru),
            2 => Ok(Head::AruDirect),
            _ => Err(Error::Checkpoint(format!("unknown head code {code}"))),
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Head::Baseline),
            "aru" => Ok(Head::Aru),
            "aru-direct" | "aru_direct" | "arudirect" => Ok(Head::AruDirect),
            other => Err(Error::InvalidConfig(format!("unknown head '{other}'"))),
        }
    }
}

/// Network size presets: RNN units and the three decoder layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Medium,
    Large,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Small => "small",
            Preset::Medium => "medium",
            Preset::Large => "large",
        }
    }

    pub fn rnn_units(self) -> usize {
        match self {
            Preset::Small => 8,
            Preset::Medium => 16,
            Preset::Large => 50,
        }
    }

    pub fn hidden_sizes(self) -> [usize; 3] {
        match self {
            Preset::Small => [8, 6, 6],
            Preset::Medium => [16, 15, 10],
            Preset::Large => [32, 20, 15],
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Preset::Small),
            "medium" => Ok(Preset::Medium),
            "large" => Ok(Preset::Large),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub cardinality: usize,
    pub embed_dim: usize,
}

impl CategoricalFeature {
    /// Embedding width used when none is given: half the cardinality,
    /// rounded up, capped at 10.
    pub fn with_default_dim(name: impl Into<String>, cardinality: usize) -> Self {
        CategoricalFeature {
            name: name.into(),
            cardinality,
            embed_dim: cardinality.div_ceil(2).clamp(1, 10),
        }
    }
}

/// Per-step model inputs: embedded categoricals followed by continuous
/// features already scaled to [0, 1].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub categorical: Vec<CategoricalFeature>,
    pub continuous: Vec<String>,
}

impl FeatureSchema {
    pub fn input_width(&self) -> usize {
        self.categorical.iter().map(|c| c.embed_dim).sum::<usize>() + self.continuous.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub rnn_units: usize,
    pub hidden_sizes: [usize; 3],
    pub ff2_sizes: [usize; 2],
    pub encoder_len: usize,
    pub horizon: usize,
    pub schema: FeatureSchema,
    pub head: Head,
    /// Required unless `head` is `Baseline`.
    pub aru: Option<AruConfig>,
    /// Run ARU adapt steps over the encoder range when a window starts from a
    /// zero state.
    pub encoder_adapt: bool,
    /// Variance floor of the ARU-Direct head.
    pub sigma_floor: f64,
}

impl ModelConfig {
    /// Config from a size preset; FF2 widths default to the decoder output
    /// width.
    pub fn from_preset(
        preset: Preset,
        encoder_len: usize,
        horizon: usize,
        schema: FeatureSchema,
        head: Head,
        aging: Vec<f64>,
        ridge: f64,
    ) -> Result<Self> {
        let hidden = preset.hidden_sizes();
        let cfg = ModelConfig {
            rnn_units: preset.rnn_units(),
            hidden_sizes: hidden,
            ff2_sizes: [hidden[2], hidden[2]],
            encoder_len,
            horizon,
            schema,
            head,
            aru: head
                .uses_aru()
                .then(|| AruConfig::new(hidden[2], aging, ridge))
                .transpose()?,
            encoder_adapt: true,
            sigma_floor: 1e-3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::InvalidConfig(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        positive(self.rnn_units, "rnn_units")?;
        for &h in &self.hidden_sizes {
            positive(h, "hidden size")?;
        }
        for &h in &self.ff2_sizes {
            positive(h, "ff2 size")?;
        }
        positive(self.encoder_len, "encoder length")?;
        positive(self.horizon, "horizon")?;
        for c in &self.schema.categorical {
            positive(c.cardinality, "categorical cardinality")?;
            positive(c.embed_dim, "embedding width")?;
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::InvalidConfig("sigma_floor must be positive".into()));
        }
        match (&self.aru, self.head.uses_aru()) {
            (None, true) => Err(Error::InvalidConfig(format!(
                "head '{}' needs an ARU config",
                self.head
            ))),
            (Some(aru), true) => {
                aru.validate()?;
                if aru.feature_dim != self.hidden_sizes[2] {
                    return Err(Error::shape(
                        format!("ARU feature_dim {}", self.hidden_sizes[2]),
                        aru.feature_dim,
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Decoder output width `H`.
    pub fn feature_dim(&self) -> usize {
        self.hidden_sizes[2]
    }

    pub fn banks(&self) -> usize {
        self.aru.as_ref().map_or(0, |a| a.banks())
    }

    pub fn input_width(&self) -> usize {
        self.schema.input_width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_sizes() {
        assert_eq!((Preset::Small.rnn_units(), Preset::Small.hidden_sizes()), (8, [8, 6, 6]));
        assert_eq!((Preset::Medium.rnn_units(), Preset::Medium.hidden_sizes()), (16, [16, 15, 10]));
        assert_eq!((Preset::Large.rnn_units(), Preset::Large.hidden_sizes()), (50, [32, 20, 15]));
    }

    #[test]
    fn aru_heads_require_matching_aru_config() {
        let schema = FeatureSchema::default();
        let cfg = ModelConfig::from_preset(Preset::Small, 4, 2, schema.clone(), Head::Aru, vec![1.0], 1.0)
            .unwrap();
        assert_eq!(cfg.aru.as_ref().unwrap().feature_dim, 6);

        let mut bad = cfg.clone();
        bad.aru = None;
        assert!(bad.validate().is_err());

        let mut bad = cfg;
        bad.aru.as_mut().unwrap().feature_dim = 5;
        assert!(bad.validate().is_err());

        let base = ModelConfig::from_preset(Preset::Small, 4, 2, schema, Head::Baseline, vec![1.0], 1.0)
            .unwrap();
        assert!(base.aru.is_none());
    }

    #[test]
    fn head_names_parse() {
        for h in [Head::Baseline, Head::Aru, Head::AruDirect] {
            assert_eq!(h.name().parse::<Head>().unwrap(), h);
            assert_eq!(Head::from_code(h.code()).unwrap(), h);
        }
        assert!("lstm".parse::<Head>().is_err());
    }

    #[test]
    fn default_embedding_widths() {
        assert_eq!(CategoricalFeature::with_default_dim("hour", 24).embed_dim, 10);
        assert_eq!(CategoricalFeature::with_default_dim("dow", 7).embed_dim, 4);
        assert_eq!(CategoricalFeature::with_default_dim("flag", 1).embed_dim, 1);
    }
}
