use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Evaluation protocol, which also fixes the size of the held-out regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// One forecast of the final horizon.
    Fixed,
    /// `rolls` consecutive horizons, the window advancing by one horizon each
    /// roll.
    Streaming { rolls: usize },
}

impl Protocol {
    /// Steps held out for test (and, before it, for validation).
    pub fn holdout(self, horizon: usize) -> usize {
        match self {
            Protocol::Fixed => horizon,
            Protocol::Streaming { rolls } => rolls * horizon,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Fixed => "fixed",
            Protocol::Streaming { .. } => "streaming",
        }
    }
}

/// Chronological split of one series: train `[0, train_end)`, validation
/// `[train_end, val_end)`, test `[val_end, len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPoints {
    pub train_end: usize,
    pub val_end: usize,
    pub len: usize,
}

impl SplitPoints {
    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn validation(&self) -> Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self) -> Range<usize> {
        self.val_end..self.len
    }
}

/// Split points for a series of length `len`. The training range must hold
/// at least one full `encoder_len + horizon` window.
pub fn split_points(
    series: &str,
    len: usize,
    encoder_len: usize,
    horizon: usize,
    protocol: Protocol,
) -> Result<SplitPoints> {
    let holdout = protocol.holdout(horizon);
    let needed = encoder_len + horizon + 2 * holdout;
    if len < needed {
        return Err(Error::SeriesTooShort {
            series: series.to_string(),
            len,
            needed,
        });
    }
    Ok(SplitPoints {
        train_end: len - 2 * holdout,
        val_end: len - holdout,
        len,
    })
}

/// Split points of every series, in dataset order.
pub fn split(
    dataset: &Dataset,
    encoder_len: usize,
    horizon: usize,
    protocol: Protocol,
) -> Result<Vec<SplitPoints>> {
    dataset
        .series
        .iter()
        .map(|s| split_points(&s.id, s.len(), encoder_len, horizon, protocol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_split_index_arithmetic() {
        let p = split_points("s", 100, 8, 24, Protocol::Fixed).unwrap();
        // 1-based: train 1..52, validation 53..76, test 77..100
        assert_eq!(p.train(), 0..52);
        assert_eq!(p.validation(), 52..76);
        assert_eq!(p.test(), 76..100);
    }

    #[test]
    fn streaming_holds_out_all_rolls() {
        let p = split_points("s", 1000, 168, 24, Protocol::Streaming { rolls: 7 }).unwrap();
        assert_eq!(p.test().len(), 168);
        assert_eq!(p.validation().len(), 168);
        assert_eq!(p.train_end, 1000 - 336);
    }

    #[test]
    fn short_series_is_rejected_by_name() {
        match split_points("tiny", 30, 8, 24, Protocol::Fixed) {
            Err(Error::SeriesTooShort { series, .. }) => assert_eq!(series, "tiny"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
