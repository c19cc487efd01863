use std::str::FromStr;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Hourly,
    Daily,
    Weekly,
    Monthly,
    /// Plain integer period index, step 1, no calendar features.
    Index,
}

impl FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hourly" => Ok(Granularity::Hourly),
            "daily" => Ok(Granularity::Daily),
            "weekly" => Ok(Granularity::Weekly),
            "monthly" => Ok(Granularity::Monthly),
            "index" => Ok(Granularity::Index),
            other => Err(Error::InvalidConfig(format!("unknown granularity '{other}'"))),
        }
    }
}

impl Granularity {
    pub fn name(self) -> &'static str {
        match self {
            Granularity::Hourly => "hourly",
            Granularity::Daily => "daily",
            Granularity::Weekly => "weekly",
            Granularity::Monthly => "monthly",
            Granularity::Index => "index",
        }
    }

    /// Calendar features extracted at this granularity.
    pub fn default_features(self) -> Vec<TimeFeature> {
        use TimeFeature::*;
        match self {
            Granularity::Hourly => vec![HourOfDay, DayOfWeek, MonthOfYear],
            Granularity::Daily => vec![DayOfMonth, MonthOfYear],
            Granularity::Weekly => vec![MonthOfYear, WeekOfYear],
            Granularity::Monthly => vec![MonthOfYear],
            Granularity::Index => vec![],
        }
    }

    /// Whether `next` is exactly one period after `prev`.
    pub fn is_next(self, prev: i64, next: i64) -> bool {
        match self {
            Granularity::Hourly => next - prev == 3600,
            Granularity::Daily => next - prev == 86_400,
            Granularity::Weekly => next - prev == 7 * 86_400,
            Granularity::Index => next - prev == 1,
            Granularity::Monthly => match (datetime(prev), datetime(next)) {
                (Some(a), Some(b)) => {
                    let ma = a.year() as i64 * 12 + a.month0() as i64;
                    let mb = b.year() as i64 * 12 + b.month0() as i64;
                    mb - ma == 1
                }
                _ => false,
            },
        }
    }

    /// The timestamp one period after `ts`.
    pub fn advance(self, ts: i64) -> i64 {
        match self {
            Granularity::Hourly => ts + 3600,
            Granularity::Daily => ts + 86_400,
            Granularity::Weekly => ts + 7 * 86_400,
            Granularity::Index => ts + 1,
            Granularity::Monthly => {
                let d = datetime(ts).unwrap_or_default();
                d.checked_add_months(chrono::Months::new(1))
                    .map_or(ts, |n| n.timestamp())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeFeature {
    HourOfDay,
    DayOfWeek,
    DayOfMonth,
    MonthOfYear,
    WeekOfYear,
}

impl TimeFeature {
    pub fn name(self) -> &'static str {
        match self {
            TimeFeature::HourOfDay => "hour",
            TimeFeature::DayOfWeek => "dow",
            TimeFeature::DayOfMonth => "dom",
            TimeFeature::MonthOfYear => "month",
            TimeFeature::WeekOfYear => "week",
        }
    }

    pub fn cardinality(self) -> usize {
        match self {
            TimeFeature::HourOfDay => 24,
            TimeFeature::DayOfWeek => 7,
            TimeFeature::DayOfMonth => 31,
            TimeFeature::MonthOfYear => 12,
            TimeFeature::WeekOfYear => 53,
        }
    }

    pub fn value(self, ts: i64) -> usize {
        let d = datetime(ts).unwrap_or_default();
        match self {
            TimeFeature::HourOfDay => d.hour() as usize,
            TimeFeature::DayOfWeek => d.weekday().num_days_from_monday() as usize,
            TimeFeature::DayOfMonth => d.day0() as usize,
            TimeFeature::MonthOfYear => d.month0() as usize,
            TimeFeature::WeekOfYear => (d.ordinal0() / 7) as usize,
        }
    }
}

impl FromStr for TimeFeature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hour" => Ok(TimeFeature::HourOfDay),
            "dow" => Ok(TimeFeature::DayOfWeek),
            "dom" => Ok(TimeFeature::DayOfMonth),
            "month" => Ok(TimeFeature::MonthOfYear),
            "week" => Ok(TimeFeature::WeekOfYear),
            other => Err(Error::InvalidConfig(format!("unknown time feature '{other}'"))),
        }
    }
}

fn datetime(ts: i64) -> Option<DateTime<Utc>> {
    DateTime::from_timestamp(ts, 0)
}

/// Categorical calendar features of an epoch-seconds timestamp (UTC):
/// `(feature, value)` pairs with values in `0..cardinality`.
pub fn time_features(ts: i64, granularity: Granularity) -> Vec<(TimeFeature, usize)> {
    granularity
        .default_features()
        .into_iter()
        .map(|f| (f, f.value(ts)))
        .collect()
}
