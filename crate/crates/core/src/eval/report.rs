use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::protocol::{EvalReport, SeriesForecast};
use crate::error::{Error, Result};

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned text table of pooled and per-series metrics.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>5} {:>10} {:>12}",
            "method", "protocol", "rolls", "ND", "RMSE"
        );
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>5} {:>10.4} {:>12.4}",
            self.method, self.protocol, self.rolls, self.nd, self.rmse
        );
        if let Some(t) = self.inference_seconds {
            let _ = writeln!(out, "inference seconds: {t:.4}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<16} {:>10} {:>12}", "series", "ND", "RMSE");
        for s in &self.per_series {
            let nd = s.nd.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{:<16} {:>10} {:>12.4}", s.series, nd, s.rmse);
        }
        out
    }

    pub fn save(&self, json: impl AsRef<Path>, table: impl AsRef<Path>) -> Result<()> {
        let (json, table) = (json.as_ref(), table.as_ref());
        std::fs::write(json, self.to_json()?).map_err(|e| Error::io(json, e))?;
        std::fs::write(table, self.to_table()).map_err(|e| Error::io(table, e))
    }
}

/// `timestamp,y_true,mu,sigma` for one series.
pub fn write_forecast_csv(forecast: &SeriesForecast, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "timestamp,y_true,mu,sigma").map_err(io)?;
    for i in 0..forecast.truth.len() {
        writeln!(
            w,
            "{},{},{},{}",
            forecast.timestamps[i], forecast.truth[i], forecast.mu[i], forecast.sigma[i]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
