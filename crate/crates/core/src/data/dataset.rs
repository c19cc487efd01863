use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::time::Granularity;
use crate::error::{Error, Result};

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub series_id: String,
    pub timestamp: i64,
    pub y: f64,
    pub extra: Vec<f64>,
}

/// A single regularly spaced series. `columns[c][t]` is extra column `c` at
/// step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub timestamps: Vec<i64>,
    pub y: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub granularity: Granularity,
    /// Names of the extra columns after `series_id,timestamp,y`.
    pub columns: Vec<String>,
    /// Sorted by series id.
    pub series: Vec<Series>,
}

impl Dataset {
    /// Group records per series, sort each by timestamp and check spacing.
    pub fn from_records(
        granularity: Granularity,
        columns: Vec<String>,
        records: Vec<SeriesRecord>,
    ) -> Result<Self> {
        let mut groups: BTreeMap<String, Vec<SeriesRecord>> = BTreeMap::new();
        for r in records {
            if r.extra.len() != columns.len() {
                return Err(Error::shape(columns.len(), r.extra.len()));
            }
            groups.entry(r.series_id.clone()).or_default().push(r);
        }
        let mut series = Vec::with_capacity(groups.len());
        for (id, mut rows) in groups {
            rows.sort_by_key(|r| r.timestamp);
            for pair in rows.windows(2) {
                if !granularity.is_next(pair[0].timestamp, pair[1].timestamp) {
                    return Err(Error::IrregularSpacing {
                        series: id,
                        timestamp: pair[1].timestamp,
                    });
                }
            }
            let mut cols = vec![Vec::with_capacity(rows.len()); columns.len()];
            for r in &rows {
                for (c, v) in cols.iter_mut().zip(&r.extra) {
                    c.push(*v);
                }
            }
            series.push(Series {
                id,
                timestamps: rows.iter().map(|r| r.timestamp).collect(),
                y: rows.iter().map(|r| r.y).collect(),
                columns: cols,
            });
        }
        Ok(Dataset {
            granularity,
            columns,
            series,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn total_points(&self) -> usize {
        self.series.iter().map(Series::len).sum()
    }
}

const REQUIRED: [&str; 3] = ["series_id", "timestamp", "y"];

/// Read `series_id,timestamp,y[,feature...]` with a header row. Extra columns
/// must be numeric.
pub fn load_csv(path: impl AsRef<Path>, granularity: Granularity) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 1, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let mut idx = [0usize; 3];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })?;
    }
    let extra_idx: Vec<usize> = (0..headers.len()).filter(|i| !idx.contains(i)).collect();
    let columns: Vec<String> = extra_idx.iter().map(|&i| headers[i].to_string()).collect();

    let mut records = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| csv_error(path, line, e))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let parse_err = |what: &str, v: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("cannot parse {what} '{v}'"),
        };
        let timestamp = field(idx[1])
            .parse::<i64>()
            .map_err(|_| parse_err("timestamp", field(idx[1])))?;
        let y = field(idx[2])
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err("y", field(idx[2])))?;
        let extra = extra_idx
            .iter()
            .map(|&i| {
                field(i)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(&headers[i], field(i)))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SeriesRecord {
            series_id: field(idx[0]).to_string(),
            timestamp,
            y,
            extra,
        });
    }
    Dataset::from_records(granularity, columns, records)
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(line, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Write a dataset in the ingestion schema. Values use shortest round-trip
/// formatting.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "series_id,timestamp,y").map_err(io)?;
    for c in &dataset.columns {
        write!(w, ",{c}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for s in &dataset.series {
        for t in 0..s.len() {
            write!(w, "{},{},{}", s.id, s.timestamps[t], s.y[t]).map_err(io)?;
            for c in &s.columns {
                write!(w, ",{}", c[t]).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn groups_rows_per_series() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "series_id,timestamp,y\na,0,1\na,3600,2\nb,0,3\nb,3600,4\n");
        let d = load_csv(&p, Granularity::Hourly).unwrap();
        assert_eq!(d.series.len(), 2);
        assert!(d.series.iter().all(|s| s.len() == 2));
        assert_eq!(d.series[1].y, vec![3.0, 4.0]);
    }

    #[test]
    fn shuffled_rows_give_identical_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let sorted = write(&dir, "s.csv", "series_id,timestamp,y,temp\na,0,1,5\na,3600,2,6\nb,0,3,7\nb,3600,4,8\n");
        let shuffled = write(&dir, "u.csv", "y,temp,series_id,timestamp\n4,8,b,3600\n1,5,a,0\n3,7,b,0\n2,6,a,3600\n");
        assert_eq!(
            load_csv(&sorted, Granularity::Hourly).unwrap(),
            load_csv(&shuffled, Granularity::Hourly).unwrap()
        );
    }

    #[test]
    fn gap_is_rejected_naming_series() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "g.csv", "series_id,timestamp,y\na,0,1\na,3600,2\nb,0,3\nb,7200,4\n");
        match load_csv(&p, Granularity::Hourly) {
            Err(Error::IrregularSpacing { series, timestamp }) => {
                assert_eq!(series, "b");
                assert_eq!(timestamp, 7200);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_bad_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.csv", "series_id,y\na,1\n");
        assert!(matches!(load_csv(&p, Granularity::Hourly), Err(Error::MissingColumn { column, .. }) if column == "timestamp"));

        let p = write(&dir, "b.csv", "series_id,timestamp,y\na,0,1\na,3600,oops\n");
        assert!(matches!(load_csv(&p, Granularity::Hourly), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "series_id,timestamp,y,f\nx,5,0.1,1\nx,6,-2.5e-7,0\n");
        let d = load_csv(&p, Granularity::Index).unwrap();
        let out = dir.path().join("out.csv");
        write_csv(&d, &out).unwrap();
        assert_eq!(load_csv(&out, Granularity::Index).unwrap(), d);
    }
}
