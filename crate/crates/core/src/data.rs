//! Wind time-series ingestion and neighbour-pair extraction.
//!
//! Input series CSV:
//!
//! ```text
//! timestamp,forecast_mw,observed_mw
//! 2004-01-01T00:00:00Z,1064.2,1101.7
//! ```
//!
//! `timestamp` is ISO-8601 (RFC 3339, or naive `YYYY-MM-DDTHH:MM[:SS]` read as
//! UTC) or integer epoch seconds. Forecast errors are `observed - forecast`.
//!
//! Pair CSV (written by `ramprisk pairs`, accepted by every other command):
//!
//! ```text
//! dw1_mw,dw2_mw
//! 5,-6
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::Serialize;

use crate::domain::{ErrorPair, SampleSet};
use crate::error::{Error, Result};

pub const SERIES_HEADER: [&str; 3] = ["timestamp", "forecast_mw", "observed_mw"];
pub const PAIRS_HEADER: [&str; 2] = ["dw1_mw", "dw2_mw"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSeriesRecord {
    /// Epoch seconds (UTC).
    pub timestamp: i64,
    pub forecast: f64,
    pub observed: f64,
}

impl TimeSeriesRecord {
    pub fn error(&self) -> f64 {
        self.observed - self.forecast
    }
}

/// Which periods of a neighbour pair must have their forecast inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    #[default]
    Both,
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairExtractionSpec {
    window_lo: f64,
    window_hi: f64,
    pub mode: WindowMode,
    pub require_consecutive: bool,
    /// Expected spacing in seconds; inferred from the series when `None`.
    pub cadence: Option<i64>,
}

impl PairExtractionSpec {
    pub fn new(window_lo: f64, window_hi: f64) -> Result<Self> {
        if window_lo.is_nan() || window_hi.is_nan() || window_lo > window_hi {
            return Err(Error::invalid(format!(
                "forecast window [{window_lo}, {window_hi}] is empty"
            )));
        }
        Ok(Self {
            window_lo,
            window_hi,
            mode: WindowMode::Both,
            require_consecutive: true,
            cadence: None,
        })
    }

    pub fn with_mode(mut self, mode: WindowMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_cadence(mut self, seconds: i64) -> Result<Self> {
        if seconds <= 0 {
            return Err(Error::invalid(format!(
                "cadence must be positive, got {seconds}"
            )));
        }
        self.cadence = Some(seconds);
        Ok(self)
    }

    pub fn allow_gaps(mut self) -> Self {
        self.require_consecutive = false;
        self
    }

    pub fn window(&self) -> (f64, f64) {
        (self.window_lo, self.window_hi)
    }

    fn in_window(&self, forecast: f64) -> bool {
        forecast >= self.window_lo && forecast <= self.window_hi
    }
}

/// Counters reported alongside an extraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionSummary {
    pub records: usize,
    pub neighbours: usize,
    pub pairs: usize,
    pub outside_window: usize,
    pub skipped_gaps: usize,
    pub cadence: Option<i64>,
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
    .map(|dt| dt.and_utc().timestamp())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], path: &Path) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: format!("cannot read header: {e}"),
    })?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

fn parse_field(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
    path: &Path,
) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("");
    let value: f64 = raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("{name} `{raw}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{name} must be finite, got `{raw}`"),
        });
    }
    Ok(value)
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Reads a series CSV from any reader; `path` is used for messages only.
pub fn read_series<R: Read>(reader: R, path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &SERIES_HEADER, path)?;

    let mut records: Vec<TimeSeriesRecord> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(e, path))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let raw_ts = row.get(0).unwrap_or("");
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("timestamp `{raw_ts}` is neither ISO-8601 nor epoch seconds"),
        })?;
        let forecast = parse_field(&row, 1, "forecast_mw", line, path)?;
        let observed = parse_field(&row, 2, "observed_mw", line, path)?;
        if forecast < 0.0 || observed < 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "power values must be nonnegative".into(),
            });
        }
        if let Some(prev) = records.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "line {line}: timestamp `{raw_ts}` is not after the previous row \
                         (timestamps must be strictly increasing)"
                    ),
                });
            }
        }
        records.push(TimeSeriesRecord {
            timestamp,
            forecast,
            observed,
        });
    }
    Ok(records)
}

pub fn load_series(path: impl AsRef<Path>) -> Result<Vec<TimeSeriesRecord>> {
    let path = path.as_ref();
    read_series(open(path)?, path)
}

/// Smallest positive spacing between consecutive timestamps.
pub fn infer_cadence(series: &[TimeSeriesRecord]) -> Option<i64> {
    series
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .filter(|&d| d > 0)
        .min()
}

/// One error pair per neighbouring record pair whose forecasts fall in the window.
///
/// Neighbours further apart than the cadence are skipped (and counted) when
/// `require_consecutive` is set; nothing is interpolated.
pub fn extract_pairs(
    series: &[TimeSeriesRecord],
    spec: &PairExtractionSpec,
) -> Result<(SampleSet, ExtractionSummary)> {
    if series.len() < 2 {
        return Err(Error::invalid(format!(
            "pair extraction needs at least two records, got {}",
            series.len()
        )));
    }
    let cadence = spec.cadence.or_else(|| infer_cadence(series));
    let mut summary = ExtractionSummary {
        records: series.len(),
        cadence,
        ..Default::default()
    };

    let mut pairs = Vec::new();
    for w in series.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        summary.neighbours += 1;
        let eligible = match spec.mode {
            WindowMode::Both => spec.in_window(a.forecast) && spec.in_window(b.forecast),
            WindowMode::First => spec.in_window(a.forecast),
        };
        if !eligible {
            summary.outside_window += 1;
            continue;
        }
        if spec.require_consecutive && cadence.is_some_and(|c| b.timestamp - a.timestamp != c) {
            summary.skipped_gaps += 1;
            continue;
        }
        pairs.push(ErrorPair::new(a.error(), b.error())?);
    }
    summary.pairs = pairs.len();
    Ok((SampleSet::new(pairs), summary))
}

/// `(training, full)`: the first `count` pairs and the whole set.
pub fn prefix_split(samples: &SampleSet, count: usize) -> Result<(SampleSet, SampleSet)> {
    if count < 1 || count > samples.len() {
        return Err(Error::invalid(format!(
            "prefix {count} outside 1..={} available pairs",
            samples.len()
        )));
    }
    Ok((samples.prefix(count), samples.clone()))
}

pub fn read_pairs<R: Read>(reader: R, path: &Path) -> Result<SampleSet> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &PAIRS_HEADER, path)?;
    let mut pairs = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(e, path))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let dw1 = parse_field(&row, 0, "dw1_mw", line, path)?;
        let dw2 = parse_field(&row, 1, "dw2_mw", line, path)?;
        pairs.push(ErrorPair::new(dw1, dw2)?);
    }
    Ok(SampleSet::new(pairs).with_provenance(path.display().to_string()))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    read_pairs(open(path)?, path)
}

/// Writes pairs with shortest round-trip decimals.
pub fn write_pairs<W: Write>(mut out: W, samples: &SampleSet) -> std::io::Result<()> {
    writeln!(out, "{}", PAIRS_HEADER.join(","))?;
    for p in samples.pairs() {
        writeln!(out, "{},{}", p.dw1(), p.dw2())?;
    }
    Ok(())
}

/// What kind of CSV a file holds, judged by its header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Series,
    Pairs,
}

pub fn sniff_input(path: impl AsRef<Path>) -> Result<InputKind> {
    let path = path.as_ref();
    let mut rdr = csv_reader(open(path)?);
    let header = rdr.headers().map_err(|e| csv_error(e, path))?;
    if header.iter().eq(SERIES_HEADER.iter().copied()) {
        Ok(InputKind::Series)
    } else if header.iter().eq(PAIRS_HEADER.iter().copied()) {
        Ok(InputKind::Pairs)
    } else {
        Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "unrecognised header `{}`; expected `{}` or `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                SERIES_HEADER.join(","),
                PAIRS_HEADER.join(",")
            ),
        })
    }
}
