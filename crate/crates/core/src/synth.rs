//! Seeded synthetic wind series for demos, golden files and tests.
//!
//! The point forecast is a mean-reverting process around `forecast_mean`, and
//! the forecast error is an AR(1) process, so consecutive errors are
//! correlated the way real day-ahead errors are. Values are rounded to 0.1 MW
//! so the written CSV reads back bit-identically.

use std::io::Write;

use chrono::DateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{TimeSeriesRecord, SERIES_HEADER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSeries {
    pub seed: u64,
    pub records: usize,
    /// Epoch seconds of the first record.
    pub start: i64,
    pub cadence: i64,
    pub forecast_mean: f64,
    pub forecast_sd: f64,
    pub forecast_persistence: f64,
    pub error_sd: f64,
    pub error_persistence: f64,
    pub capacity: f64,
}

impl Default for SyntheticSeries {
    fn default() -> Self {
        Self {
            seed: 2004,
            records: 2000,
            start: 1_072_915_200, // 2004-01-01T00:00:00Z
            cadence: 3600,
            forecast_mean: 1065.0,
            forecast_sd: 12.0,
            forecast_persistence: 0.9,
            error_sd: 120.0,
            error_persistence: 0.5,
            capacity: 2500.0,
        }
    }
}

fn round_tenth(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl SyntheticSeries {
    pub fn generate(&self) -> Result<Vec<TimeSeriesRecord>> {
        let innovation = |sd: f64, phi: f64| {
            if !(0.0..1.0).contains(&phi) {
                return Err(Error::invalid(format!(
                    "persistence must lie in [0, 1), got {phi}"
                )));
            }
            Normal::new(0.0, sd * (1.0 - phi * phi).sqrt())
                .map_err(|e| Error::invalid(format!("bad standard deviation {sd}: {e}")))
        };
        let forecast_noise = innovation(self.forecast_sd, self.forecast_persistence)?;
        let error_noise = innovation(self.error_sd, self.error_persistence)?;
        let stationary = |sd: f64| {
            Normal::new(0.0, sd)
                .map_err(|e| Error::invalid(format!("bad standard deviation {sd}: {e}")))
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut f_dev = stationary(self.forecast_sd)?.sample(&mut rng);
        let mut err = stationary(self.error_sd)?.sample(&mut rng);

        let mut out = Vec::with_capacity(self.records);
        for k in 0..self.records {
            if k > 0 {
                f_dev = self.forecast_persistence * f_dev + forecast_noise.sample(&mut rng);
                err = self.error_persistence * err + error_noise.sample(&mut rng);
            }
            let forecast = round_tenth((self.forecast_mean + f_dev).clamp(0.0, self.capacity));
            let observed = round_tenth((forecast + err).clamp(0.0, self.capacity));
            out.push(TimeSeriesRecord {
                timestamp: self.start + k as i64 * self.cadence,
                forecast,
                observed,
            });
        }
        Ok(out)
    }
}

/// Writes a series CSV with ISO-8601 UTC timestamps.
pub fn write_series<W: Write>(mut out: W, series: &[TimeSeriesRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", SERIES_HEADER.join(","))?;
    for r in series {
        match DateTime::from_timestamp(r.timestamp, 0) {
            Some(ts) => writeln!(
                out,
                "{},{},{}",
                ts.format("%Y-%m-%dT%H:%M:%SZ"),
                r.forecast,
                r.observed
            )?,
            None => writeln!(out, "{},{},{}", r.timestamp, r.forecast, r.observed)?,
        }
    }
    Ok(())
}
