//! Time grids and observation panels, with the CSV formats used on disk.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Origin of the latent process plus the observation times, in weeks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub obs_times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t0: f64, obs_times: Vec<f64>) -> Result<Self> {
        let grid = Self { t0, obs_times };
        grid.validate()?;
        Ok(grid)
    }

    /// `n` observations spaced `interval` apart, the first one `interval`
    /// after `t0`.
    pub fn regular(t0: f64, n: usize, interval: f64) -> Result<Self> {
        Self::new(t0, (1..=n).map(|k| t0 + k as f64 * interval).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_times.is_empty() {
            return Err(Error::InvalidGrid("no observation times".into()));
        }
        if !self.t0.is_finite() || self.obs_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite time".into()));
        }
        if self.t0 > self.obs_times[0] {
            return Err(Error::InvalidGrid(format!(
                "t0 = {} is after the first observation time {}",
                self.t0, self.obs_times[0]
            )));
        }
        if let Some(w) = self.obs_times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "observation times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.obs_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_times.is_empty()
    }
}

/// Whether observed values are reported counts or counts divided by a
/// reporting rate (incidence scale).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataScale {
    #[default]
    RawCounts,
    RescaledCounts,
}

/// An N x D panel of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    /// Row-major, one row per observation time.
    pub values: Vec<Vec<f64>>,
    pub scale: DataScale,
    pub reporting_rates: Option<Vec<Vec<f64>>>,
}

impl ObservationSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, scale: DataScale) -> Result<Self> {
        let obs = Self {
            times,
            values,
            scale,
            reporting_rates: None,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.times.len() {
            return Err(Error::InvalidObservations(format!(
                "{} rows but {} times",
                self.values.len(),
                self.times.len()
            )));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidObservations("no columns".into()));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidObservations(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidObservations(format!(
                    "row {i} contains invalid value {v}"
                )));
            }
        }
        match (&self.scale, &self.reporting_rates) {
            (DataScale::RescaledCounts, None) => {
                return Err(Error::InvalidObservations(
                    "rescaled counts require reporting rates".into(),
                ))
            }
            (_, Some(r)) => check_rates(r, self.len(), d)?,
            _ => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub fn zero_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| **v == 0.0).count()
    }

    pub fn read_csv(path: &Path, scale: DataScale) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let (times, values) = read_panel(file)?;
        Self::new(times, values, scale)
    }

    /// Reads counts plus an optional sidecar of reporting rates.
    pub fn read_csv_with_rates(path: &Path, rates: &Path) -> Result<Self> {
        let (times, values) = read_panel(std::fs::File::open(path)?)?;
        let (rtimes, r) = read_panel(std::fs::File::open(rates)?)?;
        if rtimes != times {
            return Err(Error::InvalidObservations(
                "rate sidecar times differ from data times".into(),
            ));
        }
        let obs = Self {
            times,
            values,
            scale: DataScale::RescaledCounts,
            reporting_rates: Some(r),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn from_csv_reader(reader: impl Read, scale: DataScale) -> Result<Self> {
        let (times, values) = read_panel(reader)?;
        Self::new(times, values, scale)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        write_panel(writer, &self.times, &self.values)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Writes the reporting-rate sidecar, if any.
    pub fn write_rates_csv(&self, writer: impl Write) -> Result<()> {
        match &self.reporting_rates {
            Some(r) => write_panel(writer, &self.times, r),
            None => Err(Error::InvalidObservations("no reporting rates".into())),
        }
    }
}

fn check_rates(rates: &[Vec<f64>], n: usize, d: usize) -> Result<()> {
    if rates.len() != n || rates.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "reporting rates must be {n} x {d}"
        )));
    }
    if let Some(r) = rates.iter().flatten().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::InvalidObservations(format!(
            "reporting rate {r} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Divides raw counts by reporting rates, producing incidence-scale data.
pub fn rescale_dataset(obs: &ObservationSeries, rates: &[Vec<f64>]) -> Result<ObservationSeries> {
    if obs.scale != DataScale::RawCounts {
        return Err(Error::InvalidObservations(
            "only raw counts can be rescaled".into(),
        ));
    }
    check_rates(rates, obs.len(), obs.dim())?;
    let values = obs
        .values
        .iter()
        .zip(rates)
        .map(|(row, r)| row.iter().zip(r).map(|(v, r)| v / r).collect())
        .collect();
    Ok(ObservationSeries {
        times: obs.times.clone(),
        values,
        scale: DataScale::RescaledCounts,
        reporting_rates: Some(rates.to_vec()),
    })
}

/// Constant-rate matrix matching the shape of `obs`.
pub fn constant_rates(obs: &ObservationSeries, rate: f64) -> Vec<Vec<f64>> {
    vec![vec![rate; obs.dim()]; obs.len()]
}

fn read_panel(reader: impl Read) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("time") || headers.len() < 2 {
        return Err(Error::InvalidObservations(
            "expected header `time,stratum_1,...`".into(),
        ));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::InvalidObservations(format!("row {}: cannot parse `{s}`", i + 1))
            })
        };
        times.push(parse(&rec[0])?);
        values.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?);
    }
    Ok((times, values))
}

fn write_panel(writer: impl Write, times: &[f64], values: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = values.first().map_or(0, Vec::len);
    let mut header = vec!["time".to_string()];
    header.extend((1..=d).map(|j| format!("stratum_{j}")));
    w.write_record(&header)?;
    for (t, row) in times.iter().zip(values) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
