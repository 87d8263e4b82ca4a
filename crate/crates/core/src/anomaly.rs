//! Screening per-time conditional log-likelihoods for outliers that cluster
//! at the start of a series, the signature of a bad initial condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LogLikResult;
use crate::stats::binomial_upper_tail;

pub const DEFAULT_K: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub window: usize,
    pub k: f64,
    pub median: f64,
    pub mad: f64,
    pub threshold: f64,
    /// Indices (0-based) of flagged time points.
    pub flagged: Vec<usize>,
    pub flags_in_window: usize,
    /// Flags exist and more than half of them fall inside the window.
    pub concentrated_early: bool,
    /// `P(X >= flags_in_window)` for `X ~ Binomial(n_flags, window / N)`.
    pub p_value: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Flags time points whose conditional log-likelihood lies more than `k`
/// median absolute deviations below the median.
pub fn initial_condition_anomaly_report(ll: &LogLikResult, window: usize, k: f64) -> Result<AnomalyReport> {
    if window == 0 {
        return Err(Error::InvalidSettings("window must be at least 1".into()));
    }
    if !(k >= 0.0) {
        return Err(Error::InvalidSettings(format!("k = {k} must be nonnegative")));
    }
    let c = &ll.conditional;
    if c.is_empty() {
        return Err(Error::InvalidObservations("no conditional log-likelihoods".into()));
    }
    // -inf compares below any threshold; the robust centre ignores it.
    let finite: Vec<f64> = c.iter().copied().filter(|v| v.is_finite()).collect();
    let (med, mad) = if finite.is_empty() {
        (f64::NEG_INFINITY, 0.0)
    } else {
        let m = median(&finite);
        let dev: Vec<f64> = finite.iter().map(|v| (v - m).abs()).collect();
        (m, median(&dev))
    };
    let threshold = med - k * mad;
    let flagged: Vec<usize> = c
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < threshold || v.is_nan())
        .map(|(i, _)| i)
        .collect();
    let flags_in_window = flagged.iter().filter(|i| **i < window).count();
    let frac = (window as f64 / c.len() as f64).min(1.0);
    Ok(AnomalyReport {
        window,
        k,
        median: med,
        mad,
        threshold,
        concentrated_early: !flagged.is_empty() && 2 * flags_in_window > flagged.len(),
        p_value: binomial_upper_tail(flags_in_window, flagged.len(), frac),
        flagged,
        flags_in_window,
    })
}
