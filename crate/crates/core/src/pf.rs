//! Bootstrap particle filter with systematic resampling and replicated
//! evaluation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{advance, check_dims, LatentState, LogLikResult, PompModel};
use crate::params::ParameterSet;
use crate::rng::{derive_seed, StreamFamily, INIT_INDEX};
use crate::stats::{log_mean_exp, log_sum_exp, mean_sd};
use crate::data::ObservationSeries;

/// Stream slot for the single uniform used by systematic resampling.
pub(crate) const RESAMPLE_SLOT: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplePolicy {
    Always,
    /// Resample when ESS < threshold * J. A threshold of 1 resamples at every step.
    WhenEssBelow(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSettings {
    pub particles: usize,
    pub replicates: usize,
    pub resample: ResamplePolicy,
    pub seed: u64,
}

impl Default for PfSettings {
    fn default() -> Self {
        Self {
            particles: 50_000,
            replicates: 36,
            resample: ResamplePolicy::Always,
            seed: 0,
        }
    }
}

impl PfSettings {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidSettings("particle count must be at least 1".into()));
        }
        if self.particles >= RESAMPLE_SLOT as usize {
            return Err(Error::InvalidSettings("particle count too large".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidSettings("replicates must be at least 1".into()));
        }
        if let ResamplePolicy::WhenEssBelow(th) = self.resample {
            if !(th > 0.0 && th <= 1.0) {
                return Err(Error::InvalidSettings(format!(
                    "ESS threshold {th} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn should_resample(&self, ess: f64) -> bool {
        match self.resample {
            ResamplePolicy::Always => true,
            ResamplePolicy::WhenEssBelow(th) => th >= 1.0 || ess < th * self.particles as f64,
        }
    }
}

/// Systematic resampling of `weights.len()` indices with offsets
/// `(u + j) / J` against the cumulative weights. Output is sorted.
pub fn systematic_resample(weights: &[f64], u: f64) -> Result<Vec<usize>> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    if n == 0 || !((total - 1.0).abs() <= 1e-9) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::WeightSum(total));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidSettings(format!("resampling offset {u} outside [0, 1)")));
    }
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for j in 0..n {
        let offset = (u + j as f64) / n as f64;
        while offset >= cum && i < n - 1 {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    Ok(out)
}

/// Normalises log-weights in place and returns the effective sample size.
/// Parameters seen by each particle: one shared set, or one per particle.
pub(crate) enum ParamSource<'a, P> {
    Shared(&'a P),
    PerParticle(&'a [P]),
}

impl<P> Clone for ParamSource<'_, P> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<P> Copy for ParamSource<'_, P> {}

impl<'a, P> ParamSource<'a, P> {
    #[inline]
    fn get(&self, i: usize) -> &'a P {
        match self {
            ParamSource::Shared(p) => p,
            ParamSource::PerParticle(v) => &v[i],
        }
    }
}

pub(crate) fn normalise(logw: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logw);
    let mut sq = 0.0;
    for w in logw.iter_mut() {
        *w -= lse;
        let e = w.exp();
        sq += e * e;
    }
    1.0 / sq
}

pub(crate) fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Initial particle swarm.
pub(crate) fn init_particles<M: PompModel>(
    model: &M,
    params: ParamSource<'_, M::Params>,
    j: usize,
    t0: f64,
    streams: &StreamFamily,
) -> Result<Vec<LatentState>> {
    (0..j)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.at(INIT_INDEX, i as u32);
            model.rinit(params.get(i), t0, &mut rng)
        })
        .collect()
}

pub(crate) fn propagate<M: PompModel>(
    model: &M,
    states: &mut [LatentState],
    params: ParamSource<'_, M::Params>,
    from: f64,
    to: f64,
    time_index: usize,
    streams: &StreamFamily,
) -> Result<()> {
    states
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(i, x)| {
            let mut rng = streams.at(time_index as u32, i as u32);
            advance(model, x, from, to, params.get(i), &mut rng)
        })
}

pub(crate) fn measure<M: PompModel>(
    model: &M,
    y: &[f64],
    states: &mut [LatentState],
    params: ParamSource<'_, M::Params>,
    t: f64,
) -> Vec<f64> {
    states
        .par_iter_mut()
        .enumerate()
        .map(|(i, x)| {
            let ll = model.dmeasure(y, x, t, params.get(i));
            x.reset_flows();
            if ll.is_nan() {
                f64::NEG_INFINITY
            } else {
                ll
            }
        })
        .collect()
}

/// Single bootstrap particle filter run.
///
/// All randomness is drawn from streams keyed by `(settings.seed, time,
/// particle)`, so the result does not depend on the worker count.
pub fn pfilter<M: PompModel>(
    model: &M,
    obs: &ObservationSeries,
    t0: f64,
    params: &ParameterSet,
    settings: &PfSettings,
) -> Result<LogLikResult> {
    settings.validate()?;
    check_dims(model, obs)?;
    if t0 > obs.times[0] {
        return Err(Error::InvalidGrid("t0 after first observation".into()));
    }
    let p = model.resolve(params)?;
    let get = ParamSource::Shared(&p);
    let streams = StreamFamily::new(settings.seed, "pf");
    let j = settings.particles;

    let mut states = init_particles(model, get, j, t0, &streams)?;
    let mut prev_logw: Option<Vec<f64>> = None;
    let n = obs.len();
    let mut cond = Vec::with_capacity(n);
    let mut ess = Vec::with_capacity(n);
    let mut failed = Vec::new();
    let mut t = t0;

    for k in 0..n {
        let t_obs = obs.times[k];
        propagate(model, &mut states, get, t, t_obs, k, &streams)?;
        t = t_obs;
        let ll = measure(model, &obs.values[k], &mut states, get, t_obs);
        let (c, mut logw) = match &prev_logw {
            None => (log_mean_exp(&ll), ll),
            Some(prev) => {
                let w: Vec<f64> = prev.iter().zip(&ll).map(|(a, b)| a + b).collect();
                (log_sum_exp(&w), w)
            }
        };
        cond.push(c);
        if c == f64::NEG_INFINITY || c.is_nan() {
            // Every particle is incompatible with y_k: keep the swarm as is.
            failed.push(k);
            ess.push(0.0);
            continue;
        }
        let e = normalise(&mut logw);
        ess.push(e);
        if settings.should_resample(e) {
            let u: f64 = streams.at(k as u32, RESAMPLE_SLOT).random();
            let w: Vec<f64> = logw.iter().map(|l| l.exp()).collect();
            let idx = systematic_resample(&w, u)?;
            states = gather(&states, &idx);
            prev_logw = None;
        } else {
            prev_logw = Some(logw);
        }
    }

    let total = if failed.is_empty() {
        cond.iter().sum()
    } else {
        f64::NEG_INFINITY
    };
    Ok(LogLikResult {
        total,
        conditional: cond,
        ess: Some(ess),
        failed_times: failed,
        floor_events: 0,
    })
}

/// Result of replicated particle filtering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicatedLogLik {
    /// Combined on the likelihood scale: `total = log_mean_exp(replicate totals)`.
    pub combined: LogLikResult,
    pub replicate_totals: Vec<f64>,
    /// Arithmetic mean of the replicate log-likelihoods, reported for comparison.
    pub mean_of_logliks: f64,
    /// Monte Carlo standard error of `combined.total` (delta method).
    pub se: f64,
    /// Per-time log-mean-exp of the replicate conditionals. Unlike
    /// `combined.conditional` these do not sum to the combined total.
    pub pointwise_conditional_lme: Vec<f64>,
}

/// Seed used for replicate `r` of a replicated run with root `seed`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, "pf", r as u64)
}

/// Runs `settings.replicates` independent particle filters and combines them
/// by log-mean-exp.
///
/// The combined conditionals telescope the log-mean-exp of cumulative
/// replicate log-likelihoods, so they sum to the combined total.
pub fn replicated_pfilter<M: PompModel>(
    model: &M,
    obs: &ObservationSeries,
    t0: f64,
    params: &ParameterSet,
    settings: &PfSettings,
) -> Result<ReplicatedLogLik> {
    settings.validate()?;
    let runs: Vec<LogLikResult> = (0..settings.replicates)
        .into_par_iter()
        .map(|r| {
            let s = PfSettings {
                seed: replicate_seed(settings.seed, r),
                replicates: 1,
                ..settings.clone()
            };
            pfilter(model, obs, t0, params, &s)
        })
        .collect::<Result<_>>()?;

    let totals: Vec<f64> = runs.iter().map(|r| r.total).collect();
    let n = obs.len();
    let pointwise: Vec<f64> = (0..n)
        .map(|k| log_mean_exp(&runs.iter().map(|r| r.conditional[k]).collect::<Vec<_>>()))
        .collect();
    let (mean_ll, _) = mean_sd(&totals);
    let se = lme_standard_error(&totals);

    let combined = if runs.len() == 1 {
        runs[0].clone()
    } else {
        let mut cum = vec![0.0; runs.len()];
        let mut prev = 0.0;
        let mut cond = Vec::with_capacity(n);
        for k in 0..n {
            for (c, r) in cum.iter_mut().zip(&runs) {
                *c += r.conditional[k];
            }
            let now = log_mean_exp(&cum);
            cond.push(if now == f64::NEG_INFINITY { now } else { now - prev });
            prev = now;
        }
        let ess = (0..n)
            .map(|k| {
                runs.iter().map(|r| r.ess.as_ref().map_or(0.0, |e| e[k])).sum::<f64>()
                    / runs.len() as f64
            })
            .collect();
        let mut failed: Vec<usize> = runs.iter().flat_map(|r| r.failed_times.clone()).collect();
        failed.sort_unstable();
        failed.dedup();
        LogLikResult {
            total: log_mean_exp(&totals),
            conditional: cond,
            ess: Some(ess),
            failed_times: failed,
            floor_events: 0,
        }
    };
    Ok(ReplicatedLogLik {
        combined,
        replicate_totals: totals,
        mean_of_logliks: mean_ll,
        se,
        pointwise_conditional_lme: pointwise,
    })
}

/// Delta-method standard error of `log_mean_exp(values)`.
pub fn lme_standard_error(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NAN;
    }
    let l: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let (m, sd) = mean_sd(&l);
    sd / (m * (values.len() as f64).sqrt())
}
