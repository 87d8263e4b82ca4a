//! The partially observed Markov process abstraction shared by every filter.
//!
//! A model is a simulator (`rinit`, `rstep`, `rmeasure`) plus a measurement
//! density (`dmeasure`). That is all the particle filter needs. The Poisson
//! approximate likelihood additionally needs the analytic structure in
//! [`PalStructure`], which a model may or may not expose.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{DataScale, ObservationSeries, TimeGrid};
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::rng::{rng_from_seed, PompRng};

/// Compartment counts plus transition counts accumulated since the last
/// observation time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentState {
    pub compartments: Vec<u64>,
    pub flows: Vec<u64>,
}

impl LatentState {
    pub fn new(compartments: Vec<u64>, n_flows: usize) -> Self {
        Self {
            compartments,
            flows: vec![0; n_flows],
        }
    }

    pub fn reset_flows(&mut self) {
        self.flows.iter_mut().for_each(|f| *f = 0);
    }

    pub fn population(&self) -> u64 {
        self.compartments.iter().sum()
    }
}

/// One observed column of a PAL-compatible model: a thinned count of the
/// transitions from `source` to `dest` accumulated over an observation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedFlow {
    pub source: usize,
    pub dest: usize,
    pub reporting: f64,
    /// Negative binomial size; `None` means Poisson (equidispersed) reporting.
    pub dispersion: Option<f64>,
}

/// Analytic structure required by the Poisson approximate likelihood.
pub trait PalStructure<P>: Sync {
    /// Length of the belief vector; may exceed the simulator's compartment
    /// count when the kernel needs absorbing sinks to stay row-stochastic.
    fn n_states(&self) -> usize;

    /// Expected one-sub-step transition kernel, row-major `n_states x n_states`,
    /// linearised at `belief`. `noise` carries one process-noise draw when the
    /// model has process overdispersion.
    fn kernel(&self, t: f64, dt: f64, p: &P, belief: &[f64], noise: Option<&[f64]>, out: &mut [f64]);

    /// Expected arrivals per sub-step, independent of the current state.
    fn immigration(&self, t: f64, dt: f64, p: &P, out: &mut [f64]);

    fn observed_flows(&self, p: &P) -> Vec<ObservedFlow>;

    fn has_process_noise(&self, _p: &P) -> bool {
        false
    }

    /// One draw of the per-sub-step overdispersion variables.
    fn sample_noise(&self, _t: f64, _dt: f64, _p: &P, _rng: &mut PompRng) -> Option<Vec<f64>> {
        None
    }

    /// Maps an observed value to the count the flow update works with, plus
    /// the log-Jacobian of that map.
    fn observation_to_count(&self, y: f64, _column: usize, _p: &P) -> (f64, f64) {
        (y, 0.0)
    }

    /// Belief corresponding to a mean compartment vector of the simulator.
    fn belief_from_mean(&self, mean: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_states()];
        b[..mean.len()].copy_from_slice(mean);
        b
    }
}

/// A partially observed Markov process.
pub trait PompModel: Sync {
    /// Parameters resolved from a [`ParameterSet`] into whatever form the
    /// simulator wants in its inner loop.
    type Params: Clone + Send + Sync;

    fn resolve(&self, params: &ParameterSet) -> Result<Self::Params>;

    fn n_compartments(&self) -> usize;
    fn n_flows(&self) -> usize;
    fn n_observed(&self) -> usize;

    /// Process sub-steps per observation interval.
    fn substeps(&self) -> usize {
        1
    }

    fn rinit(&self, p: &Self::Params, t0: f64, rng: &mut PompRng) -> Result<LatentState>;

    /// Advances `x` by one sub-step of length `dt` starting at `t`, adding
    /// transitions to the flow accumulators.
    fn rstep(&self, x: &mut LatentState, t: f64, dt: f64, p: &Self::Params, rng: &mut PompRng) -> Result<()>;

    fn rmeasure(&self, x: &LatentState, t: f64, p: &Self::Params, rng: &mut PompRng) -> Vec<f64>;

    /// Log-density of an observation row. Impossible observations give `-inf`.
    fn dmeasure(&self, y: &[f64], x: &LatentState, t: f64, p: &Self::Params) -> f64;

    fn data_scale(&self) -> DataScale {
        DataScale::RawCounts
    }

    /// Per-column reporting rates used to build rescaled data.
    fn reporting_rates(&self, _p: &Self::Params) -> Option<Vec<f64>> {
        None
    }

    /// Mean of `rinit`'s compartments when it has a closed form.
    fn init_mean(&self, _p: &Self::Params) -> Option<Vec<f64>> {
        None
    }

    fn pal(&self) -> Option<&dyn PalStructure<Self::Params>> {
        None
    }
}

/// Sub-step start times and width for the interval `[from, to]`.
pub fn substep_schedule(from: f64, to: f64, substeps: usize) -> (f64, usize) {
    if to <= from {
        return (0.0, 0);
    }
    ((to - from) / substeps as f64, substeps)
}

/// Runs the process from `from` to `to` in the model's sub-steps.
pub fn advance<M: PompModel + ?Sized>(
    model: &M,
    x: &mut LatentState,
    from: f64,
    to: f64,
    p: &M::Params,
    rng: &mut PompRng,
) -> Result<()> {
    let (dt, n) = substep_schedule(from, to, model.substeps());
    for k in 0..n {
        model.rstep(x, from + k as f64 * dt, dt, p, rng)?;
    }
    Ok(())
}

/// Output of every filter: total and per-time conditional log-likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikResult {
    pub total: f64,
    /// `log p(y_t | y_{1:t-1})` for each observation time.
    pub conditional: Vec<f64>,
    /// Effective sample size per time (particle filter only).
    pub ess: Option<Vec<f64>>,
    /// Observation indices where every particle had zero weight.
    pub failed_times: Vec<usize>,
    /// Number of times a Poisson rate had to be floored (PAL only).
    pub floor_events: usize,
}

impl LogLikResult {
    pub fn from_conditionals(conditional: Vec<f64>) -> Self {
        Self {
            total: conditional.iter().sum(),
            conditional,
            ess: None,
            failed_times: Vec::new(),
            floor_events: 0,
        }
    }

    /// Writes `time,cond_loglik,ess`; `ess` is left blank when absent.
    pub fn write_diagnostics(&self, times: &[f64], writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "cond_loglik", "ess"])?;
        for (i, (t, c)) in times.iter().zip(&self.conditional).enumerate() {
            let ess = self
                .ess
                .as_ref()
                .map(|e| e[i].to_string())
                .unwrap_or_default();
            w.write_record([t.to_string(), c.to_string(), ess])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a diagnostics file back into `(times, result)`.
    pub fn read_diagnostics(reader: impl std::io::Read) -> Result<(Vec<f64>, Self)> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut cond = Vec::new();
        let mut ess = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidObservations(format!("bad number `{s}`")))
            };
            times.push(num(&rec[0])?);
            cond.push(num(&rec[1])?);
            let e = rec.get(2).unwrap_or("").trim();
            ess.push(if e.is_empty() { None } else { Some(num(e)?) });
        }
        let mut res = Self::from_conditionals(cond);
        if ess.iter().all(Option::is_some) && !ess.is_empty() {
            res.ess = Some(ess.into_iter().map(Option::unwrap).collect());
        }
        Ok((times, res))
    }
}

/// Checks that a dataset fits the model.
pub fn check_dims<M: PompModel + ?Sized>(model: &M, obs: &ObservationSeries) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::InvalidObservations("no observations".into()));
    }
    if obs.dim() != model.n_observed() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, model observes {}",
            obs.dim(),
            model.n_observed()
        )));
    }
    Ok(())
}

/// Simulates one latent trajectory and one observation row per time.
///
/// The returned states are taken at the observation times, before the flow
/// accumulators are reset.
pub fn simulate<M: PompModel + ?Sized>(
    model: &M,
    params: &ParameterSet,
    grid: &TimeGrid,
    seed: u64,
) -> Result<(Vec<LatentState>, ObservationSeries)> {
    grid.validate()?;
    params.validate()?;
    let p = model.resolve(params)?;
    let mut rng = rng_from_seed(seed);
    let name_params = |e: Error| match e {
        Error::NonFiniteRate { time, detail } => Error::NonFiniteRate {
            time,
            detail: format!(
                "{detail}; parameters {}",
                serde_json::to_string(params).unwrap_or_default()
            ),
        },
        other => other,
    };
    let mut x = model.rinit(&p, grid.t0, &mut rng).map_err(name_params)?;
    let mut states = Vec::with_capacity(grid.len());
    let mut rows = Vec::with_capacity(grid.len());
    let mut t = grid.t0;
    for &t_obs in &grid.obs_times {
        advance(model, &mut x, t, t_obs, &p, &mut rng).map_err(name_params)?;
        rows.push(model.rmeasure(&x, t_obs, &p, &mut rng));
        states.push(x.clone());
        x.reset_flows();
        t = t_obs;
    }
    let scale = model.data_scale();
    let mut obs = ObservationSeries {
        times: grid.obs_times.clone(),
        values: rows,
        scale,
        reporting_rates: None,
    };
    if scale == DataScale::RescaledCounts {
        let r = model
            .reporting_rates(&p)
            .ok_or_else(|| Error::Config("rescaled model without reporting rates".into()))?;
        obs.reporting_rates = Some(vec![r; grid.len()]);
    }
    obs.validate()?;
    Ok((states, obs))
}
