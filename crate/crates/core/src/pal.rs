//! Poisson approximate likelihood filter.
//!
//! The filtering distribution of the compartment counts is approximated by
//! independent Poissons, summarised by a vector of rates. Prediction is a
//! linear map through the expected transition kernel; an observed flow updates
//! the rate of the compartment the flow enters. Both steps are closed form,
//! so the filter is deterministic except for process overdispersion, which is
//! integrated by averaging over a fixed number of noise draws per interval.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSeries;
use crate::error::{Error, Result};
use crate::model::{check_dims, substep_schedule, LatentState, LogLikResult, ObservedFlow, PalStructure, PompModel};
use crate::params::ParameterSet;
use crate::rng::{PompRng, StreamFamily};
use crate::stats::{log_mean_exp, nbinom_logpmf, poisson_logpmf};

/// Means of the factorised Poisson approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonBelief {
    pub rates: Vec<f64>,
}

impl PoissonBelief {
    pub fn new(rates: Vec<f64>) -> Self {
        Self { rates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalSettings {
    /// Process-noise draws averaged per observation interval.
    pub noise_draws: usize,
    pub rate_floor: f64,
    pub seed: u64,
    /// `rinit` draws averaged when the model has no closed-form initial mean.
    pub init_draws: usize,
}

impl Default for PalSettings {
    fn default() -> Self {
        Self {
            noise_draws: 25,
            rate_floor: 1e-10,
            seed: 0,
            init_draws: 10_000,
        }
    }
}

impl PalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.noise_draws == 0 {
            return Err(Error::InvalidSettings("noise_draws must be at least 1".into()));
        }
        if !(self.rate_floor > 0.0) {
            return Err(Error::InvalidSettings("rate_floor must be positive".into()));
        }
        if self.init_draws == 0 {
            return Err(Error::InvalidSettings("init_draws must be at least 1".into()));
        }
        Ok(())
    }
}

const KERNEL_TOL: f64 = 1e-10;

/// `rates' = rates^T kernel + immigration` for a row-major `m x m` kernel.
pub fn pal_predict(belief: &PoissonBelief, kernel: &[f64], immigration: &[f64]) -> Result<PoissonBelief> {
    let m = belief.rates.len();
    if kernel.len() != m * m || immigration.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "belief of length {m} needs an {m}x{m} kernel and {m} immigration rates"
        )));
    }
    let mut out = immigration.to_vec();
    for (i, row) in kernel.chunks_exact(m).enumerate() {
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidKernel(format!("entry {v} in row {i}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > KERNEL_TOL {
            return Err(Error::InvalidKernel(format!("row {i} sums to {s}")));
        }
        let b = belief.rates[i];
        if b != 0.0 {
            for (o, k) in out.iter_mut().zip(row) {
                *o += b * k;
            }
        }
    }
    if let Some(v) = immigration.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidKernel(format!("immigration rate {v}")));
    }
    Ok(PoissonBelief { rates: out })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub belief: PoissonBelief,
    pub cond_loglik: f64,
    pub posterior_flow_mean: f64,
    /// The destination rate fell below the floor and was clamped.
    pub floored: bool,
}

/// Conditions the belief on an observed, thinned flow.
///
/// The flow has predicted mean `flow_mean`; each transition is reported with
/// probability `reporting`. The conditional log-likelihood is Poisson with
/// mean `reporting * flow_mean`, or negative binomial with size `dispersion`.
/// The destination rate moves by `y - reporting * flow_mean` and is floored at
/// `rate_floor`.
pub fn pal_update(
    belief: &PoissonBelief,
    flow_mean: f64,
    y: f64,
    reporting: f64,
    dispersion: Option<f64>,
    dest: usize,
    rate_floor: f64,
) -> Result<UpdateOutcome> {
    if !(reporting > 0.0 && reporting <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "reporting".into(),
            reason: format!("{reporting} outside (0, 1]"),
        });
    }
    if let Some(th) = dispersion {
        if !(th > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dispersion".into(),
                reason: format!("{th} must be positive"),
            });
        }
    }
    if !(flow_mean >= 0.0 && flow_mean.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "flow_mean".into(),
            reason: format!("{flow_mean} must be finite and nonnegative"),
        });
    }
    if !(y >= 0.0 && y.fract() == 0.0) {
        return Err(Error::InvalidObservations(format!("{y} is not a count")));
    }
    if dest >= belief.rates.len() {
        return Err(Error::DimensionMismatch(format!("destination {dest} out of range")));
    }
    let reported = reporting * flow_mean;
    let cond_loglik = match dispersion {
        None => poisson_logpmf(y, reported),
        Some(th) => nbinom_logpmf(y, reported, th),
    };
    let posterior_flow_mean = y + (1.0 - reporting) * flow_mean;
    let mut rates = belief.rates.clone();
    let adjusted = rates[dest] + (y - reported);
    let floored = adjusted < rate_floor;
    rates[dest] = if floored { rate_floor } else { adjusted };
    Ok(UpdateOutcome {
        belief: PoissonBelief { rates },
        cond_loglik,
        posterior_flow_mean,
        floored,
    })
}

struct Interval<'a, P> {
    pal: &'a dyn PalStructure<P>,
    p: &'a P,
    flows: &'a [ObservedFlow],
    from: f64,
    dt: f64,
    nsub: usize,
    floor: f64,
}

struct IntervalOutcome {
    cond: f64,
    belief: PoissonBelief,
    floors: usize,
}

impl<P> Interval<'_, P> {
    fn run(&self, start: &PoissonBelief, y: &[f64], mut rng: Option<&mut PompRng>) -> Result<IntervalOutcome> {
        let m = self.pal.n_states();
        let mut kernel = vec![0.0; m * m];
        let mut imm = vec![0.0; m];
        let mut flow_mean = vec![0.0; self.flows.len()];
        let mut b = start.clone();
        for s in 0..self.nsub {
            let ts = self.from + s as f64 * self.dt;
            let noise = match rng.as_deref_mut() {
                Some(r) => self.pal.sample_noise(ts, self.dt, self.p, r),
                None => None,
            };
            self.pal
                .kernel(ts, self.dt, self.p, &b.rates, noise.as_deref(), &mut kernel);
            self.pal.immigration(ts, self.dt, self.p, &mut imm);
            for (mu, f) in flow_mean.iter_mut().zip(self.flows) {
                *mu += b.rates[f.source] * kernel[f.source * m + f.dest];
            }
            b = pal_predict(&b, &kernel, &imm)?;
        }
        let mut cond = 0.0;
        let mut floors = 0;
        for (c, (f, mu)) in self.flows.iter().zip(&flow_mean).enumerate() {
            let (count, log_jac) = self.pal.observation_to_count(y[c], c, self.p);
            let out = pal_update(&b, *mu, count, f.reporting, f.dispersion, f.dest, self.floor)?;
            cond += out.cond_loglik + log_jac;
            floors += out.floored as usize;
            b = out.belief;
        }
        Ok(IntervalOutcome { cond, belief: b, floors })
    }
}

/// Initial belief: the closed-form mean of `rinit` when the model has one,
/// otherwise the average of `settings.init_draws` draws.
pub fn initial_belief<M: PompModel>(
    model: &M,
    p: &M::Params,
    t0: f64,
    settings: &PalSettings,
) -> Result<PoissonBelief> {
    let pal = model.pal().ok_or(Error::PalUnavailable)?;
    let mean = match model.init_mean(p) {
        Some(m) => m,
        None => {
            let streams = StreamFamily::new(settings.seed, "pal-init");
            let draws: Vec<LatentState> = (0..settings.init_draws)
                .into_par_iter()
                .map(|i| model.rinit(p, t0, &mut streams.at(0, i as u32)))
                .collect::<Result<_>>()?;
            let mut acc = vec![0.0; model.n_compartments()];
            for x in &draws {
                for (a, c) in acc.iter_mut().zip(&x.compartments) {
                    *a += *c as f64;
                }
            }
            acc.iter().map(|a| a / settings.init_draws as f64).collect()
        }
    };
    Ok(PoissonBelief::new(pal.belief_from_mean(&mean)))
}

/// Runs the Poisson approximate likelihood filter.
pub fn pal_filter<M: PompModel>(
    model: &M,
    obs: &ObservationSeries,
    t0: f64,
    params: &ParameterSet,
    settings: &PalSettings,
) -> Result<LogLikResult> {
    let pal = model.pal().ok_or(Error::PalUnavailable)?;
    settings.validate()?;
    check_dims(model, obs)?;
    let p = model.resolve(params)?;
    let flows = pal.observed_flows(&p);
    if flows.len() != obs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed flows for {} data columns",
            flows.len(),
            obs.dim()
        )));
    }
    let noisy = pal.has_process_noise(&p);
    let streams = StreamFamily::new(settings.seed, "pal");
    let mut belief = initial_belief(model, &p, t0, settings)?;
    let mut cond = Vec::with_capacity(obs.len());
    let mut floor_events = 0;
    let mut t = t0;

    for (k, (&t_obs, y)) in obs.times.iter().zip(&obs.values).enumerate() {
        let (dt, nsub) = substep_schedule(t, t_obs, model.substeps());
        let interval = Interval {
            pal,
            p: &p,
            flows: &flows,
            from: t,
            dt,
            nsub,
            floor: settings.rate_floor,
        };
        if !noisy {
            let out = interval.run(&belief, y, None)?;
            cond.push(out.cond);
            floor_events += out.floors;
            belief = out.belief;
        } else {
            let draws: Vec<IntervalOutcome> = (0..settings.noise_draws)
                .map(|r| interval.run(&belief, y, Some(&mut streams.at(k as u32, r as u32))))
                .collect::<Result<_>>()?;
            let conds: Vec<f64> = draws.iter().map(|d| d.cond).collect();
            let c = log_mean_exp(&conds);
            let weights: Vec<f64> = if c == f64::NEG_INFINITY {
                vec![1.0 / draws.len() as f64; draws.len()]
            } else {
                let norm = c + (draws.len() as f64).ln();
                conds.iter().map(|v| (v - norm).exp()).collect()
            };
            let mut rates = vec![0.0; pal.n_states()];
            for (w, d) in weights.iter().zip(&draws) {
                for (r, b) in rates.iter_mut().zip(&d.belief.rates) {
                    *r += w * b;
                }
                floor_events += d.floors;
            }
            cond.push(c);
            belief = PoissonBelief::new(rates);
        }
        t = t_obs;
    }
    let mut res = LogLikResult::from_conditionals(cond);
    res.floor_events = floor_events;
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgdSettings {
    /// Initial gradient-step multiplier, per free parameter.
    pub step_sizes: BTreeMap<String, f64>,
    pub default_step: f64,
    pub shrink: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
    /// Half-width of the central finite difference, on the estimation scale.
    pub fd_step: f64,
    pub max_backtracks: usize,
}

impl Default for CgdSettings {
    fn default() -> Self {
        Self {
            step_sizes: BTreeMap::new(),
            default_step: 1e-3,
            shrink: 0.5,
            max_sweeps: 50,
            tolerance: 1e-4,
            fd_step: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgdSweep {
    pub sweep: usize,
    pub objective: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CgdTrace {
    pub free: Vec<String>,
    pub start_objective: f64,
    pub sweeps: Vec<CgdSweep>,
}

impl CgdTrace {
    pub fn final_objective(&self) -> f64 {
        self.sweeps.last().map_or(self.start_objective, |s| s.objective)
    }

    /// `sweep,loglik,<param columns>`; sweep 0 is the starting point.
    pub fn write_csv(&self, start: &ParameterSet, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sweep".to_string(), "loglik".into()];
        header.extend(self.free.iter().cloned());
        w.write_record(&header)?;
        let mut first = vec!["0".to_string(), self.start_objective.to_string()];
        for n in &self.free {
            first.push(start.get(n)?.to_string());
        }
        w.write_record(&first)?;
        for s in &self.sweeps {
            let mut rec = vec![s.sweep.to_string(), s.objective.to_string()];
            rec.extend(s.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coordinate-wise gradient ascent on the estimation scale.
///
/// Each coordinate takes a central finite-difference gradient step that is
/// halved until the objective does not decrease. The step multiplier adapts
/// to the number of halvings needed. Stops when a sweep gains less than
/// `tolerance` or after `max_sweeps`.
pub fn coordinate_ascent(
    objective: impl Fn(&ParameterSet) -> Result<f64>,
    start: &ParameterSet,
    free: &[String],
    settings: &CgdSettings,
) -> Result<(ParameterSet, CgdTrace)> {
    let f0 = objective(start)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteStart(f0));
    }
    let mut z = start.to_estimation(free)?;
    let mut steps: Vec<f64> = free
        .iter()
        .map(|n| *settings.step_sizes.get(n).unwrap_or(&settings.default_step))
        .collect();
    let mut best = start.clone();
    let mut f = f0;
    let mut trace = CgdTrace {
        free: free.to_vec(),
        start_objective: f0,
        sweeps: Vec::new(),
    };
    let eval = |z: &[f64]| -> Result<(ParameterSet, f64)> {
        let p = start.from_estimation(free, z)?;
        let v = objective(&p)?;
        Ok((p, if v.is_nan() { f64::NEG_INFINITY } else { v }))
    };

    for sweep in 1..=settings.max_sweeps.max(1) {
        let f_sweep_start = f;
        for i in 0..free.len() {
            let h = settings.fd_step;
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let (_, fp) = eval(&zp)?;
            let (_, fm) = eval(&zm)?;
            let g = (fp - fm) / (2.0 * h);
            if !g.is_finite() || g == 0.0 {
                continue;
            }
            let mut delta = steps[i] * g;
            let mut halvings = 0;
            loop {
                let mut zc = z.clone();
                zc[i] += delta;
                let (pc, fc) = eval(&zc)?;
                if fc >= f {
                    z = zc;
                    f = fc;
                    best = pc;
                    break;
                }
                halvings += 1;
                if halvings > settings.max_backtracks {
                    break;
                }
                delta *= settings.shrink;
            }
            if halvings > settings.max_backtracks {
                steps[i] *= settings.shrink.powi(settings.max_backtracks as i32);
            } else {
                steps[i] *= settings.shrink.powi(halvings as i32) / settings.shrink;
            }
        }
        trace.sweeps.push(CgdSweep {
            sweep,
            objective: f,
            values: free.iter().map(|n| best.get(n)).collect::<Result<_>>()?,
        });
        if f - f_sweep_start < settings.tolerance {
            break;
        }
    }
    Ok((best, trace))
}

/// Maximizes the PAL log-likelihood over `free` by coordinate gradient ascent.
pub fn cgd_maximize<M: PompModel>(
    model: &M,
    obs: &ObservationSeries,
    t0: f64,
    start: &ParameterSet,
    free: &[String],
    pal_settings: &PalSettings,
    settings: &CgdSettings,
) -> Result<(ParameterSet, CgdTrace)> {
    model.pal().ok_or(Error::PalUnavailable)?;
    coordinate_ascent(
        |p| Ok(pal_filter(model, obs, t0, p, pal_settings)?.total),
        start,
        free,
        settings,
    )
}
