//! Iterated filtering (IF2) maximization of the particle filter likelihood.
//!
//! Every particle carries its own parameter vector on the estimation scale.
//! Parameters take a Gaussian random walk whose standard deviation shrinks
//! geometrically with the iteration number, and are resampled together with
//! the latent states, so the swarm drifts towards high-likelihood regions.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSeries;
use crate::error::{Error, Result};
use crate::model::{check_dims, PompModel};
use crate::params::ParameterSet;
use crate::pf::{
    gather, init_particles, ParamSource, measure, normalise, pfilter, propagate, replicated_pfilter,
    systematic_resample, PfSettings, RESAMPLE_SLOT,
};
use crate::rng::{derive_seed, StreamFamily, INIT_INDEX};
use crate::stats::log_mean_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// Random-walk standard deviation per parameter, on the estimation scale.
    /// Parameters absent here, or with sd 0, are held fixed.
    pub rw_sd: BTreeMap<String, f64>,
    /// Geometric cooling factor per iteration.
    pub cooling: f64,
    /// Parameters that only affect the initial state; perturbed at time 0 only.
    pub ivp_names: Vec<String>,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            rw_sd: BTreeMap::new(),
            cooling: 0.97,
            ivp_names: Vec::new(),
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self, params: &ParameterSet) -> Result<()> {
        if !(self.cooling > 0.0 && self.cooling <= 1.0) {
            return Err(Error::InvalidSettings(format!(
                "cooling factor {} outside (0, 1]",
                self.cooling
            )));
        }
        for (name, sd) in &self.rw_sd {
            params.index_of(name)?;
            if !(*sd >= 0.0 && sd.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: name.clone(),
                    reason: format!("random-walk sd {sd} must be finite and nonnegative"),
                });
            }
        }
        for name in &self.ivp_names {
            params.index_of(name)?;
        }
        Ok(())
    }

    /// Parameters actually estimated (positive random-walk sd).
    pub fn free(&self) -> Vec<String> {
        self.rw_sd
            .iter()
            .filter(|(_, sd)| **sd > 0.0)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MifIteration {
    pub iteration: usize,
    pub cooling: f64,
    /// Particle filter log-likelihood at the swarm mean.
    pub loglik: f64,
    /// Log-likelihood reported by the perturbed filter itself.
    pub perturbed_loglik: f64,
    /// Swarm mean of the free parameters, natural scale.
    pub values: Vec<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MifTrace {
    pub free: Vec<String>,
    pub iterations: Vec<MifIteration>,
}

impl MifTrace {
    /// `iteration,cooling,loglik,<param columns>`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string(), "cooling".into(), "loglik".into()];
        header.extend(self.free.iter().cloned());
        w.write_record(&header)?;
        for it in &self.iterations {
            let mut rec = vec![it.iteration.to_string(), it.cooling.to_string(), it.loglik.to_string()];
            rec.extend(it.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MifResult {
    pub params: ParameterSet,
    pub trace: MifTrace,
    pub start_loglik: f64,
    pub start_se: f64,
    /// Replicated particle filter log-likelihood at the returned parameters.
    pub final_loglik: f64,
    pub final_se: f64,
    /// Whether `final_loglik >= start_loglik - 3 * combined SE`.
    pub improvement_verified: bool,
}

fn perturb(theta: &mut [f64], sds: &[f64], mask: &[bool], scale: f64, rng: &mut impl Rng) {
    for ((z, sd), on) in theta.iter_mut().zip(sds).zip(mask) {
        if *on && *sd > 0.0 {
            let e: f64 = rng.sample(StandardNormal);
            *z += sd * scale * e;
        }
    }
}

/// IF2 search from `start` for `iterations` iterations, with `settings.particles`
/// particles per filter. The final point is re-evaluated, as is `start`, with
/// `settings.replicates` clean particle filter replicates.
pub fn mif2<M: PompModel>(
    model: &M,
    obs: &ObservationSeries,
    t0: f64,
    start: &ParameterSet,
    spec: &PerturbationSpec,
    iterations: usize,
    settings: &PfSettings,
) -> Result<MifResult> {
    settings.validate()?;
    check_dims(model, obs)?;
    spec.validate(start)?;
    if iterations == 0 {
        return Err(Error::InvalidSettings("iterations must be at least 1".into()));
    }
    let free = spec.free();
    let sds: Vec<f64> = free.iter().map(|n| spec.rw_sd[n]).collect();
    let is_ivp: Vec<bool> = free.iter().map(|n| spec.ivp_names.contains(n)).collect();
    let all: Vec<bool> = vec![true; free.len()];
    let regular: Vec<bool> = is_ivp.iter().map(|v| !v).collect();
    let j = settings.particles;
    let z0 = start.to_estimation(&free)?;
    let mut swarm: Vec<Vec<f64>> = vec![z0; j];
    let mut trace = MifTrace {
        free: free.clone(),
        iterations: Vec::new(),
    };
    let mut center = start.clone();

    for m in 1..=iterations {
        let cool = spec.cooling.powi(m as i32);
        let streams = StreamFamily::new(derive_seed(settings.seed, "mif", m as u64), "pf");
        let rw = StreamFamily::new(derive_seed(settings.seed, "mif-rw", m as u64), "rw");

        swarm.par_iter_mut().enumerate().for_each(|(i, z)| {
            perturb(z, &sds, &all, cool, &mut rw.at(INIT_INDEX, i as u32));
        });
        let mut pvec = resolve_swarm(model, start, &free, &swarm)?;
        let mut states = {
            let get = ParamSource::PerParticle(&pvec);
            init_particles(model, get, j, t0, &streams)?
        };
        let mut cond = Vec::with_capacity(obs.len());
        let mut failures = 0;
        let mut t = t0;
        for k in 0..obs.len() {
            if k > 0 && regular.iter().any(|r| *r) {
                swarm.par_iter_mut().enumerate().for_each(|(i, z)| {
                    perturb(z, &sds, &regular, cool, &mut rw.at(k as u32, i as u32));
                });
                pvec = resolve_swarm(model, start, &free, &swarm)?;
            }
            let t_obs = obs.times[k];
            let get = ParamSource::PerParticle(&pvec);
            propagate(model, &mut states, get, t, t_obs, k, &streams)?;
            t = t_obs;
            let mut logw = measure(model, &obs.values[k], &mut states, get, t_obs);
            let c = log_mean_exp(&logw);
            cond.push(c);
            if c == f64::NEG_INFINITY || c.is_nan() {
                failures += 1;
                continue;
            }
            normalise(&mut logw);
            let w: Vec<f64> = logw.iter().map(|l| l.exp()).collect();
            let u: f64 = streams.at(k as u32, RESAMPLE_SLOT).random();
            let idx = systematic_resample(&w, u)?;
            states = gather(&states, &idx);
            swarm = gather(&swarm, &idx);
            pvec = gather(&pvec, &idx);
        }
        if failures == obs.len() {
            return Err(Error::MifCollapse { iteration: m, trace });
        }

        let mean: Vec<f64> = (0..free.len())
            .map(|c| swarm.iter().map(|z| z[c]).sum::<f64>() / j as f64)
            .collect();
        center = start.from_estimation(&free, &mean)?;
        let eval = PfSettings {
            seed: derive_seed(settings.seed, "mif-eval", m as u64),
            replicates: 1,
            ..settings.clone()
        };
        let clean = pfilter(model, obs, t0, &center, &eval)?;
        let perturbed = if failures > 0 {
            f64::NEG_INFINITY
        } else {
            cond.iter().sum()
        };
        trace.iterations.push(MifIteration {
            iteration: m,
            cooling: cool,
            loglik: clean.total,
            perturbed_loglik: perturbed,
            values: free.iter().map(|n| center.get(n)).collect::<Result<_>>()?,
            failures,
        });
    }

    let final_settings = PfSettings {
        seed: derive_seed(settings.seed, "mif-final", 0),
        ..settings.clone()
    };
    let at_start = replicated_pfilter(model, obs, t0, start, &final_settings)?;
    let at_end = replicated_pfilter(model, obs, t0, &center, &final_settings)?;
    let combined_se = (nan_zero(at_start.se).powi(2) + nan_zero(at_end.se).powi(2)).sqrt();
    Ok(MifResult {
        params: center,
        trace,
        start_loglik: at_start.combined.total,
        start_se: at_start.se,
        final_loglik: at_end.combined.total,
        final_se: at_end.se,
        improvement_verified: at_end.combined.total >= at_start.combined.total - 3.0 * combined_se,
    })
}

fn nan_zero(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

fn resolve_swarm<M: PompModel>(
    model: &M,
    base: &ParameterSet,
    free: &[String],
    swarm: &[Vec<f64>],
) -> Result<Vec<M::Params>> {
    if free.is_empty() {
        let p = model.resolve(base)?;
        return Ok(vec![p; swarm.len()]);
    }
    swarm
        .par_iter()
        .map(|z| model.resolve(&base.from_estimation(free, z)?))
        .collect()
}

/// Independent IF2 searches from several starting points.
pub fn mif2_multi<M: PompModel>(
    model: &M,
    obs: &ObservationSeries,
    t0: f64,
    starts: &[ParameterSet],
    spec: &PerturbationSpec,
    iterations: usize,
    settings: &PfSettings,
) -> Vec<Result<MifResult>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let st = PfSettings {
                seed: derive_seed(settings.seed, "start", i as u64),
                ..settings.clone()
            };
            mif2(model, obs, t0, s, spec, iterations, &st)
        })
        .collect()
}
