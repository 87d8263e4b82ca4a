//! `rota3`: a three-stratum SIRS model with aging, seasonal transmission and
//! weekly reported incidence.
//!
//! Compartments are ordered `[S1, I1, R1, S2, I2, R2, S3, I3, R3]`; the three
//! flows count new infections per stratum since the last observation. Births
//! enter `S1` as Poisson arrivals with mean `birth_rate * pop` per week, and
//! deaths leave from the oldest stratum only.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DataScale, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{LatentState, ObservedFlow, PalStructure, PompModel};
use crate::params::{ParamEntry, ParameterSet};
use crate::rng::PompRng;
use crate::sampling::{euler_multinomial, gamma_white_noise, nbinom, poisson};
use crate::stats::{nbinom_logpmf, poisson_logpmf};

/// Weeks per year.
pub const WEEKS_PER_YEAR: f64 = 52.18;
pub const STRATA: usize = 3;
pub const N_COMPARTMENTS: usize = 3 * STRATA;
/// Index of the absorbing death sink in the PAL belief.
pub const DEATH_SINK: usize = N_COMPARTMENTS;

pub const fn s_idx(a: usize) -> usize {
    3 * a
}
pub const fn i_idx(a: usize) -> usize {
    3 * a + 1
}
pub const fn r_idx(a: usize) -> usize {
    3 * a + 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dispersion {
    Eq,
    Ov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RotaVariant {
    pub process: Dispersion,
    pub measurement: Dispersion,
}

impl RotaVariant {
    pub const EQ_EQ: Self = Self {
        process: Dispersion::Eq,
        measurement: Dispersion::Eq,
    };
    pub const EQ_OV: Self = Self {
        process: Dispersion::Eq,
        measurement: Dispersion::Ov,
    };
    pub const OV_OV: Self = Self {
        process: Dispersion::Ov,
        measurement: Dispersion::Ov,
    };
    pub const OV_EQ: Self = Self {
        process: Dispersion::Ov,
        measurement: Dispersion::Eq,
    };
}

impl fmt::Display for RotaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |d: Dispersion| match d {
            Dispersion::Eq => "Eq",
            Dispersion::Ov => "Ov",
        };
        write!(f, "{}{}", s(self.process), s(self.measurement))
    }
}

impl FromStr for RotaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EqEq" => Ok(Self::EQ_EQ),
            "EqOv" => Ok(Self::EQ_OV),
            "OvOv" => Ok(Self::OV_OV),
            "OvEq" => Ok(Self::OV_EQ),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected EqEq, EqOv, OvOv or OvEq)"
            ))),
        }
    }
}

impl Serialize for RotaVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RotaVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// The process starts at `t0` from these compartment counts.
    FixedAtStart { compartments: Vec<u64> },
    /// The process starts `years` before `t0` from `entry` and is simulated
    /// forward to `t0`.
    Warmup { years: f64, entry: Vec<u64> },
}

impl InitStrategy {
    pub fn validate(&self) -> Result<()> {
        let check = |v: &Vec<u64>| {
            if v.len() != N_COMPARTMENTS {
                return Err(Error::Config(format!(
                    "initial state needs {N_COMPARTMENTS} compartments, got {}",
                    v.len()
                )));
            }
            Ok(())
        };
        match self {
            InitStrategy::FixedAtStart { compartments } => check(compartments),
            InitStrategy::Warmup { years, entry } => {
                if !(*years > 0.0 && years.is_finite()) {
                    return Err(Error::Config(format!("warm-up years must be positive, got {years}")));
                }
                check(entry)
            }
        }
    }

    fn state(&self) -> &[u64] {
        match self {
            InitStrategy::FixedAtStart { compartments } => compartments,
            InitStrategy::Warmup { entry, .. } => entry,
        }
    }
}

/// Parameters on the natural scale, per week.
#[derive(Debug, Clone, PartialEq)]
pub struct RotaParams {
    pub beta: [f64; STRATA],
    pub amplitude: f64,
    pub phase: f64,
    pub gamma: f64,
    pub omega: f64,
    pub aging: [f64; 2],
    pub birth_rate: f64,
    pub death_rate: f64,
    pub pop: f64,
    pub rho: [f64; STRATA],
    pub theta: [f64; STRATA],
    pub sigma_p: f64,
}

impl RotaParams {
    /// Per-capita rate of leaving stratum `a` by aging or death.
    #[inline]
    pub fn exit_rate(&self, a: usize) -> f64 {
        if a + 1 < STRATA {
            self.aging[a]
        } else {
            self.death_rate
        }
    }

    #[inline]
    pub fn seasonality(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * t / WEEKS_PER_YEAR - self.phase).cos()
    }
}

/// Names of every rota3 parameter, in canonical order.
pub const PARAM_NAMES: [&str; 19] = [
    "beta_1",
    "beta_2",
    "beta_3",
    "amplitude",
    "phase",
    "gamma",
    "omega",
    "aging_1",
    "aging_2",
    "birth_rate",
    "death_rate",
    "pop",
    "rho_1",
    "rho_2",
    "rho_3",
    "theta_1",
    "theta_2",
    "theta_3",
    "sigma_p",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RotaModel {
    pub variant: RotaVariant,
    pub init: InitStrategy,
    pub scale: DataScale,
    pub substeps: usize,
}

pub fn build_rota_model(variant: RotaVariant, init: InitStrategy, scale: DataScale) -> RotaModel {
    RotaModel {
        variant,
        init,
        scale,
        substeps: 7,
    }
}

fn nonneg(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("{v} must be a finite nonnegative rate"),
        })
    }
}

impl RotaModel {
    /// Parameters that enter the likelihood of this variant.
    pub fn active_parameters(&self) -> Vec<&'static str> {
        PARAM_NAMES
            .iter()
            .copied()
            .filter(|n| {
                if n.starts_with("theta") {
                    self.variant.measurement == Dispersion::Ov
                } else if *n == "sigma_p" {
                    self.variant.process == Dispersion::Ov
                } else {
                    true
                }
            })
            .collect()
    }

    fn process_noise(&self, p: &RotaParams) -> bool {
        self.variant.process == Dispersion::Ov && p.sigma_p > 0.0
    }

    fn count_logpmf(&self, c: f64, flow: f64, a: usize, p: &RotaParams) -> f64 {
        let mean = p.rho[a] * flow;
        match self.variant.measurement {
            Dispersion::Eq => poisson_logpmf(c, mean),
            Dispersion::Ov => nbinom_logpmf(c, mean, p.theta[a]),
        }
    }

    /// Reported count and log-Jacobian for an observed value in column `a`.
    fn to_count(&self, y: f64, a: usize, p: &RotaParams) -> (f64, f64) {
        match self.scale {
            DataScale::RawCounts => (y, 0.0),
            DataScale::RescaledCounts => ((y * p.rho[a]).round(), p.rho[a].ln()),
        }
    }

    fn from_count(&self, c: u64, a: usize, p: &RotaParams) -> f64 {
        match self.scale {
            DataScale::RawCounts => c as f64,
            DataScale::RescaledCounts => c as f64 / p.rho[a],
        }
    }
}

impl PompModel for RotaModel {
    type Params = RotaParams;

    fn resolve(&self, ps: &ParameterSet) -> Result<RotaParams> {
        let g = |n: &str| ps.get(n);
        let rate = |n: &str| nonneg(n, ps.get(n)?);
        let amplitude = g("amplitude")?;
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::InvalidParameter {
                name: "amplitude".into(),
                reason: format!("{amplitude} outside [0, 1)"),
            });
        }
        let mut rho = [0.0; STRATA];
        let mut theta = [0.0; STRATA];
        let mut beta = [0.0; STRATA];
        for a in 0..STRATA {
            beta[a] = rate(&format!("beta_{}", a + 1))?;
            let rn = format!("rho_{}", a + 1);
            rho[a] = g(&rn)?;
            if !(rho[a] > 0.0 && rho[a] <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: rn,
                    reason: format!("{} outside (0, 1]", rho[a]),
                });
            }
            let tn = format!("theta_{}", a + 1);
            theta[a] = ps.get_or(&tn, f64::INFINITY);
            if !(theta[a] > 0.0) {
                return Err(Error::InvalidParameter {
                    name: tn,
                    reason: format!("{} must be positive", theta[a]),
                });
            }
        }
        let p = RotaParams {
            beta,
            amplitude,
            phase: g("phase")?,
            gamma: rate("gamma")?,
            omega: rate("omega")?,
            aging: [rate("aging_1")?, rate("aging_2")?],
            birth_rate: rate("birth_rate")?,
            death_rate: rate("death_rate")?,
            pop: rate("pop")?,
            rho,
            theta,
            sigma_p: nonneg("sigma_p", ps.get_or("sigma_p", 0.0))?,
        };
        if !p.phase.is_finite() {
            return Err(Error::InvalidParameter {
                name: "phase".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(p)
    }

    fn n_compartments(&self) -> usize {
        N_COMPARTMENTS
    }
    fn n_flows(&self) -> usize {
        STRATA
    }
    fn n_observed(&self) -> usize {
        STRATA
    }
    fn substeps(&self) -> usize {
        self.substeps
    }

    fn rinit(&self, p: &RotaParams, t0: f64, rng: &mut PompRng) -> Result<LatentState> {
        match &self.init {
            InitStrategy::FixedAtStart { compartments } => Ok(LatentState::new(compartments.clone(), STRATA)),
            InitStrategy::Warmup { years, entry } => {
                let mut x = LatentState::new(entry.clone(), STRATA);
                run_warmup(self, &mut x, p, t0, *years, rng)?;
                Ok(x)
            }
        }
    }

    fn rstep(&self, x: &mut LatentState, t: f64, dt: f64, p: &RotaParams, rng: &mut PompRng) -> Result<()> {
        let c = &mut x.compartments;
        let alive: u64 = c.iter().sum();
        let infected: u64 = (0..STRATA).map(|a| c[i_idx(a)]).sum();
        let frac = if alive > 0 {
            infected as f64 / alive as f64
        } else {
            0.0
        };
        let season = p.seasonality(t);
        let mut noise = [1.0; STRATA];
        if self.process_noise(p) {
            for n in noise.iter_mut() {
                *n = gamma_white_noise(rng, p.sigma_p, dt);
            }
        }
        let mut moves = [[0u64; 2]; N_COMPARTMENTS];
        for a in 0..STRATA {
            let lambda = p.beta[a] * season * frac * noise[a];
            if !lambda.is_finite() {
                return Err(Error::NonFiniteRate {
                    time: t,
                    detail: format!("force of infection in stratum {} is {lambda}", a + 1),
                });
            }
            let out = p.exit_rate(a);
            euler_multinomial(rng, c[s_idx(a)], &[lambda, out], dt, &mut moves[s_idx(a)]);
            euler_multinomial(rng, c[i_idx(a)], &[p.gamma, out], dt, &mut moves[i_idx(a)]);
            euler_multinomial(rng, c[r_idx(a)], &[p.omega, out], dt, &mut moves[r_idx(a)]);
        }
        let births = poisson(rng, p.birth_rate * p.pop * dt);
        for a in 0..STRATA {
            let (s, i, r) = (s_idx(a), i_idx(a), r_idx(a));
            let [inf, s_out] = moves[s];
            let [rec, i_out] = moves[i];
            let [wane, r_out] = moves[r];
            c[s] = c[s] - inf - s_out + wane;
            c[i] = c[i] - rec - i_out + inf;
            c[r] = c[r] - wane - r_out + rec;
            if a + 1 < STRATA {
                c[s_idx(a + 1)] += s_out;
                c[i_idx(a + 1)] += i_out;
                c[r_idx(a + 1)] += r_out;
            }
            x.flows[a] += inf;
        }
        c[s_idx(0)] += births;
        Ok(())
    }

    fn rmeasure(&self, x: &LatentState, _t: f64, p: &RotaParams, rng: &mut PompRng) -> Vec<f64> {
        (0..STRATA)
            .map(|a| {
                let mean = p.rho[a] * x.flows[a] as f64;
                let c = match self.variant.measurement {
                    Dispersion::Eq => poisson(rng, mean),
                    Dispersion::Ov => nbinom(rng, mean, p.theta[a]),
                };
                self.from_count(c, a, p)
            })
            .collect()
    }

    fn dmeasure(&self, y: &[f64], x: &LatentState, _t: f64, p: &RotaParams) -> f64 {
        let mut ll = 0.0;
        for a in 0..STRATA {
            let (c, jac) = self.to_count(y[a], a, p);
            ll += self.count_logpmf(c, x.flows[a] as f64, a, p) + jac;
        }
        ll
    }

    fn data_scale(&self) -> DataScale {
        self.scale
    }

    fn reporting_rates(&self, p: &RotaParams) -> Option<Vec<f64>> {
        Some(p.rho.to_vec())
    }

    fn init_mean(&self, _p: &RotaParams) -> Option<Vec<f64>> {
        match &self.init {
            InitStrategy::FixedAtStart { compartments } => Some(compartments.iter().map(|c| *c as f64).collect()),
            InitStrategy::Warmup { .. } => None,
        }
    }

    fn pal(&self) -> Option<&dyn PalStructure<RotaParams>> {
        Some(self)
    }
}

/// Per-capita transition probabilities out of every compartment over one
/// sub-step, as `(destination, probability)` pairs.
fn exit_probabilities(
    t: f64,
    dt: f64,
    p: &RotaParams,
    infected_fraction: f64,
    noise: [f64; STRATA],
) -> [[(usize, f64); 2]; N_COMPARTMENTS] {
    let season = p.seasonality(t);
    let split = |r1: f64, r2: f64| {
        let tot = r1 + r2;
        if tot <= 0.0 {
            return (0.0, 0.0);
        }
        let leave = -(-tot * dt).exp_m1();
        (leave * r1 / tot, leave * r2 / tot)
    };
    let mut out = [[(0, 0.0); 2]; N_COMPARTMENTS];
    for a in 0..STRATA {
        let older = |idx: usize| if a + 1 < STRATA { idx + 3 } else { DEATH_SINK };
        let lambda = p.beta[a] * season * infected_fraction * noise[a];
        let ex = p.exit_rate(a);
        let (inf, s_out) = split(lambda, ex);
        let (rec, i_out) = split(p.gamma, ex);
        let (wane, r_out) = split(p.omega, ex);
        out[s_idx(a)] = [(i_idx(a), inf), (older(s_idx(a)), s_out)];
        out[i_idx(a)] = [(r_idx(a), rec), (older(i_idx(a)), i_out)];
        out[r_idx(a)] = [(s_idx(a), wane), (older(r_idx(a)), r_out)];
    }
    out
}

fn infected_fraction(mean: &[f64]) -> f64 {
    let alive: f64 = mean[..N_COMPARTMENTS].iter().sum();
    let infected: f64 = (0..STRATA).map(|a| mean[i_idx(a)]).sum();
    if alive > 0.0 {
        infected / alive
    } else {
        0.0
    }
}

impl PalStructure<RotaParams> for RotaModel {
    fn n_states(&self) -> usize {
        N_COMPARTMENTS + 1
    }

    fn kernel(&self, t: f64, dt: f64, p: &RotaParams, belief: &[f64], noise: Option<&[f64]>, out: &mut [f64]) {
        let m = N_COMPARTMENTS + 1;
        let mut xi = [1.0; STRATA];
        if let Some(n) = noise {
            xi.copy_from_slice(&n[..STRATA]);
        }
        let probs = exit_probabilities(t, dt, p, infected_fraction(belief), xi);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (from, row) in probs.iter().enumerate() {
            let mut stay = 1.0;
            for &(to, pr) in row {
                out[from * m + to] += pr;
                stay -= pr;
            }
            out[from * m + from] += stay;
        }
        out[DEATH_SINK * m + DEATH_SINK] = 1.0;
    }

    fn immigration(&self, _t: f64, dt: f64, p: &RotaParams, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[s_idx(0)] = p.birth_rate * p.pop * dt;
    }

    fn observed_flows(&self, p: &RotaParams) -> Vec<ObservedFlow> {
        (0..STRATA)
            .map(|a| ObservedFlow {
                source: s_idx(a),
                dest: i_idx(a),
                reporting: p.rho[a],
                dispersion: match self.variant.measurement {
                    Dispersion::Eq => None,
                    Dispersion::Ov => Some(p.theta[a]),
                },
            })
            .collect()
    }

    fn has_process_noise(&self, p: &RotaParams) -> bool {
        self.process_noise(p)
    }

    fn sample_noise(&self, _t: f64, dt: f64, p: &RotaParams, rng: &mut PompRng) -> Option<Vec<f64>> {
        Some((0..STRATA).map(|_| gamma_white_noise(rng, p.sigma_p, dt)).collect())
    }

    fn observation_to_count(&self, y: f64, column: usize, p: &RotaParams) -> (f64, f64) {
        self.to_count(y, column, p)
    }
}

/// One deterministic sub-step of the expected dynamics from a real-valued
/// compartment vector. Returns the new compartments and the expected new
/// infections per stratum.
pub fn mean_field_step(state: &[f64], t: f64, dt: f64, p: &RotaParams) -> (Vec<f64>, [f64; STRATA]) {
    let frac = infected_fraction(state);
    let season = p.seasonality(t);
    let mut next = state[..N_COMPARTMENTS].to_vec();
    let mut infections = [0.0; STRATA];
    for a in 0..STRATA {
        let ex = p.exit_rate(a);
        let lambda = p.beta[a] * season * frac;
        let flows_out = |n: f64, r: f64| {
            let tot = r + ex;
            if tot <= 0.0 {
                return (0.0, 0.0);
            }
            let leaving = n * -(-tot * dt).exp_m1();
            (leaving * r / tot, leaving * ex / tot)
        };
        let (inf, s_out) = flows_out(state[s_idx(a)], lambda);
        let (rec, i_out) = flows_out(state[i_idx(a)], p.gamma);
        let (wane, r_out) = flows_out(state[r_idx(a)], p.omega);
        next[s_idx(a)] += wane - inf - s_out;
        next[i_idx(a)] += inf - rec - i_out;
        next[r_idx(a)] += rec - wane - r_out;
        if a + 1 < STRATA {
            next[s_idx(a + 1)] += s_out;
            next[i_idx(a + 1)] += i_out;
            next[r_idx(a + 1)] += r_out;
        }
        infections[a] = inf;
    }
    next[s_idx(0)] += p.birth_rate * p.pop * dt;
    (next, infections)
}

fn run_warmup(
    model: &RotaModel,
    x: &mut LatentState,
    p: &RotaParams,
    t0: f64,
    years: f64,
    rng: &mut PompRng,
) -> Result<()> {
    let dt = 1.0 / model.substeps as f64;
    let n = ((years * WEEKS_PER_YEAR / dt).round() as usize).max(1);
    let start = t0 - n as f64 * dt;
    for k in 0..n {
        model.rstep(x, start + k as f64 * dt, dt, p, rng)?;
    }
    x.reset_flows();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupDiagnostics {
    /// No infected individuals remain at the end of the warm-up.
    pub extinct: bool,
    /// Mean of each compartment over the last simulated year, sampled weekly.
    pub final_year_mean: Vec<f64>,
}

/// Runs the process from the configured entry state for `years` and returns
/// the terminal state. Extinction is reported rather than treated as an error.
pub fn warmup_init(
    model: &RotaModel,
    params: &ParameterSet,
    t0: f64,
    years: f64,
    seed: u64,
) -> Result<(LatentState, WarmupDiagnostics)> {
    if !(years > 0.0) {
        return Err(Error::Config(format!("warm-up years must be positive, got {years}")));
    }
    let p = model.resolve(params)?;
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut x = LatentState::new(model.init.state().to_vec(), STRATA);
    let dt = 1.0 / model.substeps as f64;
    let n = ((years * WEEKS_PER_YEAR / dt).round() as usize).max(1);
    let start = t0 - n as f64 * dt;
    let last_year = ((WEEKS_PER_YEAR / dt).round() as usize).min(n);
    let mut acc = vec![0.0; N_COMPARTMENTS];
    let mut samples = 0usize;
    for k in 0..n {
        model.rstep(&mut x, start + k as f64 * dt, dt, &p, &mut rng)?;
        let remaining = n - k - 1;
        if remaining < last_year && remaining % model.substeps == 0 {
            for (a, c) in acc.iter_mut().zip(&x.compartments) {
                *a += *c as f64;
            }
            samples += 1;
        }
    }
    x.reset_flows();
    let extinct = (0..STRATA).all(|a| x.compartments[i_idx(a)] == 0);
    let final_year_mean = acc.iter().map(|a| a / samples.max(1) as f64).collect();
    Ok((x, WarmupDiagnostics { extinct, final_year_mean }))
}

/// A complete, file-backed description of a rota3 experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotaConfig {
    pub variant: RotaVariant,
    pub init: InitStrategy,
    #[serde(default = "default_scale")]
    pub scale: DataScale,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub t0: f64,
    pub n_obs: usize,
    #[serde(default = "default_interval")]
    pub interval: f64,
    pub params: Vec<ParamEntry>,
}

fn default_scale() -> DataScale {
    DataScale::RawCounts
}
fn default_substeps() -> usize {
    7
}
fn default_interval() -> f64 {
    1.0
}

pub const DEFAULT_CONFIG: &str = include_str!("../config/rota3.json");

impl RotaConfig {
    pub fn default_config() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("bundled rota3 configuration parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        let ps = self.parameter_set()?;
        let p = self.model().resolve(&ps)?;
        if let InitStrategy::FixedAtStart { compartments } = &self.init {
            let total: u64 = compartments.iter().sum();
            if total as f64 != p.pop.round() {
                return Err(Error::Config(format!(
                    "initial compartments sum to {total} but pop is {}",
                    p.pop
                )));
            }
        }
        self.grid()?;
        Ok(())
    }

    pub fn parameter_set(&self) -> Result<ParameterSet> {
        ParameterSet::from_entries(&self.params)
    }

    pub fn model(&self) -> RotaModel {
        RotaModel {
            variant: self.variant,
            init: self.init.clone(),
            scale: self.scale,
            substeps: self.substeps,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::regular(self.t0, self.n_obs, self.interval)
    }
}
