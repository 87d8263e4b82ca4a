//! Small models with known likelihoods, used as oracles and CLI test vehicles.

use rand::Rng;

use crate::error::Result;
use crate::model::{LatentState, ObservedFlow, PalStructure, PompModel};
use crate::params::{ParameterSet, Transform};
use crate::rng::PompRng;
use crate::sampling::{binomial, poisson};
use crate::stats::{binomial_logpmf, poisson_logpmf};

/// Two-state hidden Markov chain with binary emissions.
///
/// Parameters: `p01`, `p10` (switching probabilities), `e0`, `e1`
/// (probability of emitting 1 in each state), `pi1` (initial probability of
/// state 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoStateHmm;

#[derive(Debug, Clone, Copy)]
pub struct HmmParams {
    pub p01: f64,
    pub p10: f64,
    pub e0: f64,
    pub e1: f64,
    pub pi1: f64,
}

impl TwoStateHmm {
    pub fn params(p01: f64, p10: f64, e0: f64, e1: f64, pi1: f64) -> ParameterSet {
        ParameterSet::new([
            ("p01", p01, Transform::Logit),
            ("p10", p10, Transform::Logit),
            ("e0", e0, Transform::Logit),
            ("e1", e1, Transform::Logit),
            ("pi1", pi1, Transform::Logit),
        ])
        .expect("valid HMM parameters")
    }
}

impl PompModel for TwoStateHmm {
    type Params = HmmParams;

    fn resolve(&self, p: &ParameterSet) -> Result<HmmParams> {
        Ok(HmmParams {
            p01: p.get("p01")?,
            p10: p.get("p10")?,
            e0: p.get("e0")?,
            e1: p.get("e1")?,
            pi1: p.get("pi1")?,
        })
    }

    fn n_compartments(&self) -> usize {
        1
    }
    fn n_flows(&self) -> usize {
        0
    }
    fn n_observed(&self) -> usize {
        1
    }

    fn rinit(&self, p: &HmmParams, _t0: f64, rng: &mut PompRng) -> Result<LatentState> {
        let s = rng.random_bool(p.pi1) as u64;
        Ok(LatentState::new(vec![s], 0))
    }

    fn rstep(&self, x: &mut LatentState, _t: f64, _dt: f64, p: &HmmParams, rng: &mut PompRng) -> Result<()> {
        let switch = if x.compartments[0] == 0 { p.p01 } else { p.p10 };
        if rng.random_bool(switch) {
            x.compartments[0] = 1 - x.compartments[0];
        }
        Ok(())
    }

    fn rmeasure(&self, x: &LatentState, _t: f64, p: &HmmParams, rng: &mut PompRng) -> Vec<f64> {
        let e = if x.compartments[0] == 0 { p.e0 } else { p.e1 };
        vec![rng.random_bool(e) as u64 as f64]
    }

    fn dmeasure(&self, y: &[f64], x: &LatentState, _t: f64, p: &HmmParams) -> f64 {
        let e = if x.compartments[0] == 0 { p.e0 } else { p.e1 };
        match y[0] {
            v if v == 1.0 => e.ln(),
            v if v == 0.0 => (1.0 - e).ln(),
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Immigration-death process `X` with deaths collected in a sink `D`;
/// each death is reported with probability `rho`.
///
/// Parameters: `lambda0` (mean of the Poisson initial count), `alpha`
/// (immigration per unit time), `survival` (per unit time), `rho`.
/// Starting from a Poisson count, deaths over an interval are Poisson and
/// independent of the survivors, so the Poisson approximate likelihood is
/// exact for this model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ImmigrationDeath;

#[derive(Debug, Clone, Copy)]
pub struct ImmigrationDeathParams {
    pub lambda0: f64,
    pub alpha: f64,
    pub survival: f64,
    pub rho: f64,
}

impl ImmigrationDeath {
    pub fn params(lambda0: f64, alpha: f64, survival: f64, rho: f64) -> ParameterSet {
        ParameterSet::new([
            ("lambda0", lambda0, Transform::Log),
            ("alpha", alpha, Transform::Log),
            ("survival", survival, Transform::Logit),
            ("rho", rho, Transform::Logit),
        ])
        .expect("valid immigration-death parameters")
    }
}

impl PompModel for ImmigrationDeath {
    type Params = ImmigrationDeathParams;

    fn resolve(&self, p: &ParameterSet) -> Result<Self::Params> {
        Ok(ImmigrationDeathParams {
            lambda0: p.get("lambda0")?,
            alpha: p.get("alpha")?,
            survival: p.get("survival")?,
            rho: p.get("rho")?,
        })
    }

    fn n_compartments(&self) -> usize {
        2
    }
    fn n_flows(&self) -> usize {
        1
    }
    fn n_observed(&self) -> usize {
        1
    }

    fn rinit(&self, p: &Self::Params, _t0: f64, rng: &mut PompRng) -> Result<LatentState> {
        Ok(LatentState::new(vec![poisson(rng, p.lambda0), 0], 1))
    }

    fn rstep(&self, x: &mut LatentState, _t: f64, dt: f64, p: &Self::Params, rng: &mut PompRng) -> Result<()> {
        let deaths = binomial(rng, x.compartments[0], 1.0 - p.survival.powf(dt));
        let arrivals = poisson(rng, p.alpha * dt);
        x.compartments[0] = x.compartments[0] - deaths + arrivals;
        x.compartments[1] += deaths;
        x.flows[0] += deaths;
        Ok(())
    }

    fn rmeasure(&self, x: &LatentState, _t: f64, p: &Self::Params, rng: &mut PompRng) -> Vec<f64> {
        vec![binomial(rng, x.flows[0], p.rho) as f64]
    }

    fn dmeasure(&self, y: &[f64], x: &LatentState, _t: f64, p: &Self::Params) -> f64 {
        binomial_logpmf(y[0], x.flows[0] as f64, p.rho)
    }

    fn init_mean(&self, p: &Self::Params) -> Option<Vec<f64>> {
        Some(vec![p.lambda0, 0.0])
    }

    fn pal(&self) -> Option<&dyn PalStructure<Self::Params>> {
        Some(self)
    }
}

impl PalStructure<ImmigrationDeathParams> for ImmigrationDeath {
    fn n_states(&self) -> usize {
        2
    }

    fn kernel(&self, _t: f64, dt: f64, p: &ImmigrationDeathParams, _b: &[f64], _n: Option<&[f64]>, out: &mut [f64]) {
        let s = p.survival.powf(dt);
        out.copy_from_slice(&[s, 1.0 - s, 0.0, 1.0]);
    }

    fn immigration(&self, _t: f64, dt: f64, p: &ImmigrationDeathParams, out: &mut [f64]) {
        out.copy_from_slice(&[p.alpha * dt, 0.0]);
    }

    fn observed_flows(&self, p: &ImmigrationDeathParams) -> Vec<ObservedFlow> {
        vec![ObservedFlow {
            source: 0,
            dest: 1,
            reporting: p.rho,
            dispersion: None,
        }]
    }
}

/// A process without randomness: a reservoir of `n` individuals sends
/// exactly `n * q` of them to a sink per interval and is topped up again.
/// The flow is reported as Poisson with mean `rho * flow`.
///
/// Choose `n * q` integral so the simulator and the kernel agree exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicToy;

#[derive(Debug, Clone, Copy)]
pub struct DeterministicToyParams {
    pub n: f64,
    pub q: f64,
    pub rho: f64,
}

impl DeterministicToy {
    pub fn params(n: f64, q: f64, rho: f64) -> ParameterSet {
        ParameterSet::new([
            ("n", n, Transform::Log),
            ("q", q, Transform::Logit),
            ("rho", rho, Transform::Identity),
        ])
        .expect("valid toy parameters")
    }
}

impl PompModel for DeterministicToy {
    type Params = DeterministicToyParams;

    fn resolve(&self, p: &ParameterSet) -> Result<Self::Params> {
        let rho = p.get("rho")?;
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(crate::Error::InvalidParameter {
                name: "rho".into(),
                reason: format!("{rho} outside (0, 1]"),
            });
        }
        Ok(DeterministicToyParams {
            n: p.get("n")?.round(),
            q: p.get("q")?,
            rho,
        })
    }

    fn n_compartments(&self) -> usize {
        2
    }
    fn n_flows(&self) -> usize {
        1
    }
    fn n_observed(&self) -> usize {
        1
    }

    fn rinit(&self, p: &Self::Params, _t0: f64, _rng: &mut PompRng) -> Result<LatentState> {
        Ok(LatentState::new(vec![p.n as u64, 0], 1))
    }

    fn rstep(&self, x: &mut LatentState, _t: f64, _dt: f64, p: &Self::Params, _rng: &mut PompRng) -> Result<()> {
        let f = (p.n * p.q).round() as u64;
        x.compartments[1] += f;
        x.flows[0] += f;
        Ok(())
    }

    fn rmeasure(&self, x: &LatentState, _t: f64, p: &Self::Params, rng: &mut PompRng) -> Vec<f64> {
        vec![poisson(rng, p.rho * x.flows[0] as f64) as f64]
    }

    fn dmeasure(&self, y: &[f64], x: &LatentState, _t: f64, p: &Self::Params) -> f64 {
        poisson_logpmf(y[0], p.rho * x.flows[0] as f64)
    }

    fn init_mean(&self, p: &Self::Params) -> Option<Vec<f64>> {
        Some(vec![p.n, 0.0])
    }

    fn pal(&self) -> Option<&dyn PalStructure<Self::Params>> {
        Some(self)
    }
}

impl PalStructure<DeterministicToyParams> for DeterministicToy {
    fn n_states(&self) -> usize {
        2
    }

    fn kernel(&self, _t: f64, _dt: f64, p: &DeterministicToyParams, _b: &[f64], _n: Option<&[f64]>, out: &mut [f64]) {
        out.copy_from_slice(&[1.0 - p.q, p.q, 0.0, 1.0]);
    }

    fn immigration(&self, _t: f64, _dt: f64, p: &DeterministicToyParams, out: &mut [f64]) {
        out.copy_from_slice(&[p.n * p.q, 0.0]);
    }

    fn observed_flows(&self, p: &DeterministicToyParams) -> Vec<ObservedFlow> {
        vec![ObservedFlow {
            source: 0,
            dest: 1,
            reporting: p.rho,
            dispersion: None,
        }]
    }
}
