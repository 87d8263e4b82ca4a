//! Log-ARMA benchmark for count panels.
//!
//! Each column is log-transformed and fitted with a Gaussian ARMA(p, q) by
//! exact maximum likelihood. Likelihoods are reported on both the log scale
//! and the scale of the original data, the two differing by the Jacobian of
//! the log transform.

use std::io::Write;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSeries;
use crate::error::{Error, Result};
use crate::stats::aic;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmaSpec {
    pub p: usize,
    pub q: usize,
    pub include_mean: bool,
}

impl Default for ArmaSpec {
    fn default() -> Self {
        Self {
            p: 2,
            q: 1,
            include_mean: true,
        }
    }
}

impl ArmaSpec {
    pub fn new(p: usize, q: usize) -> Self {
        Self {
            p,
            q,
            include_mean: true,
        }
    }

    /// AR + MA coefficients, the innovation variance, and the mean if fitted.
    pub fn n_params(&self) -> usize {
        self.p + self.q + 1 + self.include_mean as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaFit {
    pub spec: ArmaSpec,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Log-likelihood of the (log-transformed) series.
    pub loglik: f64,
    pub n_params: usize,
}

impl ArmaFit {
    /// The same process with its mean moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            mean: self.mean + delta,
            ..self.clone()
        }
    }
}

/// Eigenvalue moduli of the companion matrix of `1 - a_1 z - ... - a_p z^p`.
fn companion_radius(a: &[f64]) -> f64 {
    let p = a.len();
    if p == 0 {
        return 0.0;
    }
    let mut c = DMatrix::<f64>::zeros(p, p);
    for (j, v) in a.iter().enumerate() {
        c[(0, j)] = *v;
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// True when every root of the AR polynomial lies outside the unit circle.
pub fn is_stationary(ar: &[f64]) -> bool {
    companion_radius(ar) < 1.0
}

/// True when every root of the MA polynomial `1 + b_1 z + ...` lies outside
/// the unit circle.
pub fn is_invertible(ma: &[f64]) -> bool {
    let neg: Vec<f64> = ma.iter().map(|b| -b).collect();
    companion_radius(&neg) < 1.0
}

struct StateSpace {
    t: DMatrix<f64>,
    rrt: DMatrix<f64>,
    p0: DMatrix<f64>,
}

impl StateSpace {
    /// Harvey's form with unit innovation variance.
    fn new(ar: &[f64], ma: &[f64]) -> Result<Self> {
        let r = ar.len().max(ma.len() + 1);
        let mut t = DMatrix::<f64>::zeros(r, r);
        for (i, a) in ar.iter().enumerate() {
            t[(i, 0)] = *a;
        }
        for i in 0..r - 1 {
            t[(i, i + 1)] = 1.0;
        }
        let mut rv = DVector::<f64>::zeros(r);
        rv[0] = 1.0;
        for (i, b) in ma.iter().enumerate() {
            rv[i + 1] = *b;
        }
        let rrt = &rv * rv.transpose();
        // vec(P) = (I - T (x) T)^-1 vec(R R')
        let tt = t.kronecker(&t);
        let lhs = DMatrix::<f64>::identity(r * r, r * r) - tt;
        let rhs = DVector::from_column_slice(rrt.as_slice());
        let sol = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Arma("stationary covariance equation is singular".into()))?;
        let p0 = DMatrix::from_column_slice(r, r, sol.as_slice());
        let p0 = (&p0 + p0.transpose()) * 0.5;
        Ok(Self { t, rrt, p0 })
    }

    /// Returns `(sum ln f_t, sum v_t^2 / f_t)` for unit innovation variance.
    fn innovations(&self, x: &[f64], mean: f64) -> Result<(f64, f64)> {
        let r = self.t.nrows();
        let mut a = DVector::<f64>::zeros(r);
        let mut p = self.p0.clone();
        let mut sum_ln_f = 0.0;
        let mut sum_sq = 0.0;
        for &xt in x {
            let f = p[(0, 0)];
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Arma(format!("prediction variance {f} is not positive")));
            }
            let v = xt - mean - a[0];
            sum_ln_f += f.ln();
            sum_sq += v * v / f;
            let k = p.column(0) / f;
            a += &k * v;
            p -= &k * k.transpose() * f;
            a = &self.t * a;
            p = &self.t * p * self.t.transpose() + &self.rrt;
        }
        Ok((sum_ln_f, sum_sq))
    }
}

fn check_orders(spec: &ArmaSpec, ar: &[f64], ma: &[f64]) -> Result<()> {
    if ar.len() != spec.p || ma.len() != spec.q {
        return Err(Error::Arma(format!(
            "ARMA({}, {}) needs {} AR and {} MA coefficients, got {} and {}",
            spec.p,
            spec.q,
            spec.p,
            spec.q,
            ar.len(),
            ma.len()
        )));
    }
    Ok(())
}

/// Exact Gaussian log-likelihood of an ARMA(p, q) with mean `mean` and
/// innovation variance `variance`, by the Kalman filter prediction error
/// decomposition started from the stationary distribution.
pub fn arma_loglik(x: &[f64], spec: &ArmaSpec, ar: &[f64], ma: &[f64], mean: f64, variance: f64) -> Result<f64> {
    check_orders(spec, ar, ma)?;
    if x.len() <= spec.p + spec.q {
        return Err(Error::Arma(format!(
            "series of length {} is too short for ARMA({}, {})",
            x.len(),
            spec.p,
            spec.q
        )));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Arma(format!("innovation variance {variance} must be positive")));
    }
    if !is_stationary(ar) {
        return Err(Error::Arma(format!("AR polynomial {ar:?} is not stationary")));
    }
    let (sum_ln_f, sum_sq) = StateSpace::new(ar, ma)?.innovations(x, mean)?;
    let n = x.len() as f64;
    Ok(-0.5 * (n * (LN_2PI + variance.ln()) + sum_ln_f + sum_sq / variance))
}

/// Maps unconstrained values to coefficients of a stable polynomial
/// `1 - a_1 z - ... - a_k z^k` through partial autocorrelations.
fn pacf_to_coefficients(z: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(z.len());
    for (k, zk) in z.iter().enumerate() {
        let u = zk.tanh().clamp(-0.9999, 0.9999);
        let prev = a.clone();
        for j in 0..k {
            a[j] = prev[j] - u * prev[k - 1 - j];
        }
        a.push(u);
    }
    a
}

fn sample_pacf(x: &[f64], lags: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let acov: Vec<f64> = (0..=lags)
        .map(|h| x.iter().zip(&x[h..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n)
        .collect();
    // Durbin-Levinson
    let mut phi: Vec<f64> = Vec::new();
    let mut v = acov[0];
    let mut out = Vec::with_capacity(lags);
    for k in 1..=lags {
        let num = acov[k] - phi.iter().enumerate().map(|(j, p)| p * acov[k - 1 - j]).sum::<f64>();
        let kk = if v > 0.0 { num / v } else { 0.0 };
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - kk * prev[prev.len() - 1 - j];
        }
        phi.push(kk);
        v *= 1.0 - kk * kk;
        out.push(kk);
    }
    out
}

struct Unpacked {
    ar: Vec<f64>,
    ma: Vec<f64>,
    mean: f64,
}

fn unpack(spec: &ArmaSpec, theta: &[f64], fixed_mean: f64) -> Unpacked {
    let ar = pacf_to_coefficients(&theta[..spec.p]);
    let ma = pacf_to_coefficients(&theta[spec.p..spec.p + spec.q])
        .into_iter()
        .map(|a| -a)
        .collect();
    let mean = if spec.include_mean {
        theta[spec.p + spec.q]
    } else {
        fixed_mean
    };
    Unpacked { ar, ma, mean }
}

/// Log-likelihood with the innovation variance profiled out; also returns
/// the maximizing variance.
fn profile_loglik(x: &[f64], ar: &[f64], ma: &[f64], mean: f64) -> Result<(f64, f64)> {
    let (sum_ln_f, sum_sq) = StateSpace::new(ar, ma)?.innovations(x, mean)?;
    let n = x.len() as f64;
    let s2 = sum_sq / n;
    if !(s2 > 0.0) {
        return Err(Error::Degenerate("fitted innovation variance is zero".into()));
    }
    Ok((-0.5 * (n * (LN_2PI + 1.0 + s2.ln()) + sum_ln_f), s2))
}

struct Objective<'a> {
    x: &'a [f64],
    spec: ArmaSpec,
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let u = unpack(&self.spec, theta, 0.0);
        Ok(match profile_loglik(self.x, &u.ar, &u.ma, u.mean) {
            Ok((ll, _)) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        })
    }
}

/// Number of deterministic starting points used by [`fit_arma`].
pub const N_STARTS: usize = 8;

fn starts(x: &[f64], spec: &ArmaSpec, mean: f64) -> Vec<Vec<f64>> {
    let pacf: Vec<f64> = sample_pacf(x, spec.p)
        .into_iter()
        .map(|v| v.clamp(-0.95, 0.95).atanh())
        .collect();
    let pattern: [(Option<f64>, f64); N_STARTS] = [
        (Some(0.0), 0.0),
        (None, 0.0),
        (Some(0.5), 0.0),
        (Some(-0.5), 0.0),
        (Some(0.0), 0.5),
        (Some(0.0), -0.5),
        (Some(1.0), -0.5),
        (None, 0.5),
    ];
    pattern
        .iter()
        .map(|(ar, ma)| {
            let mut v: Vec<f64> = match ar {
                Some(a) => vec![*a; spec.p],
                None => pacf.clone(),
            };
            v.extend(std::iter::repeat_n(*ma, spec.q));
            if spec.include_mean {
                v.push(mean);
            }
            v
        })
        .collect()
}

/// Maximum likelihood ARMA fit by Nelder-Mead over partial-autocorrelation
/// coordinates, from [`N_STARTS`] deterministic starting points.
pub fn fit_arma(x: &[f64], spec: &ArmaSpec) -> Result<ArmaFit> {
    if x.len() < 20 {
        return Err(Error::Arma(format!("series of length {} is shorter than 20", x.len())));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Arma(format!("series contains non-finite value {v}")));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 1e-300) {
        return Err(Error::Degenerate(format!(
            "series is constant at {mean}; the innovation variance cannot be estimated"
        )));
    }
    let dim = spec.p + spec.q + spec.include_mean as usize;
    let fixed_mean = if spec.include_mean { 0.0 } else { mean };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut failures = Vec::new();

    if dim == 0 {
        best = Some((0.0, Vec::new()));
    } else {
        for (s, start) in starts(x, spec, mean).into_iter().enumerate() {
            let mut simplex = vec![start.clone()];
            for d in 0..dim {
                let mut v = start.clone();
                v[d] += if spec.include_mean && d == dim - 1 {
                    0.1 * var.sqrt()
                } else {
                    0.3
                };
                simplex.push(v);
            }
            let obj = Objective { x, spec: *spec };
            let outcome = NelderMead::new(simplex)
                .with_sd_tolerance(1e-10)
                .map_err(|e| Error::Arma(e.to_string()))
                .and_then(|solver| {
                    Executor::new(obj, solver)
                        .configure(|st| st.max_iters(3000))
                        .run()
                        .map_err(|e| Error::Arma(e.to_string()))
                });
            match outcome {
                Ok(res) => {
                    let st = res.state();
                    let cost = st.best_cost;
                    match &st.best_param {
                        Some(p) if cost.is_finite() => {
                            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                                best = Some((cost, p.clone()));
                            }
                        }
                        _ => failures.push(format!("start {s}: no finite likelihood")),
                    }
                }
                Err(e) => failures.push(format!("start {s}: {e}")),
            }
        }
    }
    let (_, theta) = best.ok_or_else(|| Error::Arma(format!("every start failed: {}", failures.join("; "))))?;
    let u = unpack(spec, &theta, fixed_mean);
    let (_, s2) = profile_loglik(x, &u.ar, &u.ma, u.mean)?;
    let loglik = arma_loglik(x, spec, &u.ar, &u.ma, u.mean, s2)?;
    Ok(ArmaFit {
        spec: *spec,
        ar: u.ar,
        ma: u.ma,
        mean: u.mean,
        variance: s2,
        loglik,
        n_params: spec.n_params(),
    })
}

/// How nonpositive values are handled before taking logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    /// Nonpositive values are an error.
    Reject,
    /// Work with `log(y + s)`.
    Shift(f64),
}

impl ZeroPolicy {
    fn shift(&self) -> f64 {
        match self {
            ZeroPolicy::Reject => 0.0,
            ZeroPolicy::Shift(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkColumn {
    pub column: usize,
    pub fit: ArmaFit,
    pub loglik_transformed: f64,
    /// `-sum log(y + s)`.
    pub jacobian: f64,
    pub loglik_natural: f64,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub columns: Vec<BenchmarkColumn>,
    pub loglik_transformed: f64,
    pub jacobian: f64,
    pub loglik_natural: f64,
    pub n_params: usize,
    pub aic: f64,
    pub shift: f64,
}

fn log_columns(obs: &ObservationSeries, zero: ZeroPolicy) -> Result<Vec<Vec<f64>>> {
    let s = zero.shift();
    (0..obs.dim())
        .map(|j| {
            obs.column(j)
                .into_iter()
                .enumerate()
                .map(|(i, y)| {
                    let v = y + s;
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::InvalidObservations(format!(
                            "value {y} at row {i}, column {} cannot be log-transformed; \
                             set a zero shift",
                            j + 1
                        )))
                    }
                })
                .collect()
        })
        .collect()
}

fn assemble(cols: Vec<BenchmarkColumn>, shift: f64) -> BenchmarkReport {
    let lt: f64 = cols.iter().map(|c| c.loglik_transformed).sum();
    let jac: f64 = cols.iter().map(|c| c.jacobian).sum();
    let ln: f64 = cols.iter().map(|c| c.loglik_natural).sum();
    let k: usize = cols.iter().map(|c| c.n_params).sum();
    BenchmarkReport {
        columns: cols,
        loglik_transformed: lt,
        jacobian: jac,
        loglik_natural: ln,
        n_params: k,
        aic: aic(ln, k),
        shift,
    }
}

/// Fits every column independently and combines the natural-scale
/// log-likelihoods into one AIC.
pub fn benchmark_aic(obs: &ObservationSeries, spec: &ArmaSpec, zero: ZeroPolicy) -> Result<BenchmarkReport> {
    let logs = log_columns(obs, zero)?;
    let cols = logs
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let fit = fit_arma(x, spec)?;
            let jacobian = -x.iter().sum::<f64>();
            Ok(BenchmarkColumn {
                column: j + 1,
                loglik_transformed: fit.loglik,
                jacobian,
                loglik_natural: fit.loglik + jacobian,
                n_params: fit.n_params,
                fit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(cols, zero.shift()))
}

/// Evaluates the benchmark at given per-column fits without refitting.
pub fn benchmark_at(obs: &ObservationSeries, fits: &[ArmaFit], zero: ZeroPolicy) -> Result<BenchmarkReport> {
    if fits.len() != obs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} fits for {} columns",
            fits.len(),
            obs.dim()
        )));
    }
    let logs = log_columns(obs, zero)?;
    let cols = logs
        .iter()
        .zip(fits)
        .enumerate()
        .map(|(j, (x, f))| {
            let ll = arma_loglik(x, &f.spec, &f.ar, &f.ma, f.mean, f.variance)?;
            let jacobian = -x.iter().sum::<f64>();
            Ok(BenchmarkColumn {
                column: j + 1,
                fit: ArmaFit { loglik: ll, ..f.clone() },
                loglik_transformed: ll,
                jacobian,
                loglik_natural: ll + jacobian,
                n_params: f.n_params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(cols, zero.shift()))
}

impl BenchmarkReport {
    /// `column,loglik_transformed,jacobian,loglik_natural,n_params`, one row
    /// per column, then a `total` row and an `aic` row.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["column", "loglik_transformed", "jacobian", "loglik_natural", "n_params"])?;
        for c in &self.columns {
            w.write_record([
                format!("stratum_{}", c.column),
                c.loglik_transformed.to_string(),
                c.jacobian.to_string(),
                c.loglik_natural.to_string(),
                c.n_params.to_string(),
            ])?;
        }
        w.write_record([
            "total".to_string(),
            self.loglik_transformed.to_string(),
            self.jacobian.to_string(),
            self.loglik_natural.to_string(),
            self.n_params.to_string(),
        ])?;
        w.write_record(["aic".to_string(), self.aic.to_string(), String::new(), String::new(), String::new()])?;
        w.flush()?;
        Ok(())
    }
}

/// Simulates a stationary Gaussian ARMA series after a burn-in.
pub fn simulate_arma<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    ar: &[f64],
    ma: &[f64],
    mean: f64,
    sd: f64,
) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let burn = 500;
    let mut x: Vec<f64> = Vec::with_capacity(n + burn);
    let mut e: Vec<f64> = Vec::with_capacity(n + burn);
    for t in 0..n + burn {
        let et: f64 = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let mut v = et;
        for (i, a) in ar.iter().enumerate() {
            if t > i {
                v += a * x[t - 1 - i];
            }
        }
        for (i, b) in ma.iter().enumerate() {
            if t > i {
                v += b * e[t - 1 - i];
            }
        }
        x.push(v);
        e.push(et);
    }
    x[burn..].iter().map(|v| v + mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::normal_logpdf;

    #[test]
    fn white_noise_is_iid_normal() {
        let x = [0.3, -1.2, 2.0, 0.7, 0.1];
        let ll = arma_loglik(&x, &ArmaSpec::new(0, 0), &[], &[], 0.5, 2.0).unwrap();
        let direct: f64 = x.iter().map(|v| normal_logpdf(*v, 0.5, 2.0)).sum();
        assert!((ll - direct).abs() < 1e-12);
    }

    #[test]
    fn reversal_invariance() {
        let mut rng = rng_from_seed(4);
        let x = simulate_arma(&mut rng, 60, &[0.5, -0.2], &[0.4], 1.0, 1.0);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let spec = ArmaSpec::default();
        let a = arma_loglik(&x, &spec, &[0.5, -0.2], &[0.4], 1.0, 1.3).unwrap();
        let b = arma_loglik(&rev, &spec, &[0.5, -0.2], &[0.4], 1.0, 1.3).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn nonstationary_rejected() {
        let x = [0.0; 10];
        assert!(matches!(
            arma_loglik(&x, &ArmaSpec::new(1, 0), &[1.01], &[], 0.0, 1.0),
            Err(Error::Arma(_))
        ));
    }

    #[test]
    fn pacf_map_is_stable() {
        for z in [[-3.0, 2.0], [0.1, 0.2], [5.0, 5.0]] {
            assert!(is_stationary(&pacf_to_coefficients(&z)));
        }
        assert_eq!(pacf_to_coefficients(&[]), Vec::<f64>::new());
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = vec![2.5; 50];
        assert!(matches!(fit_arma(&x, &ArmaSpec::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ArmaSpec::new(0, 0).n_params(), 2);
        assert_eq!(ArmaSpec::default().n_params(), 5);
    }
}
