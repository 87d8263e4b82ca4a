//! Independent likelihood oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use statrs::distribution::{Discrete, DiscreteCDF, Poisson};
use statrs::function::gamma::ln_gamma;

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn binom_pmf(k: usize, n: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return (k == 0) as u8 as f64;
    }
    if p == 1.0 {
        return (k == n) as u8 as f64;
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Exact log-likelihood of the immigration-death model with binomial
/// reporting of deaths, by enumerating latent counts up to `x_max`.
/// Returns `(loglik, tail)` where `tail` bounds the neglected prior mass.
pub fn immigration_death_exact(lambda0: f64, alpha: f64, survival: f64, rho: f64, y: &[u64]) -> (f64, f64) {
    let mean_bound = lambda0.max(alpha / (1.0 - survival));
    let x_max = (mean_bound + 20.0 * mean_bound.sqrt() + 60.0).ceil() as usize;
    let tail = 1.0 - Poisson::new(mean_bound).unwrap().cdf(x_max as u64);
    let init = Poisson::new(lambda0).unwrap();
    let arrivals = Poisson::new(alpha).unwrap();
    let arr: Vec<f64> = (0..=x_max).map(|a| arrivals.pmf(a as u64)).collect();
    let mut pi: Vec<f64> = (0..=x_max).map(|x| init.pmf(x as u64)).collect();
    let mut ll = 0.0;
    for &obs in y {
        let obs = obs as usize;
        let mut survivors = vec![0.0; x_max + 1];
        for (x, w) in pi.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for d in obs..=x {
                survivors[x - d] += w * binom_pmf(d, x, 1.0 - survival) * binom_pmf(obs, d, rho);
            }
        }
        let mut next = vec![0.0; x_max + 1];
        for (x, w) in survivors.iter().enumerate() {
            for (a, pa) in arr.iter().enumerate().take(x_max + 1 - x) {
                next[x + a] += w * pa;
            }
        }
        let c: f64 = next.iter().sum();
        ll += c.ln();
        pi = next.iter().map(|v| v / c).collect();
    }
    (ll, tail)
}
