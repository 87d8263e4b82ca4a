//! Scalar utilities shared by the filters: information criteria, stable
//! log-mean-exp, and count log-densities.

use statrs::function::gamma::ln_gamma;

/// Akaike's information criterion, `2k - 2 loglik`.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

/// `log(mean(exp(values)))` with max-subtraction.
///
/// Values are sorted in descending order before summation so the result is
/// bitwise independent of the input order. Returns `-inf` when every value is
/// `-inf` and `NaN` for an empty slice or a slice containing `NaN`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let max = sorted[0];
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = sorted.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

/// `log(sum(exp(values)))`, summed in slice order.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(k!)`.
pub fn ln_factorial(k: f64) -> f64 {
    if k < 2.0 {
        0.0
    } else {
        ln_gamma(k + 1.0)
    }
}

fn is_count(y: f64) -> bool {
    y >= 0.0 && y.fract() == 0.0 && y.is_finite()
}

/// Poisson log-pmf. Non-integer or negative `y` is impossible and gives `-inf`.
pub fn poisson_logpmf(y: f64, mean: f64) -> f64 {
    if !is_count(y) || mean < 0.0 || mean.is_nan() {
        return f64::NEG_INFINITY;
    }
    if mean == 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if y == 0.0 {
        return -mean;
    }
    y * mean.ln() - mean - ln_factorial(y)
}

/// Binomial log-pmf for `y` successes out of `n` trials.
pub fn binomial_logpmf(y: f64, n: f64, p: f64) -> f64 {
    if !is_count(y) || !is_count(n) || y > n || !(0.0..=1.0).contains(&p) {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if y == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_factorial(n) - ln_factorial(y) - ln_factorial(n - y) + y * p.ln() + (n - y) * (-p).ln_1p()
}

/// Above this `size` the Gamma-ratio term of the negative binomial is taken
/// from Stirling's series, which avoids cancelling two huge `ln_gamma` values.
const NB_STIRLING_SIZE: f64 = 1e6;

fn stirling_tail(x: f64) -> f64 {
    let x2 = x * x;
    (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * x2)) / x2) / x
}

/// Negative binomial log-pmf parameterised by mean and dispersion (`size`),
/// i.e. the Poisson-Gamma mixture with variance `mean + mean^2 / size`.
///
/// Stable as `size -> inf`, where it converges to the Poisson log-pmf.
pub fn nbinom_logpmf(y: f64, mean: f64, size: f64) -> f64 {
    if !is_count(y) || mean < 0.0 || mean.is_nan() || size.is_nan() || size <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if size.is_infinite() {
        return poisson_logpmf(y, mean);
    }
    if mean == 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let ratio = mean / size;
    // ln Gamma(y + size) - ln Gamma(size) - y ln(size)
    let gamma_term = if size > NB_STIRLING_SIZE {
        (size + y - 0.5) * (y / size).ln_1p() - y + stirling_tail(size + y) - stirling_tail(size)
    } else {
        ln_gamma(y + size) - ln_gamma(size) - y * size.ln()
    };
    gamma_term - ln_factorial(y) + y * mean.ln() - (y + size) * ratio.ln_1p()
}

/// Normal log-density.
pub fn normal_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + z * z / variance)
}

/// Upper tail `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: usize, n: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let terms: Vec<f64> = (k..=n)
        .map(|i| binomial_logpmf(i as f64, n as f64, p))
        .collect();
    log_sum_exp(&terms).exp().min(1.0)
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
