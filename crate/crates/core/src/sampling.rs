//! Count samplers used by the simulators.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else if p > 0.5 {
        n - binomial(rng, n, 1.0 - p)
    } else if n as f64 * p < 10.0 {
        binomial_inversion(rng, n, p)
    } else {
        binomial_btrs(rng, n, p)
    }
}

/// Sequential inversion, for small `n p` and `p <= 1/2`.
fn binomial_inversion<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let q = 1.0 - p;
    let s = p / q;
    let a = (n as f64 + 1.0) * s;
    loop {
        let mut r = (n as f64 * (-p).ln_1p()).exp();
        let mut u: f64 = rng.random();
        let mut x = 0u64;
        while u > r {
            u -= r;
            x += 1;
            if x > n {
                break;
            }
            r *= a / x as f64 - s;
        }
        if x <= n {
            return x;
        }
    }
}

/// `ln(k!) - (k + 1/2) ln(k + 1) + (k + 1) - ln(sqrt(2 pi))`, the Stirling
/// remainder.
fn stirling_remainder(k: f64) -> f64 {
    const TABLE: [f64; 10] = [
        0.081_061_466_795_327_26,
        0.041_340_695_955_409_29,
        0.027_677_925_684_998_34,
        0.020_790_672_103_765_09,
        0.016_644_691_189_821_19,
        0.013_876_128_823_070_75,
        0.011_896_709_945_891_77,
        0.010_411_265_261_972_1,
        0.009_255_462_182_712_73,
        0.008_330_563_433_362_87,
    ];
    if k < 10.0 {
        return TABLE[k as usize];
    }
    let k1 = k + 1.0;
    let k1s = k1 * k1;
    (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / 1260.0 / k1s) / k1s) / k1
}

/// Transformed rejection with squeeze (Hormann's BTRS), for `n p >= 10` and
/// `p <= 1/2`.
fn binomial_btrs<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let nf = n as f64;
    let q = 1.0 - p;
    let spq = (nf * p * q).sqrt();
    let b = 1.15 + 2.53 * spq;
    let a = -0.0873 + 0.0248 * b + 0.01 * p;
    let c = nf * p + 0.5;
    let v_r = 0.92 - 4.2 / b;
    let alpha = (2.83 + 5.1 / b) * spq;
    let lpq = (p / q).ln();
    let m = ((nf + 1.0) * p).floor();
    let h = stirling_remainder(m) + stirling_remainder(nf - m);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let mut v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + c).floor();
        if k < 0.0 || k > nf {
            continue;
        }
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        v = (v * alpha / (a / (us * us) + b)).ln();
        let bound = (m + 0.5) * ((m + 1.0) / (nf - m + 1.0)).ln()
            + (nf + 1.0) * ((nf - m + 1.0) / (nf - k + 1.0)).ln()
            + (k + 0.5) * ((nf - k + 1.0) / (k + 1.0)).ln()
            + (k - m) * lpq
            + h
            - stirling_remainder(k)
            - stirling_remainder(nf - k);
        if v <= bound {
            return k as u64;
        }
    }
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("valid poisson").sample(rng) as u64
    }
}

/// Negative binomial with the given mean and size, via the Gamma-Poisson mixture.
pub fn nbinom<R: Rng + ?Sized>(rng: &mut R, mean: f64, size: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if size.is_infinite() {
        return poisson(rng, mean);
    }
    let g = Gamma::new(size, mean / size).expect("valid gamma").sample(rng);
    poisson(rng, g)
}

/// Multiplicative Gamma white noise over a step of length `dt`: mean 1,
/// variance `sigma^2 / dt`. Exactly 1 when `sigma^2` is zero in floating point.
pub fn gamma_white_noise<R: Rng + ?Sized>(rng: &mut R, sigma: f64, dt: f64) -> f64 {
    let s2 = sigma * sigma;
    if !(s2 > 0.0) {
        return 1.0;
    }
    Gamma::new(dt / s2, s2 / dt).expect("valid gamma").sample(rng)
}

/// Euler-multinomial exits from a compartment of size `n` with competing
/// per-capita `rates` over `dt`. Writes one count per rate into `out`.
pub fn euler_multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, rates: &[f64], dt: f64, out: &mut [u64]) {
    out.iter_mut().for_each(|o| *o = 0);
    let total: f64 = rates.iter().sum();
    if n == 0 || total <= 0.0 {
        return;
    }
    let mut left = binomial(rng, n, -(-total * dt).exp_m1());
    let mut rate_left = total;
    let last = rates.len() - 1;
    for (k, &r) in rates.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k == last {
            out[k] = left;
            break;
        }
        let draw = binomial(rng, left, (r / rate_left).min(1.0));
        out[k] = draw;
        left -= draw;
        rate_left -= r;
    }
}
