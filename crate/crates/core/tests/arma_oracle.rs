use pomp::arma::{arma_loglik, benchmark_aic, benchmark_at, fit_arma, simulate_arma, ArmaSpec, ZeroPolicy};
use pomp::data::{DataScale, ObservationSeries};
use pomp::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const X: [f64; 12] = [1.3, 0.2, -0.5, 2.1, 1.7, 0.9, -0.3, 0.4, 1.1, 2.5, 1.9, 0.8];

/// Dense multivariate normal log-densities of `X`, with the autocovariance
/// built from 4000 psi-weights (numpy/scipy, offline).
const DENSE: [(&[f64], &[f64], f64, f64, f64); 3] = [
    (&[0.5, -0.2], &[0.3], 1.0, 2.0, -17.75894929742682),
    (&[0.8], &[], 0.5, 1.5, -18.238478670871054),
    (&[], &[-0.6, 0.2], 0.0, 0.7, -43.16505919691443),
];

#[test]
fn kalman_likelihood_matches_dense_gaussian() {
    for (ar, ma, mean, var, want) in DENSE {
        let spec = ArmaSpec::new(ar.len(), ma.len());
        let got = arma_loglik(&X, &spec, ar, ma, mean, var).unwrap();
        assert!((got - want).abs() < 1e-8, "{ar:?} {ma:?}: {got} vs {want}");
    }
}

#[test]
fn fit_recovers_simulated_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = simulate_arma(&mut rng, 3000, &[0.6], &[0.3], 2.0, 1.0);
    let fit = fit_arma(&x, &ArmaSpec::new(1, 1)).unwrap();
    assert!((fit.ar[0] - 0.6).abs() < 0.06, "{:?}", fit.ar);
    assert!((fit.ma[0] - 0.3).abs() < 0.06, "{:?}", fit.ma);
    assert!((fit.mean - 2.0).abs() < 0.2);
    assert!((fit.variance - 1.0).abs() < 0.08);
}

#[test]
fn fit_is_no_worse_than_the_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = simulate_arma(&mut rng, 400, &[0.5, -0.3], &[0.4], 0.0, 0.5);
    let spec = ArmaSpec::default();
    let fit = fit_arma(&x, &spec).unwrap();
    let truth = arma_loglik(&x, &spec, &[0.5, -0.3], &[0.4], 0.0, 0.25).unwrap();
    assert!(fit.loglik >= truth - 1e-6, "{} < {truth}", fit.loglik);
}

fn panel(cols: Vec<Vec<f64>>) -> ObservationSeries {
    let n = cols[0].len();
    let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    ObservationSeries::new((1..=n).map(|t| t as f64).collect(), rows, DataScale::RawCounts).unwrap()
}

#[test]
fn white_noise_aic_matches_iid_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let logs = simulate_arma(&mut rng, 300, &[], &[], 3.0, 0.4);
    let y: Vec<f64> = logs.iter().map(|v| v.exp()).collect();
    let n = y.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let s2 = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let ll = -0.5 * n * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0) - logs.iter().sum::<f64>();
    let analytic = -2.0 * ll + 4.0;
    let report = benchmark_aic(&panel(vec![y]), &ArmaSpec::new(0, 0), ZeroPolicy::Reject).unwrap();
    assert_eq!(report.n_params, 2);
    assert!((report.aic - analytic).abs() < 1e-4, "{} vs {analytic}", report.aic);
}

#[test]
fn constant_rescaling_shifts_loglik_by_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|j| {
            simulate_arma(&mut rng, 416, &[0.7, -0.1], &[0.2], 3.0 + j as f64, 0.5)
                .iter()
                .map(|v| v.exp().round().max(1.0))
                .collect()
        })
        .collect();
    let counts = panel(cols.clone());
    let scaled = panel(cols.iter().map(|c| c.iter().map(|v| v / 0.07).collect()).collect());
    let base = benchmark_aic(&counts, &ArmaSpec::default(), ZeroPolicy::Reject).unwrap();
    let fits: Vec<_> = base.columns.iter().map(|c| c.fit.shifted(-(0.07f64).ln())).collect();
    let fixed = benchmark_at(&scaled, &fits, ZeroPolicy::Reject).unwrap();
    let expected = -1248.0 * (0.07f64).ln();
    let diff = base.loglik_natural - fixed.loglik_natural;
    assert!((diff - expected).abs() < 1e-6, "{diff} vs {expected}");
    let refit = benchmark_aic(&scaled, &ArmaSpec::default(), ZeroPolicy::Reject).unwrap();
    assert!((base.loglik_natural - refit.loglik_natural - expected).abs() < 0.5);
}

#[test]
fn zeros_need_a_shift() {
    let c = vec![0.0, 3.0, 5.0, 2.0, 7.0, 1.0, 4.0, 6.0, 2.0, 3.0, 5.0, 8.0, 2.0, 1.0, 4.0, 3.0, 6.0, 2.0, 5.0, 4.0, 3.0];
    let obs = panel(vec![c.clone()]);
    assert!(matches!(
        benchmark_aic(&obs, &ArmaSpec::new(1, 0), ZeroPolicy::Reject),
        Err(Error::InvalidObservations(_))
    ));
    let r = benchmark_aic(&obs, &ArmaSpec::new(1, 0), ZeroPolicy::Shift(1.0)).unwrap();
    let jac: f64 = -c.iter().map(|v| (v + 1.0).ln()).sum::<f64>();
    assert!((r.jacobian - jac).abs() < 1e-9);
    assert_eq!(r.shift, 1.0);
}

#[test]
fn short_series_is_rejected() {
    assert!(fit_arma(&X, &ArmaSpec::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mean_shift_leaves_transformed_loglik_unchanged(
        phi in -0.9f64..0.9,
        theta in -0.9f64..0.9,
        var in 0.1f64..3.0,
        delta in -5.0f64..5.0,
    ) {
        let spec = ArmaSpec::new(1, 1);
        let a = arma_loglik(&X, &spec, &[phi], &[theta], 0.3, var).unwrap();
        let shifted: Vec<f64> = X.iter().map(|v| v + delta).collect();
        let b = arma_loglik(&shifted, &spec, &[phi], &[theta], 0.3 + delta, var).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
