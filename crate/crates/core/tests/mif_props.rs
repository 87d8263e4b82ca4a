use std::collections::BTreeMap;

use pomp::data::{DataScale, ObservationSeries, TimeGrid};
use pomp::mif::{mif2, mif2_multi, PerturbationSpec};
use pomp::model::simulate;
use pomp::pf::{PfSettings, ResamplePolicy};
use pomp::toys::{ImmigrationDeath, TwoStateHmm};
use pomp::Error;

fn settings(particles: usize, seed: u64) -> PfSettings {
    PfSettings {
        particles,
        replicates: 4,
        resample: ResamplePolicy::Always,
        seed,
    }
}

fn spec(sd: f64) -> PerturbationSpec {
    PerturbationSpec {
        rw_sd: BTreeMap::from([("rho".to_string(), sd)]),
        ..Default::default()
    }
}

fn immigration_data(rho: f64, n: usize) -> ObservationSeries {
    let truth = ImmigrationDeath::params(20.0, 15.0, 0.6, rho);
    let grid = TimeGrid::regular(0.0, n, 1.0).unwrap();
    simulate(&ImmigrationDeath, &truth, &grid, 12).unwrap().1
}

#[test]
fn zero_random_walk_keeps_the_start() {
    let obs = immigration_data(0.4, 20);
    let start = ImmigrationDeath::params(20.0, 15.0, 0.6, 0.25);
    let r = mif2(&ImmigrationDeath, &obs, 0.0, &start, &spec(0.0), 3, &settings(200, 1)).unwrap();
    assert_eq!(r.params, start);
    assert!(r.trace.free.is_empty());
    assert_eq!(r.trace.iterations.len(), 3);
}

#[test]
fn one_parameter_search_moves_towards_truth() {
    let obs = immigration_data(0.4, 60);
    let start = ImmigrationDeath::params(20.0, 15.0, 0.6, 0.2);
    let r = mif2(&ImmigrationDeath, &obs, 0.0, &start, &spec(0.1), 25, &settings(800, 2)).unwrap();
    let rho = r.params.get("rho").unwrap();
    assert!((rho - 0.4).abs() < 0.08, "{rho}");
    assert!(r.improvement_verified);
    assert!(r.final_loglik > r.start_loglik);
    let cooling: Vec<f64> = r.trace.iterations.iter().map(|i| i.cooling).collect();
    assert!(cooling.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn runs_are_reproducible_and_pool_independent() {
    let obs = immigration_data(0.4, 15);
    let start = ImmigrationDeath::params(20.0, 15.0, 0.6, 0.3);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mif2(&ImmigrationDeath, &obs, 0.0, &start, &spec(0.1), 4, &settings(300, 9)).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.final_loglik.to_bits(), b.final_loglik.to_bits());
}

#[test]
fn trace_csv_has_one_row_per_iteration() {
    let obs = immigration_data(0.4, 10);
    let start = ImmigrationDeath::params(20.0, 15.0, 0.6, 0.3);
    let r = mif2(&ImmigrationDeath, &obs, 0.0, &start, &spec(0.05), 5, &settings(100, 3)).unwrap();
    let mut buf = Vec::new();
    r.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,cooling,loglik,rho");
    assert_eq!(lines.len(), 6);
}

#[test]
fn impossible_data_collapses() {
    let obs = ObservationSeries::new(vec![1.0, 2.0], vec![vec![3.0], vec![3.0]], DataScale::RawCounts).unwrap();
    let start = TwoStateHmm::params(0.2, 0.3, 0.1, 0.8, 0.5);
    let spec = PerturbationSpec {
        rw_sd: BTreeMap::from([("e0".to_string(), 0.1)]),
        ..Default::default()
    };
    let err = mif2(&TwoStateHmm, &obs, 0.0, &start, &spec, 2, &settings(50, 0)).unwrap_err();
    assert!(matches!(err, Error::MifCollapse { iteration: 1, .. }));
    assert!(err.is_numeric());
}

#[test]
fn invalid_perturbations_are_rejected() {
    let obs = immigration_data(0.4, 5);
    let start = ImmigrationDeath::params(20.0, 15.0, 0.6, 0.3);
    let bad_name = PerturbationSpec {
        rw_sd: BTreeMap::from([("nope".to_string(), 0.1)]),
        ..Default::default()
    };
    assert!(mif2(&ImmigrationDeath, &obs, 0.0, &start, &bad_name, 1, &settings(10, 0)).is_err());
    assert!(mif2(&ImmigrationDeath, &obs, 0.0, &start, &spec(-1.0), 1, &settings(10, 0)).is_err());
    let hot = PerturbationSpec {
        cooling: 1.5,
        ..spec(0.1)
    };
    assert!(mif2(&ImmigrationDeath, &obs, 0.0, &start, &hot, 1, &settings(10, 0)).is_err());
    assert!(mif2(&ImmigrationDeath, &obs, 0.0, &start, &spec(0.1), 0, &settings(10, 0)).is_err());
}

#[test]
fn multiple_starts_run_independently() {
    let obs = immigration_data(0.4, 10);
    let starts = [
        ImmigrationDeath::params(20.0, 15.0, 0.6, 0.2),
        ImmigrationDeath::params(20.0, 15.0, 0.6, 0.6),
    ];
    let out = mif2_multi(&ImmigrationDeath, &obs, 0.0, &starts, &spec(0.1), 3, &settings(100, 5));
    assert_eq!(out.len(), 2);
    let a = out[0].as_ref().unwrap();
    let b = out[1].as_ref().unwrap();
    assert_ne!(a.trace, b.trace);
}
