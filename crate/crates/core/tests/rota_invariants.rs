use pomp::data::{DataScale, TimeGrid};
use pomp::model::{simulate, LatentState, PompModel};
use pomp::pal::{pal_filter, PalSettings};
use pomp::params::{ParameterSet, Transform};
use pomp::pf::{pfilter, PfSettings, ResamplePolicy};
use pomp::rng::rng_from_seed;
use pomp::rota::{
    build_rota_model, i_idx, mean_field_step, s_idx, warmup_init, InitStrategy, RotaConfig, RotaVariant,
    DEATH_SINK, N_COMPARTMENTS, STRATA, WEEKS_PER_YEAR,
};
use proptest::prelude::*;

fn defaults() -> (RotaConfig, ParameterSet) {
    let cfg = RotaConfig::default_config();
    let ps = cfg.parameter_set().unwrap();
    (cfg, ps)
}

fn with(ps: &ParameterSet, changes: &[(&str, f64)]) -> ParameterSet {
    let mut out = ps.clone();
    for (n, v) in changes {
        out.set(n, *v).unwrap();
    }
    out
}

fn pf(particles: usize, seed: u64) -> PfSettings {
    PfSettings {
        particles,
        replicates: 1,
        resample: ResamplePolicy::Always,
        seed,
    }
}

#[test]
fn bundled_config_is_consistent() {
    let (cfg, ps) = defaults();
    assert_eq!(cfg.variant, RotaVariant::OV_OV);
    assert_eq!(cfg.n_obs, 416);
    assert_eq!(cfg.model().substeps, 7);
    assert_eq!(ps.len(), 19);
    if let InitStrategy::FixedAtStart { compartments } = &cfg.init {
        assert_eq!(compartments.iter().sum::<u64>() as f64, ps.get("pop").unwrap());
    } else {
        panic!("expected a fixed initial state");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(pomp::rota::DEFAULT_CONFIG).unwrap();
    v["substepz"] = serde_json::json!(3);
    assert!(RotaConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn invalid_rates_name_the_parameter() {
    let (cfg, ps) = defaults();
    let model = cfg.model();
    for name in ["gamma", "beta_2", "birth_rate"] {
        let err = model.resolve(&with(&ps.with_transform(name, Transform::Identity).unwrap(), &[(name, -0.5)]));
        let msg = err.unwrap_err().to_string();
        assert!(msg.contains(name), "{msg}");
    }
    let err = model.resolve(&with(&ps.with_transform("rho_3", Transform::Identity).unwrap(), &[("rho_3", 1.5)]));
    assert!(err.unwrap_err().to_string().contains("rho_3"));
}

#[test]
fn simulation_shape_and_determinism() {
    let (cfg, ps) = defaults();
    let model = cfg.model();
    let grid = cfg.grid().unwrap();
    let (states, a) = simulate(&model, &ps, &grid, 4).unwrap();
    let (_, b) = simulate(&model, &ps, &grid, 4).unwrap();
    let (_, c) = simulate(&model, &ps, &grid, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 416);
    assert_eq!(a.dim(), 3);
    assert!(states.iter().all(|s| s.compartments.len() == N_COMPARTMENTS));
}

#[test]
fn closed_population_is_conserved() {
    let (cfg, ps) = defaults();
    let model = cfg.model();
    let closed = with(&ps, &[("birth_rate", 1e-300), ("death_rate", 1e-300)]);
    let p = model.resolve(&closed).unwrap();
    let mut rng = rng_from_seed(1);
    let mut x = model.rinit(&p, 0.0, &mut rng).unwrap();
    let n0 = x.population();
    for k in 0..500 {
        model.rstep(&mut x, k as f64 / 7.0, 1.0 / 7.0, &p, &mut rng).unwrap();
        assert_eq!(x.population(), n0);
    }
}

#[test]
fn kernel_prediction_matches_mean_field_step() {
    let (cfg, ps) = defaults();
    let model = cfg.model();
    let mut ps = ps;
    ps.set("sigma_p", 1e-300).unwrap();
    let p = model.resolve(&ps).unwrap();
    let pal = model.pal().unwrap();
    let m = pal.n_states();
    let state: Vec<f64> = model.init_mean(&p).unwrap();
    let mut belief = pal.belief_from_mean(&state);
    let mut mf = state.clone();
    let dt = 1.0 / 7.0;
    let mut kernel = vec![0.0; m * m];
    let mut imm = vec![0.0; m];
    for k in 0..200 {
        let t = k as f64 * dt;
        pal.kernel(t, dt, &p, &belief, None, &mut kernel);
        pal.immigration(t, dt, &p, &mut imm);
        let flows: Vec<f64> = (0..STRATA)
            .map(|a| belief[s_idx(a)] * kernel[s_idx(a) * m + i_idx(a)])
            .collect();
        let next: Vec<f64> = (0..m)
            .map(|j| (0..m).map(|i| belief[i] * kernel[i * m + j]).sum::<f64>() + imm[j])
            .collect();
        let (mf_next, infections) = mean_field_step(&mf, t, dt, &p);
        for j in 0..N_COMPARTMENTS {
            assert!((next[j] - mf_next[j]).abs() < 1e-10 * (1.0 + mf_next[j]), "step {k} compartment {j}");
        }
        for a in 0..STRATA {
            assert!((flows[a] - infections[a]).abs() < 1e-10 * (1.0 + infections[a]));
        }
        assert!(next[DEATH_SINK] >= belief[DEATH_SINK]);
        belief = next;
        mf = mf_next;
    }
}

#[test]
fn kernel_rows_are_stochastic() {
    let (cfg, ps) = defaults();
    let model = cfg.model();
    let p = model.resolve(&ps).unwrap();
    let pal = model.pal().unwrap();
    let m = pal.n_states();
    let belief = pal.belief_from_mean(&model.init_mean(&p).unwrap());
    let mut kernel = vec![0.0; m * m];
    pal.kernel(3.0, 1.0 / 7.0, &p, &belief, Some(&[0.5, 2.0, 1.3]), &mut kernel);
    for row in kernel.chunks(m) {
        assert!(row.iter().all(|v| *v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn seasonality_peaks_at_phase() {
    let (cfg, ps) = defaults();
    let phase = 1.2;
    let p = cfg
        .model()
        .resolve(&with(&ps, &[("amplitude", 0.3), ("phase", phase)]))
        .unwrap();
    let peak = phase * WEEKS_PER_YEAR / (2.0 * std::f64::consts::PI);
    assert!((p.seasonality(peak) - 1.3).abs() < 1e-12);
    assert!((p.seasonality(peak + WEEKS_PER_YEAR / 2.0) - 0.7).abs() < 1e-12);
}

#[test]
fn full_reporting_rescaled_equals_raw() {
    let (cfg, ps) = defaults();
    let ps = ps
        .with_transform("rho_1", Transform::Identity)
        .and_then(|p| p.with_transform("rho_2", Transform::Identity))
        .and_then(|p| p.with_transform("rho_3", Transform::Identity))
        .unwrap();
    let ps = with(&ps, &[("rho_1", 1.0), ("rho_2", 1.0), ("rho_3", 1.0)]);
    let raw = build_rota_model(RotaVariant::OV_OV, cfg.init.clone(), DataScale::RawCounts);
    let rescaled = build_rota_model(RotaVariant::OV_OV, cfg.init.clone(), DataScale::RescaledCounts);
    let grid = TimeGrid::regular(0.0, 12, 1.0).unwrap();
    let (_, obs_raw) = simulate(&raw, &ps, &grid, 8).unwrap();
    let (_, obs_res) = simulate(&rescaled, &ps, &grid, 8).unwrap();
    assert_eq!(obs_raw.values, obs_res.values);
    let a = pfilter(&raw, &obs_raw, 0.0, &ps, &pf(200, 3)).unwrap();
    let b = pfilter(&rescaled, &obs_res, 0.0, &ps, &pf(200, 3)).unwrap();
    assert_eq!(a.total, b.total);
    let a = pal_filter(&raw, &obs_raw, 0.0, &ps, &PalSettings::default()).unwrap();
    let b = pal_filter(&rescaled, &obs_res, 0.0, &ps, &PalSettings::default()).unwrap();
    assert_eq!(a.total, b.total);
}

#[test]
fn rescaled_loglik_carries_log_rho_jacobian() {
    let (cfg, ps) = defaults();
    let raw = build_rota_model(RotaVariant::EQ_EQ, cfg.init.clone(), DataScale::RawCounts);
    let rescaled = build_rota_model(RotaVariant::EQ_EQ, cfg.init.clone(), DataScale::RescaledCounts);
    let p = raw.resolve(&ps).unwrap();
    let mut x = LatentState::new(vec![0; N_COMPARTMENTS], STRATA);
    x.flows = vec![300, 250, 2000];
    let counts = [22.0, 15.0, 140.0];
    let scaled: Vec<f64> = counts.iter().zip(&p.rho).map(|(c, r)| c / r).collect();
    let diff = rescaled.dmeasure(&scaled, &x, 1.0, &p) - raw.dmeasure(&counts, &x, 1.0, &p);
    let jac: f64 = p.rho.iter().map(|r| r.ln()).sum();
    assert!((diff - jac).abs() < 1e-12);
}

#[test]
fn degeneracy_ladder_recovers_eqeq() {
    let (cfg, ps) = defaults();
    let limit = with(
        &ps,
        &[("sigma_p", 1e-300), ("theta_1", 1e15), ("theta_2", 1e15), ("theta_3", 1e15)],
    );
    let eq = build_rota_model(RotaVariant::EQ_EQ, cfg.init.clone(), DataScale::RawCounts);
    let ov = build_rota_model(RotaVariant::OV_OV, cfg.init.clone(), DataScale::RawCounts);
    let grid = TimeGrid::regular(0.0, 30, 1.0).unwrap();
    let (_, obs) = simulate(&eq, &ps, &grid, 21).unwrap();
    let a = pfilter(&eq, &obs, 0.0, &limit, &pf(300, 6)).unwrap();
    let b = pfilter(&ov, &obs, 0.0, &limit, &pf(300, 6)).unwrap();
    assert!((a.total - b.total).abs() < 1e-6, "{} vs {}", a.total, b.total);
    let a = pal_filter(&eq, &obs, 0.0, &limit, &PalSettings::default()).unwrap();
    let b = pal_filter(&ov, &obs, 0.0, &limit, &PalSettings::default()).unwrap();
    assert!((a.total - b.total).abs() < 1e-6, "{} vs {}", a.total, b.total);
}

#[test]
fn no_transmission_makes_positive_counts_impossible() {
    let (cfg, ps) = defaults();
    let eq = build_rota_model(RotaVariant::EQ_EQ, cfg.init.clone(), DataScale::RawCounts);
    let grid = TimeGrid::regular(0.0, 5, 1.0).unwrap();
    let (_, obs) = simulate(&eq, &ps, &grid, 2).unwrap();
    let off = with(&ps, &[("beta_1", 1e-300), ("beta_2", 1e-300), ("beta_3", 1e-300)]);
    let r = pfilter(&eq, &obs, 0.0, &off, &pf(100, 0)).unwrap();
    assert_eq!(r.total, f64::NEG_INFINITY);
    assert!(!r.failed_times.is_empty());
}

#[test]
fn warmup_reaches_an_endemic_state() {
    let (cfg, ps) = defaults();
    let entry = vec![900_000, 100, 0, 50_000, 0, 0, 49_900, 0, 0];
    let model = build_rota_model(
        RotaVariant::EQ_EQ,
        InitStrategy::Warmup { years: 6.0, entry },
        DataScale::RawCounts,
    );
    assert!(model.init_mean(&model.resolve(&ps).unwrap()).is_none());
    let (x, diag) = warmup_init(&model, &ps, cfg.t0, 6.0, 3).unwrap();
    assert!(!diag.extinct);
    assert_eq!(diag.final_year_mean.len(), N_COMPARTMENTS);
    let pop = x.population() as f64;
    assert!(pop > 0.8e6 && pop < 1.2e6, "{pop}");
    assert!(x.flows.iter().all(|f| *f == 0));
    assert!(warmup_init(&model, &ps, cfg.t0, 0.0, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn births_and_deaths_bound_population_change(
        beta in 0.5f64..20.0,
        gamma in 0.2f64..3.0,
        sigma in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let (cfg, ps) = defaults();
        let model = cfg.model();
        let ps = with(&ps, &[("beta_1", beta), ("beta_2", beta), ("gamma", gamma), ("sigma_p", sigma.max(1e-9))]);
        let p = model.resolve(&ps).unwrap();
        let mut rng = rng_from_seed(seed);
        let mut x = model.rinit(&p, 0.0, &mut rng).unwrap();
        for k in 0..70 {
            let before = x.compartments.clone();
            let flows_before = x.flows.clone();
            model.rstep(&mut x, k as f64 / 7.0, 1.0 / 7.0, &p, &mut rng).unwrap();
            for a in 0..STRATA {
                prop_assert!(x.flows[a] - flows_before[a] <= before[s_idx(a)]);
            }
            let total: u64 = before.iter().sum();
            let oldest: u64 = before[6..].iter().sum();
            prop_assert!(x.population() >= total - oldest);
        }
    }
}
