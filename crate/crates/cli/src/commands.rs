use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use pomp::anomaly::{initial_condition_anomaly_report, DEFAULT_K};
use pomp::arma::{benchmark_aic, benchmark_at, ArmaFit, ArmaSpec, ZeroPolicy};
use pomp::data::{DataScale, ObservationSeries};
use pomp::mif::{mif2, PerturbationSpec};
use pomp::model::{simulate, LogLikResult, PompModel};
use pomp::pal::{cgd_maximize, pal_filter, CgdSettings, PalSettings};
use pomp::params::ParameterSet;
use pomp::pf::{replicated_pfilter, PfSettings, ResamplePolicy};
use pomp::rng::derive_seed;
use pomp::stats::{aic, binomial_upper_tail};
use pomp::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{rates_path, LoadedConfig};
use crate::record::{file_digest, RunRecord};
use crate::{with_model, CliError};

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Simulate one dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Evaluate the log-likelihood of a dataset with PF or PAL.
    Filter(FilterArgs),
    /// Simulate many datasets and score each with both filters.
    Compare(CompareArgs),
    /// Maximize the particle filter likelihood by iterated filtering.
    Mif(MifArgs),
    /// Maximize the PAL likelihood by coordinate gradient ascent.
    Cgd(CgdArgs),
    /// Log-ARMA benchmark AIC for a data panel.
    Benchmark(BenchmarkArgs),
    /// Flag conditional log-likelihood outliers near the start of a series.
    Anomaly(AnomalyArgs),
    /// Re-execute a logged run and check its outputs are reproduced.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of observation times.
    #[arg(long)]
    pub n_obs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pf,
    Pal,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FilterArgs {
    #[arg(long, value_enum, default_value_t = Method::Pf)]
    pub method: Method,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub particles: usize,
    /// Particle filter replicates (default 36). PAL always runs once.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// PAL process-noise draws per interval.
    #[arg(long, default_value_t = 25)]
    pub noise_draws: usize,
    /// Where to write `time,cond_loglik,ess`.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Parameter values overriding those in the config (JSON entry list).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Reporting-rate sidecar for rescaled data (default `<data stem>.rates.csv`).
    #[arg(long)]
    pub rates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_datasets: usize,
    /// Output prefix: writes `<prefix>.json`, `<prefix>.csv` and `<prefix>.svg`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub particles: usize,
    #[arg(long, default_value_t = 8)]
    pub replicates: usize,
    #[arg(long, default_value_t = 25)]
    pub noise_draws: usize,
    #[arg(long)]
    pub n_obs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MifArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Search settings: `rw_sd`, `cooling`, `ivp_names`, `iterations`, `particles`, `replicates`.
    #[arg(long)]
    pub search: PathBuf,
    /// Fitted parameters (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub rates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CgdArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Search settings: `free`, `noise_draws`, and step-size controls.
    #[arg(long)]
    pub search: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub rates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// ARMA orders `p,q`.
    #[arg(long, default_value = "2,1")]
    pub orders: String,
    /// `auto` (shift by 1 only when the data contain zeros), `none`, or a number.
    #[arg(long, default_value = "auto")]
    pub zero_shift: String,
    /// Report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full report, including fitted coefficients, as JSON.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    /// Evaluate at the fits stored in a previous JSON report instead of refitting.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    /// Added to every fitted mean when `--fits` is given.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mean_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnomalyArgs {
    #[arg(long)]
    pub diagnostics: PathBuf,
    #[arg(long, default_value_t = 26)]
    pub window: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// Run log to read (default: the global `--runs` path).
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Zero-based line in the log (default: the last record).
    #[arg(long)]
    pub index: Option<usize>,
    /// Directory for the re-created inputs and outputs.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
}

/// Result of a successful subcommand.
#[derive(Debug, Default)]
pub struct Outcome {
    pub config: Option<Value>,
    pub outputs: Value,
    pub stdout: Vec<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Filter(_) => "filter",
            Command::Compare(_) => "compare",
            Command::Mif(_) => "mif",
            Command::Cgd(_) => "cgd",
            Command::Benchmark(_) => "benchmark",
            Command::Anomaly(_) => "anomaly",
            Command::Rerun(_) => "rerun",
        }
    }

    /// Files this command reads, keyed by flag name.
    pub fn inputs(&self) -> Vec<(&'static str, PathBuf)> {
        fn data_inputs(v: &mut Vec<(&'static str, PathBuf)>, data: &Path, rates: &Option<PathBuf>) {
            v.push(("data", data.to_path_buf()));
            match rates {
                Some(r) => v.push(("rates", r.clone())),
                None => {
                    let side = rates_path(data);
                    if side.exists() {
                        v.push(("rates", side));
                    }
                }
            }
        }
        let mut v = Vec::new();
        match self {
            Command::Simulate(a) => v.push(("config", a.config.clone())),
            Command::Filter(a) => {
                v.push(("config", a.config.clone()));
                data_inputs(&mut v, &a.data, &a.rates);
                if let Some(p) = &a.params {
                    v.push(("params", p.clone()));
                }
            }
            Command::Compare(a) => v.push(("config", a.config.clone())),
            Command::Mif(MifArgs {
                data,
                config,
                search,
                params,
                rates,
                ..
            })
            | Command::Cgd(CgdArgs {
                data,
                config,
                search,
                params,
                rates,
                ..
            }) => {
                v.push(("config", config.clone()));
                v.push(("search", search.clone()));
                data_inputs(&mut v, data, rates);
                if let Some(p) = params {
                    v.push(("params", p.clone()));
                }
            }
            Command::Benchmark(a) => {
                v.push(("data", a.data.clone()));
                if let Some(f) = &a.fits {
                    v.push(("fits", f.clone()));
                }
            }
            Command::Anomaly(a) => v.push(("diagnostics", a.diagnostics.clone())),
            Command::Rerun(_) => {}
        }
        v
    }

    /// Points inputs at re-created files and outputs into `dir`.
    fn relocate(&mut self, inputs: &BTreeMap<String, PathBuf>, dir: &Path) {
        let input = |k: &str| inputs.get(k).cloned();
        let out = |name: &str| dir.join(name);
        let file_name = |p: &Path, fallback: &str| {
            out(&p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| fallback.to_string()))
        };
        match self {
            Command::Simulate(a) => {
                a.config = input("config").unwrap_or_default();
                a.out = file_name(&a.out, "data.csv");
            }
            Command::Filter(a) => {
                a.config = input("config").unwrap_or_default();
                a.data = input("data").unwrap_or_default();
                a.rates = input("rates");
                a.params = input("params");
                a.diagnostics = a.diagnostics.as_ref().map(|d| file_name(d, "diagnostics.csv"));
            }
            Command::Compare(a) => {
                a.config = input("config").unwrap_or_default();
                a.out = file_name(&a.out, "compare");
            }
            Command::Mif(MifArgs {
                data,
                config,
                search,
                out: o,
                trace,
                params,
                rates,
            })
            | Command::Cgd(CgdArgs {
                data,
                config,
                search,
                out: o,
                trace,
                params,
                rates,
            }) => {
                *config = input("config").unwrap_or_default();
                *search = input("search").unwrap_or_default();
                *data = input("data").unwrap_or_default();
                *rates = input("rates");
                *params = input("params");
                *o = file_name(o, "params.json");
                *trace = trace.as_ref().map(|t| file_name(t, "trace.csv"));
            }
            Command::Benchmark(a) => {
                a.data = input("data").unwrap_or_default();
                a.fits = input("fits");
                a.out = a.out.as_ref().map(|p| file_name(p, "benchmark.csv"));
                a.report_json = a.report_json.as_ref().map(|p| file_name(p, "benchmark.json"));
            }
            Command::Anomaly(a) => {
                a.diagnostics = input("diagnostics").unwrap_or_default();
                a.out = a.out.as_ref().map(|p| file_name(p, "anomaly.json"));
            }
            Command::Rerun(_) => {}
        }
    }

    pub fn execute(&self, seed: u64, runs: &Path) -> Result<Outcome, CliError> {
        match self {
            Command::Simulate(a) => cmd_simulate(a, seed),
            Command::Filter(a) => cmd_filter(a, seed),
            Command::Compare(a) => cmd_compare(a, seed),
            Command::Mif(a) => cmd_mif(a, seed),
            Command::Cgd(a) => cmd_cgd(a, seed),
            Command::Benchmark(a) => cmd_benchmark(a),
            Command::Anomaly(a) => cmd_anomaly(a),
            Command::Rerun(a) => cmd_rerun(a, runs),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Config parameters, with values overridden from `--params` when given.
fn start_params(cfg: &LoadedConfig, path: Option<&Path>) -> Result<ParameterSet, CliError> {
    let mut ps = cfg.params()?;
    if let Some(path) = path {
        let over: ParameterSet = read_json(path)?;
        for (name, value, _) in over.iter() {
            ps.set(name, value)?;
        }
        ps.validate()?;
    }
    Ok(ps)
}

fn param_map(ps: &ParameterSet) -> Value {
    let m: serde_json::Map<String, Value> = ps.iter().map(|(n, v, _)| (n.to_string(), json!(v))).collect();
    Value::Object(m)
}

fn finite_or_numeric(v: f64, what: &str) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("{what} is not finite ({v})")))
    }
}

fn summary_line(loglik: f64, k: usize) -> String {
    format!("loglik={loglik} aic={} n_params={k}", aic(loglik, k))
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<Outcome, CliError> {
    let mut cfg = LoadedConfig::load(&a.config)?;
    if let Some(n) = a.n_obs {
        cfg.set_n_obs(n);
    }
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let sim_seed = derive_seed(seed, "simulate", 0);
    let obs = with_model!(cfg, |m| { simulate(m, &params, &grid, sim_seed)?.1 });
    obs.write_csv(create(&a.out)?)?;
    let mut files = serde_json::Map::new();
    files.insert("out".into(), json!(file_digest(&a.out)?));
    if obs.scale == DataScale::RescaledCounts {
        let side = rates_path(&a.out);
        obs.write_rates_csv(create(&side)?)?;
        files.insert("rates".into(), json!(file_digest(&side)?));
    }
    Ok(Outcome {
        config: Some(json!({ "model": cfg.to_value(), "settings": {"simulate_seed": sim_seed} })),
        outputs: json!({
            "rows": obs.len(),
            "columns": obs.dim(),
            "zero_count": obs.zero_count(),
            "files": files,
        }),
        stdout: vec![format!("rows={} columns={} zeros={}", obs.len(), obs.dim(), obs.zero_count())],
    })
}

fn cmd_filter(a: &FilterArgs, seed: u64) -> Result<Outcome, CliError> {
    let cfg = LoadedConfig::load(&a.config)?;
    let obs = cfg.read_data(&a.data, a.rates.as_deref())?;
    let params = start_params(&cfg, a.params.as_deref())?;
    let k = cfg.n_params()?;
    let t0 = cfg.t0();
    let (ll, settings, extra) = match a.method {
        Method::Pf => {
            let s = PfSettings {
                particles: a.particles,
                replicates: a.replicates.unwrap_or(36),
                resample: ResamplePolicy::Always,
                seed,
            };
            let r = with_model!(cfg, |m| { replicated_pfilter(m, &obs, t0, &params, &s)? });
            let extra = json!({
                "se": r.se,
                "mean_of_logliks": r.mean_of_logliks,
                "replicate_totals": r.replicate_totals,
            });
            (r.combined, serde_json::to_value(&s).expect("serializable"), extra)
        }
        Method::Pal => {
            if a.replicates.is_some_and(|r| r > 1) {
                eprintln!(
                    "warning: replication is unnecessary for PAL, whose Monte Carlo variance is low; \
                     running a single deterministic evaluation"
                );
            }
            let s = PalSettings {
                noise_draws: a.noise_draws,
                seed,
                ..PalSettings::default()
            };
            let r = with_model!(cfg, |m| { pal_filter(m, &obs, t0, &params, &s)? });
            let extra = json!({ "floor_events": r.floor_events });
            (r, serde_json::to_value(&s).expect("serializable"), extra)
        }
    };
    let mut files = serde_json::Map::new();
    if let Some(d) = &a.diagnostics {
        ll.write_diagnostics(&obs.times, create(d)?)?;
        files.insert("diagnostics".into(), json!(file_digest(d)?));
    }
    let line = summary_line(ll.total, k);
    if !ll.total.is_finite() {
        println!("{line}");
        return Err(CliError::Numeric(format!(
            "log-likelihood is not finite; failed at observation indices {:?}",
            ll.failed_times
        )));
    }
    Ok(Outcome {
        config: Some(json!({
            "model": cfg.to_value(),
            "settings": { "method": a.method, "filter": settings, "params": param_map(&params) },
        })),
        outputs: json!({
            "loglik": ll.total,
            "aic": aic(ll.total, k),
            "n_params": k,
            "details": extra,
            "files": files,
        }),
        stdout: vec![line],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePair {
    pub dataset: usize,
    pub pf_loglik: f64,
    pub pal_loglik: f64,
    pub pf_se: f64,
    pub zero_count: usize,
    pub failed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub pairs: Vec<ComparePair>,
    /// Mean of `pf - pal` over datasets where both filters succeeded.
    pub mean_gap: f64,
    pub n_included: usize,
    pub n_pf_ge_pal: usize,
    pub n_failed: usize,
    /// Always 0: datasets with zero counts are scored like any other.
    pub disqualified: usize,
    /// One-sided sign test of `PF >= PAL` against a fair coin.
    pub sign_test_p: f64,
}

impl CompareSummary {
    pub fn from_pairs(pairs: Vec<ComparePair>) -> Self {
        let included: Vec<&ComparePair> = pairs.iter().filter(|p| !p.failed).collect();
        let n = included.len();
        let gaps: Vec<f64> = included.iter().map(|p| p.pf_loglik - p.pal_loglik).collect();
        let n_ge = gaps.iter().filter(|g| **g >= 0.0).count();
        Self {
            mean_gap: if n == 0 { f64::NAN } else { gaps.iter().sum::<f64>() / n as f64 },
            n_included: n,
            n_pf_ge_pal: n_ge,
            n_failed: pairs.len() - n,
            disqualified: 0,
            sign_test_p: binomial_upper_tail(n_ge, n, 0.5),
            pairs,
        }
    }
}

fn cmd_compare(a: &CompareArgs, seed: u64) -> Result<Outcome, CliError> {
    let mut cfg = LoadedConfig::load(&a.config)?;
    if let Some(n) = a.n_obs {
        cfg.set_n_obs(n);
    }
    if a.n_datasets == 0 {
        return Err(CliError::Input("--n-datasets must be at least 1".into()));
    }
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let t0 = cfg.t0();
    let pf_base = PfSettings {
        particles: a.particles,
        replicates: a.replicates,
        resample: ResamplePolicy::Always,
        seed,
    };
    pf_base.validate()?;
    let pal_base = PalSettings {
        noise_draws: a.noise_draws,
        seed,
        ..PalSettings::default()
    };
    pal_base.validate()?;
    let pairs: Vec<ComparePair> = with_model!(cfg, |m| {
        if m.pal().is_none() {
            return Err(Error::PalUnavailable.into());
        }
        (0..a.n_datasets)
            .into_par_iter()
            .map(|i| {
                let mut pair = ComparePair {
                    dataset: i,
                    pf_loglik: f64::NAN,
                    pal_loglik: f64::NAN,
                    pf_se: f64::NAN,
                    zero_count: 0,
                    failed: false,
                    error: None,
                };
                let run = || -> pomp::Result<(ObservationSeries, f64, f64, f64)> {
                    let (_, obs) = simulate(m, &params, &grid, derive_seed(seed, "simulate", i as u64))?;
                    let pf = replicated_pfilter(
                        m,
                        &obs,
                        t0,
                        &params,
                        &PfSettings {
                            seed: derive_seed(seed, "pf", i as u64),
                            ..pf_base.clone()
                        },
                    )?;
                    let pal = pal_filter(
                        m,
                        &obs,
                        t0,
                        &params,
                        &PalSettings {
                            seed: derive_seed(seed, "pal", i as u64),
                            ..pal_base.clone()
                        },
                    )?;
                    Ok((obs, pf.combined.total, pf.se, pal.total))
                };
                match run() {
                    Ok((obs, pf, se, pal)) => {
                        pair.zero_count = obs.zero_count();
                        pair.pf_loglik = pf;
                        pair.pf_se = se;
                        pair.pal_loglik = pal;
                        if !(pf.is_finite() && pal.is_finite()) {
                            pair.failed = true;
                            pair.error = Some("non-finite log-likelihood".into());
                        }
                    }
                    Err(e) => {
                        pair.failed = true;
                        pair.error = Some(e.to_string());
                    }
                }
                pair
            })
            .collect()
    });
    let summary = CompareSummary::from_pairs(pairs);
    let prefix = a.out.to_string_lossy().into_owned();
    let json_path = PathBuf::from(format!("{prefix}.json"));
    let csv_path = PathBuf::from(format!("{prefix}.csv"));
    let svg_path = PathBuf::from(format!("{prefix}.svg"));
    write_file(
        &json_path,
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Input(e.to_string()))? + "\n",
    )?;
    let mut csv = String::from("dataset,pf_loglik,pal_loglik\n");
    for p in &summary.pairs {
        csv.push_str(&format!("{},{},{}\n", p.dataset, p.pf_loglik, p.pal_loglik));
    }
    write_file(&csv_path, csv)?;
    let points: Vec<(f64, f64)> = summary
        .pairs
        .iter()
        .filter(|p| !p.failed)
        .map(|p| (p.pal_loglik, p.pf_loglik))
        .collect();
    write_file(&svg_path, crate::svg::scatter(&points, "PAL log-likelihood", "PF log-likelihood"))?;
    Ok(Outcome {
        config: Some(json!({
            "model": cfg.to_value(),
            "settings": { "pf": pf_base, "pal": pal_base, "n_datasets": a.n_datasets },
        })),
        outputs: json!({
            "mean_gap": summary.mean_gap,
            "n_included": summary.n_included,
            "n_pf_ge_pal": summary.n_pf_ge_pal,
            "n_failed": summary.n_failed,
            "sign_test_p": summary.sign_test_p,
            "files": {
                "json": file_digest(&json_path)?,
                "csv": file_digest(&csv_path)?,
                "svg": file_digest(&svg_path)?,
            },
        }),
        stdout: vec![format!(
            "mean_gap={} pf_ge_pal={}/{} failed={} sign_test_p={}",
            summary.mean_gap, summary.n_pf_ge_pal, summary.n_included, summary.n_failed, summary.sign_test_p
        )],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MifSearch {
    #[serde(default)]
    pub rw_sd: BTreeMap<String, f64>,
    #[serde(default = "default_cooling")]
    pub cooling: f64,
    #[serde(default)]
    pub ivp_names: Vec<String>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_mif_particles")]
    pub particles: usize,
    #[serde(default = "default_mif_replicates")]
    pub replicates: usize,
}

fn default_cooling() -> f64 {
    PerturbationSpec::default().cooling
}
fn default_iterations() -> usize {
    30
}
fn default_mif_particles() -> usize {
    2000
}
fn default_mif_replicates() -> usize {
    8
}
fn default_noise_draws() -> usize {
    PalSettings::default().noise_draws
}

fn cmd_mif(a: &MifArgs, seed: u64) -> Result<Outcome, CliError> {
    let cfg = LoadedConfig::load(&a.config)?;
    let search: MifSearch = read_json(&a.search)?;
    let obs = cfg.read_data(&a.data, a.rates.as_deref())?;
    let start = start_params(&cfg, a.params.as_deref())?;
    let k = cfg.n_params()?;
    let t0 = cfg.t0();
    let spec = PerturbationSpec {
        rw_sd: search.rw_sd.clone(),
        cooling: search.cooling,
        ivp_names: search.ivp_names.clone(),
    };
    let settings = PfSettings {
        particles: search.particles,
        replicates: search.replicates,
        resample: ResamplePolicy::Always,
        seed,
    };
    let result = with_model!(cfg, |m| { mif2(m, &obs, t0, &start, &spec, search.iterations, &settings) });
    let result = match result {
        Ok(r) => r,
        Err(Error::MifCollapse { iteration, trace }) => {
            if let Some(t) = &a.trace {
                trace.write_csv(create(t)?)?;
            }
            return Err(Error::MifCollapse { iteration, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_file(
        &a.out,
        serde_json::to_string_pretty(&result.params).map_err(|e| CliError::Input(e.to_string()))? + "\n",
    )?;
    let mut files = serde_json::Map::new();
    files.insert("out".into(), json!(file_digest(&a.out)?));
    if let Some(t) = &a.trace {
        result.trace.write_csv(create(t)?)?;
        files.insert("trace".into(), json!(file_digest(t)?));
    }
    finite_or_numeric(result.final_loglik, "final log-likelihood")?;
    Ok(Outcome {
        config: Some(json!({ "model": cfg.to_value(), "settings": search })),
        outputs: json!({
            "loglik": result.final_loglik,
            "se": result.final_se,
            "aic": aic(result.final_loglik, k),
            "n_params": k,
            "start_loglik": result.start_loglik,
            "start_se": result.start_se,
            "improvement_verified": result.improvement_verified,
            "params": param_map(&result.params),
            "files": files,
        }),
        stdout: vec![
            summary_line(result.final_loglik, k),
            format!(
                "start_loglik={} se={} improvement_verified={}",
                result.start_loglik, result.final_se, result.improvement_verified
            ),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgdSearch {
    #[serde(default)]
    pub free: Vec<String>,
    #[serde(default = "default_noise_draws")]
    pub noise_draws: usize,
    #[serde(flatten)]
    pub settings: CgdSettings,
}

fn cmd_cgd(a: &CgdArgs, seed: u64) -> Result<Outcome, CliError> {
    let cfg = LoadedConfig::load(&a.config)?;
    let search: CgdSearch = read_json(&a.search)?;
    let obs = cfg.read_data(&a.data, a.rates.as_deref())?;
    let start = start_params(&cfg, a.params.as_deref())?;
    let k = cfg.n_params()?;
    let t0 = cfg.t0();
    let pal = PalSettings {
        noise_draws: search.noise_draws,
        seed,
        ..PalSettings::default()
    };
    let (fitted, trace, ll) = with_model!(cfg, |m| {
        let (fitted, trace) = cgd_maximize(m, &obs, t0, &start, &search.free, &pal, &search.settings)?;
        let ll: LogLikResult = pal_filter(m, &obs, t0, &fitted, &pal)?;
        (fitted, trace, ll)
    });
    write_file(
        &a.out,
        serde_json::to_string_pretty(&fitted).map_err(|e| CliError::Input(e.to_string()))? + "\n",
    )?;
    let mut files = serde_json::Map::new();
    files.insert("out".into(), json!(file_digest(&a.out)?));
    if let Some(t) = &a.trace {
        trace.write_csv(&start, create(t)?)?;
        files.insert("trace".into(), json!(file_digest(t)?));
    }
    finite_or_numeric(ll.total, "final log-likelihood")?;
    Ok(Outcome {
        config: Some(json!({ "model": cfg.to_value(), "settings": search })),
        outputs: json!({
            "loglik": ll.total,
            "aic": aic(ll.total, k),
            "n_params": k,
            "sweeps": trace.sweeps.len(),
            "params": param_map(&fitted),
            "files": files,
        }),
        stdout: vec![summary_line(ll.total, k)],
    })
}

fn parse_orders(s: &str) -> Result<ArmaSpec, CliError> {
    let bad = || CliError::Input(format!("--orders expects `p,q`, got `{s}`"));
    let (p, q) = s.split_once(',').ok_or_else(bad)?;
    let p = p.trim().parse().map_err(|_| bad())?;
    let q = q.trim().parse().map_err(|_| bad())?;
    Ok(ArmaSpec::new(p, q))
}

fn parse_zero_shift(s: &str, obs: &ObservationSeries) -> Result<ZeroPolicy, CliError> {
    match s {
        "auto" => Ok(if obs.values.iter().flatten().any(|v| *v <= 0.0) {
            ZeroPolicy::Shift(1.0)
        } else {
            ZeroPolicy::Reject
        }),
        "none" => Ok(ZeroPolicy::Reject),
        other => {
            let v: f64 = other
                .parse()
                .map_err(|_| CliError::Input(format!("--zero-shift expects auto, none or a number, got `{other}`")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::Input(format!("--zero-shift {v} must be finite and nonnegative")));
            }
            Ok(if v == 0.0 { ZeroPolicy::Reject } else { ZeroPolicy::Shift(v) })
        }
    }
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<Outcome, CliError> {
    let obs = ObservationSeries::read_csv(&a.data, DataScale::RawCounts)?;
    let zero = parse_zero_shift(&a.zero_shift, &obs)?;
    let report = match &a.fits {
        Some(path) => {
            let prev: pomp::arma::BenchmarkReport = read_json(path)?;
            let fits: Vec<ArmaFit> = prev.columns.iter().map(|c| c.fit.shifted(a.mean_shift)).collect();
            benchmark_at(&obs, &fits, zero)?
        }
        None => benchmark_aic(&obs, &parse_orders(&a.orders)?, zero)?,
    };
    let mut files = serde_json::Map::new();
    if let Some(p) = &a.out {
        report.write_csv(create(p)?)?;
        files.insert("out".into(), json!(file_digest(p)?));
    }
    if let Some(p) = &a.report_json {
        write_file(
            p,
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(e.to_string()))? + "\n",
        )?;
        files.insert("report_json".into(), json!(file_digest(p)?));
    }
    finite_or_numeric(report.loglik_natural, "benchmark log-likelihood")?;
    Ok(Outcome {
        config: Some(json!({
            "settings": {
                "orders": a.orders,
                "zero_policy": zero,
                "fits": a.fits.is_some(),
                "mean_shift": a.mean_shift,
            },
        })),
        outputs: json!({
            "loglik": report.loglik_natural,
            "loglik_transformed": report.loglik_transformed,
            "jacobian": report.jacobian,
            "aic": report.aic,
            "n_params": report.n_params,
            "shift": report.shift,
            "files": files,
        }),
        stdout: vec![format!(
            "loglik={} aic={} n_params={}",
            report.loglik_natural, report.aic, report.n_params
        )],
    })
}

fn cmd_anomaly(a: &AnomalyArgs) -> Result<Outcome, CliError> {
    let f = std::fs::File::open(&a.diagnostics)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", a.diagnostics.display())))?;
    let (_, ll) = LogLikResult::read_diagnostics(f)?;
    let report = initial_condition_anomaly_report(&ll, a.window, a.k)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(e.to_string()))? + "\n";
    let mut files = serde_json::Map::new();
    if let Some(p) = &a.out {
        write_file(p, &text)?;
        files.insert("out".into(), json!(file_digest(p)?));
    }
    let mut outputs = serde_json::to_value(&report).expect("serializable");
    outputs["files"] = Value::Object(files);
    Ok(Outcome {
        config: Some(json!({ "settings": { "window": a.window, "k": a.k } })),
        outputs,
        stdout: vec![format!(
            "flagged={} in_window={} concentrated_early={} p_value={}",
            report.flagged.len(),
            report.flags_in_window,
            report.concentrated_early,
            report.p_value
        )],
    })
}

fn cmd_rerun(a: &RerunArgs, runs: &Path) -> Result<Outcome, CliError> {
    let log = a.record.as_deref().unwrap_or(runs);
    let records = RunRecord::read_all(log)?;
    if records.is_empty() {
        return Err(CliError::Input(format!("{} holds no records", log.display())));
    }
    let index = a.index.unwrap_or(records.len() - 1);
    let rec = records
        .get(index)
        .ok_or_else(|| CliError::Input(format!("record {index} out of range (log has {})", records.len())))?;
    if matches!(rec.command, Command::Rerun(_)) {
        return Err(CliError::Input(format!("record {index} is itself a rerun")));
    }
    let dir = match &a.outdir {
        Some(d) => d.clone(),
        None => std::env::temp_dir().join(format!(
            "rota3-rerun-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0)
        )),
    };
    let inputs_dir = dir.join("inputs");
    std::fs::create_dir_all(&inputs_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", inputs_dir.display())))?;
    let mut paths = BTreeMap::new();
    for (key, contents) in &rec.inputs {
        let p = match key.as_str() {
            "rates" => rates_path(&inputs_dir.join("data.csv")),
            "data" => inputs_dir.join("data.csv"),
            other => inputs_dir.join(other),
        };
        write_file(&p, contents)?;
        paths.insert(key.clone(), p);
    }
    let mut cmd = rec.command.clone();
    cmd.relocate(&paths, &dir);
    let outcome = cmd.execute(rec.seed, runs)?;
    let reproduced = outcome.outputs == rec.outputs;
    let mut stdout = outcome.stdout;
    stdout.push(format!("reproduced={reproduced} outdir={}", dir.display()));
    if !reproduced {
        for line in &stdout {
            println!("{line}");
        }
        return Err(CliError::Numeric(format!(
            "outputs differ from record {index}:\n  recorded: {}\n  rerun:    {}",
            rec.outputs, outcome.outputs
        )));
    }
    Ok(Outcome {
        config: None,
        outputs: json!({ "source_index": index, "source_subcommand": rec.subcommand, "reproduced": true }),
        stdout,
    })
}
