use std::path::Path;

use pomp::data::{DataScale, ObservationSeries, TimeGrid};
use pomp::params::{ParamEntry, ParameterSet};
use pomp::rota::RotaConfig;
use pomp::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    DeterministicToy,
    ImmigrationDeath,
    Hmm2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    #[serde(default)]
    pub t0: f64,
    pub n_obs: usize,
    #[serde(default = "one")]
    pub interval: f64,
    pub params: Vec<ParamEntry>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Rota3(RotaConfig),
    Toy(ToyKind, ToyConfig),
}

/// A model configuration file: `{"model": <kind>, "n_params": <k>, ...}`.
/// `model` defaults to `rota3`; the remaining keys belong to that model.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub model: ModelConfig,
    pub n_params: Option<usize>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl LoadedConfig {
    pub fn from_value(mut v: Value) -> Result<Self> {
        let obj = v
            .as_object_mut()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        let kind = match obj.remove("model") {
            None => "rota3".to_string(),
            Some(Value::String(s)) => s,
            Some(other) => return Err(Error::Config(format!("`model` must be a string, got {other}"))),
        };
        let n_params = match obj.remove("n_params") {
            None => None,
            Some(n) => Some(
                n.as_u64()
                    .ok_or_else(|| Error::Config(format!("`n_params` must be a nonnegative integer, got {n}")))?
                    as usize,
            ),
        };
        let model = match kind.as_str() {
            "rota3" => {
                let cfg: RotaConfig = serde_json::from_value(v).map_err(config_err)?;
                cfg.validate()?;
                ModelConfig::Rota3(cfg)
            }
            other => {
                let kind: ToyKind = serde_json::from_value(Value::String(other.to_string())).map_err(|_| {
                    Error::Config(format!(
                        "unknown model `{other}` (expected rota3, deterministic_toy, immigration_death or hmm2)"
                    ))
                })?;
                let cfg: ToyConfig = serde_json::from_value(v).map_err(config_err)?;
                ModelConfig::Toy(kind, cfg)
            }
        };
        let loaded = Self { model, n_params };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(config_err)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    fn validate(&self) -> Result<()> {
        let ps = self.params()?;
        ps.validate()?;
        crate::with_model!(self, |m| {
            pomp::model::PompModel::resolve(m, &ps)?;
        });
        self.grid()?;
        Ok(())
    }

    /// The configuration as JSON, with every default filled in.
    pub fn to_value(&self) -> Value {
        let (kind, mut v) = match &self.model {
            ModelConfig::Rota3(c) => ("rota3".to_string(), serde_json::to_value(c).expect("serializable")),
            ModelConfig::Toy(k, c) => (
                serde_json::to_value(k).expect("serializable").as_str().unwrap_or_default().to_string(),
                serde_json::to_value(c).expect("serializable"),
            ),
        };
        let obj = v.as_object_mut().expect("object");
        obj.insert("model".into(), Value::String(kind));
        if let Some(k) = self.n_params {
            obj.insert("n_params".into(), Value::from(k));
        }
        v
    }

    pub fn params(&self) -> Result<ParameterSet> {
        match &self.model {
            ModelConfig::Rota3(c) => c.parameter_set(),
            ModelConfig::Toy(_, c) => ParameterSet::from_entries(&c.params),
        }
    }

    pub fn set_n_obs(&mut self, n: usize) {
        match &mut self.model {
            ModelConfig::Rota3(c) => c.n_obs = n,
            ModelConfig::Toy(_, c) => c.n_obs = n,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        match &self.model {
            ModelConfig::Rota3(c) => c.grid(),
            ModelConfig::Toy(_, c) => TimeGrid::regular(c.t0, c.n_obs, c.interval),
        }
    }

    pub fn t0(&self) -> f64 {
        match &self.model {
            ModelConfig::Rota3(c) => c.t0,
            ModelConfig::Toy(_, c) => c.t0,
        }
    }

    pub fn scale(&self) -> DataScale {
        match &self.model {
            ModelConfig::Rota3(c) => c.scale,
            ModelConfig::Toy(..) => DataScale::RawCounts,
        }
    }

    /// Parameter count used for AIC.
    pub fn n_params(&self) -> Result<usize> {
        if let Some(k) = self.n_params {
            return Ok(k);
        }
        Ok(match &self.model {
            ModelConfig::Rota3(c) => c.model().active_parameters().len(),
            ModelConfig::Toy(_, c) => c.params.len(),
        })
    }

    /// Reads a data file for this model; rescaled models need a rate sidecar.
    pub fn read_data(&self, data: &Path, rates: Option<&Path>) -> Result<ObservationSeries> {
        match self.scale() {
            DataScale::RawCounts => ObservationSeries::read_csv(data, DataScale::RawCounts),
            DataScale::RescaledCounts => {
                let default = rates_path(data);
                let r = rates.unwrap_or(&default);
                ObservationSeries::read_csv_with_rates(data, r)
            }
        }
    }
}

/// `data.csv` -> `data.rates.csv`.
pub fn rates_path(data: &Path) -> std::path::PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}.rates.csv"))
}

/// Runs `$body` with `$m` bound to the configured model.
#[macro_export]
macro_rules! with_model {
    ($cfg:expr, |$m:ident| $body:block) => {
        match &$cfg.model {
            $crate::config::ModelConfig::Rota3(c) => {
                let model = c.model();
                let $m = &model;
                $body
            }
            $crate::config::ModelConfig::Toy($crate::config::ToyKind::DeterministicToy, _) => {
                let $m = &pomp::toys::DeterministicToy;
                $body
            }
            $crate::config::ModelConfig::Toy($crate::config::ToyKind::ImmigrationDeath, _) => {
                let $m = &pomp::toys::ImmigrationDeath;
                $body
            }
            $crate::config::ModelConfig::Toy($crate::config::ToyKind::Hmm2, _) => {
                let $m = &pomp::toys::TwoStateHmm;
                $body
            }
        }
    };
}
