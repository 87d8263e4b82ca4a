//! Likelihood-based inference for partially observed Markov process models
//! of count data.
//!
//! Two filters share one model abstraction ([`model::PompModel`]): a bootstrap
//! particle filter ([`pf`]) that only needs a simulator, and the Poisson
//! approximate likelihood filter ([`pal`]) that also needs the expected
//! transition structure. Each has a maximizer ([`mif`], [`pal::cgd_maximize`]),
//! and [`arma`] provides a log-ARMA benchmark to compare them against.

pub mod anomaly;
pub mod arma;
pub mod data;
pub mod error;
pub mod mif;
pub mod model;
pub mod pal;
pub mod params;
pub mod pf;
pub mod rng;
pub mod rota;
pub mod sampling;
pub mod stats;
pub mod toys;

pub use error::{Error, Result};
