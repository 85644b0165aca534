//! Discrete-event simulator of an adaptive peer-to-peer resource lookup
//! overlay.
//!
//! Peers search for consumable resources with an epidemic (TTL-bounded,
//! duplicate-suppressed) lookup whose parameters are encoded in a three-gene
//! genotype. Each peer periodically evolves that genotype with a small
//! neighbourhood genetic algorithm driven by its query hit ratio. The run is
//! instrumented with emergence, self-organization, complexity and homeostasis
//! measures, and the [`stats`] module provides the cross-run analysis.
//!
//! The analytic modules ([`metrics`], [`genome`], [`stats`]) are generic over
//! the scalar type through [`Real`]; the aliases below pin them to `f64`,
//! which is what the simulator itself uses.

pub mod adaptation;
pub mod cli;
pub mod engine;
pub mod error;
pub mod genome;
pub mod metrics;
pub mod overlay;
pub mod protocol;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use genome::{FitnessKind, Genotype};
pub use scalar::Real;

pub type MeasureSet = metrics::MeasureSet<f64>;
pub type MeasureSet32 = metrics::MeasureSet<f32>;
pub type Phenotype = genome::Phenotype<f64>;
pub type Phenotype32 = genome::Phenotype<f32>;
pub type FitnessParams = genome::FitnessParams<f64>;
pub type FitnessParams32 = genome::FitnessParams<f32>;
pub type Interval = stats::Interval<f64>;
