//! Offline reinforcement-learning credit pricing on synthetic loan markets.

pub mod agent;
pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod market;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod response;
pub mod reward;
pub mod scalar;

pub use error::{Error, Result};
pub use config::{Precision, RunConfig};
pub use scalar::Scalar;

pub type Mlp = nn::Network<f64>;
pub type Mlp32 = nn::Network<f32>;
pub type CqlAgent = agent::Agent<f32>;
pub type CqlAgent64 = agent::Agent<f64>;
