//! Theory-trained tanh networks for a coupled binary-alloy solidification
//! model, with the partial-regularization training schedule, an exact
//! analytical reference solution and a backward-Euler baseline.
//!
//! Numerical types are generic over the scalar (`f32`/`f64`); training runs
//! in `f64`. Concrete aliases are re-exported at the crate root.

pub mod autodiff;
pub mod error;
pub mod fdm;
pub mod harness;
pub mod loss;
pub mod network;
pub mod optim;
pub mod physics;
pub mod scalar;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{LossConfig, RegNorm, Sampling, TrainingSet};
pub use network::{Network, NetworkShape};
pub use physics::{ErrorReport, ModelParams, StateJet, StateTriple};
pub use scalar::{Real, Scalar};
pub use trainer::{RunRecord, TrainSchedule};

pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type StateJet64 = StateJet<f64>;
pub type StateJet32 = StateJet<f32>;
pub type TrainingSet64 = TrainingSet<f64>;
pub type Dual64 = autodiff::Dual<f64>;
