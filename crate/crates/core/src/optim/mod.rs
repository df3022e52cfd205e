mod adam;
mod lbfgs;

pub use adam::{Adam, AdamConfig};
pub use lbfgs::{minimize, IterRecord, LbfgsConfig, LbfgsOutcome, Objective, StopReason};
