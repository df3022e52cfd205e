//! Exact derivatives of network outputs with respect to time and of the
//! training loss with respect to every parameter.
//!
//! Three independent routes are provided:
//!
//! * [`kernel`]: the fused reverse-over-forward pass used in training,
//! * [`tape_loss_gradient`]: the generic loss evaluated on [`Var`] tape
//!   variables, i.e. reverse mode over the forward time tangent,
//! * [`directional_derivative`]: forward-over-forward through nested
//!   [`Dual`] numbers.

mod dual;
pub mod kernel;
mod tape;

pub use dual::Dual;
pub use kernel::{
    forward_tangent, loss_gradient, loss_gradient_into, trajectory, LossEval, Workspace,
};
pub use tape::{Adjoints, Node, OpKind, Tape, Var};

use crate::loss::{loss_terms, LossBreakdown, RegNorm, TrainingSet};
use crate::network::Network;
use crate::physics::ModelParams;
use crate::scalar::Scalar;

/// Gradient of `L^S + γ·penalty` by a reverse sweep over a recorded tape.
pub fn tape_loss_gradient<T: Scalar>(
    net: &Network<T>,
    ts: &TrainingSet<T>,
    p: &ModelParams<T>,
    gamma: f64,
    norm: RegNorm,
) -> (LossBreakdown<f64>, Vec<f64>) {
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = net
        .params()
        .iter()
        .map(|w| tape.var(w.to_f64_lossy()))
        .collect();
    let terms = loss_terms(net.shape(), &leaves, ts, p, gamma, norm);
    let adjoints = tape.gradient(terms.regularized());
    let grad = leaves.iter().map(|v| adjoints.wrt(v)).collect();
    let plain = LossBreakdown {
        energy: terms.energy.value(),
        solute: terms.solute.value(),
        liquidus: terms.liquidus.value(),
        ic: terms.ic.value(),
        regularization: terms.regularization.value(),
    };
    (plain, grad)
}

/// Derivative of `L^S + γ·penalty` along parameter direction `dir`.
pub fn directional_derivative<T: Scalar>(
    net: &Network<T>,
    ts: &TrainingSet<T>,
    p: &ModelParams<T>,
    gamma: f64,
    norm: RegNorm,
    dir: &[f64],
) -> f64 {
    assert_eq!(dir.len(), net.params().len());
    let params: Vec<Dual<f64>> = net
        .params()
        .iter()
        .zip(dir)
        .map(|(w, &d)| Dual::seeded(w.to_f64_lossy(), d))
        .collect();
    loss_terms(net.shape(), &params, ts, p, gamma, norm)
        .regularized()
        .tangent
}
