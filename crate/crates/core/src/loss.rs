//! Standard and regularized training losses, the partial-regularization
//! schedule and the initial learning-rate rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Dual;
use crate::error::{Error, Result};
use crate::network::{evaluate, Network, NetworkShape};
use crate::physics::{ic_errors, residuals, ModelParams, StateJet};
use crate::scalar::{Real, Scalar};

/// How a hidden weight matrix contributes to the penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegNorm {
    /// `Σ_l ‖W_l‖_F²` (L2 weight decay).
    #[default]
    SquaredFrobenius,
    /// `Σ_l ‖W_l‖_F`, for sensitivity studies.
    Frobenius,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma1: f64,
    pub switch_epoch: usize,
    pub n_train: usize,
    pub reg_norm: RegNorm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma1: 1e-4,
            switch_epoch: 15_000,
            n_train: 200,
            reg_norm: RegNorm::SquaredFrobenius,
        }
    }
}

/// Regularization strength at epoch `n`: `γ₁` before the switchover, zero
/// from it on.
pub fn gamma_at(n: usize, cfg: &LossConfig) -> f64 {
    if n < cfg.switch_epoch {
        cfg.gamma1
    } else {
        0.0
    }
}

/// `λ₀ = 0.01 · min(1, (D·W/10)⁻²)`.
pub fn initial_lr(shape: NetworkShape) -> f64 {
    let ratio = shape.depth_times_width() as f64 / 10.0;
    0.01 * f64::min(1.0, ratio.powi(-2))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampling {
    /// `tᵢ = i/N₁`.
    #[default]
    Uniform,
    /// One uniformly random point in each of the `N₁` equal subintervals.
    Latin { seed: u64 },
}

/// Interior collocation points in `(0, 1]`; the initial condition is
/// always enforced at the single extra point `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet<T> {
    points: Vec<T>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Usage(
                "training set needs at least one interior point".into(),
            ));
        }
        let in_range = points.iter().all(|&t| t > T::zero() && t <= T::one());
        let increasing = points.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !increasing {
            return Err(Error::Usage(
                "interior points must be strictly increasing within (0, 1]".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn make_training_set<T: Scalar>(n1: usize, sampling: Sampling) -> Result<TrainingSet<T>> {
    if n1 == 0 {
        return Err(Error::Usage(
            "number of training points must be at least 1".into(),
        ));
    }
    let n = n1 as f64;
    let points = match sampling {
        Sampling::Uniform => (1..=n1).map(|i| T::of(i as f64 / n)).collect(),
        Sampling::Latin { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n1)
                .map(|i| {
                    let u = 1.0 - rng.gen::<f64>(); // (0, 1]
                    T::of(((i as f64 + u) / n).min(1.0))
                })
                .collect()
        }
    };
    TrainingSet::new(points)
}

/// The individual terms of the loss. Interior terms are already averaged
/// over the `N₁` points; `regularization` is already scaled by `γ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub energy: T,
    pub solute: T,
    pub liquidus: T,
    pub ic: T,
    pub regularization: T,
}

impl<T: Real> LossBreakdown<T> {
    /// `L^S`.
    pub fn standard(&self) -> T {
        self.energy + self.solute + self.liquidus + self.ic
    }

    /// `L^R = L^S + γ·penalty`.
    pub fn regularized(&self) -> T {
        self.standard() + self.regularization
    }
}

/// Penalty over the hidden weight matrices (input→hidden and
/// hidden→hidden). Output weights and all biases are not penalized.
pub fn weight_penalty<S: Real>(shape: NetworkShape, params: &[S], norm: RegNorm) -> S {
    let mut total = S::lift(0.0);
    for span in shape.layers().into_iter().take(shape.depth) {
        let sq = params[span.weights]
            .iter()
            .fold(S::lift(0.0), |acc, &w| acc + w * w);
        total = total
            + match norm {
                RegNorm::SquaredFrobenius => sq,
                RegNorm::Frobenius if sq.primal() == 0.0 => S::lift(0.0),
                RegNorm::Frobenius => sq.sqrt_ad(),
            };
    }
    total
}

/// Loss terms evaluated with any [`Real`] scalar.
///
/// The time derivatives come from a forward tangent nested inside `S`, so
/// `S = f64` gives the loss, `S = Dual<f64>` a directional derivative in
/// parameter space and `S = Var` a reverse-over-forward gradient.
pub fn loss_terms<S: Real, T: Scalar>(
    shape: NetworkShape,
    params: &[S],
    ts: &TrainingSet<T>,
    p: &ModelParams<T>,
    gamma: f64,
    norm: RegNorm,
) -> LossBreakdown<S> {
    let lifted: Vec<Dual<S>> = params.iter().map(|&w| Dual::constant(w)).collect();
    let mut sums = [S::lift(0.0); 3];
    for &t in ts.points() {
        let input = Dual::seeded(S::lift(t.primal()), S::lift(1.0));
        let jet = StateJet::from_duals(evaluate(shape, &lifted, input));
        let r = residuals(&jet, p);
        sums[0] = sums[0] + r.energy * r.energy;
        sums[1] = sums[1] + r.solute * r.solute;
        sums[2] = sums[2] + r.liquidus * r.liquidus;
    }
    let inv_n = S::lift(1.0 / ts.len() as f64);
    let [t0, c0, _] = evaluate(shape, params, S::lift(0.0));
    let (e_t, e_c) = ic_errors(&crate::physics::StateTriple::new(t0, c0, S::lift(0.0)));
    let regularization = if gamma == 0.0 {
        S::lift(0.0)
    } else {
        S::lift(gamma) * weight_penalty(shape, params, norm)
    };
    LossBreakdown {
        energy: sums[0] * inv_n,
        solute: sums[1] * inv_n,
        liquidus: sums[2] * inv_n,
        ic: e_t * e_t + e_c * e_c,
        regularization,
    }
}

/// `L^S`: mean squared interior residuals plus squared initial-condition
/// errors (the latter not averaged).
pub fn standard_loss<T: Scalar>(net: &Network<T>, ts: &TrainingSet<T>, p: &ModelParams<T>) -> T {
    loss_terms(net.shape(), net.params(), ts, p, 0.0, RegNorm::default()).standard()
}

/// `L^R = L^S + γ·Σ_l ‖W_l‖²` over the hidden layers.
pub fn regularized_loss<T: Scalar>(
    net: &Network<T>,
    ts: &TrainingSet<T>,
    p: &ModelParams<T>,
    gamma: f64,
    norm: RegNorm,
) -> T {
    loss_terms(net.shape(), net.params(), ts, p, gamma, norm).regularized()
}
