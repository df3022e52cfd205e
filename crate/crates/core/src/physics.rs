//! The lumped solidification model: energy balance with constant heat
//! extraction, lever-rule solute balance and the piecewise liquidus.
//!
//! ```text
//! dT/dt  = (1/S)·dφ/dt + q̇
//! [k₀φ + (1 − φ)]·dC/dt = k₀[1 + (1 − k₀)/k₀·C]·dφ/dt
//! T > 0: φ = 0      −1 < T ≤ 0: T + C = 0      T ≤ −1: φ = 1
//! T(0) = C(0) = 0
//! ```

use serde::{Deserialize, Serialize};

use crate::autodiff::Dual;
use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

pub const VARIABLE_NAMES: [&str; 3] = ["T", "Cl", "phi"];

/// Stefan number `S`, partition coefficient `k₀` and scaled heat
/// extraction rate `q̇*` (negative when cooling).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub stefan: T,
    pub k0: T,
    pub qdot: T,
}

impl Default for ModelParams<f64> {
    fn default() -> Self {
        Self {
            stefan: 0.1,
            k0: 0.1,
            qdot: -1.0,
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(stefan: T, k0: T, qdot: T) -> Result<Self> {
        let p = Self { stefan, k0, qdot };
        p.validate()?;
        Ok(p)
    }

    /// `S > 0`, `0 < k₀ < 1`, all finite.
    pub fn validate(&self) -> Result<()> {
        let finite = self.stefan.is_finite() && self.k0.is_finite() && self.qdot.is_finite();
        if !finite || self.stefan <= T::zero() || self.k0 <= T::zero() || self.k0 >= T::one() {
            return Err(Error::Domain(format!(
                "need S > 0 and 0 < k0 < 1 (got S={}, k0={}, qdot={})",
                self.stefan, self.k0, self.qdot
            )));
        }
        Ok(())
    }

    /// True when the exact temperature stays in the mushy range `(−1, 0]`
    /// and is non-increasing on `[0, 1]`.
    ///
    /// `dT/dt` has the sign of `q̇` wherever `T ≤ 0`, so this reduces to
    /// `q̇ ≤ 0` and `T(1) > −1`.
    pub fn is_mushy_valid(&self) -> bool {
        self.validate().is_ok()
            && self.qdot <= T::zero()
            && exact_temperature(T::one(), self).0 > -T::one()
    }

    pub fn require_mushy_valid(&self) -> Result<()> {
        self.validate()?;
        if !self.is_mushy_valid() {
            return Err(Error::Domain(format!(
                "parameters leave the mushy zone on [0, 1] (S={}, k0={}, qdot={}): \
                 need qdot <= 0 and T(1) > -1",
                self.stefan, self.k0, self.qdot
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            stefan: U::of(self.stefan.to_f64_lossy()),
            k0: U::of(self.k0.to_f64_lossy()),
            qdot: U::of(self.qdot.to_f64_lossy()),
        }
    }

    fn lifted<S: Real>(&self) -> (S, S, S) {
        (
            S::lift(self.stefan.primal()),
            S::lift(self.k0.primal()),
            S::lift(self.qdot.primal()),
        )
    }
}

/// Scaled temperature `T*`, liquid concentration `Cₗ*` and solid fraction `φₛ`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct StateTriple<T> {
    pub temp: T,
    pub conc: T,
    pub phi: T,
}

impl<T: Copy> StateTriple<T> {
    pub fn new(temp: T, conc: T, phi: T) -> Self {
        Self { temp, conc, phi }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.temp, self.conc, self.phi]
    }
}

/// A state together with its time derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct StateJet<T> {
    pub value: StateTriple<T>,
    pub rate: StateTriple<T>,
}

impl<T: Real> StateJet<T> {
    pub fn from_duals([temp, conc, phi]: [Dual<T>; 3]) -> Self {
        Self {
            value: StateTriple::new(temp.value, conc.value, phi.value),
            rate: StateTriple::new(temp.tangent, conc.tangent, phi.tangent),
        }
    }
}

/// Pointwise equation residuals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualBundle<S> {
    pub energy: S,
    pub solute: S,
    pub liquidus: S,
}

/// Which branch of the liquidus relation a temperature selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Liquid,
    Mushy,
    Solid,
}

impl Regime {
    pub fn of(temp: f64) -> Self {
        if temp > 0.0 {
            Regime::Liquid
        } else if temp > -1.0 {
            Regime::Mushy
        } else {
            Regime::Solid
        }
    }
}

/// Energy, solute and liquidus residuals at one point.
///
/// The liquidus branch is chosen from the predicted temperature's primal
/// value and treated as constant under differentiation.
pub fn residuals<S: Real, T: Scalar>(jet: &StateJet<S>, p: &ModelParams<T>) -> ResidualBundle<S> {
    let (stefan, k0, qdot) = p.lifted::<S>();
    let one = S::lift(1.0);
    let StateTriple { temp, conc, phi } = jet.value;
    let rate = jet.rate;

    let energy = rate.temp - rate.phi / stefan - qdot;
    let solute = (k0 * phi + (one - phi)) * rate.conc - (k0 + (one - k0) * conc) * rate.phi;
    let liquidus = match Regime::of(temp.primal()) {
        Regime::Liquid => phi,
        Regime::Mushy => temp + conc,
        Regime::Solid => phi - one,
    };
    ResidualBundle {
        energy,
        solute,
        liquidus,
    }
}

/// Initial-condition errors `(T(0), Cₗ(0))`.
pub fn ic_errors<S: Copy>(at_zero: &StateTriple<S>) -> (S, S) {
    (at_zero.temp, at_zero.conc)
}

/// Closed-form temperature and its derivative.
///
/// With `a = 1 − k₀`, eliminating `φ` through the lever rule gives the
/// quadratic `S·a·T² − B·T + S·k₀·q̇·t = 0`, `B = S·k₀ + 1 + S·a·q̇·t`. The
/// root with `T(0) = 0` is evaluated in the cancellation-free form
/// `T = 2·S·k₀·q̇·t / (B + √Δ)`, and `dT/dt = S·q̇·(k₀ − a·T)/√Δ`.
fn exact_temperature<T: Scalar>(t: T, p: &ModelParams<T>) -> (T, T) {
    let (s, k0, q) = (p.stefan, p.k0, p.qdot);
    let a = T::one() - k0;
    let two = T::of(2.0);
    let b = s * k0 + T::one() + s * a * q * t;
    let disc = b * b - T::of(4.0) * s * s * a * k0 * q * t;
    let root = disc.sqrt();
    let temp = two * s * k0 * q * t / (b + root);
    let rate = s * q * (k0 - a * temp) / root;
    (temp, rate)
}

/// Lever-rule solid fraction `φₛ = C / (k₀ + (1 − k₀)·C)` and `dφₛ/dC`.
pub fn lever_rule<T: Scalar>(conc: T, k0: T) -> (T, T) {
    let denom = k0 + (T::one() - k0) * conc;
    (conc / denom, k0 / (denom * denom))
}

/// The exact solution and its time derivatives at `t`.
pub fn exact_state<T: Scalar>(t: T, p: &ModelParams<T>) -> Result<StateJet<T>> {
    p.validate()?;
    let (temp, d_temp) = exact_temperature(t, p);
    if !(temp > -T::one() && temp <= T::zero()) {
        return Err(Error::Domain(format!(
            "exact temperature {temp} at t={t} is outside the mushy range (-1, 0]"
        )));
    }
    let (conc, d_conc) = (-temp, -d_temp);
    let (phi, dphi_dconc) = lever_rule(conc, p.k0);
    Ok(StateJet {
        value: StateTriple::new(temp, conc, phi),
        rate: StateTriple::new(d_temp, d_conc, dphi_dconc * d_conc),
    })
}

/// Per-variable L² and H¹ error norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport<T> {
    pub l2: [T; 3],
    pub h1: [T; 3],
    pub max_l2: T,
    pub max_h1: T,
}

/// `n` equally spaced points covering `[0, 1]`.
pub fn uniform_grid<T: Scalar>(n: usize) -> Vec<T> {
    let last = T::of((n.max(2) - 1) as f64);
    (0..n).map(|i| T::of(i as f64) / last).collect()
}

/// Composite-trapezoid L² and H¹ errors of `predicted` against the exact
/// solution on the grid `times`.
pub fn error_norms<T: Scalar>(
    times: &[T],
    predicted: &[StateJet<T>],
    p: &ModelParams<T>,
) -> Result<ErrorReport<T>> {
    if times.len() < 2 {
        return Err(Error::Usage(format!(
            "error norms need at least 2 grid points, got {}",
            times.len()
        )));
    }
    if times.len() != predicted.len() {
        return Err(Error::Usage(format!(
            "{} grid points but {} predictions",
            times.len(),
            predicted.len()
        )));
    }
    let exact: Vec<StateJet<T>> = times
        .iter()
        .map(|&t| exact_state(t, p))
        .collect::<Result<_>>()?;

    let half = T::of(0.5);
    let mut value_sq = [T::zero(); 3];
    let mut rate_sq = [T::zero(); 3];
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        for k in 0..3 {
            let e = |j: usize| predicted[j].value.as_array()[k] - exact[j].value.as_array()[k];
            let r = |j: usize| predicted[j].rate.as_array()[k] - exact[j].rate.as_array()[k];
            value_sq[k] += half * dt * (e(i - 1) * e(i - 1) + e(i) * e(i));
            rate_sq[k] += half * dt * (r(i - 1) * r(i - 1) + r(i) * r(i));
        }
    }
    let l2 = value_sq.map(|v| v.sqrt());
    let mut h1 = [T::zero(); 3];
    for k in 0..3 {
        h1[k] = (value_sq[k] + rate_sq[k]).sqrt();
    }
    let max = |xs: &[T; 3]| xs.iter().copied().fold(T::zero(), T::max);
    Ok(ErrorReport {
        max_l2: max(&l2),
        max_h1: max(&h1),
        l2,
        h1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_params() -> ModelParams<f64> {
        ModelParams::default()
    }

    #[test]
    fn superheated_rest_state_has_zero_residual() {
        let p = ModelParams::new(0.1, 0.1, 0.0).unwrap();
        let jet = StateJet {
            value: StateTriple::new(0.5, 0.0, 0.0),
            rate: StateTriple::default(),
        };
        let r = residuals(&jet, &p);
        assert_eq!((r.energy, r.solute, r.liquidus), (0.0, 0.0, 0.0));
    }

    #[test]
    fn liquidus_branches() {
        let p = default_params();
        let at = |temp: f64, conc: f64, phi: f64| {
            let jet = StateJet {
                value: StateTriple::new(temp, conc, phi),
                rate: StateTriple::default(),
            };
            residuals(&jet, &p).liquidus
        };
        assert!((at(-0.3, 0.2, 0.7) - (-0.1)).abs() < 1e-15);
        assert_eq!(at(0.2, 0.0, 0.3), 0.3);
        assert_eq!(at(-1.0, 0.0, 0.25), -0.75);
        assert_eq!(at(0.0, 0.4, 0.9), 0.4);
    }

    #[test]
    fn ic_errors_are_the_first_two_outputs() {
        assert_eq!(ic_errors(&StateTriple::new(0.0, 0.0, 0.5)), (0.0, 0.0));
        assert_eq!(ic_errors(&StateTriple::new(0.2, -0.1, 0.5)), (0.2, -0.1));
    }

    #[test]
    fn exact_state_at_zero_is_the_initial_condition() {
        let s = exact_state(0.0, &default_params()).unwrap();
        assert_eq!(s.value, StateTriple::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn exact_temperature_matches_the_published_closed_form() {
        let p = ModelParams::new(0.3, 0.2, -2.0).unwrap();
        let (s, k, q) = (p.stefan, p.k0, p.qdot);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let sq = ((s * q * (k - 1.0) * t + s * k - 1.0).powi(2) + 4.0 * s * k).sqrt();
            let reference =
                ((s * q * (1.0 - k) * t - sq - s * k + 1.0) / (2.0 * s) + k) / (1.0 - k);
            let ours = exact_state(t, &p).unwrap().value.temp;
            assert!(
                (ours - reference).abs() < 1e-12,
                "t={t}: {ours} vs {reference}"
            );
        }
    }

    #[test]
    fn lever_rule_endpoint_is_fully_solid() {
        for &k0 in &[0.05f64, 0.1, 0.5, 0.9] {
            assert!((lever_rule(1.0, k0).0 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_state_rejects_invalid_params() {
        assert!(exact_state(
            0.5,
            &ModelParams {
                stefan: -1.0,
                k0: 0.1,
                qdot: -1.0
            }
        )
        .is_err());
        assert!(exact_state(
            0.5,
            &ModelParams {
                stefan: 0.1,
                k0: 1.5,
                qdot: -1.0
            }
        )
        .is_err());
        // heating drives T above zero
        assert!(exact_state(
            0.5,
            &ModelParams {
                stefan: 0.1,
                k0: 0.1,
                qdot: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn mushy_validity() {
        assert!(default_params().is_mushy_valid());
        assert!(ModelParams::new(0.1, 0.1, 0.0).unwrap().is_mushy_valid());
        assert!(!ModelParams::new(0.1, 0.1, 1.0).unwrap().is_mushy_valid());
        assert!(!ModelParams::new(1.0, 0.1, -50.0).unwrap().is_mushy_valid());
    }

    #[test]
    fn exact_residuals_vanish_on_a_fine_grid() {
        let p = default_params();
        for t in uniform_grid::<f64>(1001) {
            let r = residuals(&exact_state(t, &p).unwrap(), &p);
            assert!(r.energy.abs() < 1e-12 && r.solute.abs() < 1e-12 && r.liquidus.abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_under_valid_params() {
        let p = default_params();
        let states: Vec<_> = uniform_grid::<f64>(201)
            .into_iter()
            .map(|t| exact_state(t, &p).unwrap())
            .collect();
        for w in states.windows(2) {
            assert!(w[1].value.temp <= w[0].value.temp);
            assert!(w[1].value.phi >= w[0].value.phi);
        }
    }

    fn exact_traj(p: &ModelParams<f64>, grid: &[f64]) -> Vec<StateJet<f64>> {
        grid.iter().map(|&t| exact_state(t, p).unwrap()).collect()
    }

    #[test]
    fn norms_of_exact_prediction_vanish() {
        let p = default_params();
        let grid = uniform_grid(1001);
        let r = error_norms(&grid, &exact_traj(&p, &grid), &p).unwrap();
        assert_eq!(r.max_l2, 0.0);
        assert_eq!(r.max_h1, 0.0);
    }

    #[test]
    fn norms_of_constant_and_linear_offsets() {
        let p = default_params();
        let grid = uniform_grid(1001);
        let mut shifted = exact_traj(&p, &grid);
        for s in &mut shifted {
            s.value.temp += 1.0;
        }
        let r = error_norms(&grid, &shifted, &p).unwrap();
        assert!((r.l2[0] - 1.0).abs() < 1e-12 && (r.h1[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.l2[1], 0.0);

        let mut ramped = exact_traj(&p, &grid);
        for (s, &t) in ramped.iter_mut().zip(&grid) {
            s.value.phi += t;
            s.rate.phi += 1.0;
        }
        let r = error_norms(&grid, &ramped, &p).unwrap();
        // trapezoid on t² over 1000 panels overestimates 1/3 by h²/6
        assert!((r.l2[2] - (1.0f64 / 3.0).sqrt()).abs() < 1e-6);
        assert!((r.h1[2] - (4.0f64 / 3.0).sqrt()).abs() < 1e-6);
        assert!(r.h1.iter().zip(&r.l2).all(|(h, l)| h >= l));
    }

    #[test]
    fn norms_need_two_points() {
        let p = default_params();
        let grid = [0.0];
        let traj = exact_traj(&p, &grid);
        assert!(matches!(
            error_norms(&grid, &traj, &p),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn f32_exact_state_is_close_to_f64() {
        let p64 = default_params();
        let p32: ModelParams<f32> = p64.cast();
        let a = exact_state(0.7f64, &p64).unwrap();
        let b = exact_state(0.7f32, &p32).unwrap();
        assert!((a.value.phi - b.value.phi as f64).abs() < 1e-5);
    }
}
