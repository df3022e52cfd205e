//! Fused reverse-over-forward kernel for the tanh network.
//!
//! For every collocation point the forward pass carries each layer's
//! activation `a` and its time tangent `ȧ`; the reverse pass then
//! propagates adjoints of both channels back to the weights:
//!
//! ```text
//! a = tanh(z),  s = 1 − a²,  ȧ = s ⊙ ż
//! z̄ = s ⊙ (ā − 2a ⊙ ż ⊙ ǡ),   ż̄ = s ⊙ ǡ
//! W̄ += z̄ ⊗ a_prev + ż̄ ⊗ ȧ_prev,   b̄ += z̄
//! ```
//!
//! This is the path used in training. [`crate::loss::loss_terms`] evaluated
//! on tape variables is the slower reference it is tested against.

use crate::error::{Error, Result};
use crate::loss::{LossBreakdown, RegNorm, TrainingSet};
use crate::network::{LayerSpan, Network, NetworkShape, N_OUTPUTS};
use crate::physics::{ModelParams, Regime, StateJet, StateTriple};
use crate::scalar::Scalar;

/// Loss terms plus the gradient of `L^S + γ·penalty`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval<T> {
    pub terms: LossBreakdown<T>,
    pub grad: Vec<T>,
}

/// Reusable buffers for [`loss_gradient_into`]; one per worker.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    shape: NetworkShape,
    layers: Vec<LayerSpan>,
    // activations and tangents of layers 0..=D, stride W (layer 0 holds the input)
    act: Vec<T>,
    tan: Vec<T>,
    // ż of hidden layers 1..=D, stride W
    zdot: Vec<T>,
    abar: Vec<T>,
    adbar: Vec<T>,
    prev_abar: Vec<T>,
    prev_adbar: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(shape: NetworkShape) -> Self {
        let w = shape.width;
        Self {
            shape,
            layers: shape.layers(),
            act: vec![T::zero(); (shape.depth + 1) * w],
            tan: vec![T::zero(); (shape.depth + 1) * w],
            zdot: vec![T::zero(); (shape.depth + 1) * w],
            abar: vec![T::zero(); w],
            adbar: vec![T::zero(); w],
            prev_abar: vec![T::zero(); w],
            prev_adbar: vec![T::zero(); w],
        }
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    /// Forward value and tangent pass; caches every layer.
    fn forward(&mut self, params: &[T], t: T, seed: T) -> ([T; N_OUTPUTS], [T; N_OUTPUTS]) {
        let w = self.shape.width;
        let depth = self.shape.depth;
        self.act[0] = t;
        self.tan[0] = seed;
        for l in 0..depth {
            let span = &self.layers[l];
            let (cols, rows) = (span.cols, span.rows);
            let wts = &params[span.weights.clone()];
            let bias = &params[span.biases.clone()];
            let (prev, next) = self.act.split_at_mut((l + 1) * w);
            let (tprev, tnext) = self.tan.split_at_mut((l + 1) * w);
            let a_in = &prev[l * w..l * w + cols];
            let t_in = &tprev[l * w..l * w + cols];
            for r in 0..rows {
                let row = &wts[r * cols..(r + 1) * cols];
                let mut z = bias[r];
                let mut zd = T::zero();
                for c in 0..cols {
                    z += row[c] * a_in[c];
                    zd += row[c] * t_in[c];
                }
                let a = z.tanh();
                next[r] = a;
                tnext[r] = (T::one() - a * a) * zd;
                self.zdot[(l + 1) * w + r] = zd;
            }
        }
        let span = &self.layers[depth];
        let cols = span.cols;
        let wts = &params[span.weights.clone()];
        let bias = &params[span.biases.clone()];
        let a_in = &self.act[depth * w..depth * w + cols];
        let t_in = &self.tan[depth * w..depth * w + cols];
        let mut y = [T::zero(); N_OUTPUTS];
        let mut yd = [T::zero(); N_OUTPUTS];
        for r in 0..N_OUTPUTS {
            let row = &wts[r * cols..(r + 1) * cols];
            let mut v = bias[r];
            let mut vd = T::zero();
            for c in 0..cols {
                v += row[c] * a_in[c];
                vd += row[c] * t_in[c];
            }
            y[r] = v;
            yd[r] = vd;
        }
        (y, yd)
    }

    /// Accumulate into `grad` the parameter gradient given output adjoints
    /// `gy` (values) and `gyd` (tangents) of the last [`Self::forward`].
    fn backward(&mut self, params: &[T], gy: [T; N_OUTPUTS], gyd: [T; N_OUTPUTS], grad: &mut [T]) {
        let w = self.shape.width;
        let depth = self.shape.depth;

        let span = &self.layers[depth];
        let cols = span.cols;
        let a_in = &self.act[depth * w..depth * w + cols];
        let t_in = &self.tan[depth * w..depth * w + cols];
        let wts = &params[span.weights.clone()];
        for c in 0..cols {
            self.abar[c] = T::zero();
            self.adbar[c] = T::zero();
        }
        for r in 0..N_OUTPUTS {
            let g = gy[r];
            let gd = gyd[r];
            grad[span.biases.start + r] += g;
            let gw = &mut grad[span.weights.start + r * cols..span.weights.start + (r + 1) * cols];
            let row = &wts[r * cols..(r + 1) * cols];
            for c in 0..cols {
                gw[c] += g * a_in[c] + gd * t_in[c];
                self.abar[c] += row[c] * g;
                self.adbar[c] += row[c] * gd;
            }
        }

        for l in (1..=depth).rev() {
            let span = &self.layers[l - 1];
            let (rows, cols) = (span.rows, span.cols);
            let wts = &params[span.weights.clone()];
            for c in 0..cols {
                self.prev_abar[c] = T::zero();
                self.prev_adbar[c] = T::zero();
            }
            for r in 0..rows {
                let a = self.act[l * w + r];
                let s = T::one() - a * a;
                let zd = self.zdot[l * w + r];
                let adb = self.adbar[r];
                let zd_bar = s * adb;
                let z_bar = (self.abar[r] - T::of(2.0) * a * zd * adb) * s;
                grad[span.biases.start + r] += z_bar;
                let base = span.weights.start + r * cols;
                let row = &wts[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    let ap = self.act[(l - 1) * w + c];
                    let tp = self.tan[(l - 1) * w + c];
                    grad[base + c] += z_bar * ap + zd_bar * tp;
                    self.prev_abar[c] += row[c] * z_bar;
                    self.prev_adbar[c] += row[c] * zd_bar;
                }
            }
            std::mem::swap(&mut self.abar, &mut self.prev_abar);
            std::mem::swap(&mut self.adbar, &mut self.prev_adbar);
        }
    }
}

fn check_shape<T>(ws: &Workspace<T>, params: &[T]) -> Result<()> {
    if params.len() != ws.shape.n_params() {
        return Err(Error::Config(format!(
            "{} expects {} parameters, got {}",
            ws.shape,
            ws.shape.n_params(),
            params.len()
        )));
    }
    Ok(())
}

/// Outputs and their exact derivatives along input direction `seed`.
pub fn forward_tangent<T: Scalar>(net: &Network<T>, t: T, seed: T) -> Result<StateJet<T>> {
    let mut ws = Workspace::new(net.shape());
    check_shape(&ws, net.params())?;
    let (y, yd) = ws.forward(net.params(), t, seed);
    Ok(StateJet {
        value: StateTriple::new(y[0], y[1], y[2]),
        rate: StateTriple::new(yd[0], yd[1], yd[2]),
    })
}

/// Evaluate a network and its time derivative on a grid, reusing one
/// workspace.
pub fn trajectory<T: Scalar>(net: &Network<T>, times: &[T]) -> Vec<StateJet<T>> {
    let mut ws = Workspace::new(net.shape());
    times
        .iter()
        .map(|&t| {
            let (y, yd) = ws.forward(net.params(), t, T::one());
            StateJet {
                value: StateTriple::new(y[0], y[1], y[2]),
                rate: StateTriple::new(yd[0], yd[1], yd[2]),
            }
        })
        .collect()
}

/// Loss terms and `∂(L^S + γ·penalty)/∂θ`, written into `grad` (overwritten).
pub fn loss_gradient_into<T: Scalar>(
    params: &[T],
    ts: &TrainingSet<T>,
    p: &ModelParams<T>,
    gamma: f64,
    norm: RegNorm,
    ws: &mut Workspace<T>,
    grad: &mut [T],
) -> Result<LossBreakdown<T>> {
    check_shape(ws, params)?;
    assert_eq!(grad.len(), params.len());
    grad.iter_mut().for_each(|g| *g = T::zero());

    let (stefan, k0, qdot) = (p.stefan, p.k0, p.qdot);
    let a = T::one() - k0;
    let inv_s = T::one() / stefan;
    let n = T::of(ts.len() as f64);
    let w2 = T::of(2.0) / n;
    let mut sums = [T::zero(); 3];

    for &t in ts.points() {
        let (y, yd) = ws.forward(params, t, T::one());
        let [temp, conc, phi] = y;
        let [d_temp, d_conc, d_phi] = yd;
        let e_t = d_temp - d_phi * inv_s - qdot;
        let e_c = (T::one() - a * phi) * d_conc - (k0 + a * conc) * d_phi;
        let regime = Regime::of(temp.to_f64_lossy());
        let e_l = match regime {
            Regime::Liquid => phi,
            Regime::Mushy => temp + conc,
            Regime::Solid => phi - T::one(),
        };
        sums[0] += e_t * e_t;
        sums[1] += e_c * e_c;
        sums[2] += e_l * e_l;

        let (ge_t, ge_c, ge_l) = (w2 * e_t, w2 * e_c, w2 * e_l);
        let mut gy = [T::zero(), -ge_c * a * d_phi, -ge_c * a * d_conc];
        match regime {
            Regime::Mushy => {
                gy[0] += ge_l;
                gy[1] += ge_l;
            }
            Regime::Liquid | Regime::Solid => gy[2] += ge_l,
        }
        let gyd = [
            ge_t,
            ge_c * (T::one() - a * phi),
            -ge_t * inv_s - ge_c * (k0 + a * conc),
        ];
        ws.backward(params, gy, gyd, grad);
    }

    // initial condition at t = 0 (value channel only)
    let (y0, _) = ws.forward(params, T::zero(), T::zero());
    let two = T::of(2.0);
    ws.backward(
        params,
        [two * y0[0], two * y0[1], T::zero()],
        [T::zero(); N_OUTPUTS],
        grad,
    );

    let mut penalty = T::zero();
    if gamma != 0.0 {
        let g = T::of(gamma);
        for span in ws.layers.iter().take(ws.shape.depth) {
            let wts = &params[span.weights.clone()];
            let sq: T = wts.iter().map(|&w| w * w).sum();
            match norm {
                RegNorm::SquaredFrobenius => {
                    penalty += sq;
                    for (gw, &w) in grad[span.weights.clone()].iter_mut().zip(wts) {
                        *gw += two * g * w;
                    }
                }
                RegNorm::Frobenius => {
                    if sq > T::zero() {
                        let norm = sq.sqrt();
                        penalty += norm;
                        for (gw, &w) in grad[span.weights.clone()].iter_mut().zip(wts) {
                            *gw += g * w / norm;
                        }
                    }
                }
            }
        }
        penalty *= g;
    }

    let terms = LossBreakdown {
        energy: sums[0] / n,
        solute: sums[1] / n,
        liquidus: sums[2] / n,
        ic: y0[0] * y0[0] + y0[1] * y0[1],
        regularization: penalty,
    };
    if !terms.regularized().is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "loss or gradient not finite (L_T={}, L_Cl={}, L_liq={}, L_ic={})",
            terms.energy, terms.solute, terms.liquidus, terms.ic
        )));
    }
    Ok(terms)
}

/// Allocating convenience wrapper around [`loss_gradient_into`].
pub fn loss_gradient<T: Scalar>(
    net: &Network<T>,
    ts: &TrainingSet<T>,
    p: &ModelParams<T>,
    gamma: f64,
    norm: RegNorm,
) -> Result<LossEval<T>> {
    let mut ws = Workspace::new(net.shape());
    let mut grad = vec![T::zero(); net.params().len()];
    let terms = loss_gradient_into(net.params(), ts, p, gamma, norm, &mut ws, &mut grad)?;
    Ok(LossEval { terms, grad })
}
