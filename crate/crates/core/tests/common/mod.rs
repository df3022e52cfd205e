//! Oracles shared by the integration tests.

#![allow(dead_code)]

use ttn::ModelParams;

/// Mushy-zone system reduced to (T, φ) with C = −T.
pub fn mushy_rhs(y: [f64; 2], p: &ModelParams<f64>) -> [f64; 2] {
    let [temp, phi] = y;
    let a = 1.0 - p.k0;
    let conc = -temp;
    let dphi = -p.qdot * (1.0 - a * phi) / ((p.k0 + a * conc) + (1.0 - a * phi) / p.stefan);
    [dphi / p.stefan + p.qdot, dphi]
}

/// Classical RK4 on [0, 1] from T = φ = 0, returning `(t, [T, φ])` every
/// `record_every` steps plus the start.
pub fn rk4(p: &ModelParams<f64>, steps: usize, record_every: usize) -> Vec<(f64, [f64; 2])> {
    let h = 1.0 / steps as f64;
    let mut y = [0.0, 0.0];
    let mut out = vec![(0.0, y)];
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    for i in 0..steps {
        let k1 = mushy_rhs(y, p);
        let k2 = mushy_rhs(add(y, k1, 0.5 * h), p);
        let k3 = mushy_rhs(add(y, k2, 0.5 * h), p);
        let k4 = mushy_rhs(add(y, k3, h), p);
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if (i + 1) % record_every == 0 {
            out.push(((i + 1) as f64 * h, y));
        }
    }
    out
}
