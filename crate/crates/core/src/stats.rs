//! Loss-curve oscillation, weight summaries and rank correlation.

use serde::{Deserialize, Serialize};

use crate::network::Network;
use crate::scalar::Scalar;

/// Length of the running-median window used by [`oscillation_metric`].
/// Even, so a two-level alternation has its median halfway between.
pub const MEDIAN_SPAN: usize = 50;

pub const HISTOGRAM_BINS: usize = 51;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Mean absolute deviation of `log₁₀ L` from its centered running median
/// over the last `window` entries of `losses`.
///
/// The median window is centered where possible and slid inward near the
/// ends so it always holds `MEDIAN_SPAN` samples. A `window` longer than
/// the curve uses the whole curve.
pub fn oscillation_metric(losses: &[f64], window: usize) -> f64 {
    let window = window.min(losses.len());
    if window == 0 {
        return 0.0;
    }
    let logs: Vec<f64> = losses[losses.len() - window..]
        .iter()
        .map(|l| l.log10())
        .collect();
    let span = MEDIAN_SPAN.min(logs.len());
    let mut buf = Vec::with_capacity(span);
    let mut total = 0.0;
    for i in 0..logs.len() {
        let lo = i.saturating_sub(span / 2).min(logs.len() - span);
        let hi = lo + span;
        buf.clear();
        buf.extend_from_slice(&logs[lo..hi]);
        buf.sort_by(f64::total_cmp);
        total += (logs[i] - median(&buf)).abs();
    }
    total / logs.len() as f64
}

/// Uniform-bin histogram in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub percent: Vec<f64>,
}

impl Histogram {
    /// `bins` equal bins spanning the observed range. A degenerate range
    /// puts everything in the first bin.
    pub fn of(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut percent = vec![0.0; bins];
        if values.is_empty() {
            return Self {
                lo: 0.0,
                hi: 0.0,
                percent,
            };
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let share = 100.0 / values.len() as f64;
        for &v in values {
            let k = if hi > lo {
                (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
            } else {
                0
            };
            percent[k.min(bins - 1)] += share;
        }
        Self { lo, hi, percent }
    }

    pub fn centers(&self) -> Vec<f64> {
        let n = self.percent.len();
        let w = (self.hi - self.lo) / n as f64;
        (0..n).map(|k| self.lo + (k as f64 + 0.5) * w).collect()
    }
}

/// Summary of the weights of a network (biases excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub mean: f64,
    pub abs_mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub histogram: Histogram,
    /// One histogram per layer, input layer first.
    pub per_layer: Vec<Histogram>,
}

pub fn weight_stats<T: Scalar>(net: &Network<T>) -> WeightStats {
    let all: Vec<f64> = net.weights().iter().map(|w| w.to_f64_lossy()).collect();
    let n = all.len().max(1) as f64;
    let mean = all.iter().sum::<f64>() / n;
    let abs_mean = all.iter().map(|w| w.abs()).sum::<f64>() / n;
    let std = (all.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n).sqrt();
    let per_layer = (0..net.shape().n_layers())
        .map(|l| {
            let w: Vec<f64> = net
                .layer_weights(l)
                .iter()
                .map(|w| w.to_f64_lossy())
                .collect();
            Histogram::of(&w, HISTOGRAM_BINS)
        })
        .collect();
    WeightStats {
        mean,
        abs_mean,
        std,
        histogram: Histogram::of(&all, HISTOGRAM_BINS),
        per_layer,
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation; `None` for fewer than two pairs or a
/// constant sample.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `log₁₀ y` against `log₁₀ x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median_of(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Some(median(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkShape;

    #[test]
    fn constant_curve_has_no_oscillation() {
        assert_eq!(oscillation_metric(&[3e-4; 500], 200), 0.0);
    }

    #[test]
    fn alternating_decades_give_half() {
        let curve: Vec<f64> = (0..400)
            .map(|i| if i % 2 == 0 { 1e-4 } else { 1e-5 })
            .collect();
        let m = oscillation_metric(&curve, 300);
        assert!((m - 0.5).abs() < 1e-12, "{m}");
    }

    #[test]
    fn geometric_decay_is_small() {
        // three decades over the window
        let window = 2000;
        let curve: Vec<f64> = (0..window)
            .map(|i| 10f64.powf(-3.0 * i as f64 / window as f64))
            .collect();
        let m = oscillation_metric(&curve, window);
        assert!(m < 0.25 * 3.0, "{m}");
        assert!(m < 0.01, "{m}");
    }

    #[test]
    fn window_longer_than_curve_is_clamped() {
        let curve = [1.0, 10.0, 1.0];
        assert_eq!(
            oscillation_metric(&curve, 100),
            oscillation_metric(&curve, 3)
        );
        assert_eq!(oscillation_metric(&[], 10), 0.0);
    }

    #[test]
    fn equal_weights_fill_one_bin() {
        let shape = NetworkShape::new(2, 3).unwrap();
        let net = Network::unflatten(shape, vec![0.25; shape.n_params()]).unwrap();
        let s = weight_stats(&net);
        assert_eq!(s.mean, 0.25);
        assert_eq!(s.std, 0.0);
        let occupied: Vec<_> = s.histogram.percent.iter().filter(|&&p| p > 0.0).collect();
        assert_eq!(occupied.len(), 1);
        assert!((occupied[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn plus_minus_one_weights() {
        let shape = NetworkShape::new(1, 1).unwrap();
        // layers: 1x1 hidden, 3x1 output; weights -1,1,-1,1 (biases 0)
        let mut params = vec![0.0; shape.n_params()];
        let mut sign = -1.0;
        for span in shape.layers() {
            for i in span.weights {
                params[i] = sign;
                sign = -sign;
            }
        }
        let s = weight_stats(&Network::unflatten(shape, params).unwrap());
        assert_eq!((s.mean, s.abs_mean, s.std), (0.0, 1.0, 1.0));
    }

    #[test]
    fn histogram_sums_to_100() {
        let net = Network::<f64>::init(NetworkShape::new(3, 7).unwrap(), 11);
        let s = weight_stats(&net);
        assert_eq!(s.histogram.percent.len(), HISTOGRAM_BINS);
        assert!((s.histogram.percent.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(s.per_layer.len(), 4);
        for h in &s.per_layer {
            assert!((h.percent.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]), Some(1.0));
        assert_eq!(spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0; 5]), None);
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // textbook example with a tie, ρ = 1 − 6Σd²/(n(n²−1)) does not apply;
        // compare against Pearson of the ranks computed by hand
        let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        let (rx, ry) = ([1.0, 2.5, 2.5, 4.0], [1.0, 3.0, 2.0, 4.0]);
        assert!((r - pearson(&rx, &ry).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [125.0, 250.0, 500.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 / v).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(median_of(&[3.0, 1.0, 2.0, 10.0]), Some(2.5));
    }
}
