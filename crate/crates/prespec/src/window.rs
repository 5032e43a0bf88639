//! Plateau and decay statistics of singular spectra over a calibration window.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::linear_fit;

/// Index window `[⌈N^{0.25}⌉, ⌊N^{0.55}⌋]`.
pub fn calibration_window(n: usize) -> (usize, usize) {
    let lo = (n as f64).powf(0.25).ceil() as usize;
    let hi = (n as f64).powf(0.55).floor() as usize;
    (lo, hi.min(n.saturating_sub(1)))
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateauStats {
    pub window: (usize, usize),
    pub exponent: f64,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl PlateauStats {
    /// `(n+1)^{exponent} μ_n` for `n` in the window.
    pub fn new(mu: &[f64], exponent: f64, window: (usize, usize)) -> Result<Self> {
        let (lo, hi) = window;
        if lo > hi || hi >= mu.len() {
            return Err(Error::Input(format!("window {window:?} outside spectrum of length {}", mu.len())));
        }
        let values: Vec<f64> = (lo..=hi).map(|n| ((n + 1) as f64).powf(exponent) * mu[n]).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(0.0, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(Self { window, exponent, values, min, max, mean })
    }

    /// `max/min`; infinite when the window contains a zero.
    pub fn ratio(&self) -> f64 {
        if self.min > 0.0 {
            self.max / self.min
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub window: (usize, usize),
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log μ_n` against `log(n+1)` over the window.
/// Entries below `floor` are dropped; fewer than three survivors is an error.
pub fn decay_slope(mu: &[f64], window: (usize, usize), floor: f64) -> Result<DecayFit> {
    let (lo, hi) = window;
    let (x, y): (Vec<f64>, Vec<f64>) = (lo..=hi.min(mu.len().saturating_sub(1)))
        .filter(|&n| mu[n] > floor)
        .map(|n| (((n + 1) as f64).ln(), mu[n].ln()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::Unreliable(format!("only {} usable points in window {window:?}", x.len())));
    }
    let (slope, intercept) = linear_fit(&x, &y);
    Ok(DecayFit { window, slope, intercept })
}

/// Relative change of the partial sum `Σ_{n≤hi} μ_n` when `hi` doubles.
pub fn partial_sum_stability(mu: &[f64], hi: usize) -> f64 {
    let upto = |m: usize| mu.iter().take(m + 1).sum::<f64>();
    let a = upto(hi);
    let b = upto(2 * hi + 1);
    if b == 0.0 {
        0.0
    } else {
        (b - a).abs() / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_plateau_is_flat() {
        let mu: Vec<f64> = (0..1000).map(|n| 1.0 / (n + 1) as f64).collect();
        let w = calibration_window(mu.len());
        assert_eq!(w, (6, 44));
        let p = PlateauStats::new(&mu, 1.0, w).unwrap();
        assert!((p.ratio() - 1.0).abs() < 1e-12);
        let fit = decay_slope(&mu, w, 0.0).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_sums() {
        let mu: Vec<f64> = (0..100).map(|n| 0.5f64.powi(n)).collect();
        assert!(partial_sum_stability(&mu, 20) < 1e-6);
        let flat = vec![1.0; 100];
        assert!(partial_sum_stability(&flat, 20) > 0.4);
    }
}
