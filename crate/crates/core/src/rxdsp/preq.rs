//! Partial-response equalization with target `1 + alpha D`.
//!
//! A linear equalizer on a band-limited channel colours the noise (high-pass,
//! negative lag-one correlation). Filtering with `1 + alpha D` whitens it,
//! and the detector then accounts for the known one-symbol memory.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest `|alpha|` returned by [`estimate_preq_alpha`].
pub const ALPHA_CLIP: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialResponseModel {
    pub alpha: f64,
    /// Variance of the whitened residual `e_k + alpha e_{k-1}`.
    pub sigma2: f64,
}

impl PartialResponseModel {
    pub fn new(alpha: f64, sigma2: f64) -> Result<Self> {
        if !(alpha.abs() < 1.0) {
            return Err(invalid("alpha", format!("|alpha| must be < 1, got {alpha}")));
        }
        if !(sigma2 > 0.0) {
            return Err(invalid("sigma2", "must be positive"));
        }
        Ok(Self { alpha, sigma2 })
    }
}

/// First-order linear prediction on the error sequence:
/// `alpha = -Re r(1) / r(0)` with `r(1) = E[e_k conj(e_{k-1})]`, so that
/// `1 + alpha D` is the whitening filter.
pub fn estimate_preq_alpha(errors: &[Complex64]) -> Result<PartialResponseModel> {
    if errors.len() < 2 {
        return Err(Error::Degenerate("need at least two error samples"));
    }
    let n = errors.len() as f64;
    let r0 = errors.iter().map(|e| e.norm_sqr()).sum::<f64>() / n;
    if r0 == 0.0 || !r0.is_finite() {
        return Err(Error::Degenerate("error sequence has zero power"));
    }
    let r1: Complex64 = errors
        .windows(2)
        .map(|w| w[1] * w[0].conj())
        .sum::<Complex64>()
        / (n - 1.0);
    let alpha = (-r1.re / r0).clamp(-ALPHA_CLIP, ALPHA_CLIP);
    let whitened = preq_filter(errors, alpha);
    let sigma2 = whitened.iter().skip(1).map(|e| e.norm_sqr()).sum::<f64>() / (n - 1.0);
    Ok(PartialResponseModel { alpha, sigma2 })
}

/// `z_k = y_k + alpha y_{k-1}` with `y_{-1} = 0`.
pub fn preq_filter(symbols: &[Complex64], alpha: f64) -> Vec<Complex64> {
    let mut prev = Complex64::new(0.0, 0.0);
    symbols
        .iter()
        .map(|&y| {
            let z = y + prev * alpha;
            prev = y;
            z
        })
        .collect()
}

/// Lag-one correlation coefficient `|r(1)| / r(0)`.
pub fn lag_one_correlation(x: &[Complex64]) -> f64 {
    let r0 = x.iter().map(|e| e.norm_sqr()).sum::<f64>() / x.len() as f64;
    let r1: Complex64 = x.windows(2).map(|w| w[1] * w[0].conj()).sum::<Complex64>() / (x.len() - 1) as f64;
    r1.norm() / r0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = crate::rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a, b)
            })
            .collect()
    }

    /// `e_k = w_k - a e_{k-1}`, white noise through `1 / (1 + a D)`.
    fn ar1(w: &[Complex64], a: f64) -> Vec<Complex64> {
        let mut prev = Complex64::new(0.0, 0.0);
        w.iter()
            .map(|&x| {
                let e = x - prev * a;
                prev = e;
                e
            })
            .collect()
    }

    #[test]
    fn identity_and_impulse() {
        let y = white(16, 1);
        assert_eq!(preq_filter(&y, 0.0), y);
        let mut imp = vec![Complex64::new(0.0, 0.0); 4];
        imp[0] = Complex64::new(1.0, 0.0);
        let z = preq_filter(&imp, 0.3);
        assert_eq!(z[0], Complex64::new(1.0, 0.0));
        assert_eq!(z[1], Complex64::new(0.3, 0.0));
        assert_eq!(z[2], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn inverse_cascade() {
        let y = white(1000, 2);
        let z = preq_filter(&ar1(&y, 0.6), 0.6);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn white_errors_give_small_alpha() {
        let m = estimate_preq_alpha(&white(100_000, 3)).unwrap();
        assert!(m.alpha.abs() < 0.02, "{}", m.alpha);
    }

    #[test]
    fn ar1_errors_recover_alpha() {
        let e = ar1(&white(100_000, 4), 0.5);
        let m = estimate_preq_alpha(&e).unwrap();
        assert!((m.alpha - 0.5).abs() < 0.02, "{}", m.alpha);
        let z = preq_filter(&e, m.alpha);
        assert!(lag_one_correlation(&z[1..]) < 0.05);
    }

    #[test]
    fn alpha_is_scale_invariant() {
        let e = ar1(&white(10_000, 5), -0.3);
        let scaled: Vec<Complex64> = e.iter().map(|x| x * 17.5).collect();
        let a = estimate_preq_alpha(&e).unwrap().alpha;
        let b = estimate_preq_alpha(&scaled).unwrap().alpha;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(estimate_preq_alpha(&[Complex64::new(0.0, 0.0); 10]).is_err());
        assert!(estimate_preq_alpha(&[Complex64::new(1.0, 0.0)]).is_err());
        assert!(PartialResponseModel::new(1.0, 1.0).is_err());
        assert!(PartialResponseModel::new(0.5, 0.0).is_err());
    }

    #[test]
    fn alpha_is_clipped() {
        // Alternating sequence: r(1) = -r(0).
        let e: Vec<Complex64> = (0..100)
            .map(|k| Complex64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
            .collect();
        assert_eq!(estimate_preq_alpha(&e).unwrap().alpha, ALPHA_CLIP);
    }
}
