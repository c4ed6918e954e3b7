//! Carrier recovery: frequency offset from the fourth-power spectrum, then
//! blind phase search (BPS) with pilot-referenced quadrant resolution.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};
use crate::fft;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CprConfig {
    /// Test phases spread over one quadrant.
    pub test_phases: usize,
    /// Symbols in the BPS averaging window.
    pub window: usize,
    pub estimate_frequency: bool,
    /// Every `pilot_period`-th symbol is a known pilot (0 disables pilots).
    pub pilot_period: usize,
    /// Pilots averaged into the phase reference that fixes the quadrant.
    pub pilot_window: usize,
    /// Use the interpolated pilot phase instead of BPS. Shaped formats at low
    /// SNR give BPS too little phase information.
    pub pilot_aided: bool,
}

impl Default for CprConfig {
    fn default() -> Self {
        Self {
            test_phases: 64,
            window: 128,
            estimate_frequency: true,
            pilot_period: 32,
            pilot_window: 16,
            pilot_aided: false,
        }
    }
}

impl CprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.test_phases == 0 {
            return Err(invalid("test_phases", "must be positive"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be positive"));
        }
        if self.pilot_aided && self.pilot_period == 0 {
            return Err(invalid("pilot_aided", "needs pilot_period > 0"));
        }
        if self.pilot_period > 0 && self.pilot_window == 0 {
            return Err(invalid("pilot_window", "must be positive when pilots are used"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarrierOutput {
    pub symbols: Vec<Complex64>,
    /// Removed phase per symbol, including the frequency ramp, rad.
    pub phase: Vec<f64>,
    pub frequency_offset_hz: f64,
    /// Changes of the quadrant correction applied to the BPS track.
    pub cycle_slips: usize,
}

/// Peak-to-mean ratio of the fourth-power spectrum below which no offset is
/// estimated. Heavily shaped formats have a weak fourth-power moment.
const TONE_THRESHOLD: f64 = 8.0;

/// Frequency offset from the peak of `|FFT(y^4)|`, zero-padded four times
/// and refined by parabolic interpolation. Unambiguous within `Rs / 8`.
pub fn estimate_frequency_offset(symbols: &[Complex64], symbol_rate: f64) -> Result<f64> {
    if symbols.len() < 8 {
        return Err(Error::Degenerate("too few symbols for frequency estimation"));
    }
    let n = (symbols.len() * 4).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, y) in buf.iter_mut().zip(symbols) {
        *b = y.powu(4);
    }
    fft::forward(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|v| v.norm()).collect();
    let (peak, _) = mag
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let mean = mag.iter().sum::<f64>() / n as f64;
    if !(mag[peak] > TONE_THRESHOLD * mean) {
        return Err(Error::Degenerate("no fourth-power tone"));
    }
    let a = mag[(peak + n - 1) % n];
    let b = mag[peak];
    let c = mag[(peak + 1) % n];
    let denom = a - 2.0 * b + c;
    let delta = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let f4 = (fft::bin_frequency(peak, n, symbol_rate)) + delta * symbol_rate / n as f64;
    Ok(f4 / 4.0)
}

/// Removes `exp(j 2 pi f k / Rs)` from the sequence.
pub fn remove_frequency_offset(symbols: &[Complex64], offset_hz: f64, symbol_rate: f64) -> Vec<Complex64> {
    let w = 2.0 * PI * offset_hz / symbol_rate;
    symbols
        .iter()
        .enumerate()
        .map(|(k, y)| y * Complex64::from_polar(1.0, -w * k as f64))
        .collect()
}

/// Blind phase search, unwrapped over quadrant jumps. The estimate is
/// ambiguous by multiples of `pi / 2`.
pub fn blind_phase_search(
    symbols: &[Complex64],
    shaped: &ShapedConstellation,
    test_phases: usize,
    window: usize,
) -> Vec<f64> {
    let n = symbols.len();
    if n == 0 {
        return Vec::new();
    }
    let half = window / 2;
    let mut best = vec![f64::INFINITY; n];
    let mut phase = vec![0.0; n];
    let mut prefix = vec![0.0; n + 1];
    let points = shaped.points();
    for b in 0..test_phases {
        let phi = (b as f64 / test_phases as f64 - 0.5) * FRAC_PI_2;
        let rot = Complex64::from_polar(1.0, -phi);
        for (k, y) in symbols.iter().enumerate() {
            let z = y * rot;
            prefix[k + 1] = prefix[k] + (z - points[shaped.decide(z)]).norm_sqr();
        }
        for k in 0..n {
            let lo = k.saturating_sub(half);
            let hi = (k + window - half).min(n);
            let metric = prefix[hi] - prefix[lo];
            if metric < best[k] {
                best[k] = metric;
                phase[k] = phi;
            }
        }
    }
    for k in 1..n {
        let jump = ((phase[k - 1] - phase[k]) / FRAC_PI_2).round();
        phase[k] += jump * FRAC_PI_2;
    }
    phase
}

/// Residual phase-error variance of a centred `window`-symbol average under
/// Wiener phase noise plus additive noise at linear SNR `snr`:
/// `s h (h + 1) / (3 W) + 1 / (2 snr W)` with `s = 2 pi dv / Rs`, `h = W / 2`.
pub fn bps_theory_variance(linewidth_hz: f64, symbol_rate: f64, window: usize, snr: f64) -> f64 {
    let s = 2.0 * PI * linewidth_hz / symbol_rate;
    let w = window as f64;
    let h = w / 2.0;
    s * h * (h + 1.0) / (3.0 * w) + 1.0 / (2.0 * snr * w)
}

/// Smoothed data-aided phase at every symbol: the argument of
/// `sum y conj(x)` over `window` pilots around each pilot, unwrapped and
/// linearly interpolated between pilot positions.
fn pilot_reference(symbols: &[Complex64], pilots: &[Complex64], period: usize, window: usize) -> Vec<f64> {
    let n = symbols.len();
    let positions: Vec<usize> = (0..n).step_by(period).collect();
    let mut prefix = vec![Complex64::new(0.0, 0.0); positions.len() + 1];
    for (j, &k) in positions.iter().enumerate() {
        prefix[j + 1] = prefix[j] + symbols[k] * pilots[k].conj();
    }
    let half = window / 2;
    let mut theta: Vec<f64> = (0..positions.len())
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + window - half).min(positions.len());
            (prefix[hi] - prefix[lo]).arg()
        })
        .collect();
    for j in 1..theta.len() {
        theta[j] -= ((theta[j] - theta[j - 1]) / (2.0 * PI)).round() * 2.0 * PI;
    }
    (0..n)
        .map(|k| {
            let j = k / period;
            match theta.get(j + 1) {
                Some(&next) => {
                    let t = (k - positions[j]) as f64 / period as f64;
                    theta[j] + t * (next - theta[j])
                }
                None => theta[j],
            }
        })
        .collect()
}

/// Shifts each BPS estimate by the multiple of `pi / 2` closest to the
/// reference and returns how often that multiple changes.
fn resolve_quadrants(phase: &mut [f64], reference: &[f64]) -> usize {
    let mut slips = 0;
    let mut prev = None;
    for (p, r) in phase.iter_mut().zip(reference) {
        let q = ((r - *p) / FRAC_PI_2).round();
        if prev.is_some_and(|v| v != q) {
            slips += 1;
        }
        prev = Some(q);
        *p += q * FRAC_PI_2;
    }
    slips
}

/// Full carrier recovery. `pilots` holds the transmitted sequence; only the
/// pilot positions are read.
pub fn carrier_recover(
    symbols: &[Complex64],
    symbol_rate: f64,
    shaped: &ShapedConstellation,
    pilots: Option<&[Complex64]>,
    cfg: &CprConfig,
) -> Result<CarrierOutput> {
    cfg.validate()?;
    if let Some(p) = pilots {
        if p.len() < symbols.len() {
            return Err(Error::LengthMismatch {
                what: "pilot reference",
                expected: symbols.len(),
                actual: p.len(),
            });
        }
    }
    let offset = if cfg.estimate_frequency {
        match estimate_frequency_offset(symbols, symbol_rate) {
            Err(Error::Degenerate("no fourth-power tone")) => 0.0,
            r => r?,
        }
    } else {
        0.0
    };
    let derotated = remove_frequency_offset(symbols, offset, symbol_rate);
    let mut slips = 0;
    let phase = match pilots {
        Some(p) if cfg.pilot_aided => pilot_reference(&derotated, p, cfg.pilot_period, cfg.pilot_window),
        None if cfg.pilot_aided => return Err(invalid("pilots", "pilot-aided recovery needs the pilot reference")),
        _ => {
            let mut phase = blind_phase_search(&derotated, shaped, cfg.test_phases, cfg.window);
            if let (Some(p), true) = (pilots, cfg.pilot_period > 0) {
                slips = resolve_quadrants(&mut phase, &pilot_reference(&derotated, p, cfg.pilot_period, cfg.pilot_window));
            }
            phase
        }
    };

    let w = 2.0 * PI * offset / symbol_rate;
    let out: Vec<Complex64> = derotated
        .iter()
        .zip(&phase)
        .map(|(y, p)| y * Complex64::from_polar(1.0, -p))
        .collect();
    let total: Vec<f64> = phase.iter().enumerate().map(|(k, p)| p + w * k as f64).collect();
    Ok(CarrierOutput {
        symbols: out,
        phase: total,
        frequency_offset_hz: offset,
        cycle_slips: slips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, ShapedConstellation};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn qpsk(n: usize, seed: u64) -> (ShapedConstellation, Vec<Complex64>) {
        let s = ShapedConstellation::uniform(&build_qam(4).unwrap());
        let mut rng = crate::rng_from_seed(seed);
        let x = (0..n).map(|_| s.points()[rng.random_range(0..4)]).collect();
        (s, x)
    }

    fn awgn(x: &[Complex64], snr_db: f64, seed: u64) -> Vec<Complex64> {
        let mut rng = crate::rng_from_seed(seed);
        let sigma = (0.5 / crate::db_to_lin(snr_db)).sqrt();
        x.iter()
            .map(|v| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                v + Complex64::new(a, b) * sigma
            })
            .collect()
    }

    fn wiener(n: usize, linewidth: f64, rs: f64, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng_from_seed(seed);
        let s = (2.0 * PI * linewidth / rs).sqrt();
        let mut phi = 0.3;
        (0..n)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                phi += s * g;
                phi
            })
            .collect()
    }

    #[test]
    fn clean_input_is_identity_with_pilots() {
        let (s, x) = qpsk(4096, 1);
        let out = carrier_recover(&x, 130e9, &s, Some(&x), &CprConfig::default()).unwrap();
        for (a, b) in out.symbols.iter().zip(&x) {
            assert!((a - b).norm() < 1e-9);
        }
        assert_eq!(out.cycle_slips, 0);
        assert!(out.frequency_offset_hz.abs() < 1e6);
    }

    #[test]
    fn frequency_offset_within_1mhz() {
        let rs = 130e9;
        let (s, x) = qpsk(1 << 16, 2);
        let y = awgn(&remove_frequency_offset(&x, -100e6, rs), 15.0, 3);
        let f = estimate_frequency_offset(&y, rs).unwrap();
        assert!((f - 100e6).abs() < 1e6, "{f}");
        let out = carrier_recover(&y, rs, &s, Some(&x), &CprConfig::default()).unwrap();
        assert_eq!(out.cycle_slips, 0);
    }

    #[test]
    fn linewidth_penalty_below_0p2_db() {
        let rs = 130e9;
        let n = 1 << 15;
        let (s, x) = qpsk(n, 4);
        let y = awgn(&x, 15.0, 5);
        let track = wiener(n, 100e3, rs, 6);
        let yp: Vec<Complex64> = y.iter().zip(&track).map(|(v, p)| v * Complex64::from_polar(1.0, *p)).collect();
        let cfg = CprConfig {
            estimate_frequency: false,
            ..CprConfig::default()
        };
        let snr = |z: &[Complex64]| {
            let e: f64 = z.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n as f64;
            -10.0 * e.log10()
        };
        let base = carrier_recover(&y, rs, &s, Some(&x), &cfg).unwrap();
        let noisy = carrier_recover(&yp, rs, &s, Some(&x), &cfg).unwrap();
        let penalty = snr(&base.symbols) - snr(&noisy.symbols);
        assert!(penalty < 0.2, "{penalty}");
    }

    #[test]
    fn residual_variance_matches_theory() {
        let rs = 10e9;
        let n = 1 << 15;
        let lw = 1e6;
        let (s, x) = qpsk(n, 7);
        let y = awgn(&x, 25.0, 8);
        let track = wiener(n, lw, rs, 9);
        let yp: Vec<Complex64> = y.iter().zip(&track).map(|(v, p)| v * Complex64::from_polar(1.0, *p)).collect();
        let cfg = CprConfig {
            estimate_frequency: false,
            ..CprConfig::default()
        };
        let out = carrier_recover(&yp, rs, &s, Some(&x), &cfg).unwrap();
        let edge = cfg.window;
        let err: Vec<f64> = (edge..n - edge).map(|k| out.phase[k] - track[k]).collect();
        let mean = err.iter().sum::<f64>() / err.len() as f64;
        let var = err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / err.len() as f64;
        let theory = bps_theory_variance(lw, rs, cfg.window, crate::db_to_lin(25.0));
        let ratio_db = 10.0 * (var / theory).log10();
        assert!(ratio_db.abs() < 3.0, "measured {var}, theory {theory}");
    }

    #[test]
    fn quadrant_jump_is_resolved_and_counted() {
        let (s, x) = qpsk(8192, 10);
        let mut y = x.clone();
        for v in &mut y[4000..] {
            *v *= Complex64::new(0.0, 1.0);
        }
        let cfg = CprConfig {
            estimate_frequency: false,
            ..CprConfig::default()
        };
        let out = carrier_recover(&y, 1e9, &s, Some(&x), &cfg).unwrap();
        assert_eq!(out.cycle_slips, 1);
        let errors = out.symbols.iter().zip(&x).filter(|(a, b)| (*a - *b).norm() > 1e-6).count();
        assert!(errors < 32 * 16, "{errors}");
    }

    #[test]
    fn pilot_aided_tracks_shaped_low_snr() {
        let s = crate::constellation::shaped_qam(256, 7.0).unwrap();
        let mut rng = crate::rng_from_seed(12);
        let x: Vec<Complex64> = (0..16_384).map(|_| s.points()[rng.random_range(0..256)]).collect();
        let sigma = (0.5 * 10f64.powf(-1.8)).sqrt();
        let y: Vec<Complex64> = x
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let n = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)) * sigma;
                (v + n) * Complex64::from_polar(1.0, 0.3 + 1e-4 * k as f64)
            })
            .collect();
        let cfg = CprConfig {
            estimate_frequency: false,
            pilot_aided: true,
            ..CprConfig::default()
        };
        let out = carrier_recover(&y, 1e9, &s, Some(&x), &cfg).unwrap();
        let mse = out.symbols.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!(10.0 * mse.log10() < -17.8, "{mse}");
        assert!(carrier_recover(&y, 1e9, &s, None, &cfg).is_err());
    }

    #[test]
    fn invalid_config() {
        let (s, x) = qpsk(64, 11);
        let cfg = CprConfig {
            test_phases: 0,
            ..CprConfig::default()
        };
        assert!(carrier_recover(&x, 1e9, &s, None, &cfg).is_err());
        assert!(carrier_recover(&x, 1e9, &s, Some(&x[..10]), &CprConfig::default()).is_err());
    }
}
