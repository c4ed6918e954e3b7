//! Transmitter chain: symbol mapping, pulse shaping, pre-emphasis, DAC model
//! and memoryless transmitter nonlinearity.
//!
//! Linear stages operate on the whole block in the frequency domain (the
//! block is one period of a periodic waveform) and act identically and
//! independently on the four real tributaries.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::signal::SignalBlock;

/// Maps symbol indices to shaped constellation points.
pub fn map_symbols(indices: &[usize], shaped: &ShapedConstellation) -> Result<Vec<Complex64>> {
    let points = shaped.points();
    indices
        .iter()
        .map(|&p| {
            points.get(p).copied().ok_or(Error::IndexOutOfRange {
                index: p,
                order: points.len(),
            })
        })
        .collect()
}

/// Root-raised-cosine pulse pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrcFilter {
    pub rolloff: f64,
    pub samples_per_symbol: usize,
    /// Filter span in symbols.
    pub span: usize,
}

impl Default for RrcFilter {
    fn default() -> Self {
        Self {
            rolloff: 0.1,
            samples_per_symbol: 2,
            span: 64,
        }
    }
}

impl RrcFilter {
    pub fn new(rolloff: f64, samples_per_symbol: usize, span: usize) -> Result<Self> {
        if !(rolloff > 0.0 && rolloff <= 1.0) {
            return Err(invalid("rolloff", format!("must lie in (0, 1], got {rolloff}")));
        }
        if samples_per_symbol == 0 || span == 0 {
            return Err(invalid("rrc", "samples per symbol and span must be positive"));
        }
        Ok(Self {
            rolloff,
            samples_per_symbol,
            span,
        })
    }

    /// Unit-energy taps, `span * sps + 1` long, centred.
    pub fn taps(&self) -> Vec<f64> {
        let sps = self.samples_per_symbol as f64;
        let half = (self.span * self.samples_per_symbol / 2) as isize;
        let beta = self.rolloff;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|i| {
                let t = i as f64 / sps;
                if i == 0 {
                    1.0 - beta + 4.0 * beta / PI
                } else if (4.0 * beta * t.abs() - 1.0).abs() < 1e-12 {
                    beta / 2f64.sqrt()
                        * ((1.0 + 2.0 / PI) * (PI / (4.0 * beta)).sin()
                            + (1.0 - 2.0 / PI) * (PI / (4.0 * beta)).cos())
                } else {
                    ((PI * t * (1.0 - beta)).sin()
                        + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
                        / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
                }
            })
            .collect();
        let energy: f64 = taps.iter().map(|h| h * h).sum();
        let g = 1.0 / energy.sqrt();
        taps.iter_mut().for_each(|h| *h *= g);
        taps
    }

    /// Upsamples and filters one symbol stream; symbol `k` lands on sample
    /// `k * sps`.
    pub fn shape_stream(&self, symbols: &[Complex64]) -> Vec<Complex64> {
        let sps = self.samples_per_symbol;
        let mut up = vec![Complex64::new(0.0, 0.0); symbols.len() * sps];
        for (k, &s) in symbols.iter().enumerate() {
            up[k * sps] = s;
        }
        fft::circular_convolve_centered(&up, &self.taps())
    }

    /// Matched filter without decimation.
    pub fn filter_stream(&self, samples: &[Complex64]) -> Vec<Complex64> {
        fft::circular_convolve_centered(samples, &self.taps())
    }

    /// Shapes both polarizations into a block at `symbol_rate * sps`.
    pub fn shape(&self, x: &[Complex64], y: &[Complex64], symbol_rate: f64) -> Result<SignalBlock> {
        SignalBlock::new(
            self.shape_stream(x),
            self.shape_stream(y),
            symbol_rate * self.samples_per_symbol as f64,
            self.samples_per_symbol,
        )
    }

    /// Matched-filters and decimates a block to one sample per symbol.
    pub fn matched(&self, sig: &SignalBlock) -> [Vec<Complex64>; 2] {
        let sps = sig.samples_per_symbol;
        let pick = |pol: &Vec<Complex64>| -> Vec<Complex64> {
            let filtered = self.filter_stream(pol);
            filtered
                .iter()
                .skip(sig.alignment)
                .step_by(sps)
                .copied()
                .collect()
        };
        [pick(&sig.pols[0]), pick(&sig.pols[1])]
    }
}

/// Shapes symbols with a root-raised-cosine pulse.
pub fn rrc_shape(
    x: &[Complex64],
    y: &[Complex64],
    rolloff: f64,
    samples_per_symbol: usize,
    symbol_rate: f64,
) -> Result<SignalBlock> {
    RrcFilter::new(rolloff, samples_per_symbol, 64)?.shape(x, y, symbol_rate)
}

/// Linear-in-dB spectral tilt from 0 dB at DC to `tilt_db` at the symbol-rate
/// Nyquist frequency `Rs / 2`, continuing with the same slope beyond it.
/// Output power is restored to the input power.
pub fn preemphasis(sig: &SignalBlock, tilt_db: f64) -> Result<SignalBlock> {
    if !(tilt_db >= 0.0) {
        return Err(invalid("tilt_db", "must be >= 0"));
    }
    Ok(spectral_tilt(sig, tilt_db, true))
}

/// Applies a dB-linear tilt of `tilt_db` at `Rs / 2`; negative values model a
/// channel roll-off. With `renormalize` the input power is restored.
pub fn spectral_tilt(sig: &SignalBlock, tilt_db: f64, renormalize: bool) -> SignalBlock {
    let mut out = sig.clone();
    if tilt_db == 0.0 {
        return out;
    }
    let nyquist = sig.symbol_rate() / 2.0;
    let p_in = sig.power();
    for pol in &mut out.pols {
        fft::filter_complex(pol, sig.sample_rate, |f| {
            Complex64::new(10f64.powf(tilt_db * f.abs() / nyquist / 20.0), 0.0)
        });
    }
    if renormalize && p_in > 0.0 {
        let g = (p_in / out.power()).sqrt();
        out.scale(g);
    }
    out
}

/// DAC behavioural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DacConfig {
    /// Converter sampling rate in Sa/s.
    pub sample_rate: f64,
    /// Effective number of bits; `None` disables quantization and noise.
    pub enob: Option<f64>,
    /// Physical resolution used for the uniform quantizer.
    pub resolution_bits: u32,
    /// 3 dB bandwidth of the analog output filter in Hz (infinite = none).
    pub bandwidth_3db: f64,
    /// Digital `x / sin(x)` pre-compensation of the zero-order hold.
    pub sinc_compensation: bool,
}

impl Default for DacConfig {
    fn default() -> Self {
        Self {
            sample_rate: 134e9,
            enob: Some(5.0),
            resolution_bits: 8,
            bandwidth_3db: 65e9,
            sinc_compensation: true,
        }
    }
}

impl DacConfig {
    /// A transparent converter.
    pub fn ideal(sample_rate: f64) -> Self {
        Self {
            sample_rate,
            enob: None,
            resolution_bits: 8,
            bandwidth_3db: f64::INFINITY,
            sinc_compensation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(invalid("dac.sample_rate", "must be positive"));
        }
        if let Some(e) = self.enob {
            if !(e > 0.0) {
                return Err(invalid("dac.enob", "must be positive"));
            }
        }
        if !(self.bandwidth_3db > 0.0) {
            return Err(invalid("dac.bandwidth_3db", "must be positive"));
        }
        if self.resolution_bits == 0 || self.resolution_bits > 24 {
            return Err(invalid("dac.resolution_bits", "must lie in 1..=24"));
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Fourth-order Bessel low-pass with unit DC delay removed.
#[derive(Debug, Clone, Copy)]
pub struct BesselLowpass {
    /// Normalised angular frequency where the prototype is 3 dB down.
    w3: f64,
    f3db: f64,
}

impl BesselLowpass {
    const COEFFS: [f64; 5] = [105.0, 105.0, 45.0, 10.0, 1.0];

    pub fn new(f3db: f64) -> Self {
        let (mut lo, mut hi) = (0.1, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if Self::prototype(mid).norm_sqr() > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self {
            w3: 0.5 * (lo + hi),
            f3db,
        }
    }

    fn prototype(w: f64) -> Complex64 {
        let s = Complex64::new(0.0, w);
        let mut den = Complex64::new(0.0, 0.0);
        let mut sp = Complex64::new(1.0, 0.0);
        for c in Self::COEFFS {
            den += sp * c;
            sp *= s;
        }
        Complex64::new(Self::COEFFS[0], 0.0) / den
    }

    /// Frequency response at `f` Hz.
    pub fn response(&self, f: f64) -> Complex64 {
        if !self.f3db.is_finite() {
            return Complex64::new(1.0, 0.0);
        }
        let w = self.w3 * f / self.f3db;
        // The delay-normalised prototype has unit group delay at DC.
        Self::prototype(w) * Complex64::from_polar(1.0, w)
    }
}

/// Applies the DAC model: optional sinc pre-compensation, quantization plus
/// Gaussian noise calibrated to the ENOB, zero-order-hold roll-off and the
/// output low-pass.
///
/// Full scale of each tributary is its peak magnitude. The noise is white
/// over the simulation band and sized so the band `|f| < fs_dac / 2` holds
/// `SNDR = 6.02 ENOB + 1.76 dB` relative to a full-scale sine.
pub fn dac_model<R: Rng + ?Sized>(sig: &SignalBlock, cfg: &DacConfig, rng: &mut R) -> Result<SignalBlock> {
    cfg.validate()?;
    let mut out = sig.clone();
    let fs_dac = cfg.sample_rate;
    if cfg.sinc_compensation {
        for pol in &mut out.pols {
            fft::filter_complex(pol, sig.sample_rate, |f| {
                Complex64::new(1.0 / sinc(f.abs().min(fs_dac / 2.0) / fs_dac), 0.0)
            });
        }
    }
    if let Some(enob) = cfg.enob {
        let sndr = 10f64.powf((6.02 * enob + 1.76) / 10.0);
        let band_ratio = (sig.sample_rate / fs_dac).max(1.0);
        let levels = (1u64 << cfg.resolution_bits) as f64;
        out.map_tributaries(|_, trib| {
            let full_scale = trib.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            if full_scale == 0.0 {
                return;
            }
            let step = 2.0 * full_scale / (levels - 1.0);
            let target_var = full_scale * full_scale / 2.0 / sndr * band_ratio;
            let extra_sigma = (target_var - step * step / 12.0).max(0.0).sqrt();
            for x in trib.iter_mut() {
                let q = ((*x + full_scale) / step).round() * step - full_scale;
                let n: f64 = StandardNormal.sample(rng);
                *x = q + extra_sigma * n;
            }
        });
    }
    let lpf = BesselLowpass::new(cfg.bandwidth_3db);
    for pol in &mut out.pols {
        fft::filter_complex(pol, sig.sample_rate, |f| lpf.response(f) * sinc(f / fs_dac));
    }
    Ok(out)
}

/// Per-tributary cubic compression `y = x + a3 x^3`.
pub fn memoryless_nonlinearity(sig: &SignalBlock, a3: f64) -> Result<SignalBlock> {
    let mut out = sig.clone();
    if a3 == 0.0 {
        return Ok(out);
    }
    let peak = sig
        .pols
        .iter()
        .flatten()
        .fold(0.0f64, |a, x| a.max(x.re.abs()).max(x.im.abs()));
    if 1.0 + 3.0 * a3 * peak * peak <= 0.0 {
        return Err(invalid(
            "a3",
            format!("x + {a3} x^3 is not monotone up to the signal peak {peak:.3}"),
        ));
    }
    for pol in &mut out.pols {
        for x in pol.iter_mut() {
            *x = Complex64::new(cubic(x.re, a3), cubic(x.im, a3));
        }
    }
    Ok(out)
}

pub(crate) fn cubic(x: f64, a3: f64) -> f64 {
    x + a3 * x * x * x
}

/// Input and output power of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub power_in: f64,
    pub power_out: f64,
}

/// Transmitter chain configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TxConfig {
    pub rrc: RrcFilter,
    pub preemphasis_db: f64,
    pub dac: Option<DacConfig>,
    /// Cubic coefficient of the driver/modulator compression.
    pub a3: f64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            rrc: RrcFilter::default(),
            preemphasis_db: 0.0,
            dac: None,
            a3: 0.0,
        }
    }
}

/// Runs mapping output through the transmitter stages in order:
/// pulse shaping, DAC, nonlinearity, pre-emphasis.
pub struct TxPipeline {
    cfg: TxConfig,
    reports: Vec<StageReport>,
}

impl TxPipeline {
    pub fn new(cfg: TxConfig) -> Self {
        Self {
            cfg,
            reports: Vec::new(),
        }
    }

    pub fn reports(&self) -> &[StageReport] {
        &self.reports
    }

    fn record(&mut self, stage: &str, before: f64, after: &SignalBlock) {
        self.reports.push(StageReport {
            stage: stage.to_string(),
            power_in: before,
            power_out: after.power(),
        });
    }

    pub fn run<R: Rng + ?Sized>(
        &mut self,
        x: &[Complex64],
        y: &[Complex64],
        symbol_rate: f64,
        rng: &mut R,
    ) -> Result<SignalBlock> {
        self.reports.clear();
        let p_sym = crate::signal::mean_power(x) + crate::signal::mean_power(y);
        let mut sig = self.cfg.rrc.shape(x, y, symbol_rate)?;
        self.record("rrc", p_sym, &sig);
        if let Some(dac) = self.cfg.dac {
            let before = sig.power();
            sig = dac_model(&sig, &dac, rng)?;
            self.record("dac", before, &sig);
        }
        if self.cfg.a3 != 0.0 {
            let before = sig.power();
            sig = memoryless_nonlinearity(&sig, self.cfg.a3)?;
            self.record("nonlinearity", before, &sig);
        }
        if self.cfg.preemphasis_db != 0.0 {
            let before = sig.power();
            sig = preemphasis(&sig, self.cfg.preemphasis_db)?;
            self.record("preemphasis", before, &sig);
        }
        Ok(sig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, ShapedConstellation};

    fn tone_block(freq: f64, fs: f64, n: usize) -> SignalBlock {
        let x: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * freq * k as f64 / fs))
            .collect();
        SignalBlock::new(x, vec![Complex64::new(0.0, 0.0); n], fs, 2).unwrap()
    }

    #[test]
    fn qpsk_mapping() {
        let s = ShapedConstellation::uniform(&build_qam(4).unwrap());
        let mapped = map_symbols(&[0, 1, 2, 3], &s).unwrap();
        for x in mapped {
            assert!((x.norm_sqr() - 1.0).abs() < 1e-15);
        }
        assert!(map_symbols(&[4], &s).is_err());
    }

    #[test]
    fn rrc_taps_unit_energy_and_symmetric() {
        let f = RrcFilter::default();
        let taps = f.taps();
        assert_eq!(taps.len(), 129);
        let e: f64 = taps.iter().map(|h| h * h).sum();
        assert!((e - 1.0).abs() < 1e-12);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
        // Singular point t = 1/(4 beta) handled: beta 0.25, sps 4 puts it on a tap.
        let g = RrcFilter::new(0.25, 4, 16).unwrap().taps();
        assert!(g.iter().all(|h| h.is_finite()));
    }

    #[test]
    fn impulse_gives_rrc_response() {
        let f = RrcFilter::default();
        let mut sym = vec![Complex64::new(0.0, 0.0); 256];
        sym[100] = Complex64::new(1.0, 0.0);
        let out = f.shape_stream(&sym);
        let taps = f.taps();
        let centre = taps.len() / 2;
        for (i, &h) in taps.iter().enumerate() {
            let idx = 200 + i - centre;
            assert!((out[idx].re - h).abs() < 1e-12);
        }
    }

    #[test]
    fn rrc_rejects_bad_rolloff() {
        assert!(RrcFilter::new(0.0, 2, 64).is_err());
        assert!(RrcFilter::new(1.2, 2, 64).is_err());
    }

    #[test]
    fn zero_tilt_is_identity() {
        let b = tone_block(3e9, 64e9, 256);
        assert_eq!(preemphasis(&b, 0.0).unwrap(), b);
        assert!(preemphasis(&b, -1.0).is_err());
    }

    #[test]
    fn preemphasis_keeps_power() {
        let fs = 64e9;
        let mut b = tone_block(2e9, fs, 512);
        let y = tone_block(10e9, fs, 512).pols[0].clone();
        b.pols[1] = y;
        let out = preemphasis(&b, 8.0).unwrap();
        assert!((out.power() / b.power() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_direct_value() {
        assert!((cubic(1.0, -0.05) - 0.95).abs() < 1e-15);
        let b = tone_block(1e9, 8e9, 64);
        assert_eq!(memoryless_nonlinearity(&b, 0.0).unwrap(), b);
        let out = memoryless_nonlinearity(&b, -0.05).unwrap();
        assert!((out.pols[0][0].re - 0.95).abs() < 1e-15);
        // Derivative changes sign below |x| = 1 for a3 = -0.5.
        assert!(memoryless_nonlinearity(&b, -0.5).is_err());
    }

    #[test]
    fn bessel_is_three_db_at_corner() {
        let lpf = BesselLowpass::new(65e9);
        let g = lpf.response(65e9).norm_sqr();
        assert!((10.0 * g.log10() + 3.0103).abs() < 1e-6);
        assert!((lpf.response(0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // Hermitian so real tributaries stay real.
        let a = lpf.response(20e9);
        let b = lpf.response(-20e9);
        assert!((a - b.conj()).norm() < 1e-15);
    }

    #[test]
    fn dac_rejects_bad_config() {
        let b = tone_block(1e9, 8e9, 64);
        let mut rng = crate::rng_from_seed(1);
        let mut cfg = DacConfig::ideal(8e9);
        cfg.enob = Some(0.0);
        assert!(dac_model(&b, &cfg, &mut rng).is_err());
    }

    #[test]
    fn pipeline_reports_stages() {
        let s = ShapedConstellation::uniform(&build_qam(16).unwrap());
        let mut rng = crate::rng_from_seed(7);
        let idx: Vec<usize> = (0..512).map(|k| (k * 7) % 16).collect();
        let x = map_symbols(&idx, &s).unwrap();
        let cfg = TxConfig {
            preemphasis_db: 3.0,
            dac: Some(DacConfig::default()),
            a3: -0.02,
            ..TxConfig::default()
        };
        let mut tx = TxPipeline::new(cfg);
        let sig = tx.run(&x, &x, 130e9, &mut rng).unwrap();
        assert_eq!(sig.len(), 1024);
        let stages: Vec<&str> = tx.reports().iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(stages, ["rrc", "dac", "nonlinearity", "preemphasis"]);
        let pre = &tx.reports()[3];
        assert!((pre.power_out / pre.power_in - 1.0).abs() < 1e-6);
    }
}
