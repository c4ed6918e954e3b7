//! Link impairments on the sampled waveform and the Gaussian-noise link
//! budget.
//!
//! Kerr nonlinearity enters only through the analytic budget
//! ([`gn_link_snr`]): nonlinear interference grows with the cube of the
//! launch power and its coefficient is calibrated per link. The waveform path
//! takes its noise loading from that budget.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::SignalBlock;
use crate::{db_to_lin, fft, lin_to_db};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// OSNR reference bandwidth (0.1 nm at 1550 nm), Hz.
pub const OSNR_REF_BANDWIDTH: f64 = 12.5e9;

/// One fiber span followed by an EDFA that restores its loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub length_km: f64,
    pub attenuation_db: f64,
}

/// Static description of an amplified link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub spans: Vec<Span>,
    /// Chromatic dispersion, ps/(nm km).
    pub dispersion_ps_nm_km: f64,
    pub center_frequency_hz: f64,
    pub edfa_nf_db: f64,
    /// Nonlinear interference coefficient per span, 1/W^2.
    pub nli_eta_per_span: f64,
    /// Bandwidth in which the budget counts noise, Hz.
    pub noise_bandwidth_hz: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            spans: Vec::new(),
            dispersion_ps_nm_km: 17.0,
            center_frequency_hz: 193.1e12,
            edfa_nf_db: 5.0,
            nli_eta_per_span: 0.0,
            noise_bandwidth_hz: 130e9,
        }
    }
}

/// Launch power the calibrated field links are anchored to.
pub const CALIBRATED_OPTIMUM_DBM: f64 = 7.0;

impl LinkConfig {
    /// `n` spans of 61.3 km with 19.5 dB loss, NLI calibrated so the optimum
    /// launch power is [`CALIBRATED_OPTIMUM_DBM`].
    pub fn field_61km(n: usize) -> Self {
        let mut link = Self {
            spans: vec![
                Span {
                    length_km: 61.3,
                    attenuation_db: 19.5,
                };
                n
            ],
            ..Self::default()
        };
        link.nli_eta_per_span = calibrate_eta(&link, CALIBRATED_OPTIMUM_DBM)
            .expect("field link has spans");
        link
    }

    /// The single 96.5 km, 23 dB span, sharing the per-span NLI coefficient of
    /// the 61.3 km spans.
    pub fn field_96km() -> Self {
        Self {
            spans: vec![Span {
                length_km: 96.5,
                attenuation_db: 23.0,
            }],
            nli_eta_per_span: Self::field_61km(1).nli_eta_per_span,
            ..Self::default()
        }
    }

    /// Back-to-back: no fiber.
    pub fn back_to_back() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.spans {
            if !(s.length_km > 0.0) {
                return Err(invalid("span.length_km", "must be positive"));
            }
            if !(s.attenuation_db >= 0.0) {
                return Err(invalid("span.attenuation_db", "must be >= 0"));
            }
        }
        if !(self.center_frequency_hz > 0.0) || !(self.noise_bandwidth_hz > 0.0) {
            return Err(invalid("link", "frequencies must be positive"));
        }
        if !(self.nli_eta_per_span >= 0.0) {
            return Err(invalid("nli_eta_per_span", "must be >= 0"));
        }
        Ok(())
    }

    pub fn total_length_km(&self) -> f64 {
        self.spans.iter().map(|s| s.length_km).sum()
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency_hz
    }

    /// Group-velocity dispersion `beta2 = -D lambda^2 / (2 pi c)`, s^2/m.
    pub fn beta2(&self) -> f64 {
        let d = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        let lambda = self.wavelength_m();
        -d * lambda * lambda / (2.0 * PI * SPEED_OF_LIGHT)
    }

    /// ASE power in the noise bandwidth accumulated over all amplifiers, W.
    pub fn ase_power_w(&self) -> f64 {
        let nf = db_to_lin(self.edfa_nf_db);
        let photon = PLANCK * self.center_frequency_hz;
        self.spans
            .iter()
            .map(|s| (db_to_lin(s.attenuation_db) - 1.0) * nf * photon * self.noise_bandwidth_hz)
            .sum()
    }

    /// Link NLI coefficient (incoherent sum over spans), 1/W^2.
    pub fn eta_total(&self) -> f64 {
        self.nli_eta_per_span * self.spans.len() as f64
    }
}

/// Laser, I/Q and timing impairments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ImpairmentConfig {
    /// Combined transmitter and local-oscillator linewidth, Hz.
    pub linewidth_hz: f64,
    /// Quadrature gain relative to in-phase, dB, per polarization.
    pub iq_gain_imbalance_db: [f64; 2],
    /// Quadrature phase error, degrees, per polarization.
    pub iq_phase_error_deg: [f64; 2],
    /// Delay of XI, XQ, YI, YQ, ps.
    pub skew_ps: [f64; 4],
    pub frequency_offset_hz: f64,
}

fn cd_filter(sig: &SignalBlock, link: &LinkConfig, sign: f64) -> SignalBlock {
    let mut out = sig.clone();
    let length = link.total_length_km() * 1e3;
    if length == 0.0 || link.dispersion_ps_nm_km == 0.0 {
        return out;
    }
    let k = sign * link.beta2() / 2.0 * length;
    for pol in &mut out.pols {
        fft::filter_complex(pol, sig.sample_rate, |f| {
            let w = 2.0 * PI * f;
            Complex64::from_polar(1.0, k * w * w)
        });
    }
    out
}

/// All-pass dispersion `H(w) = exp(j beta2 / 2 w^2 L)` over the whole link.
pub fn apply_cd(sig: &SignalBlock, link: &LinkConfig) -> SignalBlock {
    cd_filter(sig, link, 1.0)
}

/// Exact inverse of [`apply_cd`].
pub fn cd_compensate(sig: &SignalBlock, link: &LinkConfig) -> SignalBlock {
    cd_filter(sig, link, -1.0)
}

/// Adds complex white Gaussian noise so that the total signal power over the
/// noise power in [`OSNR_REF_BANDWIDTH`] equals `osnr_db`. Infinite OSNR
/// leaves the block untouched.
pub fn add_ase<R: Rng + ?Sized>(sig: &SignalBlock, osnr_db: f64, rng: &mut R) -> Result<SignalBlock> {
    if osnr_db.is_nan() {
        return Err(invalid("osnr_db", "must not be NaN"));
    }
    let mut out = sig.clone();
    if osnr_db == f64::INFINITY {
        return Ok(out);
    }
    let p_sig = sig.power();
    let psd_total = p_sig / (db_to_lin(osnr_db) * OSNR_REF_BANDWIDTH);
    // Each polarization holds half of the noise spread over the sample rate.
    let sigma = (psd_total / 2.0 * sig.sample_rate / 2.0).sqrt();
    for pol in &mut out.pols {
        for x in pol.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *x += Complex64::new(re, im) * sigma;
        }
    }
    Ok(out)
}

/// OSNR that yields electrical SNR `snr_db` at symbol rate `rs` (matched
/// filtering, noise in both polarizations).
pub fn osnr_from_snr(snr_db: f64, symbol_rate: f64) -> f64 {
    snr_db + lin_to_db(symbol_rate / OSNR_REF_BANDWIDTH)
}

pub fn snr_from_osnr(osnr_db: f64, symbol_rate: f64) -> f64 {
    osnr_db - lin_to_db(symbol_rate / OSNR_REF_BANDWIDTH)
}

/// Wiener phase noise with per-sample increment variance
/// `2 pi linewidth / sample_rate`, common to both polarizations (one
/// transmitter laser and one local oscillator). Returns the block and the
/// phase track.
pub fn phase_noise<R: Rng + ?Sized>(
    sig: &SignalBlock,
    linewidth_hz: f64,
    rng: &mut R,
) -> Result<(SignalBlock, Vec<f64>)> {
    if !(linewidth_hz >= 0.0) {
        return Err(invalid("linewidth_hz", "must be >= 0"));
    }
    let mut out = sig.clone();
    if linewidth_hz == 0.0 {
        return Ok((out, vec![0.0; sig.len()]));
    }
    let sigma = (2.0 * PI * linewidth_hz / sig.sample_rate).sqrt();
    let mut phi = 0.0;
    let track: Vec<f64> = (0..sig.len())
        .map(|_| {
            let n: f64 = StandardNormal.sample(rng);
            phi += sigma * n;
            phi
        })
        .collect();
    for pol in &mut out.pols {
        for (x, &p) in pol.iter_mut().zip(&track) {
            *x *= Complex64::from_polar(1.0, p);
        }
    }
    Ok((out, track))
}

/// Per polarization: quadrature gain `g` and phase error `theta`
/// (`Q' = g (Q cos theta + I sin theta)`), per-tributary delay by a
/// frequency-domain fractional-delay filter, then a common frequency offset.
/// An all-zero configuration returns the input bit for bit.
pub fn iq_impair(sig: &SignalBlock, imp: &ImpairmentConfig) -> SignalBlock {
    let mut out = sig.clone();
    for p in 0..2 {
        let g = db_to_lin(imp.iq_gain_imbalance_db[p] / 2.0);
        let theta = imp.iq_phase_error_deg[p].to_radians();
        if imp.iq_gain_imbalance_db[p] == 0.0 && theta == 0.0 {
            continue;
        }
        let (s, c) = theta.sin_cos();
        for x in out.pols[p].iter_mut() {
            let q = g * (x.im * c + x.re * s);
            *x = Complex64::new(x.re, q);
        }
    }
    if imp.skew_ps.iter().any(|&s| s != 0.0) {
        let fs = sig.sample_rate;
        out.map_tributaries(|i, trib| {
            let tau = imp.skew_ps[i] * 1e-12;
            if tau != 0.0 {
                fft::filter_real(trib, fs, |f| Complex64::from_polar(1.0, -2.0 * PI * f * tau));
            }
        });
    }
    if imp.frequency_offset_hz != 0.0 {
        let step = 2.0 * PI * imp.frequency_offset_hz / sig.sample_rate;
        for pol in &mut out.pols {
            for (k, x) in pol.iter_mut().enumerate() {
                *x *= Complex64::from_polar(1.0, step * k as f64);
            }
        }
    }
    out
}

/// Image rejection ratio `|(1 + g e^{j theta}) / (1 - g e^{j theta})|^2` in dB
/// for amplitude ratio `g` and phase error `theta` (radians).
pub fn image_rejection_ratio_db(g: f64, theta: f64) -> f64 {
    let e = Complex64::from_polar(g, theta);
    let one = Complex64::new(1.0, 0.0);
    lin_to_db((one + e).norm_sqr() / (one - e).norm_sqr())
}

/// Applies the unitary Jones matrix
/// `[[cos t, -e^{-j p} sin t], [e^{j p} sin t, cos t]]`.
pub fn rotate_polarization(sig: &SignalBlock, theta: f64, phi: f64) -> SignalBlock {
    let mut out = sig.clone();
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    for k in 0..sig.len() {
        let x = sig.pols[0][k];
        let y = sig.pols[1][k];
        out.pols[0][k] = x * c - e.conj() * s * y;
        out.pols[1][k] = e * s * x + y * c;
    }
    out
}

/// Static random polarization rotation drawn from `rng`.
pub fn random_polarization<R: Rng + ?Sized>(sig: &SignalBlock, rng: &mut R) -> (SignalBlock, f64, f64) {
    let theta = rng.random::<f64>() * PI;
    let phi = rng.random::<f64>() * 2.0 * PI;
    (rotate_polarization(sig, theta, phi), theta, phi)
}

/// Breakdown of the analytic link budget at one launch power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GnBudget {
    pub launch_dbm: f64,
    pub signal_w: f64,
    pub ase_w: f64,
    pub nli_w: f64,
    pub snr_db: f64,
    pub snr_ase_db: f64,
    pub snr_nli_db: f64,
}

/// `SNR = P / (P_ase + eta P^3)` for launch power `p_launch_dbm`.
pub fn gn_link_snr(link: &LinkConfig, p_launch_dbm: f64) -> GnBudget {
    let p = dbm_to_w(p_launch_dbm);
    let ase = link.ase_power_w();
    let nli = link.eta_total() * p * p * p;
    GnBudget {
        launch_dbm: p_launch_dbm,
        signal_w: p,
        ase_w: ase,
        nli_w: nli,
        snr_db: lin_to_db(p / (ase + nli)),
        snr_ase_db: lin_to_db(p / ase),
        snr_nli_db: lin_to_db(p / nli),
    }
}

/// Analytic optimum `(P_ase / (2 eta))^(1/3)` in dBm.
pub fn optimal_launch(link: &LinkConfig) -> Result<f64> {
    let eta = link.eta_total();
    if !(eta > 0.0) {
        return Err(Error::NoOptimum("NLI coefficient is zero; SNR grows without bound"));
    }
    let ase = link.ase_power_w();
    if !(ase > 0.0) {
        return Err(Error::NoOptimum("link has no ASE"));
    }
    Ok(w_to_dbm((ase / (2.0 * eta)).cbrt()))
}

/// Per-span NLI coefficient that places the optimum of `link` at
/// `target_dbm`.
pub fn calibrate_eta(link: &LinkConfig, target_dbm: f64) -> Result<f64> {
    if link.spans.is_empty() {
        return Err(invalid("link", "calibration needs at least one span"));
    }
    let p = dbm_to_w(target_dbm);
    Ok(link.ase_power_w() / (2.0 * p * p * p) / link.spans.len() as f64)
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * db_to_lin(dbm)
}

pub fn w_to_dbm(w: f64) -> f64 {
    lin_to_db(w / 1e-3)
}
