//! Fractionally spaced 2x2 butterfly equalizer adapted by normalised LMS.
//!
//! Each output polarization is `y_p[k] = sum_q sum_i h_pq[i] x_q[k sps + a + i - T/2]`
//! with circular indexing over the block. The error is formed against the
//! reference rotated by a decision-directed carrier phase estimate, so slow
//! laser phase drift does not drag the taps; outputs are returned without
//! that rotation so carrier recovery runs afterwards.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};
use crate::signal::SignalBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerMode {
    /// Known symbols are the reference throughout.
    PilotDirected,
    /// Known symbols during training, decisions afterwards.
    DecisionDirected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EqualizerConfig {
    pub taps: usize,
    pub mu: f64,
    pub mode: EqualizerMode,
    /// Leading symbols used as training.
    pub training_symbols: usize,
    /// Passes over the training symbols before the final pass.
    pub training_passes: usize,
    /// Gain of the phase tracker inside the error computation.
    pub phase_gain: f64,
    /// Symbols per MSE trace entry.
    pub trace_block: usize,
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        Self {
            taps: 65,
            mu: 0.01,
            mode: EqualizerMode::DecisionDirected,
            training_symbols: 4096,
            training_passes: 3,
            phase_gain: 0.02,
            trace_block: 1024,
        }
    }
}

/// Taps and convergence trace of one equalizer run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualizerState {
    pub config: EqualizerConfig,
    /// `taps[p][q]` maps input polarization `q` to output `p`.
    pub taps: [[Vec<Complex64>; 2]; 2],
    /// Mean squared error per trace block of the final pass.
    pub trace: Vec<f64>,
}

impl EqualizerState {
    pub fn new(config: EqualizerConfig) -> Result<Self> {
        if config.taps.is_multiple_of(2) || config.taps == 0 {
            return Err(invalid("taps", "tap count must be odd"));
        }
        if !(config.mu > 0.0) {
            return Err(invalid("mu", "step size must be positive"));
        }
        let zero = vec![Complex64::new(0.0, 0.0); config.taps];
        let mut centre = zero.clone();
        centre[config.taps / 2] = Complex64::new(1.0, 0.0);
        Ok(Self {
            config,
            taps: [[centre.clone(), zero.clone()], [zero, centre]],
            trace: Vec::new(),
        })
    }

    /// Centre-tap magnitude and the largest other tap, in dB relative to it.
    pub fn tap_summary(&self, p: usize, q: usize) -> (Complex64, f64) {
        let t = &self.taps[p][q];
        let c = t.len() / 2;
        let other = t
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != c)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        (t[c], 20.0 * (other / t[c].norm()).log10())
    }
}

/// Equalizes both polarizations to one sample per symbol.
///
/// `pilots` holds the transmitted symbols of both polarizations; how much
/// of them is used depends on the mode.
pub fn mimo_equalize(
    sig: &SignalBlock,
    state: &mut EqualizerState,
    pilots: &[Vec<Complex64>; 2],
    shaped: &ShapedConstellation,
) -> Result<[Vec<Complex64>; 2]> {
    let cfg = state.config;
    let sps = sig.samples_per_symbol;
    let n_sym = sig.len() / sps;
    if pilots[0].len() < n_sym.min(cfg.training_symbols) || pilots[1].len() != pilots[0].len() {
        return Err(Error::LengthMismatch {
            what: "pilot symbols",
            expected: n_sym.min(cfg.training_symbols),
            actual: pilots[0].len().min(pilots[1].len()),
        });
    }
    let train = cfg.training_symbols.min(n_sym);
    for _ in 0..cfg.training_passes {
        let mut phase = [0.0; 2];
        run_pass(sig, state, pilots, shaped, 0..train, &mut phase, true, None)?;
    }
    state.trace.clear();
    let mut phase = [0.0; 2];
    let mut out = [vec![Complex64::new(0.0, 0.0); n_sym], vec![Complex64::new(0.0, 0.0); n_sym]];
    run_pass(sig, state, pilots, shaped, 0..n_sym, &mut phase, false, Some(&mut out))?;
    check_divergence(&state.trace)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_pass(
    sig: &SignalBlock,
    state: &mut EqualizerState,
    pilots: &[Vec<Complex64>; 2],
    shaped: &ShapedConstellation,
    range: std::ops::Range<usize>,
    phase: &mut [f64; 2],
    training: bool,
    mut out: Option<&mut [Vec<Complex64>; 2]>,
) -> Result<()> {
    let cfg = state.config;
    let sps = sig.samples_per_symbol;
    let n = sig.len() as isize;
    let t = cfg.taps;
    let half = (t / 2) as isize;
    let mut window = [vec![Complex64::new(0.0, 0.0); t], vec![Complex64::new(0.0, 0.0); t]];
    let mut err_acc = 0.0;
    let mut err_count = 0usize;
    for k in range {
        let centre = (k * sps + sig.alignment) as isize;
        for q in 0..2 {
            for i in 0..t {
                let idx = (centre + i as isize - half).rem_euclid(n) as usize;
                window[q][i] = sig.pols[q][idx];
            }
        }
        let energy: f64 = window.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() + 1e-12;
        let use_pilot = training
            || k < cfg.training_symbols
            || cfg.mode == EqualizerMode::PilotDirected;
        for p in 0..2 {
            let mut y = Complex64::new(0.0, 0.0);
            for q in 0..2 {
                for (h, x) in state.taps[p][q].iter().zip(&window[q]) {
                    y += h * x;
                }
            }
            let rot = Complex64::from_polar(1.0, phase[p]);
            let derotated = y * rot.conj();
            let d = if use_pilot {
                pilots[p][k]
            } else {
                shaped.points()[shaped.decide(derotated)]
            };
            let e = d * rot - y;
            if !e.re.is_finite() || !e.im.is_finite() {
                return Err(Error::Diverged {
                    from: 0.0,
                    to: f64::INFINITY,
                });
            }
            phase[p] += cfg.phase_gain * (derotated * d.conj()).arg();
            let step = cfg.mu / energy;
            for q in 0..2 {
                for (h, x) in state.taps[p][q].iter_mut().zip(&window[q]) {
                    *h += e * x.conj() * step;
                }
            }
            if let Some(o) = out.as_deref_mut() {
                o[p][k] = y;
            }
            err_acc += (y * rot.conj() - d).norm_sqr();
            err_count += 1;
        }
        if !training && err_count == 2 * cfg.trace_block {
            state.trace.push(err_acc / err_count as f64);
            err_acc = 0.0;
            err_count = 0;
        }
    }
    if !training && err_count > 0 {
        state.trace.push(err_acc / err_count as f64);
    }
    Ok(())
}

/// Flags a trace whose MSE keeps rising to well above its best value.
pub fn check_divergence(trace: &[f64]) -> Result<()> {
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            from: trace.first().copied().unwrap_or(0.0),
            to: f64::INFINITY,
        });
    }
    if trace.len() < 4 {
        return Ok(());
    }
    let best = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = &trace[trace.len() - 3..];
    let rising = tail.windows(2).all(|w| w[1] > w[0]);
    let last = *tail.last().unwrap();
    if rising && last > 10.0 * best {
        return Err(Error::Diverged { from: best, to: last });
    }
    Ok(())
}
