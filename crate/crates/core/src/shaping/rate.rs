//! Net bitrate, backoff and bitwise FEC margin arithmetic.
//!
//! Rates are dual-polarization: a symbol rate `Rs` carries `2 Rs` complex
//! symbols per second. All bitrates are in Tb/s.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Rate bookkeeping for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBudget {
    pub symbol_rate_baud: f64,
    /// Entropy in bits per complex symbol.
    pub entropy: f64,
    /// Bit levels per complex symbol.
    pub m: usize,
    pub overhead: f64,
    pub code_rate: f64,
    pub air_tbps: Option<f64>,
    pub net_tbps: f64,
    pub backoff_tbps: Option<f64>,
    pub bitwise_margin_tbps: Option<f64>,
}

impl RateBudget {
    /// An operating point is error-free when the measured AIR covers the net
    /// bitrate.
    pub fn feasible(&self) -> Option<bool> {
        self.backoff_tbps.map(|b| b >= 0.0)
    }
}

/// Net bitrate `2 Rs (H - (1 - Rc) m)` with `Rc = 1 / (1 + overhead)`, in Tb/s.
pub fn net_bitrate_tbps(symbol_rate_baud: f64, entropy: f64, m: usize, overhead: f64) -> f64 {
    let code_rate = 1.0 / (1.0 + overhead);
    2.0 * symbol_rate_baud * (entropy - (1.0 - code_rate) * m as f64) / 1e12
}

/// Bitwise FEC margin `(AIR - net) / m` in Tb/s per bit level.
pub fn fec_margin(air_tbps: f64, net_tbps: f64, m: usize) -> f64 {
    (air_tbps - net_tbps) / m as f64
}

/// Builds the rate budget for a format and code point.
pub fn rate_budget(
    symbol_rate_baud: f64,
    entropy: f64,
    m: usize,
    overhead: f64,
    air_tbps: Option<f64>,
) -> Result<RateBudget> {
    if !(symbol_rate_baud > 0.0) {
        return Err(invalid("symbol_rate", "must be positive"));
    }
    if m < 2 {
        return Err(invalid("m", format!("need at least 2 bit levels, got {m}")));
    }
    if !(overhead >= 0.0) || !overhead.is_finite() {
        return Err(invalid("overhead", "must be finite and >= 0"));
    }
    if !(entropy > 0.0) || entropy > m as f64 {
        return Err(invalid(
            "entropy",
            format!("must lie in (0, m = {m}], got {entropy}"),
        ));
    }
    let net = net_bitrate_tbps(symbol_rate_baud, entropy, m, overhead);
    if net <= 0.0 {
        return Err(invalid("overhead", "parity exceeds the entropy"));
    }
    let backoff = air_tbps.map(|a| a - net);
    Ok(RateBudget {
        symbol_rate_baud,
        entropy,
        m,
        overhead,
        code_rate: 1.0 / (1.0 + overhead),
        air_tbps,
        net_tbps: net,
        backoff_tbps: backoff,
        bitwise_margin_tbps: air_tbps.map(|a| fec_margin(a, net, m)),
    })
}

/// Converts bits per complex symbol to Tb/s over both polarizations.
pub fn bits_to_tbps(bits_per_symbol: f64, symbol_rate_baud: f64) -> f64 {
    2.0 * symbol_rate_baud * bits_per_symbol / 1e12
}
