//! Information rates, SNR and rate reports.
//!
//! AIR values are in bits per complex symbol of one polarization; Tb/s
//! figures include the dual-polarization factor 2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};
use crate::rxdsp::LlrBlock;
use crate::shaping::{bits_to_tbps, fec_margin, net_bitrate_tbps};

/// Floor applied to the posterior of the transmitted symbol.
pub const POSTERIOR_FLOOR: f64 = 1e-30;

/// SNR above which an AIR below half the entropy means misaligned data.
pub const CLEAN_SNR_DB: f64 = 20.0;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Bit-metric rate `H - sum_i E[log2(1 + exp(-(1 - 2 b_i) L_i))]`, clamped
/// at zero. The block must carry its transmitted bits.
pub fn air_from_llrs(llrs: &LlrBlock, shaped: &ShapedConstellation) -> Result<f64> {
    let bits = llrs.bits().ok_or_else(|| invalid("llrs", "transmitted bits are not attached"))?;
    if llrs.m() != shaped.m() {
        return Err(Error::LengthMismatch {
            what: "bit levels",
            expected: shaped.m(),
            actual: llrs.m(),
        });
    }
    let n = llrs.symbols();
    if n == 0 {
        return Err(Error::Degenerate("empty LLR block"));
    }
    let loss: f64 = llrs
        .llrs()
        .iter()
        .zip(bits)
        .map(|(&l, &b)| {
            let s = if b == 0 { l } else { -l };
            softplus(-s)
        })
        .sum::<f64>()
        / std::f64::consts::LN_2
        / n as f64;
    Ok((shaped.entropy() - loss).max(0.0))
}

/// Flags a bit-metric AIR that only a misalignment can explain.
pub fn ensure_aligned(air: f64, entropy: f64, snr_db: f64) -> Result<()> {
    if snr_db >= CLEAN_SNR_DB && air < 0.5 * entropy {
        return Err(Error::Misaligned { air, entropy });
    }
    Ok(())
}

/// Symbol-metric rate and the number of floored posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolAir {
    pub air: f64,
    pub floored: usize,
}

/// `H + E[log2 P(x_k | y)]` from per-symbol posteriors (`M` per symbol),
/// clamped at zero.
pub fn air_from_posteriors(posteriors: &[f64], tx: &[usize], shaped: &ShapedConstellation) -> Result<SymbolAir> {
    let order = shaped.order();
    if posteriors.len() != tx.len() * order {
        return Err(Error::LengthMismatch {
            what: "posteriors",
            expected: tx.len() * order,
            actual: posteriors.len(),
        });
    }
    if tx.is_empty() {
        return Err(Error::Degenerate("no symbols"));
    }
    let mut floored = 0;
    let mut acc = 0.0;
    for (k, &x) in tx.iter().enumerate() {
        if x >= order {
            return Err(Error::IndexOutOfRange { index: x, order });
        }
        let mut p = posteriors[k * order + x];
        if !(p >= POSTERIOR_FLOOR) {
            p = POSTERIOR_FLOOR;
            floored += 1;
        }
        acc += p.log2();
    }
    Ok(SymbolAir {
        air: (shaped.entropy() + acc / tx.len() as f64).max(0.0),
        floored,
    })
}

/// `10 log10(E|x|^2 / E|y / g - x|^2)` with the least-squares complex gain
/// `g`. Identical sequences give `+inf`.
pub fn snr_estimate(rx: &[Complex64], tx: &[Complex64]) -> Result<f64> {
    if rx.len() != tx.len() {
        return Err(Error::LengthMismatch {
            what: "received symbols",
            expected: tx.len(),
            actual: rx.len(),
        });
    }
    let px: f64 = tx.iter().map(|x| x.norm_sqr()).sum();
    if px == 0.0 {
        return Err(Error::Degenerate("reference has zero power"));
    }
    let g = rx.iter().zip(tx).map(|(y, x)| y * x.conj()).sum::<Complex64>() / px;
    if g.norm() == 0.0 {
        return Err(Error::Degenerate("received symbols are uncorrelated with the reference"));
    }
    let noise: f64 = rx.iter().zip(tx).map(|(y, x)| (y / g - x).norm_sqr()).sum();
    Ok(if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (px / noise).log10()
    })
}

/// Aggregate spectral efficiency in bits/s/Hz.
pub fn spectral_efficiency(total_tbps: f64, n_channels: usize, spacing_ghz: f64) -> Result<f64> {
    if !(total_tbps > 0.0) || n_channels == 0 || !(spacing_ghz > 0.0) {
        return Err(invalid("spectral_efficiency", "inputs must be positive"));
    }
    Ok(total_tbps * 1e3 / (n_channels as f64 * spacing_ghz))
}

/// Which AIR estimate headlines a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AirFlavor {
    #[default]
    Bitwise,
    Symbolwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub format: String,
    pub order: usize,
    pub entropy: f64,
    pub symbol_rate_baud: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Figures of merit of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub snr_db: f64,
    /// Headline AIR, bits per complex symbol and polarization.
    pub air_bits_per_symbol: f64,
    pub air_flavor: AirFlavor,
    pub air_bitwise: f64,
    pub air_symbolwise: Option<f64>,
    pub floored_posteriors: usize,
    pub air_gbps: f64,
    pub air_tbps: f64,
    /// `(AIR_bitwise - (H - m)) / m`.
    pub ngmi: f64,
    pub overhead: f64,
    pub net_bitrate_tbps: f64,
    pub backoff_tbps: f64,
    /// Backoff per bit level, Tb/s.
    pub bitwise_margin: f64,
    pub metadata: ReportMetadata,
}

/// Column order of [`MetricsReport::csv_fields`].
pub const REPORT_COLUMNS: [&str; 19] = [
    "format",
    "order",
    "entropy",
    "symbol_rate_baud",
    "seed",
    "config_hash",
    "snr_db",
    "air_flavor",
    "air_bits_per_symbol",
    "air_bitwise",
    "air_symbolwise",
    "floored_posteriors",
    "air_gbps",
    "air_tbps",
    "ngmi",
    "overhead",
    "net_bitrate_tbps",
    "backoff_tbps",
    "bitwise_margin",
];

impl MetricsReport {
    pub fn new(
        snr_db: f64,
        air_bitwise: f64,
        symbolwise: Option<SymbolAir>,
        flavor: AirFlavor,
        overhead: f64,
        m: usize,
        metadata: ReportMetadata,
    ) -> Result<Self> {
        let air = match (flavor, symbolwise) {
            (AirFlavor::Bitwise, _) => air_bitwise,
            (AirFlavor::Symbolwise, Some(s)) => s.air,
            (AirFlavor::Symbolwise, None) => {
                return Err(invalid("air_flavor", "symbol-wise AIR was not computed"))
            }
        };
        let rs = metadata.symbol_rate_baud;
        let h = metadata.entropy;
        let air_tbps = bits_to_tbps(air, rs);
        let net = net_bitrate_tbps(rs, h, m, overhead).max(0.0);
        Ok(Self {
            snr_db,
            air_bits_per_symbol: air,
            air_flavor: flavor,
            air_bitwise,
            air_symbolwise: symbolwise.map(|s| s.air),
            floored_posteriors: symbolwise.map_or(0, |s| s.floored),
            air_gbps: air_tbps * 1e3,
            air_tbps,
            ngmi: (air_bitwise - (h - m as f64)) / m as f64,
            overhead,
            net_bitrate_tbps: net,
            backoff_tbps: air_tbps - net,
            bitwise_margin: fec_margin(air_tbps, net, m),
            metadata,
        })
    }

    /// Compact single-line JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report is serializable")
    }

    /// Values in [`REPORT_COLUMNS`] order.
    pub fn csv_fields(&self) -> Vec<String> {
        let md = &self.metadata;
        let flavor = match self.air_flavor {
            AirFlavor::Bitwise => "bitwise",
            AirFlavor::Symbolwise => "symbolwise",
        };
        vec![
            md.format.clone(),
            md.order.to_string(),
            md.entropy.to_string(),
            md.symbol_rate_baud.to_string(),
            md.seed.to_string(),
            md.config_hash.clone(),
            self.snr_db.to_string(),
            flavor.to_string(),
            self.air_bits_per_symbol.to_string(),
            self.air_bitwise.to_string(),
            self.air_symbolwise.map_or(String::new(), |v| v.to_string()),
            self.floored_posteriors.to_string(),
            self.air_gbps.to_string(),
            self.air_tbps.to_string(),
            self.ngmi.to_string(),
            self.overhead.to_string(),
            self.net_bitrate_tbps.to_string(),
            self.backoff_tbps.to_string(),
            self.bitwise_margin.to_string(),
        ]
    }
}
