//! WebAssembly bindings for the browser demo.
//!
//! Each exported function returns a JSON string. The `*_json` functions are
//! the plain Rust entry points and are what the native tests exercise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use pcsqam::channel::{calibrate_eta, gn_link_snr, optimal_launch, LinkConfig, Span};
use pcsqam::constellation::{shaped_qam, SUPPORTED_ORDERS};
use pcsqam::scenario::simulate_awgn_air;
use pcsqam::shaping::net_bitrate_tbps;
use pcsqam::rng_from_seed;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SYMBOL_RATE: f64 = 130e9;
const OVERHEAD: f64 = 0.137;
const MAX_SYMBOLS: usize = 200_000;
const MAX_POINTS: usize = 200;
#[allow(clippy::approx_constant)]
const LOSS_DB_PER_KM: f64 = 0.318;

#[derive(Serialize)]
struct ShapingView {
    order: usize,
    entropy: f64,
    nu: f64,
    peak_to_average_db: f64,
    net_tbps: f64,
    points: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct LaunchView {
    spans: usize,
    optimum_dbm: f64,
    launch_dbm: Vec<f64>,
    snr_db: Vec<f64>,
    snr_ase_db: Vec<f64>,
    snr_nli_db: Vec<f64>,
}

#[derive(Serialize)]
struct AirView {
    order: usize,
    entropy: f64,
    net_threshold_bits: f64,
    snr_db: Vec<f64>,
    air_bitwise: Vec<f64>,
    air_symbolwise: Vec<f64>,
}

fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0) || !(stop >= start) {
        return Err("need step > 0 and stop >= start".into());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} points"));
    }
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Constellation points with their Maxwell-Boltzmann probabilities.
pub fn shaping_json(order: usize, entropy: f64) -> Result<String, String> {
    if !SUPPORTED_ORDERS.contains(&order) {
        return Err(format!("unsupported order {order}"));
    }
    let s = shaped_qam(order, entropy).map_err(|e| e.to_string())?;
    let peak = s.points().iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
    to_json(&ShapingView {
        order,
        entropy: s.entropy(),
        nu: s.nu(),
        peak_to_average_db: 10.0 * peak.log10(),
        net_tbps: net_bitrate_tbps(SYMBOL_RATE, s.entropy(), s.m(), OVERHEAD),
        points: s.points().iter().zip(s.probs()).map(|(p, &q)| [p.re, p.im, q]).collect(),
    })
}

/// GN-model SNR against launch power, with the nonlinear coefficient set so
/// the optimum sits at `optimum_dbm`.
pub fn launch_json(spans: usize, span_km: f64, optimum_dbm: f64, start: f64, stop: f64, step: f64) -> Result<String, String> {
    if spans == 0 || spans > 100 || !(span_km > 0.0) {
        return Err("need 1 to 100 spans of positive length".into());
    }
    let mut link = LinkConfig {
        spans: vec![
            Span {
                length_km: span_km,
                attenuation_db: LOSS_DB_PER_KM * span_km,
            };
            spans
        ],
        ..LinkConfig::default()
    };
    link.nli_eta_per_span = calibrate_eta(&link, optimum_dbm).map_err(|e| e.to_string())?;
    let powers = grid(start, stop, step)?;
    let budgets: Vec<_> = powers.iter().map(|&p| gn_link_snr(&link, p)).collect();
    to_json(&LaunchView {
        spans,
        optimum_dbm: optimal_launch(&link).map_err(|e| e.to_string())?,
        snr_db: budgets.iter().map(|b| b.snr_db).collect(),
        snr_ase_db: budgets.iter().map(|b| b.snr_ase_db).collect(),
        snr_nli_db: budgets.iter().map(|b| b.snr_nli_db).collect(),
        launch_dbm: powers,
    })
}

/// Monte Carlo AIR over an SNR range on the AWGN channel.
pub fn air_json(order: usize, entropy: f64, start: f64, stop: f64, step: f64, symbols: usize, seed: u64) -> Result<String, String> {
    if !SUPPORTED_ORDERS.contains(&order) {
        return Err(format!("unsupported order {order}"));
    }
    if symbols == 0 || symbols > MAX_SYMBOLS {
        return Err(format!("symbols must be in 1..={MAX_SYMBOLS}"));
    }
    let s = shaped_qam(order, entropy).map_err(|e| e.to_string())?;
    let snrs = grid(start, stop, step)?;
    let mut bitwise = Vec::with_capacity(snrs.len());
    let mut symbolwise = Vec::with_capacity(snrs.len());
    for &snr in &snrs {
        let mut rng = rng_from_seed(seed);
        let (b, sym) = simulate_awgn_air(&s, snr, symbols, &mut rng).map_err(|e| e.to_string())?;
        bitwise.push(b);
        symbolwise.push(sym.air);
    }
    let m = s.m() as f64;
    to_json(&AirView {
        order,
        entropy: s.entropy(),
        net_threshold_bits: s.entropy() - (1.0 - 1.0 / (1.0 + OVERHEAD)) * m,
        snr_db: snrs,
        air_bitwise: bitwise,
        air_symbolwise: symbolwise,
    })
}

#[wasm_bindgen]
pub fn shaping(order: usize, entropy: f64) -> Result<String, JsError> {
    shaping_json(order, entropy).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn launch_curve(spans: usize, span_km: f64, optimum_dbm: f64, start: f64, stop: f64, step: f64) -> Result<String, JsError> {
    launch_json(spans, span_km, optimum_dbm, start, stop, step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn air_curve(order: usize, entropy: f64, start: f64, stop: f64, step: f64, symbols: usize, seed: u64) -> Result<String, JsError> {
    air_json(order, entropy, start, stop, step, symbols, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_bounds() {
        assert_eq!(grid(0.0, 1.0, 0.5).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(grid(1.0, 0.0, 0.5).is_err());
        assert!(grid(0.0, 1000.0, 1.0).is_err());
    }
}
