//! Square QAM alphabets with amplitude-shaping compatible labels and
//! Maxwell-Boltzmann probability assignment.
//!
//! Each real dimension of a `side x side` grid carries `side / 2` positive
//! amplitudes. A dimension label is one sign bit (0 = positive) followed by
//! the reflected binary Gray code of the amplitude index, innermost amplitude
//! first. Amplitude labels for a `side` that is not a power of two are the
//! first `side / 2` codewords of the next power-of-two alphabet, so 400QAM
//! inherits the 1024QAM labels restricted to 20 levels per dimension.
//!
//! Point `p` sits at row `p / side` (in-phase level) and column `p % side`
//! (quadrature level). Level `l` has coordinate `2l + 1 - side` before
//! normalisation. Bit level 0 of a label is the in-phase sign bit and bit
//! level `m / 2` the quadrature sign bit.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Orders accepted by [`build_qam`].
pub const SUPPORTED_ORDERS: [usize; 9] = [4, 16, 64, 256, 324, 400, 484, 576, 1024];

/// Labeling identifier recorded in exported metadata.
pub const LABELING: &str = "sign-bit + reflected-binary-gray amplitude, per dimension";

/// Default tolerance, in bits, of [`solve_entropy`].
pub const DEFAULT_ENTROPY_TOL: f64 = 1e-9;

/// A uniform square QAM alphabet normalised to unit mean energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    side: usize,
    amp_bits: usize,
    scale: f64,
    points: Vec<Complex64>,
    labels: Vec<u32>,
}

/// Builds the square `order`-point QAM alphabet.
pub fn build_qam(order: usize) -> Result<Constellation> {
    if !SUPPORTED_ORDERS.contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let side = (order as f64).sqrt().round() as usize;
    let amplitudes = side / 2;
    let amp_bits = ceil_log2(amplitudes);
    // Mean energy of the uniform grid: 2 (side^2 - 1) / 3.
    let scale = (3.0 / (2.0 * (side * side - 1) as f64)).sqrt();

    let mut points = Vec::with_capacity(order);
    let mut labels = Vec::with_capacity(order);
    let dim_bits = amp_bits + 1;
    for li in 0..side {
        for lq in 0..side {
            points.push(Complex64::new(
                level_value(li, side) * scale,
                level_value(lq, side) * scale,
            ));
            let label = (dim_label(li, side, amp_bits) << dim_bits) | dim_label(lq, side, amp_bits);
            labels.push(label);
        }
    }
    Ok(Constellation {
        order,
        side,
        amp_bits,
        scale,
        points,
        labels,
    })
}

fn ceil_log2(n: usize) -> usize {
    let mut bits = 0;
    while (1usize << bits) < n {
        bits += 1;
    }
    bits
}

fn level_value(level: usize, side: usize) -> f64 {
    (2 * level) as f64 + 1.0 - side as f64
}

fn gray(i: usize) -> u32 {
    (i ^ (i >> 1)) as u32
}

fn dim_label(level: usize, side: usize, amp_bits: usize) -> u32 {
    let (negative, amp) = split_level(level, side);
    ((negative as u32) << amp_bits) | gray(amp)
}

/// Splits a per-dimension level into (is_negative, amplitude index).
fn split_level(level: usize, side: usize) -> (bool, usize) {
    let half = side / 2;
    if level < half {
        (true, half - 1 - level)
    } else {
        (false, level - half)
    }
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of levels per real dimension.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Bit levels per complex symbol.
    pub fn m(&self) -> usize {
        2 * self.bits_per_dim()
    }

    pub fn bits_per_dim(&self) -> usize {
        self.amp_bits + 1
    }

    pub fn amp_bits(&self) -> usize {
        self.amp_bits
    }

    /// Positive amplitudes per dimension.
    pub fn amplitude_count(&self) -> usize {
        self.side / 2
    }

    /// Points normalised to unit mean energy under uniform probabilities.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Bit `level` (0 = most significant) of the label of point `p`.
    pub fn bit(&self, p: usize, level: usize) -> u8 {
        ((self.labels[p] >> (self.m() - 1 - level)) & 1) as u8
    }

    /// Uniform-normalised coordinate of per-dimension level `l`.
    pub fn level_coordinate(&self, level: usize) -> f64 {
        level_value(level, self.side) * self.scale
    }

    /// Uniform-normalised positive amplitudes, innermost first.
    pub fn amplitude_levels(&self) -> Vec<f64> {
        (0..self.amplitude_count())
            .map(|a| (2 * a + 1) as f64 * self.scale)
            .collect()
    }

    /// Point index from in-phase and quadrature levels.
    pub fn point_index(&self, level_i: usize, level_q: usize) -> usize {
        level_i * self.side + level_q
    }

    /// In-phase and quadrature levels of point `p`.
    pub fn levels_of(&self, p: usize) -> (usize, usize) {
        (p / self.side, p % self.side)
    }

    /// Per-dimension level from a sign and an amplitude index.
    pub fn level_from(&self, negative: bool, amplitude: usize) -> usize {
        let half = self.side / 2;
        if negative {
            half - 1 - amplitude
        } else {
            half + amplitude
        }
    }

    /// Sign and amplitude index of a per-dimension level.
    pub fn sign_amplitude(&self, level: usize) -> (bool, usize) {
        split_level(level, self.side)
    }

    /// Entropy in bits per complex symbol of the Maxwell-Boltzmann
    /// distribution with rate `nu`.
    pub fn entropy_at(&self, nu: f64) -> f64 {
        2.0 * dim_distribution(self, nu).1
    }
}

/// Per-dimension level probabilities and their entropy in bits.
fn dim_distribution(c: &Constellation, nu: f64) -> (Vec<f64>, f64) {
    let energies: Vec<f64> = (0..c.side)
        .map(|l| c.level_coordinate(l).powi(2))
        .collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-nu * (e - e_min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    // H = (nu E[e - e_min] + ln Z) / ln 2 avoids log(0) for vanishing levels.
    let mean_shift: f64 = probs
        .iter()
        .zip(&energies)
        .map(|(p, e)| p * (e - e_min))
        .sum();
    let h = (nu * mean_shift + z.ln()) / std::f64::consts::LN_2;
    (probs, h)
}

/// A constellation with Maxwell-Boltzmann probabilities, rescaled so the
/// shaped mean energy is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedConstellation {
    base: Constellation,
    nu: f64,
    probs: Vec<f64>,
    level_probs: Vec<f64>,
    entropy: f64,
    energy_scale: f64,
    points: Vec<Complex64>,
}

/// Imposes `P(x) ∝ exp(-nu |x|^2)` on the uniform-normalised points.
pub fn apply_maxwell_boltzmann(c: &Constellation, nu: f64) -> Result<ShapedConstellation> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(invalid("nu", format!("must be finite and >= 0, got {nu}")));
    }
    let (level_probs, dim_entropy) = dim_distribution(c, nu);
    let side = c.side;
    let mut probs = Vec::with_capacity(c.order);
    for li in 0..side {
        for lq in 0..side {
            probs.push(level_probs[li] * level_probs[lq]);
        }
    }
    let mean_energy: f64 = probs
        .iter()
        .zip(&c.points)
        .map(|(p, x)| p * x.norm_sqr())
        .sum();
    let energy_scale = 1.0 / mean_energy.sqrt();
    let points = c.points.iter().map(|x| x * energy_scale).collect();
    Ok(ShapedConstellation {
        base: c.clone(),
        nu,
        probs,
        level_probs,
        entropy: 2.0 * dim_entropy,
        energy_scale,
        points,
    })
}

/// Finds the shaping rate whose entropy is within `tol` of `target`.
///
/// Entropy is strictly decreasing in `nu`, so the root is bracketed by
/// doubling an upper bound and then bisected.
pub fn solve_entropy(c: &Constellation, target: f64, tol: f64) -> Result<f64> {
    let max = (c.order as f64).log2();
    if !(target > 2.0 && target <= max + 1e-12) {
        return Err(Error::EntropyOutOfRange {
            target,
            min: 2.0,
            max,
        });
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if c.entropy_at(0.0) - target <= tol {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while c.entropy_at(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let h = c.entropy_at(mid);
        if (h - target).abs() <= tol || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Convenience: build, solve and shape in one call.
pub fn shaped_qam(order: usize, entropy: f64) -> Result<ShapedConstellation> {
    let c = build_qam(order)?;
    let nu = solve_entropy(&c, entropy, DEFAULT_ENTROPY_TOL)?;
    apply_maxwell_boltzmann(&c, nu)
}

impl ShapedConstellation {
    pub fn uniform(c: &Constellation) -> Self {
        apply_maxwell_boltzmann(c, 0.0).expect("nu = 0 is valid")
    }

    pub fn base(&self) -> &Constellation {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.base.order
    }

    pub fn m(&self) -> usize {
        self.base.m()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Entropy in bits per complex symbol.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn energy_scale(&self) -> f64 {
        self.energy_scale
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Per-dimension level probabilities.
    pub fn level_probs(&self) -> &[f64] {
        &self.level_probs
    }

    /// Points scaled to unit mean energy under the shaped distribution.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Per-dimension amplitude distribution (sign folded in), innermost first.
    pub fn amplitude_probs(&self) -> Vec<f64> {
        let half = self.base.side / 2;
        (0..half)
            .map(|a| 2.0 * self.level_probs[half + a])
            .collect()
    }

    /// Shaped coordinate of per-dimension level `l`.
    pub fn level_coordinate(&self, level: usize) -> f64 {
        self.base.level_coordinate(level) * self.energy_scale
    }

    /// Nearest per-dimension level to a real coordinate.
    pub fn decide_level(&self, y: f64) -> usize {
        let side = self.base.side as f64;
        let step = 2.0 * self.base.scale * self.energy_scale;
        let l = ((y / step * 2.0 + side - 1.0) / 2.0).round();
        l.clamp(0.0, side - 1.0) as usize
    }

    /// Nearest constellation point (minimum Euclidean distance).
    pub fn decide(&self, y: Complex64) -> usize {
        self.base
            .point_index(self.decide_level(y.re), self.decide_level(y.im))
    }

    /// Mean energy under the shaped probabilities (one by construction).
    pub fn mean_energy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.points)
            .map(|(p, x)| p * x.norm_sqr())
            .sum()
    }

    pub fn export(&self) -> ConstellationExport {
        ConstellationExport {
            order: self.order(),
            m: self.m(),
            labeling: LABELING.to_string(),
            nu: self.nu,
            entropy: self.entropy,
            energy_scale: self.energy_scale,
            points: self.points.iter().map(|x| [x.re, x.im]).collect(),
            labels: self.base.labels.clone(),
            probs: self.probs.clone(),
        }
    }
}

/// JSON form of a shaped constellation.
#[derive(Debug, Clone, Serialize)]
pub struct ConstellationExport {
    pub order: usize,
    pub m: usize,
    pub labeling: String,
    pub nu: f64,
    pub entropy: f64,
    pub energy_scale: f64,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<u32>,
    pub probs: Vec<f64>,
}
