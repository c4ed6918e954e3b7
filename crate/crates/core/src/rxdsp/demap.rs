//! Memoryless soft demapping with shaped priors.

use num_complex::Complex64;

use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};

/// Per-bit-level log-likelihood ratios `ln P(b = 0 | y) / P(b = 1 | y)`,
/// `m` values per complex symbol, optionally aligned with transmitted bits.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrBlock {
    m: usize,
    llrs: Vec<f64>,
    bits: Option<Vec<u8>>,
}

impl LlrBlock {
    pub fn new(m: usize, llrs: Vec<f64>) -> Result<Self> {
        if m == 0 || !llrs.len().is_multiple_of(m) {
            return Err(invalid("llrs", format!("length {} is not a multiple of m = {m}", llrs.len())));
        }
        Ok(Self {
            m,
            llrs,
            bits: None,
        })
    }

    /// Attaches the transmitted label bits (same layout as the LLRs).
    pub fn with_bits(mut self, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != self.llrs.len() {
            return Err(Error::LengthMismatch {
                what: "aligned bits",
                expected: self.llrs.len(),
                actual: bits.len(),
            });
        }
        self.bits = Some(bits);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn symbols(&self) -> usize {
        self.llrs.len() / self.m
    }

    pub fn llrs(&self) -> &[f64] {
        &self.llrs
    }

    pub fn bits(&self) -> Option<&[u8]> {
        self.bits.as_deref()
    }

    /// LLR of bit level `level` of symbol `k`.
    pub fn llr(&self, k: usize, level: usize) -> f64 {
        self.llrs[k * self.m + level]
    }

    /// Keeps symbols `range` only.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let m = self.m;
        Self {
            m,
            llrs: self.llrs[start * m..end * m].to_vec(),
            bits: self.bits.as_ref().map(|b| b[start * m..end * m].to_vec()),
        }
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact (log-sum-exp) bit LLRs including the shaped prior:
/// `L_i = ln sum_{b_i = 0} P(x) e^{-|y-x|^2/sigma2} - ln sum_{b_i = 1} (...)`.
///
/// Priors, Gaussian likelihood and labels all factor over the two real
/// dimensions, so the in-phase bits depend on `Re y` only and the sums run
/// over the levels of one dimension.
pub fn soft_demap(symbols: &[Complex64], shaped: &ShapedConstellation, sigma2: f64) -> Result<LlrBlock> {
    if !(sigma2 > 0.0) {
        return Err(invalid("sigma2", "must be positive"));
    }
    let base = shaped.base();
    let side = base.side();
    let dim_bits = base.bits_per_dim();
    let m = base.m();
    let coords: Vec<f64> = (0..side).map(|l| shaped.level_coordinate(l)).collect();
    let log_prior: Vec<f64> = shaped.level_probs().iter().map(|p| p.ln()).collect();
    // Bit j of the per-dimension label of each level.
    let dim_labels: Vec<u32> = (0..side)
        .map(|l| base.labels()[base.point_index(l, 0)] >> dim_bits)
        .collect();

    let mut llrs = Vec::with_capacity(symbols.len() * m);
    let mut metric = vec![0.0; side];
    for y in symbols {
        for component in [y.re, y.im] {
            for l in 0..side {
                let d = component - coords[l];
                metric[l] = log_prior[l] - d * d / sigma2;
            }
            for j in 0..dim_bits {
                let shift = dim_bits - 1 - j;
                let zero = (0..side)
                    .filter(|&l| (dim_labels[l] >> shift) & 1 == 0)
                    .map(|l| metric[l]);
                let one = (0..side)
                    .filter(|&l| (dim_labels[l] >> shift) & 1 == 1)
                    .map(|l| metric[l]);
                llrs.push(log_sum_exp(zero) - log_sum_exp(one));
            }
        }
    }
    LlrBlock::new(m, llrs)
}

/// Memoryless symbol posteriors `P(x | y)`, `M` per symbol.
pub fn symbol_posteriors(symbols: &[Complex64], shaped: &ShapedConstellation, sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return Err(invalid("sigma2", "must be positive"));
    }
    let points = shaped.points();
    let log_prior: Vec<f64> = shaped.probs().iter().map(|p| p.ln()).collect();
    let mut out = Vec::with_capacity(symbols.len() * points.len());
    let mut metric = vec![0.0; points.len()];
    for y in symbols {
        for (i, x) in points.iter().enumerate() {
            metric[i] = log_prior[i] - (y - x).norm_sqr() / sigma2;
        }
        let norm = log_sum_exp(metric.iter().copied());
        out.extend(metric.iter().map(|v| (v - norm).exp()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, shaped_qam, ShapedConstellation};

    #[test]
    fn signs_follow_labels_at_high_snr() {
        let s = shaped_qam(64, 5.2).unwrap();
        let block = soft_demap(s.points(), &s, 1e-4).unwrap();
        for p in 0..64 {
            for level in 0..6 {
                let bit = s.base().bit(p, level);
                let l = block.llr(p, level);
                assert!(if bit == 0 { l > 0.0 } else { l < 0.0 }, "p {p} level {level}");
            }
        }
    }

    #[test]
    fn qpsk_closed_form() {
        let s = ShapedConstellation::uniform(&build_qam(4).unwrap());
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let sigma2 = 0.37;
        let ys = [Complex64::new(0.3, -1.1), Complex64::new(-2.0, 0.05)];
        let block = soft_demap(&ys, &s, sigma2).unwrap();
        for (k, y) in ys.iter().enumerate() {
            assert!((block.llr(k, 0) - 4.0 * a * y.re / sigma2).abs() < 1e-12);
            assert!((block.llr(k, 1) - 4.0 * a * y.im / sigma2).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let s = shaped_qam(16, 3.2).unwrap();
        let block = soft_demap(&[Complex64::new(40.0, -40.0)], &s, 1e-6).unwrap();
        assert!(block.llrs().iter().all(|l| l.is_finite()));
    }

    #[test]
    fn rejects_nonpositive_variance() {
        let s = shaped_qam(16, 3.2).unwrap();
        assert!(soft_demap(&[Complex64::new(0.0, 0.0)], &s, 0.0).is_err());
    }

    #[test]
    fn posteriors_sum_to_one() {
        let s = shaped_qam(16, 3.2).unwrap();
        let post = symbol_posteriors(&[Complex64::new(0.2, 0.9), Complex64::new(-3.0, 1.0)], &s, 0.1).unwrap();
        for chunk in post.chunks(16) {
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bits_must_match_length() {
        let b = LlrBlock::new(2, vec![0.0; 6]).unwrap();
        assert!(b.clone().with_bits(vec![0; 5]).is_err());
        assert_eq!(b.with_bits(vec![1; 6]).unwrap().symbols(), 3);
        assert!(LlrBlock::new(4, vec![0.0; 6]).is_err());
    }
}
