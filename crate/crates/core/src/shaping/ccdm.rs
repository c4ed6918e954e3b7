//! Constant-composition distribution matching.
//!
//! The matcher maps `k` uniform bits to a length-`N` amplitude sequence with
//! a fixed composition. Encoding is arithmetic coding with exact integer
//! interval widths: at each position the interval is split among the levels
//! still available in proportion to the number of completions each choice
//! leaves, which is the lexicographic rank of the sequence among all
//! permutations of the multiset. Decoding ranks the sequence back.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Counts per amplitude level for a block of `n` symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Composition {
    counts: Vec<usize>,
    #[serde(skip)]
    permutations: BigUint,
    input_bits: usize,
}

impl Composition {
    pub fn new(counts: Vec<usize>) -> Self {
        let permutations = multinomial(&counts);
        let input_bits = (permutations.bits() as usize).saturating_sub(1);
        Self {
            counts,
            permutations,
            input_bits,
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Block length.
    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Number of levels in the alphabet.
    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    /// Matcher input length `floor(log2(multinomial))`.
    pub fn input_bits(&self) -> usize {
        self.input_bits
    }

    /// Number of distinct sequences with this composition.
    pub fn permutations(&self) -> &BigUint {
        &self.permutations
    }

    /// Empirical distribution `counts / n`.
    pub fn distribution(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Matcher rate in bits per amplitude.
    pub fn rate(&self) -> f64 {
        self.input_bits as f64 / self.n() as f64
    }
}

fn multinomial(counts: &[usize]) -> BigUint {
    // Product of binomials C(c_1 + .. + c_i, c_i) keeps every step integral.
    let mut result = BigUint::one();
    let mut total = 0usize;
    for &c in counts {
        for j in 1..=c {
            total += 1;
            result *= BigUint::from(total);
            result /= BigUint::from(j);
        }
    }
    result
}

/// Encodes exactly `comp.input_bits()` bits into a sequence of level indices.
pub fn ccdm_encode(bits: &[u8], comp: &Composition) -> Result<Vec<usize>> {
    if bits.len() != comp.input_bits {
        return Err(Error::LengthMismatch {
            what: "matcher input bits",
            expected: comp.input_bits,
            actual: bits.len(),
        });
    }
    let mut index = BigUint::zero();
    for &b in bits {
        index <<= 1;
        if b & 1 == 1 {
            index += 1u32;
        }
    }

    let mut remaining = comp.counts.clone();
    let mut width = comp.permutations.clone();
    let mut left = comp.n();
    let mut out = Vec::with_capacity(left);
    while left > 0 {
        // Width of the sub-interval that starts with level j is
        // width * remaining[j] / left (an exact integer).
        let mut chosen = None;
        for (j, &c) in remaining.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let sub = &width * BigUint::from(c) / BigUint::from(left);
            if index < sub {
                width = sub;
                chosen = Some(j);
                break;
            }
            index -= &sub;
        }
        let j = chosen.expect("index is below the interval width");
        remaining[j] -= 1;
        left -= 1;
        out.push(j);
    }
    Ok(out)
}

/// Inverse of [`ccdm_encode`].
pub fn ccdm_decode(sequence: &[usize], comp: &Composition) -> Result<Vec<u8>> {
    if sequence.len() != comp.n() {
        return Err(Error::CompositionMismatch);
    }
    let mut observed = vec![0usize; comp.levels()];
    for &s in sequence {
        if s >= comp.levels() {
            return Err(Error::CompositionMismatch);
        }
        observed[s] += 1;
    }
    if observed != comp.counts {
        return Err(Error::CompositionMismatch);
    }

    let mut remaining = comp.counts.clone();
    let mut width = comp.permutations.clone();
    let mut left = comp.n();
    let mut index = BigUint::zero();
    for &s in sequence {
        for &c in remaining.iter().take(s) {
            if c > 0 {
                index += &width * BigUint::from(c) / BigUint::from(left);
            }
        }
        width = &width * BigUint::from(remaining[s]) / BigUint::from(left);
        remaining[s] -= 1;
        left -= 1;
    }

    let k = comp.input_bits;
    if index.bits() as usize > k {
        // Sequence ranks beyond the 2^k codewords the encoder can produce.
        return Err(Error::CompositionMismatch);
    }
    let mut bits = vec![0u8; k];
    for (i, b) in bits.iter_mut().enumerate() {
        let shift = (k - 1 - i) as u64;
        *b = index.bit(shift) as u8;
    }
    Ok(bits)
}

/// Quantises an amplitude distribution to an `n`-symbol composition.
///
/// Starts from largest-remainder rounding of `n * p`, then moves single
/// counts between levels while that lowers `D(counts/n || p)`. Ties resolve
/// toward lower level indices so the result is deterministic.
pub fn quantize_composition(p: &[f64], n: usize) -> Composition {
    let target: Vec<f64> = p.iter().map(|&x| x * n as f64).collect();
    let mut counts: Vec<usize> = target.iter().map(|&t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = target[a] - target[a].floor();
        let rb = target[b] - target[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[j] += 1;
    }

    let kl_term = |c: usize, pj: f64| -> f64 {
        if c == 0 {
            0.0
        } else {
            let q = c as f64 / n as f64;
            q * (q / pj).ln()
        }
    };
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for from in 0..counts.len() {
            if counts[from] == 0 {
                continue;
            }
            for to in 0..counts.len() {
                if to == from {
                    continue;
                }
                let delta = kl_term(counts[from] - 1, p[from]) - kl_term(counts[from], p[from])
                    + kl_term(counts[to] + 1, p[to])
                    - kl_term(counts[to], p[to]);
                if delta < -1e-12 && best.is_none_or(|(d, _, _)| delta < d) {
                    best = Some((delta, from, to));
                }
            }
        }
        match best {
            Some((_, from, to)) => {
                counts[from] -= 1;
                counts[to] += 1;
            }
            None => break,
        }
    }
    Composition::new(counts)
}

/// `log2` of a big integer, accurate to double precision.
pub(crate) fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 52 {
        return x.to_f64().unwrap_or(0.0).log2();
    }
    let shift = bits - 52;
    let top = (x >> shift).to_f64().unwrap();
    top.log2() + shift as f64
}
