//! Probabilistic amplitude shaping frame layout with an idealised FEC.
//!
//! One frame covers `n` complex symbols of one polarization. Each real
//! dimension gets its own matcher block of `n` amplitudes. The `2n` sign
//! positions carry the remaining information bits first and then the parity
//! bits of a systematic code of rate `1 / (1 + overhead)` over all `m n`
//! label bits. Parity is drawn from the caller's random source; no decoder
//! runs, so error-free operation is a rate-accounting statement.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::ccdm::{ccdm_decode, ccdm_encode, log2_big, quantize_composition, Composition};
use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};

/// Frame builder for one shaped format, block length and code overhead.
#[derive(Debug, Clone)]
pub struct PasFramer {
    shaped: ShapedConstellation,
    composition: Composition,
    n: usize,
    overhead: f64,
    parity_bits: usize,
}

/// A framed block: symbol indices and the label bits they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub symbols: Vec<usize>,
    /// `m` label bits per symbol, most significant bit level first.
    pub label_bits: Vec<u8>,
}

/// Matcher and rate bookkeeping reported alongside every frame.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FrameMetadata {
    pub order: usize,
    pub m: usize,
    pub symbols: usize,
    pub overhead: f64,
    pub composition: Vec<usize>,
    pub matcher_input_bits: usize,
    pub matcher_rate: f64,
    pub amplitude_entropy: f64,
    pub parity_bits: usize,
    pub info_bits: usize,
    /// `H - (1 - Rc) m`, bits per complex symbol.
    pub target_rate: f64,
    /// Information bits per complex symbol actually carried.
    pub realized_rate: f64,
    /// `target_rate - realized_rate`.
    pub rate_loss: f64,
}

impl PasFramer {
    pub fn new(shaped: &ShapedConstellation, overhead: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "frame needs at least one symbol"));
        }
        if !(overhead >= 0.0) || !overhead.is_finite() {
            return Err(invalid("overhead", format!("must be finite and >= 0, got {overhead}")));
        }
        let m = shaped.m();
        let code_rate = 1.0 / (1.0 + overhead);
        let parity = (1.0 - code_rate) * (m * n) as f64;
        let parity_bits = (parity - 1e-9).ceil().max(0.0) as usize;
        if parity_bits > 2 * n {
            return Err(invalid(
                "overhead",
                format!("{parity_bits} parity bits exceed the {} sign positions", 2 * n),
            ));
        }
        let composition = quantize_composition(&shaped.amplitude_probs(), n);
        Ok(Self {
            shaped: shaped.clone(),
            composition,
            n,
            overhead,
            parity_bits,
        })
    }

    pub fn composition(&self) -> &Composition {
        &self.composition
    }

    pub fn symbols(&self) -> usize {
        self.n
    }

    /// Information bits consumed by one frame.
    pub fn info_bits(&self) -> usize {
        2 * self.composition.input_bits() + 2 * self.n - self.parity_bits
    }

    pub fn metadata(&self) -> FrameMetadata {
        let m = self.shaped.m();
        let code_rate = 1.0 / (1.0 + self.overhead);
        let target = self.shaped.entropy() - (1.0 - code_rate) * m as f64;
        let realized = self.info_bits() as f64 / self.n as f64;
        let amplitude_entropy: f64 = self
            .shaped
            .amplitude_probs()
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum();
        FrameMetadata {
            order: self.shaped.order(),
            m,
            symbols: self.n,
            overhead: self.overhead,
            composition: self.composition.counts().to_vec(),
            matcher_input_bits: self.composition.input_bits(),
            matcher_rate: log2_floor_rate(&self.composition),
            amplitude_entropy,
            parity_bits: self.parity_bits,
            info_bits: self.info_bits(),
            target_rate: target,
            realized_rate: realized,
            rate_loss: target - realized,
        }
    }

    /// Frames `info` (exactly [`info_bits`](Self::info_bits) long).
    pub fn frame<R: Rng + ?Sized>(&self, info: &[u8], rng: &mut R) -> Result<Frame> {
        if info.len() != self.info_bits() {
            return Err(Error::LengthMismatch {
                what: "frame information bits",
                expected: self.info_bits(),
                actual: info.len(),
            });
        }
        let k = self.composition.input_bits();
        let amps_i = ccdm_encode(&info[..k], &self.composition)?;
        let amps_q = ccdm_encode(&info[k..2 * k], &self.composition)?;
        let sign_info = &info[2 * k..];

        let base = self.shaped.base();
        let mut symbols = Vec::with_capacity(self.n);
        for s in 0..self.n {
            let sign = |pos: usize, rng: &mut R| -> bool {
                if pos < sign_info.len() {
                    sign_info[pos] == 1
                } else {
                    rng.random::<bool>()
                }
            };
            let neg_i = sign(2 * s, rng);
            let neg_q = sign(2 * s + 1, rng);
            let li = base.level_from(neg_i, amps_i[s]);
            let lq = base.level_from(neg_q, amps_q[s]);
            symbols.push(base.point_index(li, lq));
        }
        let label_bits = label_bits(&self.shaped, &symbols);
        Ok(Frame {
            symbols,
            label_bits,
        })
    }

    /// Recovers the information bits from error-free symbol decisions.
    pub fn deframe(&self, symbols: &[usize]) -> Result<Vec<u8>> {
        if symbols.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "frame symbols",
                expected: self.n,
                actual: symbols.len(),
            });
        }
        let base = self.shaped.base();
        let mut amps_i = Vec::with_capacity(self.n);
        let mut amps_q = Vec::with_capacity(self.n);
        let mut signs = Vec::with_capacity(2 * self.n);
        for &p in symbols {
            if p >= base.order() {
                return Err(Error::IndexOutOfRange {
                    index: p,
                    order: base.order(),
                });
            }
            let (li, lq) = base.levels_of(p);
            let (neg_i, ai) = base.sign_amplitude(li);
            let (neg_q, aq) = base.sign_amplitude(lq);
            amps_i.push(ai);
            amps_q.push(aq);
            signs.push(neg_i as u8);
            signs.push(neg_q as u8);
        }
        let mut info = ccdm_decode(&amps_i, &self.composition)?;
        info.extend(ccdm_decode(&amps_q, &self.composition)?);
        info.extend_from_slice(&signs[..2 * self.n - self.parity_bits]);
        Ok(info)
    }
}

fn log2_floor_rate(comp: &Composition) -> f64 {
    comp.input_bits() as f64 / comp.n() as f64
}

/// `log2` of the number of sequences of a composition, per symbol.
pub fn composition_log_rate(comp: &Composition) -> f64 {
    log2_big(comp.permutations()) / comp.n() as f64
}

/// Label bits (`m` per symbol) of a symbol-index sequence.
pub fn label_bits(shaped: &ShapedConstellation, symbols: &[usize]) -> Vec<u8> {
    let base = shaped.base();
    let m = base.m();
    let mut bits = Vec::with_capacity(symbols.len() * m);
    for &p in symbols {
        for level in 0..m {
            bits.push(base.bit(p, level));
        }
    }
    bits
}

/// Quantises the shaped per-dimension amplitude distribution to `n` symbols.
pub fn composition_for(shaped: &ShapedConstellation, n: usize) -> Result<Composition> {
    if n == 0 {
        return Err(invalid("n", "block length must be at least 1"));
    }
    Ok(quantize_composition(&shaped.amplitude_probs(), n))
}

/// Frames one polarization; see [`PasFramer`].
pub fn pas_frame<R: Rng + ?Sized>(
    info_bits: &[u8],
    shaped: &ShapedConstellation,
    overhead: f64,
    n: usize,
    rng: &mut R,
) -> Result<(Frame, FrameMetadata)> {
    let framer = PasFramer::new(shaped, overhead, n)?;
    let frame = framer.frame(info_bits, rng)?;
    Ok((frame, framer.metadata()))
}

/// Writes `<prefix>.bin` (little-endian `u16` symbol indices) and
/// `<prefix>.json` (metadata).
pub fn write_frame_dump(prefix: &Path, frame: &Frame, meta: &FrameMetadata) -> std::io::Result<()> {
    let mut bin = std::fs::File::create(prefix.with_extension("bin"))?;
    let mut bytes = Vec::with_capacity(frame.symbols.len() * 2);
    for &s in &frame.symbols {
        bytes.extend_from_slice(&(s as u16).to_le_bytes());
    }
    bin.write_all(&bytes)?;
    let json = serde_json::to_vec_pretty(meta).map_err(std::io::Error::other)?;
    std::fs::write(prefix.with_extension("json"), json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, shaped_qam, ShapedConstellation};
    use rand::Rng;

    fn random_bits(rng: &mut crate::SimRng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random::<bool>() as u8).collect()
    }

    #[test]
    fn uniform_qpsk_is_all_information() {
        let shaped = ShapedConstellation::uniform(&build_qam(4).unwrap());
        let framer = PasFramer::new(&shaped, 0.0, 64).unwrap();
        assert_eq!(framer.info_bits(), 128);
        let mut rng = crate::rng_from_seed(1);
        let info = random_bits(&mut rng, 128);
        let frame = framer.frame(&info, &mut rng).unwrap();
        assert_eq!(framer.deframe(&frame.symbols).unwrap(), info);
        assert_eq!(frame.label_bits, info);
    }

    #[test]
    fn rejects_wrong_sizes() {
        let shaped = shaped_qam(16, 3.6).unwrap();
        let framer = PasFramer::new(&shaped, 0.2, 32).unwrap();
        let mut rng = crate::rng_from_seed(2);
        assert!(framer.frame(&[0; 3], &mut rng).is_err());
        assert!(framer.deframe(&[0; 31]).is_err());
        assert!(PasFramer::new(&shaped, 0.2, 0).is_err());
        // Rate 1/3 code needs more parity than 16QAM has sign bits.
        assert!(PasFramer::new(&shaped, 2.0, 32).is_err());
    }

    #[test]
    fn finite_length_rate_close_to_target() {
        let shaped = shaped_qam(256, 7.9).unwrap();
        let framer = PasFramer::new(&shaped, 0.137, 1024).unwrap();
        let meta = framer.metadata();
        // Exact matcher input from the multinomial; 2% budget for finite-N loss.
        assert_eq!(meta.matcher_input_bits, framer.composition().input_bits());
        assert!(meta.rate_loss > 0.0);
        assert!(meta.rate_loss / meta.target_rate < 0.02, "{meta:?}");
    }

    #[test]
    fn noiseless_loopback_all_formats() {
        let cases = [(4, 2.0), (16, 3.5), (64, 5.6), (256, 7.9), (324, 8.14), (400, 8.44), (484, 8.62), (576, 8.67), (1024, 9.5)];
        let mut rng = crate::rng_from_seed(3);
        for (order, h) in cases {
            let shaped = if h >= (order as f64).log2() {
                ShapedConstellation::uniform(&build_qam(order).unwrap())
            } else {
                shaped_qam(order, h).unwrap()
            };
            let framer = PasFramer::new(&shaped, 0.137, 200).unwrap();
            let info = random_bits(&mut rng, framer.info_bits());
            let frame = framer.frame(&info, &mut rng).unwrap();
            let decided: Vec<usize> = frame
                .symbols
                .iter()
                .map(|&p| shaped.decide(shaped.points()[p]))
                .collect();
            assert_eq!(framer.deframe(&decided).unwrap(), info, "order {order}");
        }
    }

    #[test]
    fn dump_writes_both_files() {
        let dir = std::env::temp_dir().join(format!("pcsqam-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let shaped = shaped_qam(16, 3.5).unwrap();
        let mut rng = crate::rng_from_seed(4);
        let framer = PasFramer::new(&shaped, 0.1, 16).unwrap();
        let info = random_bits(&mut rng, framer.info_bits());
        let (frame, meta) = pas_frame(&info, &shaped, 0.1, 16, &mut rng).unwrap();
        let prefix = dir.join("frame");
        write_frame_dump(&prefix, &frame, &meta).unwrap();
        assert_eq!(std::fs::read(prefix.with_extension("bin")).unwrap().len(), 32);
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(prefix.with_extension("json")).unwrap()).unwrap();
        assert_eq!(json["symbols"], 16);
        std::fs::remove_dir_all(&dir).ok();
    }
}
