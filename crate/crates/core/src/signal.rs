//! Dual-polarization sampled waveform.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Two complex streams (X and Y polarization), i.e. the four real
/// tributaries XI, XQ, YI, YQ.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    pub pols: [Vec<Complex64>; 2],
    pub sample_rate: f64,
    pub samples_per_symbol: usize,
    /// Sample index of the first symbol centre.
    pub alignment: usize,
}

/// Tributary order used by [`SignalBlock::tributaries`].
pub const TRIBUTARIES: [&str; 4] = ["XI", "XQ", "YI", "YQ"];

impl SignalBlock {
    pub fn new(
        x: Vec<Complex64>,
        y: Vec<Complex64>,
        sample_rate: f64,
        samples_per_symbol: usize,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "polarization streams",
                expected: x.len(),
                actual: y.len(),
            });
        }
        if !(sample_rate > 0.0) {
            return Err(invalid("sample_rate", "must be positive"));
        }
        if samples_per_symbol == 0 {
            return Err(invalid("samples_per_symbol", "must be at least 1"));
        }
        Ok(Self {
            pols: [x, y],
            sample_rate,
            samples_per_symbol,
            alignment: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.pols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn symbol_rate(&self) -> f64 {
        self.sample_rate / self.samples_per_symbol as f64
    }

    /// Mean power of one polarization.
    pub fn pol_power(&self, pol: usize) -> f64 {
        mean_power(&self.pols[pol])
    }

    /// Mean total power summed over both polarizations.
    pub fn power(&self) -> f64 {
        self.pol_power(0) + self.pol_power(1)
    }

    /// Scales both polarizations by `g`.
    pub fn scale(&mut self, g: f64) {
        for pol in &mut self.pols {
            pol.iter_mut().for_each(|x| *x *= g);
        }
    }

    /// Real tributaries in XI, XQ, YI, YQ order.
    pub fn tributaries(&self) -> [Vec<f64>; 4] {
        [
            self.pols[0].iter().map(|x| x.re).collect(),
            self.pols[0].iter().map(|x| x.im).collect(),
            self.pols[1].iter().map(|x| x.re).collect(),
            self.pols[1].iter().map(|x| x.im).collect(),
        ]
    }

    /// Replaces the samples with four real tributaries.
    pub fn set_tributaries(&mut self, t: &[Vec<f64>; 4]) {
        for (p, pol) in self.pols.iter_mut().enumerate() {
            for (k, x) in pol.iter_mut().enumerate() {
                *x = Complex64::new(t[2 * p][k], t[2 * p + 1][k]);
            }
        }
    }

    /// Applies `f` to every real tributary independently.
    pub fn map_tributaries<F: FnMut(usize, &mut [f64])>(&mut self, mut f: F) {
        let mut t = self.tributaries();
        for (i, trib) in t.iter_mut().enumerate() {
            f(i, trib);
        }
        self.set_tributaries(&t);
    }

    pub fn sidecar(&self) -> SignalSidecar {
        SignalSidecar {
            sample_rate: self.sample_rate,
            samples_per_symbol: self.samples_per_symbol,
            alignment: self.alignment,
            samples: self.len(),
            layout: "f32le interleaved XI XQ YI YQ".to_string(),
        }
    }

    /// Writes `<prefix>.f32` (little-endian interleaved tributaries) and
    /// `<prefix>.json`.
    pub fn write(&self, prefix: &Path) -> std::io::Result<()> {
        let mut bytes = Vec::with_capacity(self.len() * 16);
        for k in 0..self.len() {
            for v in [
                self.pols[0][k].re,
                self.pols[0][k].im,
                self.pols[1][k].re,
                self.pols[1][k].im,
            ] {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        std::fs::File::create(prefix.with_extension("f32"))?.write_all(&bytes)?;
        let json = serde_json::to_vec_pretty(&self.sidecar()).map_err(std::io::Error::other)?;
        std::fs::write(prefix.with_extension("json"), json)
    }

    /// Reads a block written by [`write`](Self::write).
    pub fn read(prefix: &Path) -> std::io::Result<Self> {
        let meta: SignalSidecar = serde_json::from_slice(&std::fs::read(prefix.with_extension("json"))?)
            .map_err(std::io::Error::other)?;
        let mut bytes = Vec::new();
        std::fs::File::open(prefix.with_extension("f32"))?.read_to_end(&mut bytes)?;
        if bytes.len() != meta.samples * 16 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "sample file length does not match sidecar",
            ));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let x = vals.chunks_exact(4).map(|v| Complex64::new(v[0], v[1])).collect();
        let y = vals.chunks_exact(4).map(|v| Complex64::new(v[2], v[3])).collect();
        let mut block = SignalBlock::new(x, y, meta.sample_rate, meta.samples_per_symbol)
            .map_err(std::io::Error::other)?;
        block.alignment = meta.alignment;
        Ok(block)
    }
}

/// JSON sidecar describing a serialized [`SignalBlock`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignalSidecar {
    pub sample_rate: f64,
    pub samples_per_symbol: usize,
    pub alignment: usize,
    pub samples: usize,
    pub layout: String,
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unequal_streams() {
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let y = vec![Complex64::new(1.0, 0.0); 3];
        assert!(SignalBlock::new(x, y, 1.0, 1).is_err());
    }

    #[test]
    fn tributary_roundtrip() {
        let x: Vec<Complex64> = (0..8).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let y: Vec<Complex64> = (0..8).map(|i| Complex64::new(0.5, i as f64)).collect();
        let mut s = SignalBlock::new(x, y, 2.0, 2).unwrap();
        let before = s.clone();
        let t = s.tributaries();
        assert_eq!(t[0][3], 3.0);
        assert_eq!(t[3][5], 5.0);
        s.set_tributaries(&t);
        assert_eq!(s, before);
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("pcsqam-sig-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let x: Vec<Complex64> = (0..10).map(|i| Complex64::new(i as f64 * 0.25, 1.0)).collect();
        let y: Vec<Complex64> = (0..10).map(|i| Complex64::new(-0.5, i as f64)).collect();
        let mut s = SignalBlock::new(x, y, 256e9, 2).unwrap();
        s.alignment = 3;
        let prefix = dir.join("block");
        s.write(&prefix).unwrap();
        assert_eq!(std::fs::metadata(prefix.with_extension("f32")).unwrap().len(), 160);
        assert_eq!(SignalBlock::read(&prefix).unwrap(), s);
        std::fs::remove_dir_all(&dir).ok();
    }
}
