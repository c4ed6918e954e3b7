//! Forward-backward (BCJR) detection on the one-tap partial-response
//! trellis.
//!
//! The state is the previous transmitted symbol, so the trellis has `M`
//! states and `M^2` branches per step. The branch metric is
//! `ln P(x_k) - |z_k - x_k - alpha x_{k-1}|^2 / sigma2`, recursions run in
//! the log domain with exact log-sum-exp, and every step is renormalised.

use num_complex::Complex64;

use super::demap::LlrBlock;
use super::preq::PartialResponseModel;
use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};

/// Trellises above this many states need [`BcjrOptions::allow_large_trellis`].
pub const LARGE_TRELLIS_STATES: usize = 64;

/// How the symbol before the first observation is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// `x_{-1} = 0`, matching [`preq_filter`](super::preq_filter) with `y_{-1} = 0`.
    Zero,
    /// `x_{-1}` drawn from the prior (used inside a window).
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcjrOptions {
    pub allow_large_trellis: bool,
    pub initial: InitialState,
}

impl Default for BcjrOptions {
    fn default() -> Self {
        Self {
            allow_large_trellis: false,
            initial: InitialState::Zero,
        }
    }
}

/// Symbol posteriors (`M` per symbol, summing to one) and bit LLRs.
#[derive(Debug, Clone, PartialEq)]
pub struct BcjrOutput {
    pub order: usize,
    pub posteriors: Vec<f64>,
    pub llrs: LlrBlock,
}

impl BcjrOutput {
    pub fn posterior(&self, k: usize) -> &[f64] {
        &self.posteriors[k * self.order..(k + 1) * self.order]
    }

    /// Maximum a-posteriori symbol decisions.
    pub fn decisions(&self) -> Vec<usize> {
        self.posteriors
            .chunks(self.order)
            .map(|p| {
                p.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect()
    }
}

fn lse_slice(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Runs the detector on partial-response observations `z`.
pub fn bcjr_detect(
    z: &[Complex64],
    model: &PartialResponseModel,
    shaped: &ShapedConstellation,
    opts: BcjrOptions,
) -> Result<BcjrOutput> {
    let n_states = shaped.order();
    if !(model.alpha.abs() < 1.0) {
        return Err(invalid("alpha", format!("|alpha| must be < 1, got {}", model.alpha)));
    }
    if !(model.sigma2 > 0.0) {
        return Err(invalid("sigma2", "must be positive"));
    }
    if n_states > LARGE_TRELLIS_STATES && !opts.allow_large_trellis {
        return Err(Error::TrellisTooLarge { states: n_states });
    }
    let n = z.len();
    let points = shaped.points();
    let log_prior: Vec<f64> = shaped.probs().iter().map(|p| p.ln()).collect();
    let inv_s2 = 1.0 / model.sigma2;
    let alpha = model.alpha;
    let isi: Vec<Complex64> = points.iter().map(|p| p * alpha).collect();

    // gamma(prev, cur) at step k.
    let branch = |k: usize, prev: usize, cur: usize| -> f64 {
        log_prior[cur] - (z[k] - points[cur] - isi[prev]).norm_sqr() * inv_s2
    };

    let mut fwd = vec![0.0; n * n_states];
    let mut scratch = vec![0.0; n_states];
    if n == 0 {
        return Ok(BcjrOutput {
            order: n_states,
            posteriors: Vec::new(),
            llrs: LlrBlock::new(shaped.m(), Vec::new())?,
        });
    }
    for s in 0..n_states {
        fwd[s] = match opts.initial {
            InitialState::Zero => log_prior[s] - (z[0] - points[s]).norm_sqr() * inv_s2,
            InitialState::Prior => {
                for (p, v) in scratch.iter_mut().enumerate() {
                    *v = log_prior[p] + branch(0, p, s);
                }
                lse_slice(&scratch)
            }
        };
    }
    normalize(&mut fwd[..n_states]);
    for k in 1..n {
        let (done, rest) = fwd.split_at_mut(k * n_states);
        let prev = &done[(k - 1) * n_states..];
        let cur = &mut rest[..n_states];
        for s in 0..n_states {
            for (p, v) in scratch.iter_mut().enumerate() {
                *v = prev[p] + branch(k, p, s);
            }
            cur[s] = lse_slice(&scratch);
        }
        normalize(cur);
    }

    let mut bwd_next = vec![0.0; n_states];
    let mut bwd_cur = vec![0.0; n_states];
    let mut log_post = vec![0.0; n * n_states];
    for k in (0..n).rev() {
        for s in 0..n_states {
            log_post[k * n_states + s] = fwd[k * n_states + s] + bwd_next[s];
        }
        normalize_to_probability(&mut log_post[k * n_states..(k + 1) * n_states]);
        if k > 0 {
            for p in 0..n_states {
                for (s, v) in scratch.iter_mut().enumerate() {
                    *v = branch(k, p, s) + bwd_next[s];
                }
                bwd_cur[p] = lse_slice(&scratch);
            }
            normalize(&mut bwd_cur);
            std::mem::swap(&mut bwd_cur, &mut bwd_next);
        }
    }

    let llrs = posterior_llrs(&log_post, shaped)?;
    let posteriors = log_post.iter().map(|v| v.exp()).collect();
    Ok(BcjrOutput {
        order: n_states,
        posteriors,
        llrs,
    })
}

fn normalize(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        v.iter_mut().for_each(|x| *x -= max);
    }
}

fn normalize_to_probability(v: &mut [f64]) {
    let z = lse_slice(v);
    v.iter_mut().for_each(|x| *x -= z);
}

/// Bit LLRs from per-symbol log posteriors.
fn posterior_llrs(log_post: &[f64], shaped: &ShapedConstellation) -> Result<LlrBlock> {
    let base = shaped.base();
    let m = base.m();
    let order = base.order();
    let mut llrs = Vec::with_capacity(log_post.len() / order * m);
    let mut zero = Vec::with_capacity(order);
    let mut one = Vec::with_capacity(order);
    for chunk in log_post.chunks(order) {
        for level in 0..m {
            zero.clear();
            one.clear();
            for (p, &v) in chunk.iter().enumerate() {
                if base.bit(p, level) == 0 {
                    zero.push(v);
                } else {
                    one.push(v);
                }
            }
            llrs.push(lse_slice(&zero) - lse_slice(&one));
        }
    }
    LlrBlock::new(m, llrs)
}

/// Splits a long sequence into windows of `window` symbols, each padded by
/// `overlap` symbols on both sides, runs the detector on every padded window
/// (in parallel when enabled) and keeps the centre parts.
pub fn bcjr_detect_windowed(
    z: &[Complex64],
    model: &PartialResponseModel,
    shaped: &ShapedConstellation,
    allow_large_trellis: bool,
    window: usize,
    overlap: usize,
) -> Result<BcjrOutput> {
    if window == 0 {
        return Err(invalid("window", "must be positive"));
    }
    let n = z.len();
    let starts: Vec<usize> = (0..n).step_by(window).collect();
    let run = |&start: &usize| -> Result<(usize, BcjrOutput)> {
        let lo = start.saturating_sub(overlap);
        let hi = (start + window + overlap).min(n);
        let opts = BcjrOptions {
            allow_large_trellis,
            initial: if lo == 0 {
                InitialState::Zero
            } else {
                InitialState::Prior
            },
        };
        let out = bcjr_detect(&z[lo..hi], model, shaped, opts)?;
        Ok((start - lo, out))
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(usize, BcjrOutput)>> = {
        use rayon::prelude::*;
        starts.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(usize, BcjrOutput)>> = starts.iter().map(run).collect();

    let order = shaped.order();
    let m = shaped.m();
    let mut posteriors = Vec::with_capacity(n * order);
    let mut llrs = Vec::with_capacity(n * m);
    for (part, &start) in parts.into_iter().zip(&starts) {
        let (offset, out) = part?;
        let len = window.min(n - start);
        posteriors.extend_from_slice(&out.posteriors[offset * order..(offset + len) * order]);
        llrs.extend_from_slice(&out.llrs.llrs()[offset * m..(offset + len) * m]);
    }
    Ok(BcjrOutput {
        order,
        posteriors,
        llrs: LlrBlock::new(m, llrs)?,
    })
}
