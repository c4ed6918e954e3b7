//! Real-valued Volterra equalizer applied per tributary (XI, XQ, YI, YQ).
//!
//! Output for tributary `t` at index `k`:
//!
//! ```text
//! y = b + sum h1[i] x[k+i] + sum_{i<=j} h2[i,j] x[k+i] x[k+j]
//!       + sum_{i<=j<=l} h3[i,j,l] x[k+i] x[k+j] x[k+l]
//! ```
//!
//! with centred windows of the configured memories, optionally plus first-order terms from the
//! partner tributary of the same polarization. Taps are adapted by
//! normalised LMS against a reference.

use serde::{Deserialize, Serialize};

use crate::constellation::ShapedConstellation;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Compensates receiver front-end nonlinearity, before channel equalization.
    Rx,
    /// Compensates residual transmitter nonlinearity, after carrier recovery.
    Tx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolterraConfig {
    /// Highest kernel order, 1 to 3.
    pub order: usize,
    /// Memory of the first-, second- and third-order kernels.
    pub memory: [usize; 3],
    /// NLMS step size per order.
    pub mu: [f64; 3],
    pub bias: bool,
    /// Memory of the cross-tributary linear terms (0 disables them).
    pub cross_memory: usize,
    /// Training passes over the reference.
    pub epochs: usize,
    /// Leading samples used for training (0 means all).
    pub training_len: usize,
    pub placement: Placement,
    /// Keep adapting on slicer decisions after training instead of freezing.
    pub decision_directed: bool,
}

impl Default for VolterraConfig {
    fn default() -> Self {
        Self {
            order: 3,
            memory: [41, 9, 5],
            mu: [0.1, 0.1, 0.1],
            bias: true,
            cross_memory: 0,
            epochs: 3,
            training_len: 0,
            placement: Placement::Tx,
            decision_directed: false,
        }
    }
}

impl VolterraConfig {
    /// Linear-only equalizer with the same first-order memory.
    pub fn linear(&self) -> Self {
        Self { order: 1, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.order) {
            return Err(invalid("order", "must be 1, 2 or 3"));
        }
        if self.memory[0] == 0 {
            return Err(invalid("memory", "first-order memory must be at least 1"));
        }
        if self.mu.iter().any(|m| !(*m >= 0.0)) || !(self.mu[0] > 0.0) {
            return Err(invalid("mu", "step sizes must be >= 0 and the linear one > 0"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be positive"));
        }
        Ok(())
    }

    /// Number of taps per tributary.
    pub fn kernel_len(&self) -> usize {
        Terms::new(self).len()
    }
}

/// Index lists of the polynomial terms.
struct Terms {
    lin: Vec<isize>,
    quad: Vec<(isize, isize)>,
    cubic: Vec<(isize, isize, isize)>,
    cross: Vec<isize>,
    bias: bool,
}

fn offsets(len: usize) -> Vec<isize> {
    let h = (len / 2) as isize;
    (0..len as isize).map(|i| i - h).collect()
}

impl Terms {
    fn new(cfg: &VolterraConfig) -> Self {
        let lin = offsets(cfg.memory[0]);
        let mut quad = Vec::new();
        if cfg.order >= 2 {
            let o = offsets(cfg.memory[1]);
            for (a, &i) in o.iter().enumerate() {
                for &j in &o[a..] {
                    quad.push((i, j));
                }
            }
        }
        let mut cubic = Vec::new();
        if cfg.order >= 3 {
            let o = offsets(cfg.memory[2]);
            for (a, &i) in o.iter().enumerate() {
                for (b, &j) in o.iter().enumerate().skip(a) {
                    for &l in &o[b..] {
                        cubic.push((i, j, l));
                    }
                }
            }
        }
        Self {
            lin,
            quad,
            cubic,
            cross: offsets(cfg.cross_memory),
            bias: cfg.bias,
        }
    }

    fn len(&self) -> usize {
        self.lin.len() + self.quad.len() + self.cubic.len() + self.cross.len() + usize::from(self.bias)
    }

    /// Fills `phi` and the order of each entry (0 for bias and cross terms
    /// share the linear step).
    fn features(&self, x: &[f64], partner: Option<&[f64]>, k: usize, phi: &mut Vec<f64>) {
        let n = x.len() as isize;
        let at = |s: &[f64], i: isize| s[(k as isize + i).rem_euclid(n) as usize];
        phi.clear();
        phi.extend(self.lin.iter().map(|&i| at(x, i)));
        phi.extend(self.quad.iter().map(|&(i, j)| at(x, i) * at(x, j)));
        phi.extend(self.cubic.iter().map(|&(i, j, l)| at(x, i) * at(x, j) * at(x, l)));
        if let Some(p) = partner {
            phi.extend(self.cross.iter().map(|&i| at(p, i)));
        }
        if self.bias {
            phi.push(1.0);
        }
    }

    fn orders(&self, with_cross: bool) -> Vec<usize> {
        let mut o = vec![0; self.lin.len()];
        o.extend(std::iter::repeat_n(1, self.quad.len()));
        o.extend(std::iter::repeat_n(2, self.cubic.len()));
        if with_cross {
            o.extend(std::iter::repeat_n(0, self.cross.len()));
        }
        if self.bias {
            o.push(0);
        }
        o
    }
}

/// Adapted kernels and the per-epoch training MSE of each tributary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolterraOutput {
    pub tributaries: Vec<Vec<f64>>,
    pub kernels: Vec<Vec<f64>>,
    pub trace: Vec<Vec<f64>>,
}

/// Equalizes each input tributary against the matching reference. Inputs
/// come in I/Q pairs (0, 1), (2, 3) for the cross terms.
///
/// `slicer` supplies the per-dimension decisions for decision-directed
/// operation after the training span.
pub fn volterra_equalize(
    inputs: &[Vec<f64>],
    reference: &[Vec<f64>],
    cfg: &VolterraConfig,
    slicer: Option<&ShapedConstellation>,
) -> Result<VolterraOutput> {
    cfg.validate()?;
    if inputs.len() != reference.len() {
        return Err(Error::LengthMismatch {
            what: "reference tributaries",
            expected: inputs.len(),
            actual: reference.len(),
        });
    }
    if cfg.decision_directed && slicer.is_none() {
        return Err(invalid("decision_directed", "needs a slicer constellation"));
    }
    let terms = Terms::new(cfg);
    let mut out = VolterraOutput {
        tributaries: Vec::with_capacity(inputs.len()),
        kernels: Vec::with_capacity(inputs.len()),
        trace: Vec::with_capacity(inputs.len()),
    };
    for (t, (x, r)) in inputs.iter().zip(reference).enumerate() {
        let partner = if cfg.cross_memory > 0 && inputs.len().is_multiple_of(2) {
            Some(inputs[t ^ 1].as_slice())
        } else {
            None
        };
        let (y, h, trace) = equalize_one(x, r, partner, &terms, cfg, slicer)?;
        out.tributaries.push(y);
        out.kernels.push(h);
        out.trace.push(trace);
    }
    Ok(out)
}

fn equalize_one(
    x: &[f64],
    reference: &[f64],
    partner: Option<&[f64]>,
    terms: &Terms,
    cfg: &VolterraConfig,
    slicer: Option<&ShapedConstellation>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let train = if cfg.training_len == 0 { n } else { cfg.training_len.min(n) };
    if reference.len() < train {
        return Err(Error::LengthMismatch {
            what: "reference samples",
            expected: train,
            actual: reference.len(),
        });
    }
    let orders = terms.orders(partner.is_some());
    let mut h = vec![0.0; orders.len()];
    h[terms.lin.len() / 2] = 1.0;
    let mut phi = Vec::with_capacity(h.len());
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let mut acc = 0.0;
        for k in 0..train {
            terms.features(x, partner, k, &mut phi);
            let e = reference[k] - dot(&h, &phi);
            acc += e * e;
            nlms_update(&mut h, &phi, &orders, cfg, e);
        }
        let mse = acc / train as f64;
        if !mse.is_finite() {
            return Err(Error::Diverged {
                from: trace.first().copied().unwrap_or(0.0),
                to: f64::INFINITY,
            });
        }
        trace.push(mse);
    }
    if trace.len() >= 2 && trace[trace.len() - 1] > 10.0 * trace[0] {
        return Err(Error::Diverged {
            from: trace[0],
            to: trace[trace.len() - 1],
        });
    }

    let mut y = vec![0.0; n];
    for k in 0..n {
        terms.features(x, partner, k, &mut phi);
        y[k] = dot(&h, &phi);
        if cfg.decision_directed && k >= train {
            let s = slicer.expect("checked by caller");
            let d = s.level_coordinate(s.decide_level(y[k]));
            nlms_update(&mut h, &phi, &orders, cfg, d - y[k]);
        }
    }
    Ok((y, h, trace))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nlms_update(h: &mut [f64], phi: &[f64], orders: &[usize], cfg: &VolterraConfig, e: f64) {
    let energy = phi.iter().map(|v| v * v).sum::<f64>() + 1e-12;
    let g = e / energy;
    for ((w, &p), &o) in h.iter_mut().zip(phi).zip(orders) {
        *w += cfg.mu[o] * g * p;
    }
}
