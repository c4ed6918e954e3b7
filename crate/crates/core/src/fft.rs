//! Whole-block frequency-domain helpers.
//!
//! Every linear stage in the simulator treats a block as one period of a
//! periodic signal, so filtering is an FFT, a multiplication and an inverse
//! FFT. Frequencies follow the usual FFT bin order.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Signed frequency in Hz of bin `k` of an `n`-point FFT at `sample_rate`.
pub fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < n_f / 2.0 || (n % 2 == 1 && k <= n_f / 2.0) {
        k * sample_rate / n_f
    } else {
        (k - n_f) * sample_rate / n_f
    }
}

/// Frequencies of all bins.
pub fn frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..n).map(|k| bin_frequency(k, n, sample_rate)).collect()
}

/// Forward FFT (unnormalised).
pub fn forward(data: &mut [Complex64]) {
    if data.is_empty() {
        return;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

/// Inverse FFT, normalised by `1/n` so that `inverse(forward(x)) == x`.
pub fn inverse(data: &mut [Complex64]) {
    if data.is_empty() {
        return;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(data.len()).process(data);
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|x| *x *= scale);
}

/// Applies a frequency response `h(f)` to a complex block.
pub fn filter_complex<F>(data: &mut [Complex64], sample_rate: f64, h: F)
where
    F: Fn(f64) -> Complex64,
{
    let n = data.len();
    forward(data);
    for (k, x) in data.iter_mut().enumerate() {
        *x *= h(bin_frequency(k, n, sample_rate));
    }
    inverse(data);
}

/// Applies a frequency response to a real sequence.
///
/// `h` must be Hermitian (`h(-f) = conj(h(f))`) for the result to be real;
/// the Nyquist bin of an even-length block is forced real.
pub fn filter_real<F>(data: &mut [f64], sample_rate: f64, h: F)
where
    F: Fn(f64) -> Complex64,
{
    let n = data.len();
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&mut buf);
    for (k, x) in buf.iter_mut().enumerate() {
        let mut g = h(bin_frequency(k, n, sample_rate));
        if n.is_multiple_of(2) && k == n / 2 {
            g = Complex64::new(g.re, 0.0);
        }
        *x *= g;
    }
    inverse(&mut buf);
    for (d, x) in data.iter_mut().zip(buf) {
        *d = x.re;
    }
}

/// Circular convolution of `data` with FIR `taps` whose centre tap sits at
/// index `taps.len() / 2`; output has the same length and no delay.
pub fn circular_convolve_centered(data: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let n = data.len();
    if n == 0 {
        return Vec::new();
    }
    let centre = taps.len() / 2;
    let mut kernel = vec![Complex64::new(0.0, 0.0); n];
    for (i, &t) in taps.iter().enumerate() {
        let idx = (i as isize - centre as isize).rem_euclid(n as isize) as usize;
        kernel[idx] += t;
    }
    let mut spectrum = data.to_vec();
    forward(&mut spectrum);
    forward(&mut kernel);
    for (x, k) in spectrum.iter_mut().zip(&kernel) {
        *x *= k;
    }
    inverse(&mut spectrum);
    spectrum
}

/// Periodogram normalised so the bins sum to the mean sample power.
pub fn periodogram(data: &[Complex64]) -> Vec<f64> {
    let n = data.len() as f64;
    let mut buf = data.to_vec();
    forward(&mut buf);
    buf.iter().map(|x| x.norm_sqr() / (n * n)).collect()
}
