//! Thin wrappers around `rustfft` with the sign and scaling conventions used
//! throughout the crate.
//!
//! Forward: `X[k] = Σ x[n] exp(-2πi kn/N)`. Inverse is scaled by `1/N`, so a
//! field `x(t) = Σ X(ν) exp(+2πiνt)` is causal when `X` is analytic in the
//! lower half of the complex frequency plane.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub fn forward(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

pub fn inverse(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(data.len()).process(data);
    let scale = 1.0 / data.len() as f64;
    for x in data.iter_mut() {
        *x *= scale;
    }
}

/// Signed frequency of FFT bin `k` for a transform of length `n` sampled at `dt`.
pub fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let k = k as i64;
    let n = n as i64;
    let signed = if k < (n + 1) / 2 { k } else { k - n };
    signed as f64 / (n as f64 * dt)
}

/// Discrete Hilbert transform of a real sequence, treated as periodic.
///
/// Uses the `-i·sign(k)` multiplier, so that `H{cos} = sin`. The DC and
/// Nyquist bins are zeroed.
pub fn hilbert(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == half) {
            *v = Complex64::new(0.0, 0.0);
        } else if k < n.div_ceil(2) {
            *v *= Complex64::new(0.0, -1.0);
        } else {
            *v *= Complex64::new(0.0, 1.0);
        }
    }
    inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}
