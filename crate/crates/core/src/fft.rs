//! Thin deterministic wrappers around rustfft.

use crate::linalg::C64;
use rustfft::FftPlanner;

/// In-place forward DFT (engineering sign convention, unnormalized).
pub fn fft_forward(data: &mut [C64]) {
    if data.len() < 2 {
        return;
    }
    FftPlanner::new().plan_fft_forward(data.len()).process(data);
}

/// In-place inverse DFT including the 1/N normalization, so that
/// `fft_inverse(fft_forward(x)) == x` up to rounding.
pub fn fft_inverse(data: &mut [C64]) {
    if data.len() < 2 {
        return;
    }
    let n = data.len();
    FftPlanner::new().plan_fft_inverse(n).process(data);
    let scale = 1.0 / n as f64;
    for z in data.iter_mut() {
        *z *= scale;
    }
}

/// Frequency of FFT bin `k` for `n` samples at `rate` samples/ns, in GHz.
/// Bins above n/2 wrap to negative frequencies: the grid spans [-rate/2, rate/2).
pub fn bin_frequency_ghz(k: usize, n: usize, rate: f64) -> f64 {
    let k = k as f64;
    let n = n as f64;
    if k < (n / 2.0).ceil() {
        k * rate / n
    } else {
        (k - n) * rate / n
    }
}
