//! Periodogram helpers backed by `rustfft`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided periodogram of `signal` zero-padded to `nfft` points.
///
/// Returns `(frequencies_hz, power)` for bins `0..=nfft/2`. Power is scaled so
/// that summing it over all bins gives the mean power of the signal
/// (Parseval), which keeps band energies comparable across lengths.
pub fn periodogram(signal: &[f64], fs: f64, nfft: usize) -> (Vec<f64>, Vec<f64>) {
    let nfft = nfft.max(signal.len()).max(1);
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(nfft).process(&mut buf);

    let n = signal.len().max(1) as f64;
    let half = nfft / 2;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (k, c) in buf.iter().take(half + 1).enumerate() {
        let mut p = c.norm_sqr() / (n * nfft as f64);
        // Fold the negative frequencies onto the positive side.
        if k != 0 && !(nfft % 2 == 0 && k == half) {
            p *= 2.0;
        }
        freqs.push(k as f64 * fs / nfft as f64);
        power.push(p);
    }
    (freqs, power)
}

/// Mean power of `signal` inside `[lo_hz, hi_hz]`.
pub fn band_power(signal: &[f64], fs: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let (freqs, power) = periodogram(signal, fs, signal.len());
    freqs
        .iter()
        .zip(&power)
        .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
        .map(|(_, p)| p)
        .sum()
}
