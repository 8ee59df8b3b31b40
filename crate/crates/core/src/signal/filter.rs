//! Butterworth band-pass as cascaded second-order sections, applied
//! forward and backward, and the centered moving average.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::{FilterSpec, PpgWindow, Result, SignalError};

/// One biquad in transposed direct form II. `a0` is normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

impl Section {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z_inv2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z_inv2) / (1.0 + self.a[0] * z_inv + self.a[1] * z_inv2)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Delay-line state matching a unit-step steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }
}

/// Digital Butterworth band-pass designed by the bilinear transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthBandpass {
    sections: Vec<Section>,
    fs: f64,
}

impl ButterworthBandpass {
    pub fn design(spec: &FilterSpec, fs: f64) -> Result<Self> {
        spec.validate(fs)?;
        let n = spec.order;
        let k = 2.0 * fs;
        // Pre-warped analog band edges.
        let w_lo = k * (PI * spec.low_cut_hz / fs).tan();
        let w_hi = k * (PI * spec.high_cut_hz / fs).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        let mut poles = Vec::with_capacity(2 * n);
        for i in 0..n {
            let theta = PI * (2 * i + n + 1) as f64 / (2 * n) as f64;
            let proto = Complex64::from_polar(1.0, theta);
            let half = proto * (bw / 2.0);
            let root = (half * half - w0_sq).sqrt();
            for s in [half + root, half - root] {
                poles.push((k + s) / (k - s));
            }
        }

        let mut sections = pair_poles(poles)
            .into_iter()
            .map(|a| Section { b: [1.0, 0.0, -1.0], a })
            .collect::<Vec<_>>();
        if sections.len() != n {
            return Err(SignalError::InvalidFilter(format!(
                "pole pairing produced {} sections for order {n}",
                sections.len()
            )));
        }

        // Unit gain at the digital centre frequency.
        let centre = 2.0 * ((PI * spec.low_cut_hz / fs).tan() * (PI * spec.high_cut_hz / fs).tan()).sqrt().atan();
        let z_inv = Complex64::from_polar(1.0, -centre);
        let raw: Complex64 = sections.iter().map(|s| s.response(z_inv)).product();
        let gain = 1.0 / raw.norm();
        for b in sections[0].b.iter_mut() {
            *b *= gain;
        }
        Ok(Self { sections, fs })
    }

    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .product::<Complex64>()
            .norm()
    }

    /// Causal filtering starting from the steady state of a constant input
    /// equal to `x[0]`.
    fn filter_from_steady_state(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        let Some(&x0) = x.first() else {
            return out;
        };
        let mut level = x0;
        for s in &self.sections {
            let [mut z1, mut z2] = s.step_state().map(|v| v * level);
            level *= s.dc_gain();
            for v in out.iter_mut() {
                let xin = *v;
                let y = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * y + z2;
                z2 = s.b[2] * xin - s.a[1] * y;
                *v = y;
            }
        }
        out
    }

    /// Zero-phase filtering: odd extension at both ends, forward pass,
    /// reversed backward pass. The padding length follows the usual
    /// `3 * (2 * sections + 1)` rule, capped by the signal length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut y = self.filter_from_steady_state(&ext);
        y.reverse();
        let mut y = self.filter_from_steady_state(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Groups z-plane poles into conjugate (or real) pairs and returns the
/// denominator `[a1, a2]` of each pair.
fn pair_poles(poles: Vec<Complex64>) -> Vec<[f64; 2]> {
    const TOL: f64 = 1e-10;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > TOL {
            out.push([-2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= TOL {
            reals.push(p.re);
        }
    }
    reals.sort_by(f64::total_cmp);
    for pair in reals.chunks(2) {
        match pair {
            [p1, p2] => out.push([-(p1 + p2), p1 * p2]),
            [p] => out.push([-p, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

pub fn bandpass_filter(window: &PpgWindow, spec: &FilterSpec) -> Result<PpgWindow> {
    let filter = ButterworthBandpass::design(spec, window.fs)?;
    Ok(window.with_samples(filter.filtfilt(&window.samples)))
}

/// Centered uniform average over `kernel` samples; near the edges the
/// kernel shrinks to the samples that exist.
pub fn moving_average_slice(x: &[f64], kernel: usize) -> Vec<f64> {
    let n = x.len();
    let kernel = kernel.max(1);
    let before = kernel / 2;
    let after = kernel - 1 - before;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub fn moving_average(window: &PpgWindow, length_s: f64) -> Result<PpgWindow> {
    let kernel = (length_s * window.fs).round();
    if !(kernel >= 1.0) {
        return Err(SignalError::InvalidFilter(format!(
            "moving average of {length_s} s is shorter than one sample at {} Hz",
            window.fs
        )));
    }
    Ok(window.with_samples(moving_average_slice(&window.samples, kernel as usize)))
}
