//! PPG signal-quality indices. Every index is "lower is more reliable".
//!
//! Three indices look at how much per-heart-cycle statistics vary across the
//! window (skewness, excess kurtosis, approximate entropy); the other two
//! are window-level entropies (amplitude histogram and normalised power
//! spectrum). All five are invariant to positive rescaling of the signal.

use serde::{Deserialize, Serialize};

use crate::signal::{PeakTrain, PpgWindow};
use crate::{spectrum, stats};

/// Histogram bins used by [`shannon_entropy`] and the half-span they
/// cover, in standard deviations.
pub const SHANNON_BINS: usize = 16;
pub const SHANNON_SPAN_SD: f64 = 3.0;
const APEN_M: usize = 2;
const APEN_R_FACTOR: f64 = 0.2;
const MIN_CYCLES: usize = 3;
const MIN_SPECTRAL_LEN: usize = 64;

/// Trough-to-trough heart cycles, each holding exactly one detected peak.
#[derive(Debug, Clone, PartialEq)]
pub struct HeartCycleSegmentation {
    pub cycles: Vec<Vec<f64>>,
}

impl HeartCycleSegmentation {
    pub fn is_usable(&self) -> bool {
        self.cycles.len() >= MIN_CYCLES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub skewness_var: f64,
    pub kurtosis_var: f64,
    pub apen_var: f64,
    pub shannon_entropy: f64,
    pub spectral_entropy: f64,
    /// False when fewer than three heart cycles could be delimited; the
    /// variation indices are then reported as 0 and should be ignored.
    pub usable: bool,
    /// Number of cycles whose statistics were undefined (zero variance).
    #[serde(default)]
    pub flagged_cycles: usize,
}

impl QualityReport {
    pub const INDEX_NAMES: [&'static str; 5] = [
        "skewness_var",
        "kurtosis_var",
        "apen_var",
        "shannon_entropy",
        "spectral_entropy",
    ];

    pub fn indices(&self) -> [f64; 5] {
        [
            self.skewness_var,
            self.kurtosis_var,
            self.apen_var,
            self.shannon_entropy,
            self.spectral_entropy,
        ]
    }
}

/// Cuts the signal at the minimum between each pair of consecutive peaks.
pub fn segment_cycles(filtered: &PpgWindow, peaks: &PeakTrain) -> HeartCycleSegmentation {
    let x = &filtered.samples;
    let troughs: Vec<usize> = peaks
        .peak_indices
        .windows(2)
        .filter(|w| w[0] < w[1] && w[1] <= x.len())
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (a..b).fold(a, |best, i| if x[i] < x[best] { i } else { best })
        })
        .collect();
    let cycles = troughs
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| x[w[0]..w[1]].to_vec())
        .collect();
    HeartCycleSegmentation { cycles }
}

/// Per-cycle statistic, or `None` for a zero-variance cycle.
fn per_cycle<F>(seg: &HeartCycleSegmentation, stat: F) -> (Vec<f64>, usize)
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut flagged = 0;
    let values = seg
        .cycles
        .iter()
        .map(|c| {
            stat(c).unwrap_or_else(|| {
                flagged += 1;
                0.0
            })
        })
        .collect();
    (values, flagged)
}

fn cycle_skewness(c: &[f64]) -> Option<f64> {
    let (m2, m3, _) = stats::central_moments(c);
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

fn cycle_kurtosis(c: &[f64]) -> Option<f64> {
    let (m2, _, m4) = stats::central_moments(c);
    (m2 > 0.0).then(|| m4 / (m2 * m2) - 3.0)
}

/// Population standard deviation of the per-cycle Fisher skewness.
pub fn skewness_variation(seg: &HeartCycleSegmentation) -> f64 {
    stats::std_dev(&per_cycle(seg, cycle_skewness).0)
}

/// Population standard deviation of the per-cycle excess kurtosis.
pub fn kurtosis_variation(seg: &HeartCycleSegmentation) -> f64 {
    stats::std_dev(&per_cycle(seg, cycle_kurtosis).0)
}

/// Population standard deviation of the per-cycle approximate entropy
/// (m = 2, r = 0.2 x cycle std). Cycles shorter than m + 1 samples are
/// skipped.
pub fn apen_variation(seg: &HeartCycleSegmentation) -> f64 {
    let values: Vec<f64> = seg
        .cycles
        .iter()
        .filter(|c| c.len() > APEN_M)
        .map(|c| {
            let sd = stats::std_dev(c);
            if sd > 0.0 {
                approximate_entropy(c, APEN_M, APEN_R_FACTOR * sd)
            } else {
                0.0
            }
        })
        .collect();
    stats::std_dev(&values)
}

/// Pincus' approximate entropy with self-matches counted.
pub fn approximate_entropy(x: &[f64], m: usize, r: f64) -> f64 {
    fn phi(x: &[f64], m: usize, r: f64) -> f64 {
        let n = x.len() - m + 1;
        let mut acc = 0.0;
        for i in 0..n {
            let matches = (0..n)
                .filter(|&j| (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r))
                .count();
            acc += (matches as f64 / n as f64).ln();
        }
        acc / n as f64
    }
    if x.len() <= m {
        return 0.0;
    }
    phi(x, m, r) - phi(x, m + 1, r)
}

/// Entropy (nats) of the 16-bin histogram of the z-scored window over
/// ±3 standard deviations; values beyond fall into the end bins. Constant
/// windows give 0.
///
/// The bins follow the window's spread rather than its min..max, so the
/// index grows as additive noise pulls the amplitude distribution toward a
/// Gaussian, the widest shape at a given variance.
pub fn shannon_entropy(window: &PpgWindow) -> f64 {
    shannon_entropy_bins(&window.samples, SHANNON_BINS, SHANNON_SPAN_SD)
}

pub fn shannon_entropy_bins(x: &[f64], bins: usize, span_sd: f64) -> f64 {
    let sd = stats::std_dev(x);
    if x.is_empty() || bins == 0 || !(sd > 0.0) {
        return 0.0;
    }
    let mean = stats::mean(x);
    let width = 2.0 * span_sd / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in x {
        let b = (((v - mean) / sd + span_sd) / width).floor().max(0.0) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalised spectral entropy in [0, 1]: Shannon entropy of the
/// periodogram (DC excluded) normalised to unit sum, divided by ln(bins).
/// Windows shorter than 64 samples or with no power return 0.
pub fn spectral_entropy(window: &PpgWindow) -> f64 {
    let x = &window.samples;
    if x.len() < MIN_SPECTRAL_LEN {
        return 0.0;
    }
    let (_, power) = spectrum::periodogram(x, window.fs, x.len());
    let bins = &power[1..];
    let total: f64 = bins.iter().sum();
    if !(total > 0.0) || bins.len() < 2 {
        return 0.0;
    }
    let h: f64 = bins
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    (h / (bins.len() as f64).ln()).clamp(0.0, 1.0)
}

/// All five indices for one filtered window. Without peaks (or with fewer
/// than three cycles) the report is marked unusable.
pub fn assess(filtered: &PpgWindow, peaks: Option<&PeakTrain>) -> QualityReport {
    let shannon = shannon_entropy(filtered);
    let spectral = spectral_entropy(filtered);
    let seg = peaks.map(|p| segment_cycles(filtered, p));
    match seg {
        Some(seg) if seg.is_usable() => {
            let (_, flagged) = per_cycle(&seg, cycle_skewness);
            QualityReport {
                skewness_var: skewness_variation(&seg),
                kurtosis_var: kurtosis_variation(&seg),
                apen_var: apen_variation(&seg),
                shannon_entropy: shannon,
                spectral_entropy: spectral,
                usable: true,
                flagged_cycles: flagged,
            }
        }
        _ => QualityReport {
            skewness_var: 0.0,
            kurtosis_var: 0.0,
            apen_var: 0.0,
            shannon_entropy: shannon,
            spectral_entropy: spectral,
            usable: false,
            flagged_cycles: 0,
        },
    }
}
