//! Adaptive-threshold peak detection and NN-interval extraction.

use serde::{Deserialize, Serialize};

use super::filter::moving_average_slice;
use super::{PpgWindow, Result, SignalError, MOVING_AVERAGE_S};
use crate::stats;

/// Shortest accepted NN interval (210 bpm).
pub const MIN_NN_MS: f64 = 286.0;
/// Longest accepted NN interval (42 bpm).
pub const MAX_NN_MS: f64 = 1429.0;

const MIN_BPM: f64 = 42.0;
const MAX_BPM: f64 = 210.0;
/// Maximum relative deviation from the running median.
const MAX_MEDIAN_DEVIATION: f64 = 0.30;
const RUNNING_MEDIAN_LEN: usize = 5;

/// Detected beats of one window. Times are relative to the window start and
/// may carry sub-sample precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakTrain {
    pub fs: f64,
    pub peak_indices: Vec<usize>,
    pub peak_times_ms: Vec<f64>,
}

impl PeakTrain {
    /// Peaks at exact sample positions.
    pub fn from_indices(peak_indices: Vec<usize>, fs: f64) -> Self {
        let peak_times_ms = peak_indices.iter().map(|&i| i as f64 * 1000.0 / fs).collect();
        Self {
            fs,
            peak_indices,
            peak_times_ms,
        }
    }

    pub fn len(&self) -> usize {
        self.peak_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_indices.is_empty()
    }
}

/// Accepted inter-beat intervals in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnSeries {
    pub intervals_ms: Vec<f64>,
    pub rejected: usize,
}

pub fn detect_peaks(filtered: &PpgWindow) -> Result<PeakTrain> {
    let kernel = (MOVING_AVERAGE_S * filtered.fs).round().max(1.0) as usize;
    let baseline = moving_average_slice(&filtered.samples, kernel);
    detect_peaks_with_baseline(filtered, &baseline)
}

/// Threshold sweep over the moving-average `baseline`.
///
/// For every offset of 5 %, 10 %, ... 300 % of the signal range the baseline
/// is raised, each contiguous run above it contributes its maximum, and the
/// offset whose peak-to-peak intervals have the smallest standard deviation
/// wins. An offset only competes if its peak count over the window duration
/// implies 42 to 210 bpm, which rules out sparse detections at high offsets. Ties keep the lowest offset.
/// Only the comparisons are amplitude dependent, so scaling the signal by a
/// positive constant leaves the result unchanged.
pub fn detect_peaks_with_baseline(filtered: &PpgWindow, baseline: &[f64]) -> Result<PeakTrain> {
    let x = &filtered.samples;
    let fs = filtered.fs;
    if baseline.len() != x.len() {
        return Err(SignalError::InvalidWindow("baseline length differs from signal".into()));
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let range = hi - lo;
    let scale = hi.abs().max(lo.abs());
    if !(range > 0.0) || range <= scale * 1e-12 {
        return Err(SignalError::QualityTooLow("flat signal, no peaks".into()));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for pct in (5..=300).step_by(5) {
        let offset = range * pct as f64 / 100.0;
        let candidates = regions_above(x, baseline, offset);
        if candidates.len() < 2 {
            continue;
        }
        let times = refine_times(x, &candidates, fs);
        let intervals: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let bpm = candidates.len() as f64 * 60.0 * fs / x.len() as f64;
        if !(MIN_BPM..=MAX_BPM).contains(&bpm) {
            continue;
        }
        let sd = stats::std_dev(&intervals);
        if best.as_ref().map_or(true, |(b, _)| sd < *b) {
            best = Some((sd, candidates));
        }
    }

    match best {
        Some((_, indices)) => {
            let peak_times_ms = refine_times(x, &indices, fs);
            Ok(PeakTrain {
                fs,
                peak_indices: indices,
                peak_times_ms,
            })
        }
        None => Err(SignalError::QualityTooLow(
            "no threshold produced a plausible heart rate".into(),
        )),
    }
}

/// Maximum of every contiguous run where `x > baseline + offset`. Runs whose
/// maximum sits on the first or last sample are dropped: those are cut-off
/// beats, not local maxima.
fn regions_above(x: &[f64], baseline: &[f64], offset: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut run_best: Option<usize> = None;
    let last = x.len() - 1;
    let close = |best: Option<usize>, peaks: &mut Vec<usize>| {
        if let Some(i) = best {
            if i != 0 && i != last {
                peaks.push(i);
            }
        }
    };
    for i in 0..x.len() {
        if x[i] > baseline[i] + offset {
            run_best = match run_best {
                Some(b) if x[b] >= x[i] => Some(b),
                _ => Some(i),
            };
        } else {
            close(run_best.take(), &mut peaks);
        }
    }
    close(run_best, &mut peaks);
    peaks
}

/// Parabolic interpolation around each peak sample.
fn refine_times(x: &[f64], indices: &[usize], fs: f64) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| {
            let mut delta = 0.0;
            if i > 0 && i + 1 < x.len() {
                let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
                let denom = a - 2.0 * b + c;
                if denom < 0.0 {
                    delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                }
            }
            (i as f64 + delta) * 1000.0 / fs
        })
        .collect()
}

/// Converts peaks to NN intervals, rejecting intervals outside
/// [`MIN_NN_MS`, `MAX_NN_MS`] or more than 30 % away from the median of the
/// last five accepted intervals. Before anything has been accepted the
/// reference is the median of all in-range intervals, so a bad first beat
/// cannot anchor the series.
pub fn extract_nn(peaks: &PeakTrain) -> Result<NnSeries> {
    if peaks.len() < 2 {
        return Err(SignalError::QualityTooLow(format!("{} peaks", peaks.len())));
    }
    let raw: Vec<f64> = peaks.peak_times_ms.windows(2).map(|w| w[1] - w[0]).collect();
    let in_range: Vec<f64> = raw
        .iter()
        .copied()
        .filter(|v| (MIN_NN_MS..=MAX_NN_MS).contains(v))
        .collect();
    let global_ref = if in_range.is_empty() { 0.0 } else { stats::median(&in_range) };

    let mut accepted: Vec<f64> = Vec::with_capacity(raw.len());
    for &interval in &raw {
        if !(MIN_NN_MS..=MAX_NN_MS).contains(&interval) {
            continue;
        }
        let reference = if accepted.is_empty() {
            global_ref
        } else {
            let tail = &accepted[accepted.len().saturating_sub(RUNNING_MEDIAN_LEN)..];
            stats::median(tail)
        };
        if (interval - reference).abs() > MAX_MEDIAN_DEVIATION * reference {
            continue;
        }
        accepted.push(interval);
    }
    let rejected = raw.len() - accepted.len();
    if accepted.len() < 2 {
        return Err(SignalError::QualityTooLow(format!(
            "{} of {} NN intervals survived rejection",
            accepted.len(),
            raw.len()
        )));
    }
    Ok(NnSeries {
        intervals_ms: accepted,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_peaks_give_uniform_intervals() {
        let nn = extract_nn(&PeakTrain::from_indices(vec![0, 20, 40, 60], 20.0)).unwrap();
        assert_eq!(nn.intervals_ms, vec![1000.0, 1000.0, 1000.0]);
        assert_eq!(nn.rejected, 0);
    }

    #[test]
    fn out_of_range_interval_leaves_too_few() {
        let err = extract_nn(&PeakTrain::from_indices(vec![0, 20, 60], 20.0)).unwrap_err();
        assert!(err.is_quality_too_low());
        assert!(err.to_string().contains("1 of 2"), "{err}");
    }

    #[test]
    fn irregular_spacing_arithmetic() {
        let nn = extract_nn(&PeakTrain::from_indices(vec![0, 19, 39, 58], 20.0)).unwrap();
        assert_eq!(nn.intervals_ms, vec![950.0, 1000.0, 950.0]);
    }

    #[test]
    fn running_median_rejects_missed_beat() {
        // 667 ms spacing with one beat missing: the 1333 ms gap is inside the
        // absolute bounds but far from the running median.
        let mut times: Vec<f64> = (0..20).map(|i| i as f64 * 667.0).collect();
        times.remove(10);
        let peaks = PeakTrain {
            fs: 20.0,
            peak_indices: (0..times.len()).collect(),
            peak_times_ms: times,
        };
        let nn = extract_nn(&peaks).unwrap();
        assert_eq!(nn.rejected, 1);
        assert_eq!(nn.intervals_ms.len(), 17);
    }

    #[test]
    fn single_peak_is_too_low() {
        assert!(extract_nn(&PeakTrain::from_indices(vec![5], 20.0)).is_err());
    }

    #[test]
    fn flat_window_has_no_peaks() {
        let w = PpgWindow::new("s", 0, 20.0, vec![0.0; 2400]).unwrap();
        assert!(detect_peaks(&w).unwrap_err().is_quality_too_low());
    }

    #[test]
    fn boundary_maxima_are_not_peaks() {
        let x = vec![5.0, 1.0, 0.0, 1.0, 5.0];
        let base = vec![0.0; 5];
        assert!(regions_above(&x, &base, 2.0).is_empty());
    }
}
