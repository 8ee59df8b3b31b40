//! The 13 HRV features computed from an NN series.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{NnSeries, Result, SignalError};
use crate::{spectrum, stats};

pub const FEATURE_NAMES: [&str; 13] = [
    "bpm",
    "ibi_ms",
    "sdnn_ms",
    "sdsd_ms",
    "rmssd_ms",
    "pnn20",
    "pnn50",
    "mad_ms",
    "sd1_ms",
    "sd2_ms",
    "s_area_ms2",
    "sd1_sd2_ratio",
    "br_hz",
];

const TACHOGRAM_HZ: f64 = 4.0;
const BR_LO_HZ: f64 = 0.1;
const BR_HI_HZ: f64 = 0.4;
const BR_MIN_NFFT: usize = 1024;
const MIN_INTERVALS: usize = 4;

/// HRV summary of one window.
///
/// `sd1_sd2_ratio` is 0 when `sd2_ms` is 0, and `br_hz` is 0 when no
/// breathing peak could be found (see [`FeatureVector::has_breathing_rate`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub bpm: f64,
    pub ibi_ms: f64,
    pub sdnn_ms: f64,
    pub sdsd_ms: f64,
    pub rmssd_ms: f64,
    pub pnn20: f64,
    pub pnn50: f64,
    pub mad_ms: f64,
    pub sd1_ms: f64,
    pub sd2_ms: f64,
    pub s_area_ms2: f64,
    pub sd1_sd2_ratio: f64,
    pub br_hz: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 13] {
        [
            self.bpm,
            self.ibi_ms,
            self.sdnn_ms,
            self.sdsd_ms,
            self.rmssd_ms,
            self.pnn20,
            self.pnn50,
            self.mad_ms,
            self.sd1_ms,
            self.sd2_ms,
            self.s_area_ms2,
            self.sd1_sd2_ratio,
            self.br_hz,
        ]
    }

    pub fn from_array(v: [f64; 13]) -> Self {
        Self {
            bpm: v[0],
            ibi_ms: v[1],
            sdnn_ms: v[2],
            sdsd_ms: v[3],
            rmssd_ms: v[4],
            pnn20: v[5],
            pnn50: v[6],
            mad_ms: v[7],
            sd1_ms: v[8],
            sd2_ms: v[9],
            s_area_ms2: v[10],
            sd1_sd2_ratio: v[11],
            br_hz: v[12],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn has_breathing_rate(&self) -> bool {
        self.br_hz > 0.0
    }
}

/// Computes all 13 features. Standard deviations are population (divide by
/// n), pNNx counts strictly greater differences, MAD is the median absolute
/// deviation about the median, and SD1/SD2 follow from SDSD and SDNN.
pub fn hrv_features(nn: &NnSeries) -> Result<FeatureVector> {
    let x = &nn.intervals_ms;
    if x.len() < MIN_INTERVALS {
        return Err(SignalError::QualityTooLow(format!(
            "{} NN intervals, need {MIN_INTERVALS}",
            x.len()
        )));
    }
    let ibi = stats::mean(x);
    let var_nn = stats::variance(x);
    let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let var_sd = stats::variance(&diffs);
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let n_diffs = diffs.len() as f64;
    let pnn20 = diffs.iter().filter(|d| d.abs() > 20.0).count() as f64 / n_diffs;
    let pnn50 = diffs.iter().filter(|d| d.abs() > 50.0).count() as f64 / n_diffs;
    let med = stats::median(x);
    let abs_dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let mad = stats::median(&abs_dev);

    let sd1 = (var_sd / 2.0).sqrt();
    let sd2 = (2.0 * var_nn - var_sd / 2.0).max(0.0).sqrt();
    let ratio = if sd2 > 0.0 { sd1 / sd2 } else { 0.0 };

    Ok(FeatureVector {
        bpm: 60_000.0 / ibi,
        ibi_ms: ibi,
        sdnn_ms: var_nn.sqrt(),
        sdsd_ms: var_sd.sqrt(),
        rmssd_ms: rmssd,
        pnn20,
        pnn50,
        mad_ms: mad,
        sd1_ms: sd1,
        sd2_ms: sd2,
        s_area_ms2: PI * sd1 * sd2,
        sd1_sd2_ratio: ratio,
        br_hz: breathing_rate_hz(x).unwrap_or(0.0),
    })
}

/// Like [`hrv_features`] but fails when no breathing rate can be estimated.
pub fn hrv_features_strict(nn: &NnSeries) -> Result<FeatureVector> {
    let f = hrv_features(nn)?;
    if !f.has_breathing_rate() {
        return Err(SignalError::QualityTooLow("breathing rate undefined".into()));
    }
    Ok(f)
}

/// Frequency of the largest periodogram bin in 0.1..=0.4 Hz of the NN
/// tachogram, linearly resampled at 4 Hz and mean-removed.
pub fn breathing_rate_hz(intervals_ms: &[f64]) -> Option<f64> {
    let grid = resample_tachogram(intervals_ms);
    if grid.len() < 2 {
        return None;
    }
    let mu = stats::mean(&grid);
    let centred: Vec<f64> = grid.iter().map(|v| v - mu).collect();
    let nfft = centred.len().next_power_of_two().max(BR_MIN_NFFT);
    let (freqs, power) = spectrum::periodogram(&centred, TACHOGRAM_HZ, nfft);
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let (f, p) = freqs
        .iter()
        .zip(&power)
        .filter(|(f, _)| (BR_LO_HZ..=BR_HI_HZ).contains(*f))
        .fold((0.0, 0.0), |(bf, bp), (f, p)| if *p > bp { (*f, *p) } else { (bf, bp) });
    (p > total * 1e-12).then_some(f)
}

/// Beat `k` sits at the cumulative sum of the first `k + 1` intervals and
/// carries interval `k`.
fn resample_tachogram(intervals_ms: &[f64]) -> Vec<f64> {
    let mut times = Vec::with_capacity(intervals_ms.len());
    let mut t = 0.0;
    for v in intervals_ms {
        t += v / 1000.0;
        times.push(t);
    }
    let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) else {
        return Vec::new();
    };
    let step = 1.0 / TACHOGRAM_HZ;
    let mut out = Vec::new();
    let mut seg = 0;
    let mut k = 0usize;
    loop {
        let tq = t0 + k as f64 * step;
        if tq > t_end {
            break;
        }
        while seg + 2 < times.len() && times[seg + 1] < tq {
            seg += 1;
        }
        let v = if times.len() == 1 {
            intervals_ms[0]
        } else {
            let (ta, tb) = (times[seg], times[seg + 1]);
            let (va, vb) = (intervals_ms[seg], intervals_ms[seg + 1]);
            va + (vb - va) * (tq - ta) / (tb - ta)
        };
        out.push(v);
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn(v: &[f64]) -> NnSeries {
        NnSeries {
            intervals_ms: v.to_vec(),
            rejected: 0,
        }
    }

    #[test]
    fn constant_series() {
        let f = hrv_features(&nn(&[1000.0; 4])).unwrap();
        assert_eq!(f.bpm, 60.0);
        assert_eq!(f.ibi_ms, 1000.0);
        for v in [f.sdnn_ms, f.sdsd_ms, f.rmssd_ms, f.pnn20, f.pnn50, f.mad_ms, f.sd1_ms, f.sd2_ms] {
            assert_eq!(v, 0.0);
        }
        // Degenerate: SD2 = SDNN * sqrt(2) = 0 and the ratio falls back to 0.
        assert_eq!(f.sd1_sd2_ratio, 0.0);
        assert!(!f.has_breathing_rate());
        assert!(hrv_features_strict(&nn(&[1000.0; 4])).is_err());
    }

    #[test]
    fn too_few_intervals() {
        assert!(hrv_features(&nn(&[1000.0, 990.0, 1010.0])).unwrap_err().is_quality_too_low());
    }

    #[test]
    fn tachogram_grid_is_linear() {
        let g = resample_tachogram(&[1000.0, 1000.0, 2000.0]);
        // Beats at 1, 2, 4 s; grid 1.0, 1.25, ... 4.0.
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 1000.0);
        assert_eq!(g[4], 1000.0);
        assert!((g[6] - 1250.0).abs() < 1e-9);
        assert_eq!(g[12], 2000.0);
    }

    #[test]
    fn breathing_modulation_is_recovered() {
        // 0.25 Hz sinusoidal modulation of a 1 s IBI.
        let mut t = 0.0;
        let mut v = Vec::new();
        for _ in 0..120 {
            let ibi = 1000.0 + 50.0 * (2.0 * PI * 0.25 * t).sin();
            v.push(ibi);
            t += ibi / 1000.0;
        }
        let br = breathing_rate_hz(&v).unwrap();
        assert!((br - 0.25).abs() < 0.01, "br {br}");
    }
}
