//! PPG processing chain: band-pass, moving-average baseline, peak detection,
//! NN-interval extraction and the 13 HRV features.

mod filter;
mod hrv;
mod peaks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{bandpass_filter, moving_average, moving_average_slice, ButterworthBandpass};
pub use hrv::{breathing_rate_hz, hrv_features, hrv_features_strict, FeatureVector, FEATURE_NAMES};
pub use peaks::{
    detect_peaks, detect_peaks_with_baseline, extract_nn, NnSeries, PeakTrain, MAX_NN_MS,
    MIN_NN_MS,
};

/// Minimum window length accepted for HRV analysis.
pub const MIN_WINDOW_S: f64 = 30.0;

/// Length of the moving-average kernel.
pub const MOVING_AVERAGE_S: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid filter configuration: {0}")]
    InvalidFilter(String),
    #[error("signal quality too low: {0}")]
    QualityTooLow(String),
}

impl SignalError {
    pub fn is_quality_too_low(&self) -> bool {
        matches!(self, SignalError::QualityTooLow(_))
    }
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// One PPG recording for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgWindow {
    pub subject_id: String,
    pub t_start_ms: i64,
    pub fs: f64,
    pub samples: Vec<f64>,
}

impl PpgWindow {
    /// Builds a window, checking sampling rate, length (at least 30 s) and
    /// that every sample is finite.
    pub fn new(subject_id: impl Into<String>, t_start_ms: i64, fs: f64, samples: Vec<f64>) -> Result<Self> {
        let window = Self {
            subject_id: subject_id.into(),
            t_start_ms,
            fs,
            samples,
        };
        window.validate()?;
        Ok(window)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(SignalError::InvalidWindow(format!("fs must be > 0, got {}", self.fs)));
        }
        let min_len = (self.fs * MIN_WINDOW_S).ceil() as usize;
        if self.samples.len() < min_len {
            return Err(SignalError::InvalidWindow(format!(
                "{} samples is shorter than {MIN_WINDOW_S} s at {} Hz",
                self.samples.len(),
                self.fs
            )));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(SignalError::InvalidWindow(format!("sample {i} is not finite")));
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.fs
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            subject_id: self.subject_id.clone(),
            t_start_ms: self.t_start_ms,
            fs: self.fs,
            samples,
        }
    }
}

/// Butterworth band-pass parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub order: usize,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 3,
            low_cut_hz: 0.7,
            high_cut_hz: 3.5,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 {
            return Err(SignalError::InvalidFilter("order must be positive".into()));
        }
        let nyquist = fs / 2.0;
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz < self.high_cut_hz && self.high_cut_hz < nyquist) {
            return Err(SignalError::InvalidFilter(format!(
                "need 0 < low ({}) < high ({}) < nyquist ({nyquist})",
                self.low_cut_hz, self.high_cut_hz
            )));
        }
        Ok(())
    }
}

/// Intermediate products of [`analyze_window`], kept so that quality
/// assessment can reuse the filtered signal and the peaks.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub filtered: PpgWindow,
    pub peaks: Result<PeakTrain>,
    pub features: Result<FeatureVector>,
}

/// Runs the whole chain and keeps the intermediates.
///
/// The 0.75 s moving average is the detector's threshold baseline: peaks are
/// read from the band-passed signal itself. Only configuration errors are
/// returned as `Err`; a window that is too poor to measure yields an analysis
/// whose `peaks`/`features` carry [`SignalError::QualityTooLow`].
pub fn analyze_window(window: &PpgWindow, spec: &FilterSpec) -> Result<WindowAnalysis> {
    window.validate()?;
    let filtered = bandpass_filter(window, spec)?;
    let baseline = moving_average(&filtered, MOVING_AVERAGE_S)?;
    let peaks = detect_peaks_with_baseline(&filtered, &baseline.samples);
    let features = match &peaks {
        Ok(p) => extract_nn(p).and_then(|nn| hrv_features(&nn)),
        Err(e) => Err(e.clone()),
    };
    Ok(WindowAnalysis {
        filtered,
        peaks,
        features,
    })
}

/// Raw PPG window to feature vector.
pub fn process_window(window: &PpgWindow, spec: &FilterSpec) -> Result<FeatureVector> {
    analyze_window(window, spec)?.features
}
