//! Dominant-activity detection from the watch's motion sensors.
//!
//! Each window is cut into 10 s sub-windows, every sub-window is classified
//! by a random forest, and the window gets the modal label.

mod corpus;
mod features;
mod forest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{read_labeled_csv, write_labeled_csv};
pub use features::{extract_motion_features, motion_feature_names, MotionFeatures, SUBWINDOW_S};
pub use forest::{
    evaluate_leave_k_out, train_forest, FoldResult, ForestModel, ForestParams, LeaveOutReport,
    FOREST_FORMAT, FOREST_VERSION,
};

/// The five activity classes, ordered from least to most active with
/// `Others` last. Ties are always broken toward the earlier variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Sit,
    Stand,
    Walk,
    Jog,
    Others,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 5] = [
        ActivityLabel::Sit,
        ActivityLabel::Stand,
        ActivityLabel::Walk,
        ActivityLabel::Jog,
        ActivityLabel::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Sit => "sit",
            ActivityLabel::Stand => "stand",
            ActivityLabel::Walk => "walk",
            ActivityLabel::Jog => "jog",
            ActivityLabel::Others => "others",
        }
    }

    /// Accepts the canonical names plus the common long forms
    /// ("sitting", "walking", ...); anything else maps to `None`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sit" | "sitting" => Some(ActivityLabel::Sit),
            "stand" | "standing" => Some(ActivityLabel::Stand),
            "walk" | "walking" => Some(ActivityLabel::Walk),
            "jog" | "jogging" => Some(ActivityLabel::Jog),
            "others" | "other" => Some(ActivityLabel::Others),
            _ => None,
        }
    }
}

impl std::fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ActivityError {
    #[error("motion window too short: {samples} samples, need {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("motion channels have different lengths (acc {acc}, gyro {gyro}, grav {grav})")]
    MismatchedLengths { acc: usize, gyro: usize, grav: usize },
    #[error("motion window contains non-finite values")]
    NonFinite,
    #[error("invalid sampling rate {0}")]
    InvalidRate(f64),
    #[error("training data has {0} class(es); need at least 2")]
    TooFewClasses(usize),
    #[error("class {class} has {count} samples; need at least {needed}")]
    DeficientClass {
        class: ActivityLabel,
        count: usize,
        needed: usize,
    },
    #[error("feature vectors must all have {expected} finite values (sample {index})")]
    BadFeatures { expected: usize, index: usize },
    #[error("{have} subjects cannot support leave-{k}-out; need at least {}", k + 1)]
    TooFewSubjects { have: usize, k: usize },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("model file: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, ActivityError>;

/// Three-axis accelerometer, gyroscope and gravity traces sampled together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionWindow {
    pub fs: f64,
    pub acc: Vec<[f64; 3]>,
    pub gyro: Vec<[f64; 3]>,
    pub grav: Vec<[f64; 3]>,
}

impl MotionWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(ActivityError::InvalidRate(self.fs));
        }
        let (a, g, r) = (self.acc.len(), self.gyro.len(), self.grav.len());
        if a != g || a != r {
            return Err(ActivityError::MismatchedLengths { acc: a, gyro: g, grav: r });
        }
        let finite = |ch: &[[f64; 3]]| ch.iter().all(|row| row.iter().all(|v| v.is_finite()));
        if !(finite(&self.acc) && finite(&self.gyro) && finite(&self.grav)) {
            return Err(ActivityError::NonFinite);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc.is_empty()
    }
}

/// One labelled feature row, the unit of training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub subject_id: String,
    pub label: ActivityLabel,
    pub features: Vec<f64>,
}

/// Modal sub-window prediction and the fraction of sub-windows that agree
/// with it.
pub fn predict_dominant(model: &ForestModel, window: &MotionWindow) -> Result<(ActivityLabel, f64)> {
    let rows = extract_motion_features(window)?;
    let mut counts = [0usize; 5];
    for row in &rows {
        counts[model.predict(&row.0).index()] += 1;
    }
    let (best, count) = counts
        .iter()
        .enumerate()
        .fold((0, 0), |(bi, bc), (i, &c)| if c > bc { (i, c) } else { (bi, bc) });
    let label = ActivityLabel::from_index(best).expect("five classes");
    Ok((label, count as f64 / rows.len() as f64))
}
