//! Wire and storage records shared by the service, the replay tool and the
//! analytics.

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityLabel, MotionWindow};
use crate::quality::QualityReport;
use crate::query::QueryDecision;
use crate::signal::{FeatureVector, PpgWindow};

/// Time allowed between a sample and the label that describes it, which is
/// also the lifetime of an EMA query.
pub const LABEL_WINDOW_MS: i64 = 16 * 60 * 1000;

/// A window as uploaded by the sensor tier. Field names are part of the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePayload {
    pub subject_id: String,
    pub t_start_ms: i64,
    pub fs: f64,
    pub ppg: Vec<f64>,
    pub acc: Vec<[f64; 3]>,
    pub gyro: Vec<[f64; 3]>,
    pub grav: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl SamplePayload {
    /// Schema checks beyond what deserialization enforces: the PPG length
    /// must equal `fs * window_s`, the motion channels must match it, and
    /// every value must be finite.
    pub fn validate(&self, window_s: f64) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if self.subject_id.trim().is_empty() {
            errors.push(FieldError::new("subject_id", "must not be empty"));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            errors.push(FieldError::new("fs", format!("must be > 0, got {}", self.fs)));
        } else {
            let expected = (self.fs * window_s).round() as usize;
            if self.ppg.len() != expected {
                errors.push(FieldError::new(
                    "ppg",
                    format!(
                        "expected {expected} samples ({} Hz x {window_s} s), got {}",
                        self.fs,
                        self.ppg.len()
                    ),
                ));
            }
        }
        if let Some(i) = self.ppg.iter().position(|v| !v.is_finite()) {
            errors.push(FieldError::new("ppg", format!("value {i} is not finite")));
        }
        for (name, channel) in [("acc", &self.acc), ("gyro", &self.gyro), ("grav", &self.grav)] {
            if channel.len() != self.ppg.len() {
                errors.push(FieldError::new(
                    name,
                    format!("has {} rows, ppg has {}", channel.len(), self.ppg.len()),
                ));
            }
            if let Some(i) = channel.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
                errors.push(FieldError::new(name, format!("row {i} is not finite")));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn t_end_ms(&self) -> i64 {
        self.t_start_ms + (self.ppg.len() as f64 * 1000.0 / self.fs).round() as i64
    }

    pub fn ppg_window(&self) -> PpgWindow {
        PpgWindow {
            subject_id: self.subject_id.clone(),
            t_start_ms: self.t_start_ms,
            fs: self.fs,
            samples: self.ppg.clone(),
        }
    }

    pub fn motion_window(&self) -> MotionWindow {
        MotionWindow {
            fs: self.fs,
            acc: self.acc.clone(),
            gyro: self.gyro.clone(),
            grav: self.grav.clone(),
        }
    }
}

/// Processed sample as persisted by the service. The raw payload is stored
/// separately, keyed by `sample_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
    pub received_at_ms: i64,
    pub features: Option<FeatureVector>,
    /// Reason the window could not be measured, when `features` is `None`.
    pub quality_too_low: Option<String>,
    pub quality: QualityReport,
    pub activity: ActivityLabel,
    pub activity_confidence: f64,
    pub decision: QueryDecision,
    /// Query created for this sample, if the draw triggered and no other
    /// query was open.
    pub ema_id: Option<String>,
    /// The draw triggered but a query was already open for the subject.
    pub suppressed: bool,
}

/// Ordinal stress answer, 0 ("not at all") to 4 ("extremely").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct StressLevel(u8);

impl StressLevel {
    pub const LABELS: [&'static str; 5] = ["not at all", "a little bit", "some", "a lot", "extremely"];
    pub const MAX: StressLevel = StressLevel(4);

    pub fn new(level: u8) -> Option<Self> {
        (level <= 4).then_some(Self(level))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        Self::LABELS[self.0 as usize]
    }
}

impl TryFrom<i64> for StressLevel {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        u8::try_from(v)
            .ok()
            .and_then(StressLevel::new)
            .ok_or_else(|| format!("stress must be an integer 0-4, got {v}"))
    }
}

impl From<StressLevel> for u8 {
    fn from(s: StressLevel) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Sad,
    Mad,
    Neutral,
    Happy,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Sad, Emotion::Mad, Emotion::Neutral, Emotion::Happy];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Sad => "sad",
            Emotion::Mad => "mad",
            Emotion::Neutral => "neutral",
            Emotion::Happy => "happy",
        }
    }
}

/// Self-reported activity or physical state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportedActivity {
    Sitting,
    Standing,
    Walking,
    Jogging,
    LyingDown,
    Other,
}

impl ReportedActivity {
    pub const ALL: [ReportedActivity; 6] = [
        ReportedActivity::Sitting,
        ReportedActivity::Standing,
        ReportedActivity::Walking,
        ReportedActivity::Jogging,
        ReportedActivity::LyingDown,
        ReportedActivity::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportedActivity::Sitting => "sitting",
            ReportedActivity::Standing => "standing",
            ReportedActivity::Walking => "walking",
            ReportedActivity::Jogging => "jogging",
            ReportedActivity::LyingDown => "lying_down",
            ReportedActivity::Other => "other",
        }
    }
}

/// The three question groups shown with every query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub stress: Vec<String>,
    pub emotion: Vec<String>,
    pub activity: Vec<String>,
}

impl Default for Questionnaire {
    fn default() -> Self {
        Self {
            stress: StressLevel::LABELS.iter().map(|s| s.to_string()).collect(),
            emotion: Emotion::ALL.iter().map(|e| e.as_str().to_string()).collect(),
            activity: ReportedActivity::ALL.iter().map(|a| a.as_str().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaQuery {
    pub ema_id: String,
    pub subject_id: String,
    pub sample_id: String,
    pub dispatched_at_ms: i64,
    pub expires_at_ms: i64,
    pub questions: Questionnaire,
}

impl EmaQuery {
    pub fn new(ema_id: String, subject_id: String, sample_id: String, dispatched_at_ms: i64) -> Self {
        Self {
            ema_id,
            subject_id,
            sample_id,
            dispatched_at_ms,
            expires_at_ms: dispatched_at_ms + LABEL_WINDOW_MS,
            questions: Questionnaire::default(),
        }
    }

    pub fn is_expired(&self, now_ms: i64) -> bool {
        now_ms > self.expires_at_ms
    }
}

/// Body of `POST /v1/ema/{ema_id}/response`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSubmission {
    /// Defaults to the server's receive time.
    #[serde(default)]
    pub responded_at_ms: Option<i64>,
    pub stress: StressLevel,
    pub emotion: Emotion,
    pub activity: ReportedActivity,
    /// Client-side time from first render to submit; stored, not analysed.
    #[serde(default)]
    pub client_render_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaResponse {
    pub ema_id: String,
    pub responded_at_ms: i64,
    pub stress: StressLevel,
    pub emotion: Emotion,
    pub activity: ReportedActivity,
    #[serde(default)]
    pub client_render_ms: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    /// Registered as a label.
    Accepted,
    /// Arrived after the query expired; kept for audit only.
    Stale,
}

/// A response as persisted, with the timing derived from its query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub response: EmaResponse,
    pub subject_id: String,
    pub sample_id: String,
    pub dispatched_at_ms: i64,
    pub response_time_s: f64,
    pub status: ResponseStatus,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(len: usize) -> SamplePayload {
        SamplePayload {
            subject_id: "S01".into(),
            t_start_ms: 0,
            fs: 20.0,
            ppg: vec![0.0; len],
            acc: vec![[0.0; 3]; len],
            gyro: vec![[0.0; 3]; len],
            grav: vec![[0.0, 0.0, 9.81]; len],
        }
    }

    #[test]
    fn length_mismatch_is_a_field_error() {
        let errs = payload(100).validate(120.0).unwrap_err();
        assert_eq!(errs[0].field, "ppg");
        assert!(errs[0].message.contains("expected 2400"));
        assert!(payload(2400).validate(120.0).is_ok());
        assert_eq!(payload(2400).t_end_ms(), 120_000);
    }

    #[test]
    fn motion_channels_must_match() {
        let mut p = payload(2400);
        p.gyro.pop();
        let errs = p.validate(120.0).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "gyro");
    }

    #[test]
    fn stress_outside_range_fails_to_parse() {
        let ok: ResponseSubmission =
            serde_json::from_str(r#"{"stress":2,"emotion":"happy","activity":"sitting"}"#).unwrap();
        assert_eq!(ok.stress.value(), 2);
        let bad = serde_json::from_str::<ResponseSubmission>(r#"{"stress":7,"emotion":"happy","activity":"sitting"}"#);
        assert!(bad.unwrap_err().to_string().contains("0-4"));
        assert!(serde_json::from_str::<ResponseSubmission>(r#"{"stress":-1,"emotion":"sad","activity":"other"}"#).is_err());
    }

    #[test]
    fn stress_round_trips_every_level() {
        for level in 0..=4u8 {
            let s = StressLevel::new(level).unwrap();
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, level.to_string());
            assert_eq!(serde_json::from_str::<StressLevel>(&json).unwrap(), s);
        }
        assert_eq!(StressLevel::new(2).unwrap().label(), "some");
    }

    #[test]
    fn query_expiry() {
        let q = EmaQuery::new("e".into(), "S".into(), "x".into(), 1_000);
        assert_eq!(q.expires_at_ms, 1_000 + 960_000);
        assert!(!q.is_expired(q.expires_at_ms));
        assert!(q.is_expired(1_000 + 17 * 60_000));
    }
}
