//! The per-window processing chain: filter, peaks, HRV features, quality
//! indices and the dominant activity.

use ppgema_core::activity::{predict_dominant, ActivityLabel, ForestModel};
use ppgema_core::model::{FieldError, SamplePayload};
use ppgema_core::quality::{assess, QualityReport};
use ppgema_core::signal::{analyze_window, FeatureVector, FilterSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub features: Option<FeatureVector>,
    pub quality_too_low: Option<String>,
    pub quality: QualityReport,
    pub activity: ActivityLabel,
    pub activity_confidence: f64,
}

/// Runs the chain on a schema-valid payload. Only a filter that cannot be
/// built for the payload's rate is an error; unmeasurable windows come back
/// with `features = None`.
pub fn process(payload: &SamplePayload, filter: &FilterSpec, model: &ForestModel) -> Result<Processed, FieldError> {
    let window = payload.ppg_window();
    let analysis = analyze_window(&window, filter).map_err(|e| FieldError {
        field: "fs".into(),
        message: e.to_string(),
    })?;
    let quality = assess(&analysis.filtered, analysis.peaks.as_ref().ok());
    let (features, quality_too_low) = match analysis.features {
        Ok(f) if f.is_finite() => (Some(f), None),
        Ok(_) => (None, Some("non-finite features".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    let (activity, activity_confidence) =
        predict_dominant(model, &payload.motion_window()).unwrap_or((ActivityLabel::Others, 0.0));
    Ok(Processed {
        features,
        quality_too_low,
        quality,
        activity,
        activity_confidence,
    })
}
