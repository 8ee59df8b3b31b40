//! Analytics over service snapshots, as JSON-ready structures and as the
//! CSV files the CLI writes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ppgema_core::analytics::{
    self, AnalyticsError, AnswerSummary, GroupBy, ProfileSample, QualitySummary, QueryOutcome, ResponseStats,
    TemporalReport, DEFAULT_HORIZON_MIN, DEFAULT_MIN_COUNT,
};
use ppgema_core::model::ResponseStatus;
use serde::Serialize;
use thiserror::Error;

use crate::service::SubjectSnapshot;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown report {0:?} (expected coverage, temporal, quality or response)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Coverage,
    Temporal,
    Quality,
    Response,
}

impl FromStr for ReportKind {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coverage" => Ok(Self::Coverage),
            "temporal" => Ok(Self::Temporal),
            "quality" => Ok(Self::Quality),
            "response" | "responses" => Ok(Self::Response),
            other => Err(ReportError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub d: f64,
    pub horizon_min: u32,
    pub min_count: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            d: 1.5,
            horizon_min: DEFAULT_HORIZON_MIN,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCurve {
    pub subject_id: String,
    pub d: f64,
    /// `(labels so far, far fraction)`.
    pub curve: Vec<(usize, f64)>,
}

fn require_samples(snaps: &[SubjectSnapshot]) -> Result<(), AnalyticsError> {
    if snaps.iter().all(|s| s.records.is_empty()) {
        Err(AnalyticsError::NoSamples)
    } else {
        Ok(())
    }
}

/// Coverage curves of every subject that has labels.
pub fn coverage(snaps: &[SubjectSnapshot], d: f64) -> Result<Vec<CoverageCurve>, AnalyticsError> {
    require_samples(snaps)?;
    let mut out = Vec::new();
    let mut last_err = AnalyticsError::NoSamples;
    for s in snaps {
        match analytics::coverage_curve(&s.engine, d) {
            Ok(curve) => out.push(CoverageCurve {
                subject_id: s.subject_id.clone(),
                d,
                curve,
            }),
            Err(e) => last_err = e,
        }
    }
    if out.is_empty() {
        Err(last_err)
    } else {
        Ok(out)
    }
}

/// Usable samples with their predicted activity and, for labelled ones,
/// the reported stress.
pub fn profile_samples(snaps: &[SubjectSnapshot]) -> Vec<ProfileSample> {
    let mut out = Vec::new();
    for s in snaps {
        let stress: std::collections::HashMap<&str, _> = s
            .queries
            .iter()
            .filter_map(|q| q.response.as_ref())
            .filter(|r| r.status == ResponseStatus::Accepted)
            .map(|r| (r.sample_id.as_str(), r.response.stress))
            .collect();
        for r in &s.records {
            if let Some(f) = &r.features {
                out.push(ProfileSample {
                    subject_id: r.subject_id.clone(),
                    t_start_ms: r.t_start_ms,
                    features: f.to_array(),
                    activity: r.activity,
                    stress: stress.get(r.sample_id.as_str()).copied(),
                });
            }
        }
    }
    out
}

pub fn temporal(snaps: &[SubjectSnapshot], group_by: GroupBy, horizon_min: u32) -> Result<TemporalReport, AnalyticsError> {
    require_samples(snaps)?;
    Ok(analytics::temporal_profile(&profile_samples(snaps), group_by, horizon_min))
}

pub fn quality(snaps: &[SubjectSnapshot], min_count: usize) -> Result<Vec<QualitySummary>, AnalyticsError> {
    require_samples(snaps)?;
    let rows: Vec<_> = snaps
        .iter()
        .flat_map(|s| s.records.iter().map(|r| (r.activity, r.quality.clone())))
        .collect();
    Ok(analytics::quality_by_activity(&rows, min_count))
}

/// Every dispatched query with its answer, late answers included.
pub fn query_outcomes(snaps: &[SubjectSnapshot]) -> Vec<QueryOutcome> {
    snaps
        .iter()
        .flat_map(|s| s.queries.iter())
        .map(|q| QueryOutcome {
            subject_id: q.query.subject_id.clone(),
            dispatched_at_ms: q.query.dispatched_at_ms,
            response: q.response.as_ref().map(|r| AnswerSummary {
                response_time_s: r.response_time_s,
                activity: r.response.activity,
                stress: r.response.stress,
            }),
        })
        .collect()
}

pub fn responses(snaps: &[SubjectSnapshot]) -> Result<ResponseStats, AnalyticsError> {
    require_samples(snaps)?;
    Ok(analytics::response_stats(&query_outcomes(snaps)))
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the CSV files of one report into `out_dir` and returns their
/// paths.
pub fn write_report(
    kind: ReportKind,
    snaps: &[SubjectSnapshot],
    opts: &ReportOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    match kind {
        ReportKind::Coverage => {
            let curves: Vec<_> = coverage(snaps, opts.d)?
                .into_iter()
                .map(|c| (c.subject_id, c.curve))
                .collect();
            let path = out_dir.join("fig3_coverage.csv");
            analytics::write_coverage_csv(create(&path)?, &curves)?;
            written.push(path);
        }
        ReportKind::Temporal => {
            for (group_by, name) in [
                (GroupBy::Activity, "fig4_temporal_activity.csv"),
                (GroupBy::Stress, "fig5_temporal_stress.csv"),
            ] {
                let report = temporal(snaps, group_by, opts.horizon_min)?;
                let path = out_dir.join(name);
                analytics::write_temporal_csv(create(&path)?, &report.profiles)?;
                written.push(path);
            }
        }
        ReportKind::Quality => {
            let summaries = quality(snaps, opts.min_count)?;
            let path = out_dir.join("fig6_sqi_activity.csv");
            analytics::write_quality_csv(create(&path)?, &summaries)?;
            written.push(path);
        }
        ReportKind::Response => {
            let stats = responses(snaps)?;
            let cdf = out_dir.join("fig7_response_cdf.csv");
            analytics::write_response_cdf_csv(create(&cdf)?, &stats)?;
            let rate = out_dir.join("fig8_response_rate.csv");
            analytics::write_response_rate_csv(create(&rate)?, &stats)?;
            written.extend([cdf, rate]);
        }
    }
    Ok(written)
}
