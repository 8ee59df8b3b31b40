//! Batch analyses over stored samples and responses: coverage curves,
//! temporal distance profiles, quality by predicted activity and
//! response-time statistics, each with a CSV writer.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::ActivityLabel;
use crate::model::{ReportedActivity, StressLevel};
use crate::quality::QualityReport;
use crate::query::{EngineState, QueryError, Standardizer};
use crate::stats;

pub const GAP_STEP_MIN: u32 = 15;
pub const DEFAULT_HORIZON_MIN: u32 = 180;
/// Bins with fewer pairs are flagged as low confidence.
pub const MIN_PAIRS: usize = 10;
pub const DEFAULT_MIN_COUNT: usize = 20;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no samples")]
    NoSamples,
    #[error("no labels yet")]
    NoLabels,
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;

// ---------------------------------------------------------------- coverage

/// `(i, F_D(i))` after each of the subject's labels, in arrival order.
pub fn coverage_curve(state: &EngineState, d: f64) -> Result<Vec<(usize, f64)>> {
    if state.samples.iter().all(|s| s.features.is_none()) {
        return Err(AnalyticsError::NoSamples);
    }
    if state.labeled.is_empty() {
        return Err(AnalyticsError::NoLabels);
    }
    Ok(state
        .coverage_curve(d)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| (i + 1, f))
        .collect())
}

pub fn write_coverage_csv<W: Write>(out: W, curves: &[(String, Vec<(usize, f64)>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "label_index", "far_fraction"])?;
    for (subject, curve) in curves {
        for (i, f) in curve {
            w.write_record([subject.clone(), i.to_string(), f.to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

// ---------------------------------------------------------------- temporal

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Activity,
    Stress,
    None,
}

/// One usable sample as seen by the temporal analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSample {
    pub subject_id: String,
    pub t_start_ms: i64,
    pub features: [f64; 13],
    pub activity: ActivityLabel,
    /// Reported stress, for labelled samples.
    pub stress: Option<StressLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalBin {
    pub gap_min: u32,
    pub pairs: usize,
    pub mean_distance: Option<f64>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalProfile {
    pub subject_id: String,
    pub group: String,
    pub bins: Vec<TemporalBin>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TemporalReport {
    pub profiles: Vec<TemporalProfile>,
    /// Groups left out for having fewer than two samples.
    pub skipped: Vec<String>,
}

/// Mean standardized distance between sample pairs, binned by their gap
/// rounded to the nearest 15 minutes, per subject and group. Each subject
/// is standardized on all of its own samples.
pub fn temporal_profile(samples: &[ProfileSample], group_by: GroupBy, horizon_min: u32) -> TemporalReport {
    let mut by_subject: BTreeMap<&str, Vec<&ProfileSample>> = BTreeMap::new();
    for s in samples {
        by_subject.entry(&s.subject_id).or_default().push(s);
    }
    let n_bins = (horizon_min / GAP_STEP_MIN) as usize;
    let mut report = TemporalReport::default();
    for (subject, mut rows) in by_subject {
        // A canonical order makes the floating-point sums independent of
        // the input order.
        rows.sort_by(|a, b| {
            a.t_start_ms.cmp(&b.t_start_ms).then_with(|| {
                a.features
                    .iter()
                    .zip(&b.features)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let raw: Vec<Vec<f64>> = rows.iter().map(|r| r.features.to_vec()).collect();
        let Ok(standardizer) = Standardizer::fit(&raw) else {
            continue;
        };
        let z: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let key = match group_by {
                GroupBy::None => Some("all".to_string()),
                GroupBy::Activity => Some(r.activity.as_str().to_string()),
                GroupBy::Stress => r.stress.map(|s| s.value().to_string()),
            };
            if let Some(k) = key {
                groups.entry(k).or_default().push(i);
            }
        }
        for (group, idx) in groups {
            if idx.len() < 2 {
                report.skipped.push(format!("{subject}/{group}: {} sample", idx.len()));
                continue;
            }
            let mut sums = vec![0.0; n_bins];
            let mut counts = vec![0usize; n_bins];
            for (a, &i) in idx.iter().enumerate() {
                for &j in &idx[a + 1..] {
                    let gap_min = (rows[i].t_start_ms - rows[j].t_start_ms).abs() as f64 / 60_000.0;
                    let bin = (gap_min / GAP_STEP_MIN as f64).round() as usize;
                    if bin == 0 || bin > n_bins {
                        continue;
                    }
                    let d: f64 = z[i].iter().zip(&z[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                    sums[bin - 1] += d.sqrt();
                    counts[bin - 1] += 1;
                }
            }
            let bins = (0..n_bins)
                .map(|b| TemporalBin {
                    gap_min: (b as u32 + 1) * GAP_STEP_MIN,
                    pairs: counts[b],
                    mean_distance: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
                    low_confidence: counts[b] < MIN_PAIRS,
                })
                .collect();
            report.profiles.push(TemporalProfile {
                subject_id: subject.to_string(),
                group,
                bins,
            });
        }
    }
    report
}

pub fn write_temporal_csv<W: Write>(out: W, profiles: &[TemporalProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "group", "gap_min", "pairs", "mean_distance", "low_confidence"])?;
    for p in profiles {
        for b in &p.bins {
            w.write_record([
                p.subject_id.clone(),
                p.group.clone(),
                b.gap_min.to_string(),
                b.pairs.to_string(),
                b.mean_distance.map_or(String::new(), |d| d.to_string()),
                b.low_confidence.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

// ----------------------------------------------------------------- quality

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: stats::quantile_sorted(&v, 0.25),
            median: stats::quantile_sorted(&v, 0.5),
            q3: stats::quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub activity: ActivityLabel,
    pub n: usize,
    /// In [`QualityReport::INDEX_NAMES`] order.
    pub indices: [FiveNumber; 5],
}

/// Five-number summaries of every index per predicted activity, over
/// usable reports. Activities with fewer than `min_count` reports are
/// left out.
pub fn quality_by_activity(rows: &[(ActivityLabel, QualityReport)], min_count: usize) -> Vec<QualitySummary> {
    let mut by: BTreeMap<ActivityLabel, Vec<[f64; 5]>> = BTreeMap::new();
    for (a, q) in rows.iter().filter(|(_, q)| q.usable) {
        by.entry(*a).or_default().push(q.indices());
    }
    by.into_iter()
        .filter(|(_, v)| !v.is_empty() && v.len() >= min_count)
        .map(|(activity, v)| QualitySummary {
            activity,
            n: v.len(),
            indices: std::array::from_fn(|j| {
                FiveNumber::of(&v.iter().map(|r| r[j]).collect::<Vec<_>>()).expect("non-empty")
            }),
        })
        .collect()
}

pub fn write_quality_csv<W: Write>(out: W, summaries: &[QualitySummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["activity", "index", "n", "min", "q1", "median", "q3", "max"])?;
    for s in summaries {
        for (name, f) in QualityReport::INDEX_NAMES.iter().zip(&s.indices) {
            w.write_record([
                s.activity.as_str().to_string(),
                name.to_string(),
                s.n.to_string(),
                f.min.to_string(),
                f.q1.to_string(),
                f.median.to_string(),
                f.q3.to_string(),
                f.max.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

// --------------------------------------------------------------- responses

/// A dispatched query and, if it was answered (in time or not), the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub subject_id: String,
    pub dispatched_at_ms: i64,
    pub response: Option<AnswerSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnswerSummary {
    pub response_time_s: f64,
    pub activity: ReportedActivity,
    pub stress: StressLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCdf {
    /// `all`, `activity` or `stress`.
    pub kind: String,
    pub context: String,
    /// Queries behind the denominator: every query for `all`, the answered
    /// ones for self-reported contexts (unanswered queries carry no report).
    pub denominator: usize,
    /// `(response time s, cumulative probability)`, non-decreasing.
    pub points: Vec<(f64, f64)>,
    pub median_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRate {
    pub hour: u32,
    pub queries: usize,
    pub responses: usize,
    /// Mean over subjects with queries in this hour of responses / queries.
    pub rate: f64,
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    pub queries: usize,
    pub responses: usize,
    pub cdfs: Vec<ResponseCdf>,
    pub hourly: Vec<HourRate>,
}

fn cdf(kind: &str, context: &str, mut times: Vec<f64>, denominator: usize) -> ResponseCdf {
    times.sort_by(f64::total_cmp);
    let median_s = (!times.is_empty()).then(|| stats::quantile_sorted(&times, 0.5));
    let points = times
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, (i + 1) as f64 / denominator as f64))
        .collect();
    ResponseCdf {
        kind: kind.into(),
        context: context.into(),
        denominator,
        points,
        median_s,
    }
}

/// Response-time CDFs (overall, per self-reported activity, per reported
/// stress) and per-hour response rates, hours in UTC.
pub fn response_stats(outcomes: &[QueryOutcome]) -> ResponseStats {
    let answered: Vec<&AnswerSummary> = outcomes.iter().filter_map(|o| o.response.as_ref()).collect();
    let mut cdfs = Vec::new();
    if !answered.is_empty() {
        cdfs.push(cdf(
            "all",
            "all",
            answered.iter().map(|a| a.response_time_s).collect(),
            outcomes.len(),
        ));
        for activity in ReportedActivity::ALL {
            let t: Vec<f64> = answered
                .iter()
                .filter(|a| a.activity == activity)
                .map(|a| a.response_time_s)
                .collect();
            if !t.is_empty() {
                let n = t.len();
                cdfs.push(cdf("activity", activity.as_str(), t, n));
            }
        }
        for level in 0..=StressLevel::MAX.value() {
            let t: Vec<f64> = answered
                .iter()
                .filter(|a| a.stress.value() == level)
                .map(|a| a.response_time_s)
                .collect();
            if !t.is_empty() {
                let n = t.len();
                cdfs.push(cdf("stress", &level.to_string(), t, n));
            }
        }
    }

    // (hour, subject) -> (queries, responses)
    let mut cells: BTreeMap<(u32, &str), (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let hour = crate::simulator::hour_of_day(o.dispatched_at_ms);
        let c = cells.entry((hour, &o.subject_id)).or_default();
        c.0 += 1;
        c.1 += usize::from(o.response.is_some());
    }
    let hours: BTreeSet<u32> = cells.keys().map(|k| k.0).collect();
    let hourly = hours
        .into_iter()
        .map(|hour| {
            let per: Vec<(usize, usize)> = cells.range((hour, "")..).take_while(|(k, _)| k.0 == hour).map(|(_, v)| *v).collect();
            HourRate {
                hour,
                queries: per.iter().map(|c| c.0).sum(),
                responses: per.iter().map(|c| c.1).sum(),
                rate: per.iter().map(|(q, r)| *r as f64 / *q as f64).sum::<f64>() / per.len() as f64,
                subjects: per.len(),
            }
        })
        .collect();
    ResponseStats {
        queries: outcomes.len(),
        responses: answered.len(),
        cdfs,
        hourly,
    }
}

pub fn write_response_cdf_csv<W: Write>(out: W, stats: &ResponseStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "context", "response_time_s", "cumulative_probability"])?;
    for c in &stats.cdfs {
        for (t, p) in &c.points {
            w.write_record([c.kind.clone(), c.context.clone(), t.to_string(), p.to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_response_rate_csv<W: Write>(out: W, stats: &ResponseStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["hour", "queries", "responses", "rate", "subjects"])?;
    for h in &stats.hourly {
        w.write_record([
            h.hour.to_string(),
            h.queries.to_string(),
            h.responses.to_string(),
            h.rate.to_string(),
            h.subjects.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{EngineConfig, SampleRef};
    use crate::signal::FeatureVector;

    fn ps(t_min: i64, v: f64, activity: ActivityLabel) -> ProfileSample {
        let mut f = [0.0; 13];
        f[0] = v;
        f[1] = (t_min % 7) as f64;
        ProfileSample {
            subject_id: "S01".into(),
            t_start_ms: t_min * 60_000,
            features: f,
            activity,
            stress: None,
        }
    }

    #[test]
    fn identical_vectors_have_zero_distance() {
        let mut a = ps(0, 1.0, ActivityLabel::Sit);
        let mut b = ps(15, 1.0, ActivityLabel::Sit);
        a.features = [1.0; 13];
        b.features = [1.0; 13];
        let r = temporal_profile(&[a, b], GroupBy::None, 180);
        assert_eq!(r.profiles[0].bins[0].mean_distance, Some(0.0));
        assert_eq!(r.profiles[0].bins[0].pairs, 1);
        assert!(r.profiles[0].bins[0].low_confidence);
        assert_eq!(r.profiles[0].bins[1].mean_distance, None);
    }

    #[test]
    fn singleton_groups_are_skipped() {
        let rows = vec![
            ps(0, 1.0, ActivityLabel::Sit),
            ps(15, 2.0, ActivityLabel::Sit),
            ps(30, 3.0, ActivityLabel::Walk),
        ];
        let r = temporal_profile(&rows, GroupBy::Activity, 180);
        assert_eq!(r.profiles.len(), 1);
        assert_eq!(r.skipped.len(), 1);
        // Off-cadence gaps round to the nearest bin.
        let r = temporal_profile(&[ps(0, 1.0, ActivityLabel::Sit), ps(22, 2.0, ActivityLabel::Sit)], GroupBy::None, 180);
        assert_eq!(r.profiles[0].bins[0].pairs, 1);
    }

    #[test]
    fn order_does_not_matter() {
        let rows: Vec<_> = (0..30).map(|i| ps(i * 15, (i as f64 * 0.7).sin(), ActivityLabel::Sit)).collect();
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(
            temporal_profile(&rows, GroupBy::None, 180),
            temporal_profile(&rev, GroupBy::None, 180)
        );
    }

    fn report(v: f64, usable: bool) -> QualityReport {
        QualityReport {
            skewness_var: v,
            kurtosis_var: v,
            apen_var: v,
            shannon_entropy: v,
            spectral_entropy: v,
            usable,
            flagged_cycles: 0,
        }
    }

    #[test]
    fn quality_summaries() {
        let mut rows: Vec<_> = (0..5).map(|i| (ActivityLabel::Sit, report(i as f64, true))).collect();
        rows.push((ActivityLabel::Sit, report(100.0, false)));
        rows.push((ActivityLabel::Jog, report(1.0, true)));
        let s = quality_by_activity(&rows, 2);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n, 5);
        assert_eq!(s[0].indices[0].median, 2.0);
        assert_eq!(s[0].indices[0].q1, 1.0);
        assert_eq!(s[0].indices[4].max, 4.0);
    }

    fn outcome(hour: i64, answered: bool) -> QueryOutcome {
        QueryOutcome {
            subject_id: "S01".into(),
            dispatched_at_ms: hour * 3_600_000 + 60_000,
            response: answered.then_some(AnswerSummary {
                response_time_s: 30.0 + hour as f64,
                activity: ReportedActivity::Sitting,
                stress: StressLevel::new(1).unwrap(),
            }),
        }
    }

    #[test]
    fn ten_query_fixture() {
        let rows: Vec<_> = (0..10).map(|i| outcome(14, i % 2 == 0)).collect();
        let s = response_stats(&rows);
        assert_eq!(s.hourly.len(), 1);
        assert_eq!(s.hourly[0].hour, 14);
        assert_eq!(s.hourly[0].rate, 0.5);
        let all = &s.cdfs[0];
        assert_eq!(all.points.last().unwrap().1, 0.5);
        assert!(all.points.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 <= w[1].0));
    }

    #[test]
    fn unanswered_only() {
        let rows: Vec<_> = (0..4).map(|h| outcome(h, false)).collect();
        let s = response_stats(&rows);
        assert!(s.cdfs.is_empty());
        assert!(s.hourly.iter().all(|h| h.rate == 0.0));
    }

    #[test]
    fn hourly_rate_averages_subjects() {
        let mut rows = vec![outcome(8, true), outcome(8, false)];
        let mut other = outcome(8, true);
        other.subject_id = "S02".into();
        rows.push(other);
        let s = response_stats(&rows);
        assert_eq!(s.hourly[0].rate, 0.75);
        assert_eq!(s.hourly[0].subjects, 2);
    }

    #[test]
    fn coverage_curve_requires_labels() {
        let mut e = EngineState::new("S01", EngineConfig { n_initial: 1, k_regions: 1, ..EngineConfig::default() });
        let s = SampleRef {
            sample_id: "a".into(),
            t_start_ms: 0,
            t_end_ms: 120_000,
        };
        e.observe(s, Some(&FeatureVector::from_array([1.0; 13])));
        assert!(matches!(coverage_curve(&e, 1.5), Err(AnalyticsError::NoLabels)));
        e.register_label("e", "a", 150_000).unwrap();
        assert_eq!(coverage_curve(&e, 1.5).unwrap(), vec![(1, 0.0)]);
        let mut buf = Vec::new();
        write_coverage_csv(&mut buf, &[("S01".into(), vec![(1, 0.0)])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "subject_id,label_index,far_fraction\nS01,1,0\n");
    }
}
