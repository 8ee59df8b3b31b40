//! Per-subject decision of when to ask for a label.
//!
//! The first `n_initial` usable samples are only buffered. They fix the
//! standardization and seed `k_regions` k-means regions. After that each
//! sample is assigned to its nearest region and triggers with probability
//! `clip(count_k / count_max, p_floor, 1)`, computed from the counts before
//! the sample is added. Regions that already hold `quota` labels are closed.
//!
//! The uniform draw for a sample is a hash of the engine seed and the
//! sample id, so a replay of the same stream reproduces every decision.

mod coverage;
mod kmeans;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use coverage::{far_fraction, far_fraction_curve};
pub use kmeans::{kmeans, nearest};

use crate::model::LABEL_WINDOW_MS;
use crate::signal::FeatureVector;

pub const CHECKPOINT_FORMAT: &str = "ppgema-engine";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const KMEANS_ITERATIONS: usize = 25;
const N_FEATURES: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("no samples")]
    NoSamples,
    #[error("{have} samples seen, need at least {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error("regions are not fitted yet (initial phase)")]
    NotFitted,
    #[error("unknown sample {0}")]
    UnknownSample(String),
    #[error("label is {gap_s:.0} s away from its sample, limit {limit_s} s")]
    Stale { gap_s: f64, limit_s: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// What happens to a region once its label quota is met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaMode {
    /// Probability 0: the region is closed.
    #[default]
    Stop,
    /// Probability drops to `p_floor` but never to 0.
    Floor,
    /// Quotas are ignored.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub n_initial: usize,
    pub k_regions: usize,
    pub quota: usize,
    pub quota_mode: QuotaMode,
    pub p_floor: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_initial: 100,
            k_regions: 10,
            quota: 15,
            quota_mode: QuotaMode::Stop,
            p_floor: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    InitialPhase,
    QuotaReached,
    Drawn,
    NotDrawn,
    QualityTooLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryDecision {
    pub trigger: bool,
    pub probability_used: f64,
    pub region_id: Option<usize>,
    pub reason: DecisionReason,
}

impl QueryDecision {
    fn without_region(reason: DecisionReason) -> Self {
        Self {
            trigger: false,
            probability_used: 0.0,
            region_id: None,
            reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Query,
}

/// Per-feature z-scoring; zero-variance features keep std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, QueryError> {
        let first = rows.first().ok_or(QueryError::NoSamples)?;
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..first.len())
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let stds = means
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let s = (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionModel {
    pub standardizer: Standardizer,
    pub centroids: Vec<Vec<f64>>,
    /// Usable samples assigned to each region, initial phase included.
    pub counts: Vec<u64>,
    pub label_counts: Vec<u32>,
}

impl RegionModel {
    pub fn assign(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, &self.standardizer.apply(x))
    }

    /// `clip(count_k / count_max, floor, 1)` for every region.
    pub fn probabilities(&self, p_floor: f64) -> Vec<f64> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts
            .iter()
            .map(|&c| {
                let ratio = if max == 0 { 0.0 } else { c as f64 / max as f64 };
                ratio.clamp(p_floor, 1.0)
            })
            .collect()
    }
}

/// The parts of a sample the engine needs to associate labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRef {
    pub sample_id: String,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeenSample {
    #[serde(flatten)]
    pub sample: SampleRef,
    pub features: Option<[f64; N_FEATURES]>,
    pub decision: QueryDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub ema_id: String,
    pub sample_id: String,
    pub responded_at_ms: i64,
    pub features: [f64; N_FEATURES],
    pub region_id: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelOutcome {
    Accepted,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub subject_id: String,
    pub config: EngineConfig,
    pub phase: Phase,
    pub regions: Option<RegionModel>,
    /// Every observed sample in arrival order.
    pub samples: Vec<SeenSample>,
    /// Accepted labels in arrival order.
    pub labeled: Vec<LabeledEntry>,
    /// Number of random draws made so far.
    pub draws: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    applied_seq: u64,
    state: EngineState,
}

/// Uniform in [0, 1) from the first 8 bytes of SHA-256(seed ‖ sample_id).
pub fn draw_uniform(seed: u64, sample_id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_be_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// Distance in ms from `t` to the interval `[start, end]`.
pub fn gap_to_window_ms(t: i64, start: i64, end: i64) -> i64 {
    if t < start {
        start - t
    } else if t > end {
        t - end
    } else {
        0
    }
}

impl EngineState {
    pub fn new(subject_id: impl Into<String>, config: EngineConfig) -> Self {
        Self {
            subject_id: subject_id.into(),
            config,
            phase: Phase::Initial,
            regions: None,
            samples: Vec::new(),
            labeled: Vec::new(),
            draws: 0,
        }
    }

    fn usable(&self) -> impl Iterator<Item = &[f64; N_FEATURES]> {
        self.samples.iter().filter_map(|s| s.features.as_ref())
    }

    pub fn sample(&self, sample_id: &str) -> Option<&SeenSample> {
        self.samples.iter().find(|s| s.sample.sample_id == sample_id)
    }

    /// Decides for one sample. `None` (or non-finite) features mean the
    /// window failed the quality checks; such samples never trigger and do
    /// not count toward densities. Re-observing a known sample id returns the
    /// stored decision.
    pub fn observe(&mut self, sample: SampleRef, features: Option<&FeatureVector>) -> QueryDecision {
        if let Some(seen) = self.sample(&sample.sample_id) {
            return seen.decision;
        }
        let features = features.filter(|f| f.is_finite()).map(|f| f.to_array());
        let decision = match features {
            None => QueryDecision::without_region(DecisionReason::QualityTooLow),
            Some(x) => match self.phase {
                Phase::Initial => QueryDecision::without_region(DecisionReason::InitialPhase),
                Phase::Query => self.decide(&sample.sample_id, &x),
            },
        };
        self.samples.push(SeenSample {
            sample,
            features,
            decision,
        });
        if self.phase == Phase::Initial && self.usable().count() >= self.config.n_initial.max(1) {
            // Fitting cannot fail here: the buffer is non-empty and
            // `k_regions` is capped at its size.
            let k = self.config.k_regions.clamp(1, self.config.n_initial.max(1));
            if self.fit_regions(k).is_ok() {
                self.phase = Phase::Query;
            }
        }
        decision
    }

    fn decide(&mut self, sample_id: &str, x: &[f64]) -> QueryDecision {
        let cfg = &self.config;
        let regions = self.regions.as_mut().expect("query phase has regions");
        let k = regions.assign(x);
        let density_p = regions.probabilities(cfg.p_floor)[k];
        let quota_met = regions.label_counts[k] as usize >= cfg.quota;
        regions.counts[k] += 1;
        let p = match (quota_met, cfg.quota_mode) {
            (true, QuotaMode::Stop) => {
                return QueryDecision {
                    trigger: false,
                    probability_used: 0.0,
                    region_id: Some(k),
                    reason: DecisionReason::QuotaReached,
                }
            }
            (true, QuotaMode::Floor) => cfg.p_floor,
            _ => density_p,
        };
        self.draws += 1;
        let trigger = draw_uniform(cfg.seed, sample_id) < p;
        QueryDecision {
            trigger,
            probability_used: p,
            region_id: Some(k),
            reason: if trigger {
                DecisionReason::Drawn
            } else {
                DecisionReason::NotDrawn
            },
        }
    }

    /// Standardizes on the initial buffer (first fit only) and fits `k`
    /// regions on every usable sample seen so far.
    fn fit_regions(&mut self, k: usize) -> Result<(), QueryError> {
        let raw: Vec<Vec<f64>> = self.usable().map(|x| x.to_vec()).collect();
        let standardizer = match &self.regions {
            Some(r) => r.standardizer.clone(),
            None => Standardizer::fit(&raw)?,
        };
        let z: Vec<Vec<f64>> = raw.iter().map(|x| standardizer.apply(x)).collect();
        let centroids = kmeans(&z, k, KMEANS_ITERATIONS, self.config.seed)?;
        let mut counts = vec![0u64; k];
        for p in &z {
            counts[nearest(&centroids, p)] += 1;
        }
        let mut model = RegionModel {
            standardizer,
            centroids,
            counts,
            label_counts: vec![0; k],
        };
        for entry in &mut self.labeled {
            let r = model.assign(&entry.features);
            entry.region_id = Some(r);
            model.label_counts[r] += 1;
        }
        self.regions = Some(model);
        Ok(())
    }

    /// Re-estimates the regions on all usable samples, keeping the frozen
    /// standardization, and remaps sample and label counts.
    pub fn refit_regions(&mut self, k: usize) -> Result<(), QueryError> {
        if self.regions.is_none() {
            return Err(QueryError::NotFitted);
        }
        let have = self.usable().count();
        if k == 0 || k > have {
            return Err(QueryError::TooFewSamples { have, need: k.max(1) });
        }
        self.fit_regions(k)
    }

    /// Accepts a label for a known sample if it arrived within the label
    /// window of the sample. A repeated `ema_id` is a no-op.
    pub fn register_label(
        &mut self,
        ema_id: &str,
        sample_id: &str,
        responded_at_ms: i64,
    ) -> Result<LabelOutcome, QueryError> {
        if self.labeled.iter().any(|l| l.ema_id == ema_id) {
            return Ok(LabelOutcome::Duplicate);
        }
        let seen = self
            .sample(sample_id)
            .ok_or_else(|| QueryError::UnknownSample(sample_id.to_string()))?;
        let gap = gap_to_window_ms(responded_at_ms, seen.sample.t_start_ms, seen.sample.t_end_ms);
        if gap > LABEL_WINDOW_MS {
            return Err(QueryError::Stale {
                gap_s: gap as f64 / 1000.0,
                limit_s: LABEL_WINDOW_MS as f64 / 1000.0,
            });
        }
        let features = seen
            .features
            .ok_or_else(|| QueryError::UnknownSample(format!("{sample_id} has no features")))?;
        let region_id = self.regions.as_mut().map(|r| {
            let k = r.assign(&features);
            r.label_counts[k] += 1;
            k
        });
        self.labeled.push(LabeledEntry {
            ema_id: ema_id.to_string(),
            sample_id: sample_id.to_string(),
            responded_at_ms,
            features,
            region_id,
        });
        Ok(LabelOutcome::Accepted)
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.regions.as_ref().map(|r| &r.standardizer)
    }

    /// Coverage of `all` by the labelled set at distance `d`, in the frozen
    /// standardized space.
    pub fn coverage(&self, all: &[FeatureVector], d: f64) -> Result<f64, QueryError> {
        let s = self.standardizer().ok_or(QueryError::NotFitted)?;
        let x: Vec<Vec<f64>> = all.iter().map(|f| s.apply(&f.to_array())).collect();
        far_fraction(&x, &self.labeled_standardized()?, d)
    }

    /// Coverage of every usable sample seen, after each successive label.
    pub fn coverage_curve(&self, d: f64) -> Result<Vec<f64>, QueryError> {
        let s = self.standardizer().ok_or(QueryError::NotFitted)?;
        let x: Vec<Vec<f64>> = self.usable().map(|f| s.apply(f)).collect();
        far_fraction_curve(&x, &self.labeled_standardized()?, d)
    }

    fn labeled_standardized(&self) -> Result<Vec<Vec<f64>>, QueryError> {
        let s = self.standardizer().ok_or(QueryError::NotFitted)?;
        Ok(self.labeled.iter().map(|l| s.apply(&l.features)).collect())
    }

    pub fn labeled_sample_ids(&self) -> BTreeSet<&str> {
        self.labeled.iter().map(|l| l.sample_id.as_str()).collect()
    }

    pub fn to_checkpoint(&self, applied_seq: u64) -> String {
        serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            applied_seq,
            state: self.clone(),
        })
        .expect("engine state serializes")
    }

    /// Returns the state and the sequence number it reflects.
    pub fn from_checkpoint(text: &str) -> Result<(Self, u64), QueryError> {
        let cp: Checkpoint =
            serde_json::from_str(text).map_err(|e| QueryError::Checkpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(QueryError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                cp.format, cp.version
            )));
        }
        Ok((cp.state, cp.applied_seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: f64) -> FeatureVector {
        let mut a = [0.0; 13];
        a[0] = v;
        a[1] = v * 0.5;
        FeatureVector::from_array(a)
    }

    fn sref(i: usize) -> SampleRef {
        let t = i as i64 * 900_000;
        SampleRef {
            sample_id: format!("s{i:05}"),
            t_start_ms: t,
            t_end_ms: t + 120_000,
        }
    }

    fn config(n: usize, k: usize) -> EngineConfig {
        EngineConfig {
            n_initial: n,
            k_regions: k,
            seed: 42,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn initial_phase_never_triggers() {
        let mut e = EngineState::new("a", config(100, 3));
        for i in 0..99 {
            let d = e.observe(sref(i), Some(&fv(i as f64)));
            assert_eq!(d.reason, DecisionReason::InitialPhase);
        }
        assert_eq!(e.phase, Phase::Initial);
        let d = e.observe(sref(99), Some(&fv(99.0)));
        assert_eq!(d.reason, DecisionReason::InitialPhase);
        assert!(!d.trigger);
        assert_eq!(e.phase, Phase::Query);
        let d = e.observe(sref(100), Some(&fv(5.0)));
        assert!(matches!(d.reason, DecisionReason::Drawn | DecisionReason::NotDrawn));
    }

    #[test]
    fn probabilities_follow_clipped_density() {
        let model = RegionModel {
            standardizer: Standardizer {
                means: vec![0.0],
                stds: vec![1.0],
            },
            centroids: vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            counts: vec![50, 40, 10, 0],
            label_counts: vec![0; 4],
        };
        let p = model.probabilities(0.1);
        let expected = [1.0, 0.8, 0.2, 0.1];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quality_too_low_skips_density() {
        let mut e = EngineState::new("a", config(3, 1));
        let d = e.observe(sref(0), None);
        assert_eq!(d.reason, DecisionReason::QualityTooLow);
        for i in 1..4 {
            e.observe(sref(i), Some(&fv(i as f64)));
        }
        assert_eq!(e.regions.as_ref().unwrap().counts, vec![3]);
        let d = e.observe(sref(4), None);
        assert_eq!(d.reason, DecisionReason::QualityTooLow);
        assert_eq!(e.regions.as_ref().unwrap().counts, vec![3]);
    }

    #[test]
    fn single_region_always_triggers_until_quota() {
        let mut cfg = config(5, 1);
        cfg.quota = 2;
        let mut e = EngineState::new("a", cfg);
        for i in 0..5 {
            e.observe(sref(i), Some(&fv(i as f64)));
        }
        for i in 5..7 {
            let d = e.observe(sref(i), Some(&fv(1.0)));
            assert!(d.trigger);
            assert_eq!(d.probability_used, 1.0);
            let s = sref(i);
            e.register_label(&format!("e{i}"), &s.sample_id, s.t_end_ms + 60_000).unwrap();
        }
        let d = e.observe(sref(7), Some(&fv(1.0)));
        assert_eq!(d.reason, DecisionReason::QuotaReached);
        assert_eq!(d.probability_used, 0.0);
    }

    #[test]
    fn floor_mode_keeps_floor_after_quota() {
        let mut cfg = config(5, 1);
        cfg.quota = 0;
        cfg.quota_mode = QuotaMode::Floor;
        let mut e = EngineState::new("a", cfg);
        for i in 0..6 {
            e.observe(sref(i), Some(&fv(i as f64)));
        }
        assert_eq!(e.samples[5].decision.probability_used, 0.1);
    }

    #[test]
    fn sixteen_minute_rule() {
        let mut e = EngineState::new("a", config(2, 1));
        e.observe(sref(0), Some(&fv(0.0)));
        let s = sref(0);
        assert_eq!(
            e.register_label("e1", &s.sample_id, s.t_end_ms + 10 * 60_000),
            Ok(LabelOutcome::Accepted)
        );
        assert_eq!(
            e.register_label("e1", &s.sample_id, s.t_end_ms + 10 * 60_000),
            Ok(LabelOutcome::Duplicate)
        );
        assert!(matches!(
            e.register_label("e2", &s.sample_id, s.t_end_ms + 20 * 60_000),
            Err(QueryError::Stale { .. })
        ));
        assert!(matches!(
            e.register_label("e3", "nope", 0),
            Err(QueryError::UnknownSample(_))
        ));
        assert_eq!(e.labeled.len(), 1);
    }

    #[test]
    fn draws_are_uniform_and_stable() {
        let u = draw_uniform(1, "abc");
        assert_eq!(u, draw_uniform(1, "abc"));
        assert_ne!(u, draw_uniform(2, "abc"));
        let mean = (0..10_000).map(|i| draw_uniform(7, &i.to_string())).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn refit_is_deterministic() {
        let mut e = EngineState::new("a", config(20, 2));
        for i in 0..40 {
            e.observe(sref(i), Some(&fv((i % 7) as f64)));
        }
        let mut f = e.clone();
        e.refit_regions(3).unwrap();
        f.refit_regions(3).unwrap();
        assert_eq!(e.regions, f.regions);
        assert_eq!(e.regions.as_ref().unwrap().counts.iter().sum::<u64>(), 40);
        assert!(e.refit_regions(41).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut e = EngineState::new("a", config(5, 2));
        for i in 0..12 {
            e.observe(sref(i), Some(&fv(i as f64 * 0.37)));
        }
        let (back, seq) = EngineState::from_checkpoint(&e.to_checkpoint(17)).unwrap();
        assert_eq!(seq, 17);
        assert_eq!(back, e);
    }

    #[test]
    fn coverage_uses_labels() {
        let mut e = EngineState::new("a", config(3, 1));
        for i in 0..3 {
            e.observe(sref(i), Some(&fv(i as f64)));
        }
        let all: Vec<_> = (0..3).map(|i| fv(i as f64)).collect();
        assert_eq!(e.coverage(&all, 1.5).unwrap(), 1.0);
        let s = sref(1);
        e.register_label("e", &s.sample_id, s.t_end_ms).unwrap();
        // The outer points sit √3 ≈ 1.73 standardized units from the middle.
        assert_eq!(e.coverage(&all, 1.5).unwrap(), 2.0 / 3.0);
        assert_eq!(e.coverage(&all, 2.0).unwrap(), 0.0);
        assert_eq!(e.coverage_curve(2.0).unwrap(), vec![0.0]);
    }
}
