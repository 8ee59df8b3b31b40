//! Synthetic subjects: PPG and motion windows with known heart rate,
//! activity and latent stress, plus a scripted EMA responder.
//!
//! A [`SubjectSimulator`] precomputes the stress path and the activity
//! schedule; each window and each response is then drawn from its own
//! stream keyed by the subject seed and the timestamp, so output does not
//! depend on generation order.

mod motion;
mod ppg;
mod profile;
mod rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use profile::{
    MotionStyle, PerActivity, ResponderModel, Schedule, ScheduleBlock, SimActivity, StressModel,
    SubjectProfile, DAY_MS, DEFAULT_START_MS,
};

use crate::activity::{extract_motion_features, LabeledSample};
use crate::dataset::DatasetRecord;
use crate::model::{EmaQuery, Emotion, ReportedActivity, SamplePayload, StressLevel};
use rng::{gauss, stream};

const TAG_STRESS: u64 = 1;
const TAG_SCHEDULE: u64 = 2;
const TAG_WINDOW: u64 = 3;
const TAG_RESPOND: u64 = 4;

/// What actually happened during a generated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub activity: SimActivity,
    pub stress: f64,
    /// 60 000 / mean generated inter-beat interval inside the window.
    pub bpm: f64,
    pub breathing_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWindow {
    pub payload: SamplePayload,
    pub truth: GroundTruth,
}

/// A response the simulated subject would give to a query, `latency_ms`
/// after dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    pub latency_ms: i64,
    pub stress: StressLevel,
    pub emotion: Emotion,
    pub activity: ReportedActivity,
}

/// Subject state at the moment a query is dispatched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchContext {
    pub dispatched_at_ms: i64,
    pub activity: SimActivity,
    pub stress: f64,
}

#[derive(Debug, Clone)]
pub struct SubjectSimulator {
    profile: SubjectProfile,
    stress: Vec<f64>,
    blocks: Vec<ScheduleBlock>,
}

impl SubjectSimulator {
    pub fn new(profile: SubjectProfile) -> Result<Self, String> {
        profile.validate()?;
        let steps = (profile.horizon_ms() / profile.period_ms()) as usize + 2;
        let stress = stress_path(&profile, steps);
        let blocks = schedule_blocks(&profile);
        Ok(Self {
            profile,
            stress,
            blocks,
        })
    }

    pub fn profile(&self) -> &SubjectProfile {
        &self.profile
    }

    /// Window start times across the horizon, one per period.
    pub fn window_starts(&self) -> impl Iterator<Item = i64> + '_ {
        let p = &self.profile;
        let window_ms = (p.window_s * 1000.0).round() as i64;
        let count = ((p.horizon_ms() - window_ms) / p.period_ms() + 1).max(0);
        (0..count).map(move |k| p.start_ms + k * p.period_ms())
    }

    /// Latent stress in effect at `t_ms` (held for a whole period).
    pub fn stress_at(&self, t_ms: i64) -> f64 {
        let k = ((t_ms - self.profile.start_ms).max(0) / self.profile.period_ms()) as usize;
        self.stress[k.min(self.stress.len() - 1)]
    }

    pub fn activity_at(&self, t_ms: i64) -> SimActivity {
        if let Schedule::Fixed { activity } = self.profile.schedule {
            return activity;
        }
        self.blocks
            .iter()
            .find(|b| b.start_ms <= t_ms && t_ms < b.end_ms)
            .map_or(SimActivity::Sit, |b| b.activity)
    }

    pub fn generate_window(&self, t_start_ms: i64) -> SimWindow {
        self.generate_window_as(t_start_ms, self.activity_at(t_start_ms))
    }

    /// Same as [`generate_window`](Self::generate_window) with the activity
    /// overridden.
    pub fn generate_window_as(&self, t_start_ms: i64, activity: SimActivity) -> SimWindow {
        let p = &self.profile;
        let stress = self.stress_at(t_start_ms);
        let mut rng = stream(p.seed, t_start_ms as u64, TAG_WINDOW);
        let n = (p.window_s * p.fs).round() as usize;
        let (ppg, bpm, breathing_hz) = ppg::generate(p, activity, stress, n, &mut rng);
        let (acc, gyro, grav) = motion::generate(p, activity, n, &mut rng);
        SimWindow {
            payload: SamplePayload {
                subject_id: p.subject_id.clone(),
                t_start_ms,
                fs: p.fs,
                ppg,
                acc,
                gyro,
                grav,
            },
            truth: GroundTruth {
                activity,
                stress,
                bpm,
                breathing_hz,
            },
        }
    }

    pub fn context_at(&self, t_ms: i64) -> DispatchContext {
        DispatchContext {
            dispatched_at_ms: t_ms,
            activity: self.activity_at(t_ms),
            stress: self.stress_at(t_ms),
        }
    }

    /// Scripted answer to a query, using the subject's state at dispatch.
    pub fn respond(&self, query: &EmaQuery) -> Option<ScriptedResponse> {
        respond(&self.profile, query, &self.context_at(query.dispatched_at_ms))
    }

    /// The window at `t_start_ms` together with the answer the subject
    /// would give to a query dispatched when the window ends.
    pub fn dataset_record(&self, t_start_ms: i64) -> DatasetRecord {
        let window = self.generate_window(t_start_ms);
        let t_end = window.payload.t_end_ms();
        let query = EmaQuery::new(String::new(), self.profile.subject_id.clone(), String::new(), t_end);
        DatasetRecord {
            sample: window.payload,
            script: self.respond(&query),
        }
    }
}

fn stress_path(p: &SubjectProfile, steps: usize) -> Vec<f64> {
    let mut rng = stream(p.seed, 0, TAG_STRESS);
    let s = &p.stress;
    let innovation = s.sd * (1.0 - s.phi * s.phi).sqrt();
    let mut x = s.mean + s.sd * gauss(&mut rng);
    (0..steps)
        .map(|_| {
            let v = x.clamp(0.0, 1.0);
            x = s.mean + s.phi * (x - s.mean) + innovation * gauss(&mut rng);
            v
        })
        .collect()
}

fn schedule_blocks(p: &SubjectProfile) -> Vec<ScheduleBlock> {
    match &p.schedule {
        Schedule::Fixed { .. } => Vec::new(),
        Schedule::Blocks { blocks } => blocks.clone(),
        Schedule::Routine {
            block_minutes,
            wake_hour,
            sleep_hour,
            mix,
        } => {
            let mut rng = stream(p.seed, 0, TAG_SCHEDULE);
            let len = i64::from((*block_minutes).max(1)) * 60_000;
            let weights: Vec<(SimActivity, f64)> = SimActivity::ALL
                .iter()
                .map(|&a| (a, mix.get(a).max(0.0)))
                .collect();
            let total: f64 = weights.iter().map(|w| w.1).sum();
            let mut out = Vec::new();
            let mut t = p.start_ms;
            while t < p.start_ms + p.horizon_ms() + len {
                let hour = hour_of_day(t);
                let awake = if wake_hour <= sleep_hour {
                    (*wake_hour..*sleep_hour).contains(&hour)
                } else {
                    hour >= *wake_hour || hour < *sleep_hour
                };
                let mut u = rng.random::<f64>() * total;
                let activity = if !awake || total <= 0.0 {
                    SimActivity::LyingDown
                } else {
                    weights
                        .iter()
                        .find(|(_, w)| {
                            u -= w;
                            u < 0.0
                        })
                        .map_or(SimActivity::Sit, |(a, _)| *a)
                };
                out.push(ScheduleBlock {
                    start_ms: t,
                    end_ms: t + len,
                    activity,
                });
                t += len;
            }
            out
        }
    }
}

/// Hour of day (UTC) of a millisecond timestamp.
pub fn hour_of_day(t_ms: i64) -> u32 {
    (t_ms.rem_euclid(DAY_MS) / 3_600_000) as u32
}

/// Stress quantized to the five answer levels.
pub fn quantize_stress(latent: f64) -> StressLevel {
    StressLevel::new((latent.clamp(0.0, 1.0) * 4.0).round() as u8).expect("0..=4")
}

/// Bernoulli response at the context's rate (reduced during the morning
/// dip) with log-normal latency, shortened under stress.
pub fn respond(profile: &SubjectProfile, query: &EmaQuery, ctx: &DispatchContext) -> Option<ScriptedResponse> {
    let r = &profile.responder;
    let mut rng = stream(profile.seed, query.dispatched_at_ms as u64, TAG_RESPOND);
    let hour = hour_of_day(ctx.dispatched_at_ms);
    let mut rate = r.rate.get(ctx.activity);
    if (r.dip_start_hour..r.dip_end_hour).contains(&hour) {
        rate *= r.dip_factor;
    }
    let u: f64 = rng.random();
    let z = gauss(&mut rng);
    let e: f64 = rng.random();
    if u >= rate {
        return None;
    }
    let median = r.latency_median_s.get(ctx.activity) * (1.0 - r.stress_speedup * ctx.stress.clamp(0.0, 1.0));
    let latency_s = median * (r.latency_sigma * z).exp();
    let stress = quantize_stress(ctx.stress);
    let emotion = match stress.value() {
        0 | 1 if e < 0.7 => Emotion::Happy,
        0 | 1 => Emotion::Neutral,
        2 if e < 0.6 => Emotion::Neutral,
        2 => Emotion::Happy,
        _ if e < 0.5 => Emotion::Mad,
        _ if e < 0.85 => Emotion::Sad,
        _ => Emotion::Neutral,
    };
    Some(ScriptedResponse {
        latency_ms: (latency_s * 1000.0).round().max(1.0) as i64,
        stress,
        emotion,
        activity: ctx.activity.reported(),
    })
}

/// Dataset records for every window of every subject, in start-time
/// order (ties by subject position), generated lazily.
pub fn dataset_records(sims: &[SubjectSimulator]) -> impl Iterator<Item = DatasetRecord> + '_ {
    let mut slots: Vec<(i64, usize)> = sims
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.window_starts().map(move |t| (t, i)))
        .collect();
    slots.sort_unstable();
    slots.into_iter().map(move |(t, i)| sims[i].dataset_record(t))
}

/// Labelled motion-feature rows for activity-model training: for each of
/// `n_subjects` synthetic subjects, `windows_per_activity` windows of every
/// activity, each cut into 10 s sub-windows.
pub fn activity_corpus(n_subjects: usize, windows_per_activity: usize, seed: u64) -> Vec<LabeledSample> {
    let mut out = Vec::new();
    for i in 0..n_subjects {
        let mut profile = SubjectProfile::synthetic(i, seed);
        profile.days = 1.0;
        let sim = SubjectSimulator::new(profile).expect("synthetic profile is valid");
        for (a, activity) in SimActivity::ALL.iter().enumerate() {
            for w in 0..windows_per_activity {
                let t = sim.profile.start_ms + ((a * windows_per_activity + w) as i64) * sim.profile.period_ms();
                let window = sim.generate_window_as(t, *activity);
                let rows = extract_motion_features(&window.payload.motion_window())
                    .expect("simulated windows are long enough");
                out.extend(rows.into_iter().map(|r| LabeledSample {
                    subject_id: sim.profile.subject_id.clone(),
                    label: activity.label(),
                    features: r.0,
                }));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(activity: SimActivity) -> SubjectProfile {
        SubjectProfile {
            schedule: Schedule::Fixed { activity },
            seed: 9,
            ..SubjectProfile::default()
        }
    }

    #[test]
    fn windows_are_deterministic() {
        let sim = SubjectSimulator::new(SubjectProfile::synthetic(0, 3)).unwrap();
        let t = sim.window_starts().nth(10).unwrap();
        assert_eq!(sim.generate_window(t), sim.generate_window(t));
        let again = SubjectSimulator::new(SubjectProfile::synthetic(0, 3)).unwrap();
        assert_eq!(sim.generate_window(t), again.generate_window(t));
        assert_eq!(sim.generate_window(t).payload.validate(120.0), Ok(()));
    }

    #[test]
    fn horizon_gives_one_window_per_period() {
        let sim = SubjectSimulator::new(SubjectProfile::default()).unwrap();
        assert_eq!(sim.window_starts().count(), 3 * 96);
    }

    #[test]
    fn ar1_autocorrelation_matches_phi() {
        let mut p = SubjectProfile::default();
        p.stress = StressModel {
            mean: 0.5,
            phi: 0.5,
            sd: 0.1,
        };
        p.days = 30.0;
        let sim = SubjectSimulator::new(p).unwrap();
        let x = &sim.stress;
        assert!(x.len() > 1000);
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0 - 0.5).abs() < 0.05, "{}", c1 / c0);
    }

    #[test]
    fn stress_quantization() {
        assert_eq!(quantize_stress(1.0).value(), 4);
        assert_eq!(quantize_stress(0.0).value(), 0);
        assert_eq!(quantize_stress(0.5).value(), 2);
    }

    #[test]
    fn responder_rates() {
        let mut p = fixed(SimActivity::Sit);
        let q = |t| EmaQuery::new("e".into(), "S01".into(), "s".into(), t);
        let ctx = |t| DispatchContext {
            dispatched_at_ms: t,
            activity: SimActivity::Sit,
            stress: 1.0,
        };
        p.responder.rate = PerActivity::uniform(0.0);
        assert!(respond(&p, &q(DEFAULT_START_MS), &ctx(DEFAULT_START_MS)).is_none());
        p.responder.rate = PerActivity::uniform(1.0);
        p.responder.dip_factor = 1.0;
        p.responder.latency_median_s = PerActivity::uniform(60.0);
        for k in 0..50 {
            let t = DEFAULT_START_MS + k * 900_000;
            let r = respond(&p, &q(t), &ctx(t)).unwrap();
            assert_eq!(r.stress.value(), 4);
            assert!(r.latency_ms < 16 * 60_000);
        }
    }

    #[test]
    fn routine_sleeps_at_night() {
        let sim = SubjectSimulator::new(SubjectProfile::default()).unwrap();
        assert_eq!(sim.activity_at(DEFAULT_START_MS + 3 * 3_600_000), SimActivity::LyingDown);
        let day: Vec<_> = (0..32)
            .map(|k| sim.activity_at(DEFAULT_START_MS + 7 * 3_600_000 + k * 1_800_000))
            .collect();
        assert!(day.iter().any(|a| *a != SimActivity::LyingDown));
    }
}
