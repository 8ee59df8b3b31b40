//! Subject parameters. Every field has a default so partial TOML tables
//! work.

use serde::{Deserialize, Serialize};

use crate::activity::ActivityLabel;
use crate::model::ReportedActivity;

use super::rng::{stream, uniform};

pub const DAY_MS: i64 = 86_400_000;
/// 2024-01-01T00:00:00Z. Hours of day are taken in UTC.
pub const DEFAULT_START_MS: i64 = 1_704_067_200_000;

/// What the subject is actually doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimActivity {
    Sit,
    Stand,
    Walk,
    Jog,
    LyingDown,
}

impl SimActivity {
    pub const ALL: [SimActivity; 5] = [
        SimActivity::Sit,
        SimActivity::Stand,
        SimActivity::Walk,
        SimActivity::Jog,
        SimActivity::LyingDown,
    ];

    pub fn reported(self) -> ReportedActivity {
        match self {
            SimActivity::Sit => ReportedActivity::Sitting,
            SimActivity::Stand => ReportedActivity::Standing,
            SimActivity::Walk => ReportedActivity::Walking,
            SimActivity::Jog => ReportedActivity::Jogging,
            SimActivity::LyingDown => ReportedActivity::LyingDown,
        }
    }

    /// Class the activity model should predict; lying down is not one of
    /// the four named classes.
    pub fn label(self) -> ActivityLabel {
        match self {
            SimActivity::Sit => ActivityLabel::Sit,
            SimActivity::Stand => ActivityLabel::Stand,
            SimActivity::Walk => ActivityLabel::Walk,
            SimActivity::Jog => ActivityLabel::Jog,
            SimActivity::LyingDown => ActivityLabel::Others,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerActivity<T> {
    pub sit: T,
    pub stand: T,
    pub walk: T,
    pub jog: T,
    pub lying_down: T,
}

impl<T: Copy> PerActivity<T> {
    pub fn get(&self, a: SimActivity) -> T {
        match a {
            SimActivity::Sit => self.sit,
            SimActivity::Stand => self.stand,
            SimActivity::Walk => self.walk,
            SimActivity::Jog => self.jog,
            SimActivity::LyingDown => self.lying_down,
        }
    }

    pub fn uniform(v: T) -> Self {
        Self {
            sit: v,
            stand: v,
            walk: v,
            jog: v,
            lying_down: v,
        }
    }
}

/// Latent stress in [0, 1], an AR(1) process stepped once per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StressModel {
    pub mean: f64,
    /// Lag-one autocorrelation per period; 0.5 at 15 min is a 15 min
    /// half-life.
    pub phi: f64,
    /// Stationary standard deviation before clamping.
    pub sd: f64,
}

impl Default for StressModel {
    fn default() -> Self {
        Self {
            mean: 0.4,
            phi: 0.5,
            sd: 0.22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBlock {
    pub start_ms: i64,
    pub end_ms: i64,
    pub activity: SimActivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Lying down from `sleep_hour` to `wake_hour`; otherwise blocks of
    /// `block_minutes` drawn from `mix`.
    Routine {
        block_minutes: u32,
        wake_hour: u32,
        sleep_hour: u32,
        mix: PerActivity<f64>,
    },
    Fixed {
        activity: SimActivity,
    },
    /// Explicit blocks; gaps fall back to sitting.
    Blocks {
        blocks: Vec<ScheduleBlock>,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Routine {
            block_minutes: 30,
            wake_hour: 7,
            sleep_hour: 23,
            mix: PerActivity {
                sit: 0.5,
                stand: 0.15,
                walk: 0.15,
                jog: 0.05,
                lying_down: 0.15,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponderModel {
    pub rate: PerActivity<f64>,
    /// Multiplier on the response rate for hours in `[dip_start_hour,
    /// dip_end_hour)`.
    pub dip_factor: f64,
    pub dip_start_hour: u32,
    pub dip_end_hour: u32,
    pub latency_median_s: PerActivity<f64>,
    /// Log-scale standard deviation of the latency.
    pub latency_sigma: f64,
    /// Fractional latency reduction at maximum stress.
    pub stress_speedup: f64,
}

impl Default for ResponderModel {
    fn default() -> Self {
        Self {
            rate: PerActivity::uniform(0.7),
            dip_factor: 0.4,
            dip_start_hour: 7,
            dip_end_hour: 9,
            latency_median_s: PerActivity {
                sit: 80.0,
                stand: 80.0,
                walk: 100.0,
                jog: 120.0,
                lying_down: 200.0,
            },
            latency_sigma: 0.6,
            stress_speedup: 0.4,
        }
    }
}

/// Subject-specific wearing style for the motion channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionStyle {
    pub walk_hz: f64,
    pub jog_hz: f64,
    /// Scales gait and fidget amplitudes.
    pub intensity: f64,
    /// Small rotation of every posture, radians about x and y.
    pub tilt: [f64; 2],
}

impl Default for MotionStyle {
    fn default() -> Self {
        Self {
            walk_hz: 1.8,
            jog_hz: 2.7,
            intensity: 1.0,
            tilt: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub seed: u64,
    pub start_ms: i64,
    pub days: f64,
    pub window_s: f64,
    pub period_s: f64,
    pub fs: f64,
    pub base_hr_bpm: f64,
    /// HR elevation at maximum latent stress.
    pub stress_hr_gain_bpm: f64,
    /// Independent per-window HR deviation (standard deviation).
    pub hr_jitter_bpm: f64,
    pub activity_hr_offset_bpm: PerActivity<f64>,
    /// Peak respiratory IBI modulation at zero stress.
    pub hrv_amp_ms: f64,
    /// Fraction of the modulation removed at maximum stress.
    pub hrv_stress_damping: f64,
    /// Log-scale standard deviation of the modulation depth from window to
    /// window (breathing depth varies).
    pub hrv_amp_jitter: f64,
    pub breathing_hz: f64,
    pub breathing_stress_gain_hz: f64,
    pub beat_jitter_ms: f64,
    pub pulse_amplitude: f64,
    pub sensor_noise: f64,
    /// PPG motion-artifact amplitude relative to the pulse.
    pub motion_noise: PerActivity<f64>,
    pub stress: StressModel,
    pub schedule: Schedule,
    pub responder: ResponderModel,
    pub motion: MotionStyle,
}

impl Default for SubjectProfile {
    fn default() -> Self {
        Self {
            subject_id: "S01".into(),
            seed: 0,
            start_ms: DEFAULT_START_MS,
            days: 3.0,
            window_s: 120.0,
            period_s: 900.0,
            fs: 20.0,
            base_hr_bpm: 65.0,
            stress_hr_gain_bpm: 10.0,
            hr_jitter_bpm: 2.0,
            activity_hr_offset_bpm: PerActivity {
                sit: 0.0,
                stand: 6.0,
                walk: 22.0,
                jog: 50.0,
                lying_down: -5.0,
            },
            hrv_amp_ms: 45.0,
            hrv_stress_damping: 0.6,
            hrv_amp_jitter: 0.3,
            breathing_hz: 0.2,
            breathing_stress_gain_hz: 0.12,
            beat_jitter_ms: 4.0,
            pulse_amplitude: 1.0,
            sensor_noise: 0.01,
            motion_noise: PerActivity {
                sit: 0.03,
                stand: 0.08,
                walk: 0.2,
                jog: 0.3,
                lying_down: 0.02,
            },
            stress: StressModel::default(),
            schedule: Schedule::default(),
            responder: ResponderModel::default(),
            motion: MotionStyle::default(),
        }
    }
}

impl SubjectProfile {
    /// The `index`-th synthetic subject ("S01", "S02", ...) with its own
    /// resting HR and wearing style, derived from `seed`.
    pub fn synthetic(index: usize, seed: u64) -> Self {
        let mut rng = stream(seed, index as u64, 0x5052_4f46);
        let subject_seed = seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Self {
            subject_id: format!("S{:02}", index + 1),
            seed: subject_seed,
            base_hr_bpm: uniform(&mut rng, 58.0, 74.0),
            motion: MotionStyle {
                walk_hz: uniform(&mut rng, 1.7, 1.95),
                jog_hz: uniform(&mut rng, 2.5, 2.9),
                intensity: uniform(&mut rng, 0.85, 1.15),
                tilt: [uniform(&mut rng, -0.12, 0.12), uniform(&mut rng, -0.12, 0.12)],
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = [
            self.responder.rate.sit,
            self.responder.rate.stand,
            self.responder.rate.walk,
            self.responder.rate.jog,
            self.responder.rate.lying_down,
            self.responder.dip_factor,
        ];
        if !(0.0..1.0).contains(&self.stress.phi) {
            return Err(format!("stress.phi must be in [0, 1), got {}", self.stress.phi));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("responder probabilities must be in [0, 1]".into());
        }
        if !(self.fs > 0.0 && self.window_s > 0.0 && self.period_s > 0.0 && self.days > 0.0) {
            return Err("fs, window_s, period_s and days must be positive".into());
        }
        if self.base_hr_bpm < 30.0 || self.base_hr_bpm > 200.0 {
            return Err(format!("base_hr_bpm {} out of range", self.base_hr_bpm));
        }
        Ok(())
    }

    pub fn horizon_ms(&self) -> i64 {
        (self.days * DAY_MS as f64).round() as i64
    }

    pub fn period_ms(&self) -> i64 {
        (self.period_s * 1000.0).round() as i64
    }
}
