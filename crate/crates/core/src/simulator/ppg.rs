//! PPG synthesis: a beat train with respiratory IBI modulation, each beat
//! drawn as a systolic plus a diastolic Gaussian, with baseline wander,
//! sensor noise and an activity-dependent motion artifact.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;

use super::profile::{SimActivity, SubjectProfile};
use super::rng::{gauss, uniform};

const SYSTOLIC: (f64, f64, f64) = (1.0, 0.25, 0.07);
const DIASTOLIC: (f64, f64, f64) = (0.45, 0.55, 0.13);

/// Returns the samples, the true mean heart rate and the breathing rate.
pub(super) fn generate(
    p: &SubjectProfile,
    activity: SimActivity,
    stress: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64, f64) {
    let duration = n as f64 / p.fs;
    let hr = (p.base_hr_bpm
        + p.stress_hr_gain_bpm * stress
        + p.activity_hr_offset_bpm.get(activity)
        + p.hr_jitter_bpm * gauss(rng))
    .clamp(40.0, 200.0);
    let ibi = 60.0 / hr;
    let amp_s = p.hrv_amp_ms / 1000.0
        * (1.0 - p.hrv_stress_damping * stress).max(0.0)
        * (p.hrv_amp_jitter * gauss(rng)).exp();
    let breathing = (p.breathing_hz + p.breathing_stress_gain_hz * stress + 0.01 * gauss(rng)).max(0.05);
    let resp_phase = uniform(rng, 0.0, 2.0 * PI);

    // Beats from one interval before the window to one after it.
    let mut beats: Vec<(f64, f64)> = Vec::new();
    let mut t = -ibi * uniform(rng, 1.0, 2.0);
    while t < duration + 2.0 * ibi {
        let interval = (ibi
            + amp_s * (2.0 * PI * breathing * t + resp_phase).sin()
            + p.beat_jitter_ms / 1000.0 * gauss(rng))
        .max(0.25 * ibi);
        beats.push((t, interval));
        t += interval;
    }
    let inside: Vec<f64> = beats
        .windows(2)
        .filter(|w| w[0].0 >= 0.0 && w[1].0 <= duration)
        .map(|w| w[1].0 - w[0].0)
        .collect();
    let true_bpm = if inside.is_empty() {
        hr
    } else {
        60.0 * inside.len() as f64 / inside.iter().sum::<f64>()
    };

    let amplitude = p.pulse_amplitude * uniform(rng, 0.9, 1.1);
    let mut x = vec![0.0; n];
    for &(tb, ti) in &beats {
        let lo = (((tb - 0.5 * ti) * p.fs).floor().max(0.0)) as usize;
        let hi = (((tb + 1.5 * ti) * p.fs).ceil().max(0.0) as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let u = (i as f64 / p.fs - tb) / ti;
            *v += amplitude * (bump(u, SYSTOLIC) + bump(u, DIASTOLIC));
        }
    }

    let wander_phase = uniform(rng, 0.0, 2.0 * PI);
    let wander_hz = uniform(rng, 0.03, 0.08);
    let motion = p.motion_noise.get(activity) * amplitude;
    let gait_hz = match activity {
        SimActivity::Walk => Some(p.motion.walk_hz),
        SimActivity::Jog => Some(p.motion.jog_hz),
        _ => None,
    };
    let gait_phase = uniform(rng, 0.0, 2.0 * PI);
    // Motion artifact: white noise smoothed over three samples (unit
    // variance), plus a gait-locked tone when moving.
    let white: Vec<f64> = (0..n + 2).map(|_| gauss(rng)).collect();
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / p.fs;
        let smooth = (white[i] + white[i + 1] + white[i + 2]) / 3f64.sqrt();
        let mut artifact = smooth;
        if let Some(f) = gait_hz {
            artifact += 0.7 * (2.0 * PI * f * t + gait_phase).sin();
        }
        *v += 0.1 * amplitude * (2.0 * PI * wander_hz * t + wander_phase).sin()
            + motion * artifact
            + p.sensor_noise * gauss(rng);
    }
    (x, true_bpm, breathing)
}

fn bump(u: f64, (a, mu, sigma): (f64, f64, f64)) -> f64 {
    a * (-(u - mu).powi(2) / (2.0 * sigma * sigma)).exp()
}
