//! Wrist motion per activity: a posture-dependent gravity direction, gait
//! oscillation when walking or jogging, and small fidgets otherwise.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;

use super::profile::{SimActivity, SubjectProfile};
use super::rng::{gauss, uniform};

const G: f64 = 9.81;

type Channels = (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<[f64; 3]>);

/// Resting gravity direction in the watch frame for each posture.
fn posture(activity: SimActivity) -> [f64; 3] {
    match activity {
        // Forearm on a desk, screen up.
        SimActivity::Sit => [0.15, 0.05, 0.99],
        // Arm hanging.
        SimActivity::Stand | SimActivity::Walk => [0.97, 0.1, 0.2],
        // Forearm bent forward.
        SimActivity::Jog => [0.6, 0.1, 0.8],
        // Arm resting on its side.
        SimActivity::LyingDown => [0.1, 0.97, 0.2],
    }
}

fn rotate(v: [f64; 3], ax: f64, ay: f64) -> [f64; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let y = v[1] * cx - v[2] * sx;
    let z = v[1] * sx + v[2] * cx;
    [v[0] * cy + z * sy, y, -v[0] * sy + z * cy]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(super) fn generate(p: &SubjectProfile, activity: SimActivity, n: usize, rng: &mut ChaCha8Rng) -> Channels {
    let style = &p.motion;
    let k = style.intensity;
    let base = normalize(posture(activity));
    let tilt = [
        style.tilt[0] + 0.05 * gauss(rng),
        style.tilt[1] + 0.05 * gauss(rng),
    ];
    let (gait_hz, swing, acc_amp, noise) = match activity {
        SimActivity::Walk => (style.walk_hz, 0.25, 1.6 * k, 0.25),
        SimActivity::Jog => (style.jog_hz, 0.35, 4.5 * k, 0.6),
        SimActivity::Stand => (0.0, 0.0, 0.0, 0.06),
        SimActivity::Sit => (0.0, 0.0, 0.0, 0.025),
        SimActivity::LyingDown => (0.0, 0.0, 0.0, 0.01),
    };
    let phase = uniform(rng, 0.0, 2.0 * PI);
    let sway_phase = uniform(rng, 0.0, 2.0 * PI);
    let sway = if activity == SimActivity::Stand { 0.04 * k } else { 0.01 * k };

    let mut acc = Vec::with_capacity(n);
    let mut gyro = Vec::with_capacity(n);
    let mut grav = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / p.fs;
        // The arm swings once per two steps.
        let w = 2.0 * PI * gait_hz * t + phase;
        let swing_angle = swing * (0.5 * w).sin() + sway * (2.0 * PI * 0.25 * t + sway_phase).sin();
        let g = rotate(base, tilt[0], tilt[1] + swing_angle);
        grav.push([G * g[0], G * g[1], G * g[2]]);
        let swing_rate = swing * 0.5 * 2.0 * PI * gait_hz * (0.5 * w).cos();
        gyro.push([
            noise * 0.5 * gauss(rng),
            swing_rate + noise * 0.5 * gauss(rng),
            0.3 * swing_rate + noise * 0.5 * gauss(rng),
        ]);
        let step = acc_amp * (w.sin() + 0.35 * (2.0 * w).sin());
        acc.push([
            step + noise * gauss(rng),
            0.3 * step + noise * gauss(rng),
            0.6 * acc_amp * (w + 0.8).sin() + noise * gauss(rng),
        ]);
    }
    (acc, gyro, grav)
}
