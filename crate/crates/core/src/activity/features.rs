//! Fixed-order motion features per 10 s sub-window.
//!
//! Layout, repeated for `acc`, `gyro`, `grav` in that order (22 values per
//! sensor, 66 in total):
//!
//! * for each axis x, y, z: mean, population std, min, max, RMS;
//! * magnitude mean and std;
//! * Pearson correlations xy, xz, yz (0 when an axis is constant);
//! * zero-crossing count of the mean-removed magnitude;
//! * spectral energy in 0.5..=3 Hz, summed over the mean-removed axes.

use super::{ActivityError, MotionWindow, Result};
use crate::{spectrum, stats};

pub const SUBWINDOW_S: f64 = 10.0;
const SENSORS: [&str; 3] = ["acc", "gyro", "grav"];
const AXES: [&str; 3] = ["x", "y", "z"];
const AXIS_STATS: [&str; 5] = ["mean", "std", "min", "max", "rms"];
const SENSOR_STATS: [&str; 7] = [
    "mag_mean",
    "mag_std",
    "corr_xy",
    "corr_xz",
    "corr_yz",
    "mag_zero_crossings",
    "band_energy",
];
const BAND_HZ: (f64, f64) = (0.5, 3.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeatures(pub Vec<f64>);

pub fn motion_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(66);
    for sensor in SENSORS {
        for axis in AXES {
            for stat in AXIS_STATS {
                names.push(format!("{sensor}_{axis}_{stat}"));
            }
        }
        for stat in SENSOR_STATS {
            names.push(format!("{sensor}_{stat}"));
        }
    }
    names
}

pub fn extract_motion_features(m: &MotionWindow) -> Result<Vec<MotionFeatures>> {
    m.validate()?;
    let sub = (SUBWINDOW_S * m.fs).round() as usize;
    let count = if sub == 0 { 0 } else { m.len() / sub };
    if count == 0 {
        return Err(ActivityError::TooShort {
            samples: m.len(),
            needed: sub.max(1),
        });
    }
    Ok((0..count)
        .map(|k| {
            let range = k * sub..(k + 1) * sub;
            let mut row = Vec::with_capacity(66);
            for channel in [&m.acc, &m.gyro, &m.grav] {
                sensor_features(&channel[range.clone()], m.fs, &mut row);
            }
            MotionFeatures(row)
        })
        .collect())
}

fn sensor_features(rows: &[[f64; 3]], fs: f64, out: &mut Vec<f64>) {
    let axes: [Vec<f64>; 3] = std::array::from_fn(|a| rows.iter().map(|r| r[a]).collect());
    for axis in &axes {
        let (lo, hi) = axis
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let rms = (axis.iter().map(|v| v * v).sum::<f64>() / axis.len() as f64).sqrt();
        out.extend([stats::mean(axis), stats::std_dev(axis), lo, hi, rms]);
    }
    let mag: Vec<f64> = rows
        .iter()
        .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
        .collect();
    let mag_mean = stats::mean(&mag);
    out.extend([
        mag_mean,
        stats::std_dev(&mag),
        stats::pearson(&axes[0], &axes[1]),
        stats::pearson(&axes[0], &axes[2]),
        stats::pearson(&axes[1], &axes[2]),
        zero_crossings(&mag, mag_mean) as f64,
    ]);
    let energy = axes
        .iter()
        .map(|axis| {
            let mu = stats::mean(axis);
            let centred: Vec<f64> = axis.iter().map(|v| v - mu).collect();
            spectrum::band_power(&centred, fs, BAND_HZ.0, BAND_HZ.1)
        })
        .sum();
    out.push(energy);
}

/// Sign changes of `x - centre`, ignoring values within rounding noise of
/// the centre.
fn zero_crossings(x: &[f64], centre: f64) -> usize {
    let dead = 1e-9 * (1.0 + centre.abs());
    let mut last = 0i8;
    let mut crossings = 0;
    for v in x {
        let d = v - centre;
        let sign = if d > dead {
            1
        } else if d < -dead {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last != 0 && sign != last {
                crossings += 1;
            }
            last = sign;
        }
    }
    crossings
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn window(acc: Vec<[f64; 3]>, grav: Vec<[f64; 3]>) -> MotionWindow {
        let n = acc.len();
        MotionWindow {
            fs: 20.0,
            acc,
            gyro: vec![[0.0; 3]; n],
            grav,
        }
    }

    fn idx(name: &str) -> usize {
        motion_feature_names().iter().position(|n| n == name).unwrap()
    }

    #[test]
    fn layout_is_66_wide() {
        let names = motion_feature_names();
        assert_eq!(names.len(), 66);
        assert_eq!(names[0], "acc_x_mean");
        assert_eq!(names[21], "acc_band_energy");
        assert_eq!(names[65], "grav_band_energy");
    }

    #[test]
    fn all_zero_motion() {
        let rows = extract_motion_features(&window(vec![[0.0; 3]; 2400], vec![[0.0; 3]; 2400])).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.0.len() == 66 && r.0.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn constant_gravity() {
        let rows = extract_motion_features(&window(vec![[0.0; 3]; 2400], vec![[0.0, 0.0, 9.81]; 2400])).unwrap();
        for r in &rows {
            assert!((r.0[idx("grav_mag_mean")] - 9.81).abs() < 1e-12);
            assert!(r.0[idx("grav_mag_std")].abs() < 1e-12);
            assert_eq!(r.0[idx("grav_mag_zero_crossings")], 0.0);
        }
    }

    #[test]
    fn two_hz_sine_on_acc_x() {
        let acc: Vec<[f64; 3]> = (0..2400)
            .map(|i| [(2.0 * PI * 2.0 * i as f64 / 20.0).sin(), 0.0, 0.0])
            .collect();
        let rows = extract_motion_features(&window(acc, vec![[0.0; 3]; 2400])).unwrap();
        for r in &rows {
            assert!((r.0[idx("acc_x_rms")] - 0.5f64.sqrt()).abs() < 1e-9);
            // All of the variance (0.5) lies inside the band.
            let var = r.0[idx("acc_x_std")].powi(2);
            assert!((r.0[idx("acc_band_energy")] - var).abs() < 1e-9);
        }
    }

    #[test]
    fn short_window_is_an_error() {
        let m = window(vec![[0.0; 3]; 150], vec![[0.0; 3]; 150]);
        assert!(matches!(extract_motion_features(&m), Err(ActivityError::TooShort { .. })));
    }
}
