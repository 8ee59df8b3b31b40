//! Service configuration: a TOML file plus `PPGEMA_*` environment
//! overrides. The numeric keys keep their conventional spelling
//! (`N_initial`, `K_regions`, `D`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{EngineConfig, QuotaMode};
use crate::signal::FilterSpec;
use crate::simulator::SubjectProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("environment variable {name}={value:?}: {message}")]
    Env {
        name: String,
        value: String,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub subjects: usize,
    pub days: f64,
    /// Template for every synthetic subject; per-subject HR and wearing
    /// style are varied around it.
    pub profile: SubjectProfile,
}

impl SimulatorConfig {
    /// One profile per subject: the synthetic subject's id, seed, resting
    /// HR offset and wearing style applied to the template.
    pub fn profiles(&self, seed: u64) -> Vec<SubjectProfile> {
        let reference = SubjectProfile::default().base_hr_bpm;
        (0..self.subjects)
            .map(|i| {
                let s = SubjectProfile::synthetic(i, seed);
                SubjectProfile {
                    subject_id: s.subject_id,
                    seed: s.seed,
                    base_hr_bpm: self.profile.base_hr_bpm + (s.base_hr_bpm - reference),
                    motion: s.motion,
                    days: self.days,
                    ..self.profile.clone()
                }
            })
            .collect()
    }
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            subjects: 4,
            days: 3.0,
            profile: SubjectProfile::default(),
        }
    }
}

/// How the service decides "now" when a request carries no timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// The system clock.
    #[default]
    Wall,
    /// The latest sample end or response time seen for the subject, for
    /// recorded or simulated streams whose timestamps are not current.
    Logical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub window_s: f64,
    pub period_s: f64,
    #[serde(rename = "N_initial")]
    pub n_initial: usize,
    #[serde(rename = "K_regions")]
    pub k_regions: usize,
    pub quota: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub p_floor: f64,
    pub seed: u64,
    pub quota_mode: QuotaMode,
    pub data_dir: PathBuf,
    pub bind: String,
    /// Trained forest; when absent one is trained on the simulator corpus.
    pub activity_model: Option<PathBuf>,
    /// Engine checkpoint after this many samples per subject.
    pub checkpoint_every: u64,
    /// Keep raw windows in `payloads.jsonl` next to the processed records.
    pub store_payloads: bool,
    /// Time source for query expiry outside of ingestion.
    pub clock: ClockMode,
    pub filter: FilterSpec,
    pub simulator: SimulatorConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            window_s: 120.0,
            period_s: 900.0,
            n_initial: 100,
            k_regions: 10,
            quota: 15,
            d: 1.5,
            p_floor: 0.1,
            seed: 0,
            quota_mode: QuotaMode::Stop,
            data_dir: PathBuf::from("data"),
            bind: "127.0.0.1:8080".into(),
            activity_model: None,
            checkpoint_every: 50,
            store_payloads: true,
            clock: ClockMode::Wall,
            filter: FilterSpec::default(),
            simulator: SimulatorConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `path` (defaults when `None`), then applies the process
    /// environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::File {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                Self::from_toml(&text).map_err(|message| ConfigError::File {
                    path: p.display().to_string(),
                    message,
                })?
            }
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `PPGEMA_<KEY>` overrides, e.g. `PPGEMA_N_INITIAL=50`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                name: name.into(),
                value: value.into(),
                message: e.to_string(),
            })
        }
        for (name, value) in vars {
            let Some(key) = name.strip_prefix("PPGEMA_") else {
                continue;
            };
            match key {
                "WINDOW_S" => self.window_s = parse(&name, &value)?,
                "PERIOD_S" => self.period_s = parse(&name, &value)?,
                "N_INITIAL" => self.n_initial = parse(&name, &value)?,
                "K_REGIONS" => self.k_regions = parse(&name, &value)?,
                "QUOTA" => self.quota = parse(&name, &value)?,
                "D" => self.d = parse(&name, &value)?,
                "P_FLOOR" => self.p_floor = parse(&name, &value)?,
                "SEED" => self.seed = parse(&name, &value)?,
                "DATA_DIR" => self.data_dir = PathBuf::from(&value),
                "BIND" => self.bind = value.clone(),
                "ACTIVITY_MODEL" => self.activity_model = Some(PathBuf::from(&value)),
                "CHECKPOINT_EVERY" => self.checkpoint_every = parse(&name, &value)?,
                "STORE_PAYLOADS" => self.store_payloads = parse(&name, &value)?,
                "CLOCK" => {
                    self.clock = match value.trim() {
                        "wall" => ClockMode::Wall,
                        "logical" => ClockMode::Logical,
                        _ => {
                            return Err(ConfigError::Env {
                                name,
                                value,
                                message: "expected wall or logical".into(),
                            })
                        }
                    }
                }
                "QUOTA_MODE" => {
                    self.quota_mode = match value.trim() {
                        "stop" => QuotaMode::Stop,
                        "floor" => QuotaMode::Floor,
                        "off" => QuotaMode::Off,
                        _ => {
                            return Err(ConfigError::Env {
                                name,
                                value,
                                message: "expected stop, floor or off".into(),
                            })
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.window_s > 0.0 && self.period_s > 0.0) {
            return bad("window_s and period_s must be positive".into());
        }
        if self.n_initial == 0 || self.k_regions == 0 || self.k_regions > self.n_initial {
            return bad(format!(
                "need 1 <= K_regions <= N_initial, got K_regions={} N_initial={}",
                self.k_regions, self.n_initial
            ));
        }
        if !(0.0..=1.0).contains(&self.p_floor) {
            return bad(format!("p_floor must be in [0, 1], got {}", self.p_floor));
        }
        if !(self.d > 0.0) {
            return bad(format!("D must be positive, got {}", self.d));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            n_initial: self.n_initial,
            k_regions: self.k_regions,
            quota: self.quota,
            quota_mode: self.quota_mode,
            p_floor: self.p_floor,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_keys_parse() {
        let cfg = Config::from_toml("N_initial = 50\nK_regions = 5\nD = 2.0\nquota = 3\nseed = 9\n").unwrap();
        assert_eq!((cfg.n_initial, cfg.k_regions, cfg.quota, cfg.seed), (50, 5, 3, 9));
        assert_eq!(cfg.d, 2.0);
        assert_eq!(cfg.window_s, 120.0);
        assert!(Config::from_toml("n_initial = 50").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = Config::default();
        cfg.apply_env([
            ("PPGEMA_SEED".to_string(), "17".to_string()),
            ("PPGEMA_QUOTA_MODE".to_string(), "floor".to_string()),
            ("HOME".to_string(), "/x".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.seed, 17);
        assert_eq!(cfg.quota_mode, QuotaMode::Floor);
        assert!(cfg.apply_env([("PPGEMA_QUOTA".to_string(), "many".to_string())]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn default_template_gives_the_synthetic_subjects() {
        let sim = SimulatorConfig {
            subjects: 3,
            days: 2.0,
            ..SimulatorConfig::default()
        };
        let profiles = sim.profiles(11);
        assert_eq!(profiles.len(), 3);
        for (i, p) in profiles.iter().enumerate() {
            let expected = SubjectProfile {
                days: 2.0,
                ..SubjectProfile::synthetic(i, 11)
            };
            assert_eq!(p, &expected);
        }
    }

    #[test]
    fn validation() {
        let cfg = Config {
            k_regions: 200,
            ..Config::default()
        };
        assert!(cfg.validate().is_err());
        assert!(Config::default().validate().is_ok());
    }
}
