#![allow(dead_code)]

use std::path::Path;
use std::sync::OnceLock;

use ppgema_core::activity::ForestModel;
use ppgema_core::config::{ClockMode, Config};
use ppgema_core::dataset::DatasetRecord;
use ppgema_core::query::QuotaMode;
use ppgema_core::simulator::{dataset_records, SubjectProfile, SubjectSimulator};
use ppgema_gateway::activity_model::default_activity_model;
use ppgema_gateway::Service;

pub fn model() -> ForestModel {
    static MODEL: OnceLock<ForestModel> = OnceLock::new();
    MODEL.get_or_init(|| default_activity_model(0).unwrap()).clone()
}

/// Small engine so that the query phase starts after a few windows; every
/// query-phase window triggers.
pub fn eager_config(dir: &Path) -> Config {
    Config {
        data_dir: dir.to_path_buf(),
        n_initial: 12,
        k_regions: 3,
        quota_mode: QuotaMode::Off,
        p_floor: 1.0,
        clock: ClockMode::Logical,
        checkpoint_every: 5,
        store_payloads: false,
        ..Config::default()
    }
}

pub fn open(config: &Config) -> Service {
    Service::open(config.clone(), model()).unwrap()
}

pub fn simulator(index: usize, days: f64, seed: u64) -> SubjectSimulator {
    let profile = SubjectProfile {
        days,
        ..SubjectProfile::synthetic(index, seed)
    };
    SubjectSimulator::new(profile).unwrap()
}

pub fn records(sims: &[SubjectSimulator], limit: usize) -> Vec<DatasetRecord> {
    dataset_records(sims).take(limit).collect()
}

/// `(sample_id, decision, ema_id, suppressed)` for every record of every
/// subject, in arrival order.
pub fn decision_stream(service: &Service) -> Vec<String> {
    service
        .snapshots(None)
        .iter()
        .flat_map(|s| s.records.iter())
        .map(|r| {
            format!(
                "{} {} {:?} {:?} {}",
                r.sample_id,
                serde_json::to_string(&r.decision).unwrap(),
                r.ema_id,
                r.features.map(|f| f.to_array()),
                r.suppressed
            )
        })
        .collect()
}
