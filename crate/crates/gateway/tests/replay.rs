mod common;

use common::{decision_stream, eager_config, model, open, records, simulator};
use ppgema_core::config::Config;
use ppgema_core::dataset::{DatasetHeader, DatasetReader, DatasetWriter};
use ppgema_core::query::QuotaMode;
use ppgema_core::simulator::{dataset_records, PerActivity, SubjectProfile, SubjectSimulator};
use ppgema_gateway::{replay, replay_file, ReplayError, ReplayOptions, ReplayReport, Service};

#[test]
fn empty_dataset_gives_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let report = replay(
        &mut &service,
        DatasetReader::new(std::io::Cursor::new(Vec::new())).unwrap(),
        &ReplayOptions::default(),
    )
    .unwrap();
    assert_eq!(report, ReplayReport::default());
}

#[test]
fn disorder_is_rejected_unless_sorting() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let mut recs = records(&[simulator(0, 1.0, 8)], 4);
    recs.swap(1, 2);
    let err = replay(&mut &service, recs.iter().cloned().map(Ok), &ReplayOptions::default()).unwrap_err();
    assert!(matches!(err, ReplayError::OutOfOrder { index: 2, .. }), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let opts = ReplayOptions {
        sort: true,
        ..ReplayOptions::default()
    };
    let report = replay(&mut &service, recs.into_iter().map(Ok), &opts).unwrap();
    assert_eq!(report.samples, 4);
    let ts: Vec<i64> = service.snapshot("S01").unwrap().records.iter().map(|r| r.t_start_ms).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn label_count_follows_the_response_rate() {
    let sims: Vec<SubjectSimulator> = (0..4)
        .map(|i| {
            let mut p = SubjectProfile {
                days: 1.4,
                ..SubjectProfile::synthetic(i, 31)
            };
            p.responder.rate = PerActivity::uniform(0.6);
            p.responder.dip_factor = 1.0;
            SubjectSimulator::new(p).unwrap()
        })
        .collect();
    let recs: Vec<_> = dataset_records(&sims).take(500).collect();
    assert_eq!(recs.len(), 500);

    let dir = tempfile::tempdir().unwrap();
    let cfg = Config {
        data_dir: dir.path().to_path_buf(),
        n_initial: 30,
        k_regions: 4,
        quota_mode: QuotaMode::Off,
        store_payloads: false,
        ..Config::default()
    };
    let service = Service::open(cfg, model()).unwrap();
    let report = replay(&mut &service, recs.into_iter().map(Ok), &ReplayOptions::default()).unwrap();
    assert_eq!(report.samples, 500);
    assert!(report.queries >= 100, "{report:?}");
    let expected = 0.6 * report.queries as f64;
    let got = report.labels as f64;
    assert!((got - expected).abs() <= 0.15 * expected, "{report:?}");
    assert_eq!(report.unanswered, report.queries - report.labels - report.stale);
}

#[test]
fn pacing_does_not_change_decisions() {
    let recs = records(&[simulator(0, 1.0, 13), simulator(1, 1.0, 13)], 40);
    let run = |speed: f64| {
        let dir = tempfile::tempdir().unwrap();
        let service = open(&eager_config(dir.path()));
        let opts = ReplayOptions {
            speed,
            ..ReplayOptions::default()
        };
        let report = replay(&mut &service, recs.iter().cloned().map(Ok), &opts).unwrap();
        (report, decision_stream(&service))
    };
    // 5 hours of stream in about 20 ms.
    assert_eq!(run(0.0), run(1e6));
}

#[test]
fn replays_from_a_dataset_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.ds");
    let sims = [simulator(0, 1.0, 2)];
    let mut w = DatasetWriter::create(&path, &DatasetHeader::new(Some(2), vec!["S01".into()]), Some(4)).unwrap();
    for r in dataset_records(&sims).take(15) {
        w.write(&r).unwrap();
    }
    w.finish().unwrap();
    let data = dir.path().join("data");
    let service = open(&eager_config(&data));
    let report = replay_file(&service, &path, &ReplayOptions::default()).unwrap();
    assert_eq!(report.samples, 15);
    assert!(report.queries > 0);
}
