mod common;

use std::fs;

use common::{decision_stream, eager_config, open, records, simulator};
use ppgema_core::model::{Emotion, ReportedActivity, ResponseStatus, ResponseSubmission, StressLevel, LABEL_WINDOW_MS};
use ppgema_core::query::DecisionReason;
use ppgema_gateway::store::{QUERIES_FILE, SAMPLES_FILE};
use ppgema_gateway::{replay, ReplayOptions, ServiceError};

fn answer(at_ms: i64, stress: u8) -> ResponseSubmission {
    ResponseSubmission {
        responded_at_ms: Some(at_ms),
        stress: StressLevel::new(stress).unwrap(),
        emotion: Emotion::Neutral,
        activity: ReportedActivity::Sitting,
        client_render_ms: Some(1200),
    }
}

#[test]
fn valid_window_is_processed_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eager_config(dir.path());
    let recs = records(&[simulator(0, 1.0, 3)], 1);
    let service = open(&cfg);
    let out = service.ingest(recs[0].sample.clone(), 0).unwrap();
    assert!(!out.duplicate);
    assert!(out.record.features.is_some());
    assert_eq!(out.record.decision.reason, DecisionReason::InitialPhase);
    assert_eq!(out.record.t_end_ms, recs[0].sample.t_start_ms + 120_000);
    drop(service);

    let reopened = open(&cfg);
    let snap = reopened.snapshot("S01").unwrap();
    assert_eq!(snap.records, vec![out.record]);
}

#[test]
fn length_mismatch_is_rejected_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let mut payload = records(&[simulator(0, 1.0, 3)], 1).remove(0).sample;
    payload.ppg.truncate(100);
    match service.ingest(payload, 0) {
        Err(ServiceError::Invalid(fields)) => assert!(fields.iter().any(|f| f.field == "ppg")),
        other => panic!("expected rejection, got {other:?}"),
    }
    assert!(service.subject_ids().is_empty() || service.snapshot("S01").unwrap().records.is_empty());
}

#[test]
fn unsafe_subject_id_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let mut payload = records(&[simulator(0, 1.0, 3)], 1).remove(0).sample;
    payload.subject_id = "../etc".into();
    assert!(matches!(service.ingest(payload, 0), Err(ServiceError::Invalid(_))));
}

#[test]
fn duplicate_window_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let payload = records(&[simulator(0, 1.0, 3)], 1).remove(0).sample;
    let first = service.ingest(payload.clone(), 5).unwrap();
    let second = service.ingest(payload, 99).unwrap();
    assert!(second.duplicate);
    assert_eq!(first.record, second.record);
    let lines = fs::read_to_string(dir.path().join(SAMPLES_FILE)).unwrap();
    assert_eq!(lines.lines().count(), 1);
}

#[test]
fn query_lifecycle_and_expiry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eager_config(dir.path());
    let service = open(&cfg);
    let recs = records(&[simulator(0, 1.0, 3)], 20);
    let mut query = None;
    for r in &recs {
        let out = service.ingest(r.sample.clone(), 0).unwrap();
        if let Some(q) = out.query {
            query = Some(q);
            break;
        }
    }
    let q = query.expect("eager config triggers in the query phase");
    assert_eq!(q.expires_at_ms - q.dispatched_at_ms, LABEL_WINDOW_MS);
    assert_eq!(q.questions.stress.len(), 5);
    assert_eq!(q.questions.emotion.len(), 4);

    let pending = service.pending_queries("S01", q.dispatched_at_ms + 60_000).unwrap();
    assert_eq!(pending, vec![q.clone()]);
    assert!(service.pending_queries("nobody", 0).unwrap().is_empty());

    let later = q.dispatched_at_ms + 17 * 60_000;
    assert!(service.pending_queries("S01", later).unwrap().is_empty());
    assert!(service.query(&q.ema_id).unwrap().expiry_logged);
    let expiries = fs::read_to_string(dir.path().join(QUERIES_FILE)).unwrap();
    assert!(expiries.contains(&q.ema_id));

    // An answer after expiry is kept but not used as a label.
    let ack = service.submit_response(&q.ema_id, answer(q.dispatched_at_ms + 20 * 60_000, 2), 0).unwrap();
    assert_eq!(ack.status, ResponseStatus::Stale);
    assert!(service.snapshot("S01").unwrap().engine.labeled.is_empty());
}

#[test]
fn answers_in_time_become_labels_once() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let recs = records(&[simulator(0, 1.0, 3)], 20);
    let q = recs
        .iter()
        .find_map(|r| service.ingest(r.sample.clone(), 0).unwrap().query)
        .unwrap();
    let ack = service.submit_response(&q.ema_id, answer(q.dispatched_at_ms + 3 * 60_000, 2), 0).unwrap();
    assert_eq!(ack.status, ResponseStatus::Accepted);
    assert!(!ack.duplicate);
    assert_eq!(ack.response_time_s, 180.0);
    let again = service.submit_response(&q.ema_id, answer(q.dispatched_at_ms + 4 * 60_000, 4), 0).unwrap();
    assert!(again.duplicate);
    assert_eq!(again.response_time_s, 180.0);

    let snap = service.snapshot("S01").unwrap();
    assert_eq!(snap.engine.labeled.len(), 1);
    assert_eq!(snap.engine.labeled[0].sample_id, q.sample_id);
    let entry = snap.queries.iter().find(|e| e.query.ema_id == q.ema_id).unwrap();
    assert_eq!(entry.response.as_ref().unwrap().response.stress.value(), 2);
    assert!(service.pending_queries("S01", q.dispatched_at_ms + 5 * 60_000).unwrap().is_empty());

    assert!(matches!(
        service.submit_response("01NOSUCHQUERY0000000000000", answer(0, 1), 0),
        Err(ServiceError::UnknownQuery(_))
    ));
    assert!(matches!(
        service.submit_response(&q.ema_id, answer(q.dispatched_at_ms - 1, 1), 0),
        Ok(a) if a.duplicate
    ));
}

#[test]
fn answer_before_dispatch_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let recs = records(&[simulator(0, 1.0, 3)], 20);
    let q = recs
        .iter()
        .find_map(|r| service.ingest(r.sample.clone(), 0).unwrap().query)
        .unwrap();
    assert!(matches!(
        service.submit_response(&q.ema_id, answer(q.dispatched_at_ms - 1, 1), 0),
        Err(ServiceError::Invalid(_))
    ));
}

#[test]
fn at_most_one_open_query_per_subject() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(&eager_config(dir.path()));
    let recs = records(&[simulator(0, 1.0, 3)], 40);
    let mut open: Option<ppgema_core::model::EmaQuery> = None;
    let mut suppressed = 0;
    for r in &recs {
        let out = service.ingest(r.sample.clone(), 0).unwrap();
        let now = out.record.t_end_ms;
        if open.as_ref().is_some_and(|q| q.is_expired(now)) {
            open = None;
        }
        if out.record.suppressed {
            assert!(open.is_some(), "suppressed only while a query is open");
            suppressed += 1;
        }
        if let Some(q) = out.query {
            assert!(open.is_none(), "second query while one is open");
            open = Some(q);
        }
        assert!(service.pending_queries("S01", now).unwrap().len() <= 1);
    }
    // Windows are 15 minutes apart and queries live 16, so unanswered
    // queries alternate with suppressed triggers.
    assert!(suppressed > 5);
}

#[test]
fn restart_resumes_with_identical_decisions() {
    let sims = [simulator(0, 2.0, 21), simulator(1, 2.0, 21)];
    let recs = records(&sims, 140);

    let full_dir = tempfile::tempdir().unwrap();
    let mut cfg = eager_config(full_dir.path());
    cfg.n_initial = 30;
    cfg.k_regions = 4;
    cfg.p_floor = 0.1;
    cfg.checkpoint_every = 7;
    let uninterrupted = open(&cfg);
    let full = replay(&mut &uninterrupted, recs.iter().cloned().map(Ok), &ReplayOptions::default()).unwrap();
    assert!(full.labels > 3, "{full:?}");

    let dir = tempfile::tempdir().unwrap();
    let cfg2 = ppgema_core::config::Config {
        data_dir: dir.path().to_path_buf(),
        ..cfg.clone()
    };
    {
        let first = open(&cfg2);
        replay(&mut &first, recs[..83].iter().cloned().map(Ok), &ReplayOptions::default()).unwrap();
    }
    // Simulate dying in the middle of a write.
    let mut f = fs::OpenOptions::new()
        .append(true)
        .open(dir.path().join(SAMPLES_FILE))
        .unwrap();
    std::io::Write::write_all(&mut f, b"{\"seq\":9999,\"record\":{\"sam").unwrap();
    drop(f);

    let resumed = open(&cfg2);
    assert_eq!(resumed.recovery().torn_lines, 1);
    assert_eq!(resumed.recovery().decision_mismatches, 0);
    assert!(resumed.recovery().replayed_events > 0);
    let rest = replay(&mut &resumed, recs.iter().cloned().map(Ok), &ReplayOptions::default()).unwrap();
    assert_eq!(rest.duplicates, 83);
    assert_eq!(decision_stream(&resumed), decision_stream(&uninterrupted));
    assert_eq!((rest.labels, rest.stale, rest.queries), (full.labels, full.stale, full.queries));

    let a = uninterrupted.snapshot("S01").unwrap();
    let b = resumed.snapshot("S01").unwrap();
    assert_eq!(a.engine, b.engine);
}

#[test]
fn read_only_open_sees_everything_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eager_config(dir.path());
    let recs = records(&[simulator(0, 1.0, 4)], 20);
    {
        let service = open(&cfg);
        replay(&mut &service, recs.iter().cloned().map(Ok), &ReplayOptions::default()).unwrap();
    }
    let before = fs::read(dir.path().join(SAMPLES_FILE)).unwrap();
    let ro = ppgema_gateway::Service::open_read_only(cfg.clone()).unwrap();
    assert!(ro.is_read_only());
    assert_eq!(ro.snapshot("S01").unwrap().records.len(), 20);
    assert!(matches!(ro.ingest(recs[0].sample.clone(), 0), Ok(o) if o.duplicate));
    let mut fresh = recs[0].sample.clone();
    fresh.t_start_ms += 1;
    assert!(matches!(ro.ingest(fresh, 0), Err(ServiceError::ReadOnly)));
    assert!(ro.pending_queries("S01", i64::MAX).unwrap().is_empty());
    assert_eq!(fs::read(dir.path().join(SAMPLES_FILE)).unwrap(), before);

    let missing = ppgema_core::config::Config {
        data_dir: dir.path().join("nope"),
        ..cfg
    };
    assert!(ppgema_gateway::Service::open_read_only(missing).unwrap().subject_ids().is_empty());
}
