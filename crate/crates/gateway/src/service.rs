//! The labeling service: ingestion, EMA dispatch, responses and recovery.
//!
//! Each subject has its own lock, so subjects are processed concurrently
//! while the samples and responses of one subject are applied one at a time
//! in arrival order. A query is dispatched at the end of the window that
//! triggered it, and the window end is also the service's notion of "now"
//! while ingesting, which keeps every decision a function of the stream.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use ppgema_core::activity::ForestModel;
use ppgema_core::config::{ClockMode, Config};
use ppgema_core::model::{
    EmaQuery, EmaResponse, FieldError, ResponseRecord, ResponseStatus, ResponseSubmission, SamplePayload,
    SampleRecord,
};
use ppgema_core::query::{EngineState, QueryError, SampleRef};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use ulid::Ulid;

use crate::pipeline;
use crate::store::{self, SampleEvent, Store, StoreContents, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {}", describe(.0))]
    Invalid(Vec<FieldError>),
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error("subject {0} is unavailable after a storage failure; restart the service")]
    Unavailable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("recovery: {0}")]
    Recovery(String),
    #[error("the service was opened read-only")]
    ReadOnly,
}

fn describe(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn invalid(field: &str, message: impl Into<String>) -> ServiceError {
    ServiceError::Invalid(vec![FieldError {
        field: field.into(),
        message: message.into(),
    }])
}

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub record: SampleRecord,
    pub query: Option<EmaQuery>,
    /// The sample had been ingested before; nothing was written.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseAck {
    pub ema_id: String,
    pub sample_id: String,
    pub status: ResponseStatus,
    pub response_time_s: f64,
    /// A response for this query had already been recorded; this is its
    /// acknowledgment and the new submission was ignored.
    pub duplicate: bool,
}

/// What [`Service::open`] found in the data directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryInfo {
    pub subjects: usize,
    pub samples: usize,
    pub responses: usize,
    /// Events applied on top of the engine checkpoints.
    pub replayed_events: usize,
    pub torn_lines: usize,
    /// Replayed samples whose recomputed decision differed from the stored
    /// one. Always 0 unless the configuration changed between runs.
    pub decision_mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub subjects: usize,
    pub samples: usize,
    pub open_queries: usize,
}

/// A query together with its response, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub query: EmaQuery,
    pub response: Option<ResponseRecord>,
    pub expiry_logged: bool,
}

/// Consistent copy of one subject's state for analytics.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSnapshot {
    pub subject_id: String,
    pub engine: EngineState,
    /// In arrival order.
    pub records: Vec<SampleRecord>,
    /// In dispatch order.
    pub queries: Vec<QueryEntry>,
}

#[derive(Debug)]
struct SubjectState {
    engine: EngineState,
    records: Vec<SampleRecord>,
    index: HashMap<String, usize>,
    queries: BTreeMap<String, QueryEntry>,
    open: Option<String>,
    applied_seq: u64,
    since_checkpoint: u64,
    last_event_ms: i64,
    failed: bool,
}

impl SubjectState {
    fn new(engine: EngineState) -> Self {
        Self {
            engine,
            records: Vec::new(),
            index: HashMap::new(),
            queries: BTreeMap::new(),
            open: None,
            applied_seq: 0,
            since_checkpoint: 0,
            last_event_ms: i64::MIN,
            failed: false,
        }
    }

    fn push_record(&mut self, record: SampleRecord) {
        self.last_event_ms = self.last_event_ms.max(record.t_end_ms);
        self.index.insert(record.sample_id.clone(), self.records.len());
        self.records.push(record);
    }

    fn outcome_for(&self, sample_id: &str) -> Option<IngestOutcome> {
        let record = self.records[*self.index.get(sample_id)?].clone();
        let query = record
            .ema_id
            .as_ref()
            .and_then(|id| self.queries.get(id))
            .map(|e| e.query.clone());
        Some(IngestOutcome {
            record,
            query,
            duplicate: true,
        })
    }

    /// The open query's id if it is past expiry at `now_ms`, clearing it.
    fn take_expired(&mut self, now_ms: i64) -> Option<String> {
        let id = self.open.as_ref()?;
        let entry = &self.queries[id];
        if entry.query.is_expired(now_ms) {
            self.open.take()
        } else {
            None
        }
    }

    fn open_query(&self) -> Option<&EmaQuery> {
        self.open.as_ref().map(|id| &self.queries[id].query)
    }
}

fn ack(record: &ResponseRecord, duplicate: bool) -> ResponseAck {
    ResponseAck {
        ema_id: record.response.ema_id.clone(),
        sample_id: record.sample_id.clone(),
        status: record.status,
        response_time_s: record.response_time_s,
        duplicate,
    }
}

fn hash80(parts: &[&[u8]]) -> u128 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    let mut b = [0u8; 16];
    b[6..].copy_from_slice(&d[..10]);
    u128::from_be_bytes(b)
}

/// Sortable id of the window starting at `t_start_ms` for `subject_id`:
/// the same window always gets the same id, which makes uploads idempotent.
pub fn sample_id_for(subject_id: &str, t_start_ms: i64) -> String {
    let random = hash80(&[b"sample", subject_id.as_bytes(), &t_start_ms.to_le_bytes()]);
    Ulid::from_parts(t_start_ms.max(0) as u64, random).to_string()
}

pub fn ema_id_for(sample_id: &str, dispatched_at_ms: i64) -> String {
    let random = hash80(&[b"ema", sample_id.as_bytes()]);
    Ulid::from_parts(dispatched_at_ms.max(0) as u64, random).to_string()
}

pub fn wall_clock_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

/// Subject ids end up in file names, so they are restricted to a safe
/// alphabet.
pub fn validate_subject_id(id: &str) -> std::result::Result<(), FieldError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(FieldError {
            field: "subject_id".into(),
            message: "must be 1-64 characters from [A-Za-z0-9._-], not starting with '.'".into(),
        })
    }
}

pub struct Service {
    config: Config,
    model: Option<ForestModel>,
    /// `None` when opened read-only.
    store: Option<Mutex<Store>>,
    subjects: RwLock<BTreeMap<String, Arc<Mutex<SubjectState>>>>,
    ema_index: RwLock<HashMap<String, String>>,
    recovery: RecoveryInfo,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service")
            .field("data_dir", &self.config.data_dir)
            .field("recovery", &self.recovery)
            .finish_non_exhaustive()
    }
}

enum Event<'a> {
    Sample(&'a SampleEvent),
    Response(&'a store::ResponseEvent),
    Expiry(&'a store::ExpiryEvent),
}

impl Service {
    /// Opens the data directory and rebuilds every subject from its engine
    /// checkpoint plus the events logged after it.
    pub fn open(config: Config, model: ForestModel) -> Result<Self> {
        let (store, contents) = Store::open(&config.data_dir, config.store_payloads)?;
        let service = Service {
            store: Some(Mutex::new(store)),
            subjects: RwLock::new(BTreeMap::new()),
            ema_index: RwLock::new(HashMap::new()),
            recovery: RecoveryInfo::default(),
            model: Some(model),
            config,
        };
        service.recover(contents)
    }

    /// Opens the data directory for analytics only: nothing is written
    /// and ingestion and answers are refused.
    pub fn open_read_only(config: Config) -> Result<Self> {
        let contents = Store::read(&config.data_dir)?;
        let service = Service {
            store: None,
            subjects: RwLock::new(BTreeMap::new()),
            ema_index: RwLock::new(HashMap::new()),
            recovery: RecoveryInfo::default(),
            model: None,
            config,
        };
        service.recover(contents)
    }

    pub fn is_read_only(&self) -> bool {
        self.store.is_none()
    }

    fn store(&self) -> Result<std::sync::MutexGuard<'_, Store>> {
        self.store
            .as_ref()
            .map(|s| s.lock().expect("store lock"))
            .ok_or(ServiceError::ReadOnly)
    }

    fn recover(mut self, contents: StoreContents) -> Result<Self> {
        let mut info = RecoveryInfo {
            samples: contents.samples.len(),
            responses: contents.responses.len(),
            torn_lines: contents.torn_lines,
            ..RecoveryInfo::default()
        };
        let mut events: BTreeMap<&str, Vec<(u64, Event)>> = BTreeMap::new();
        for e in &contents.samples {
            events
                .entry(&e.record.subject_id)
                .or_default()
                .push((e.seq, Event::Sample(e)));
        }
        for e in &contents.responses {
            events
                .entry(&e.record.subject_id)
                .or_default()
                .push((e.seq, Event::Response(e)));
        }
        for e in &contents.expiries {
            events.entry(&e.subject_id).or_default().push((e.seq, Event::Expiry(e)));
        }

        let mut subjects = BTreeMap::new();
        let mut ema_index = HashMap::new();
        for (subject_id, mut evs) in events {
            evs.sort_by_key(|(seq, _)| *seq);
            let (engine, applied) = match store::read_checkpoint(&self.config.data_dir, subject_id)? {
                Some(text) => {
                    let (engine, seq) =
                        EngineState::from_checkpoint(&text).map_err(|e| ServiceError::Recovery(format!("{subject_id}: {e}")))?;
                    if engine.subject_id != subject_id {
                        return Err(ServiceError::Recovery(format!(
                            "checkpoint for {subject_id} belongs to {}",
                            engine.subject_id
                        )));
                    }
                    (engine, seq)
                }
                None => (EngineState::new(subject_id, self.config.engine_config()), 0),
            };
            let mut st = SubjectState::new(engine);
            st.applied_seq = applied;
            for (seq, ev) in evs {
                let replay = seq > applied;
                match ev {
                    Event::Sample(e) => {
                        let r = &e.record;
                        if replay {
                            info.replayed_events += 1;
                            st.since_checkpoint += 1;
                            st.applied_seq = seq;
                            let d = st.engine.observe(sample_ref(r), r.features.as_ref());
                            if d != r.decision {
                                info.decision_mismatches += 1;
                                tracing::warn!(sample_id = %r.sample_id, "replayed decision differs from the stored one");
                            }
                        }
                        if let Some(q) = &e.query {
                            ema_index.insert(q.ema_id.clone(), subject_id.to_string());
                            st.queries.insert(
                                q.ema_id.clone(),
                                QueryEntry {
                                    query: q.clone(),
                                    response: None,
                                    expiry_logged: false,
                                },
                            );
                            st.open = Some(q.ema_id.clone());
                        }
                        st.push_record(r.clone());
                    }
                    Event::Response(e) => {
                        let r = &e.record;
                        if replay && r.status == ResponseStatus::Accepted {
                            info.replayed_events += 1;
                            st.applied_seq = seq;
                            if let Err(err) =
                                st.engine
                                    .register_label(&r.response.ema_id, &r.sample_id, r.response.responded_at_ms)
                            {
                                tracing::warn!(ema_id = %r.response.ema_id, %err, "replayed label rejected");
                            }
                        }
                        st.last_event_ms = st.last_event_ms.max(r.response.responded_at_ms);
                        if st.open.as_deref() == Some(r.response.ema_id.as_str()) {
                            st.open = None;
                        }
                        if let Some(q) = st.queries.get_mut(&r.response.ema_id) {
                            q.response = Some(r.clone());
                        }
                    }
                    Event::Expiry(e) => {
                        if st.open.as_deref() == Some(e.ema_id.as_str()) {
                            st.open = None;
                        }
                        if let Some(q) = st.queries.get_mut(&e.ema_id) {
                            q.expiry_logged = true;
                        }
                    }
                }
            }
            subjects.insert(subject_id.to_string(), Arc::new(Mutex::new(st)));
        }
        info.subjects = subjects.len();
        self.subjects = RwLock::new(subjects);
        self.ema_index = RwLock::new(ema_index);
        self.recovery = info;
        Ok(self)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn model(&self) -> Option<&ForestModel> {
        self.model.as_ref()
    }

    pub fn recovery(&self) -> &RecoveryInfo {
        &self.recovery
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    fn subject(&self, id: &str) -> Option<Arc<Mutex<SubjectState>>> {
        self.subjects.read().expect("subject map lock").get(id).cloned()
    }

    fn subject_or_create(&self, id: &str) -> Arc<Mutex<SubjectState>> {
        if let Some(s) = self.subject(id) {
            return s;
        }
        let mut map = self.subjects.write().expect("subject map lock");
        map.entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(SubjectState::new(EngineState::new(id, self.config.engine_config())))))
            .clone()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.read().expect("subject map lock").keys().cloned().collect()
    }

    /// "Now" for requests without a timestamp, per the configured clock.
    pub fn now_ms(&self, subject_id: &str) -> i64 {
        match self.config.clock {
            ClockMode::Wall => wall_clock_ms(),
            ClockMode::Logical => self
                .subject(subject_id)
                .map(|s| s.lock().expect("subject lock").last_event_ms)
                .filter(|t| *t != i64::MIN)
                .unwrap_or(0),
        }
    }

    /// "Now" for a query, resolved through its subject.
    pub fn now_for_query(&self, ema_id: &str) -> i64 {
        let subject = self.ema_index.read().expect("ema index lock").get(ema_id).cloned();
        match subject {
            Some(s) => self.now_ms(&s),
            None => wall_clock_ms(),
        }
    }

    /// Processes and stores one window. A window already seen (same subject
    /// and start time) returns the stored record unchanged.
    pub fn ingest(&self, payload: SamplePayload, received_at_ms: i64) -> Result<IngestOutcome> {
        let mut errors = payload.validate(self.config.window_s).err().unwrap_or_default();
        if let Err(e) = validate_subject_id(&payload.subject_id) {
            errors.retain(|f| f.field != "subject_id");
            errors.push(e);
        }
        if payload.t_start_ms < 0 {
            errors.push(FieldError {
                field: "t_start_ms".into(),
                message: "must not be negative".into(),
            });
        }
        if !errors.is_empty() {
            return Err(ServiceError::Invalid(errors));
        }
        let sample_id = sample_id_for(&payload.subject_id, payload.t_start_ms);
        let handle = self.subject_or_create(&payload.subject_id);
        {
            let st = handle.lock().expect("subject lock");
            if let Some(out) = st.outcome_for(&sample_id) {
                return Ok(out);
            }
        }

        let model = self.model.as_ref().ok_or(ServiceError::ReadOnly)?;
        let processed =
            pipeline::process(&payload, &self.config.filter, model).map_err(|e| ServiceError::Invalid(vec![e]))?;

        let mut st = handle.lock().expect("subject lock");
        if st.failed {
            return Err(ServiceError::Unavailable(payload.subject_id.clone()));
        }
        if let Some(out) = st.outcome_for(&sample_id) {
            return Ok(out);
        }
        let t_end_ms = payload.t_end_ms();
        let result = self.commit_sample(&mut st, &payload, sample_id, processed, received_at_ms, t_end_ms);
        if result.is_err() {
            st.failed = true;
        }
        result
    }

    fn commit_sample(
        &self,
        st: &mut SubjectState,
        payload: &SamplePayload,
        sample_id: String,
        processed: pipeline::Processed,
        received_at_ms: i64,
        t_end_ms: i64,
    ) -> Result<IngestOutcome> {
        self.log_expiry(st, t_end_ms)?;
        let sref = SampleRef {
            sample_id: sample_id.clone(),
            t_start_ms: payload.t_start_ms,
            t_end_ms,
        };
        let decision = st.engine.observe(sref, processed.features.as_ref());
        let mut suppressed = false;
        let query = if decision.trigger {
            if st.open.is_some() {
                suppressed = true;
                tracing::info!(subject = %payload.subject_id, %sample_id, "trigger suppressed: a query is already open");
                None
            } else {
                Some(EmaQuery::new(
                    ema_id_for(&sample_id, t_end_ms),
                    payload.subject_id.clone(),
                    sample_id.clone(),
                    t_end_ms,
                ))
            }
        } else {
            None
        };
        let record = SampleRecord {
            sample_id: sample_id.clone(),
            subject_id: payload.subject_id.clone(),
            t_start_ms: payload.t_start_ms,
            t_end_ms,
            received_at_ms,
            features: processed.features,
            quality_too_low: processed.quality_too_low,
            quality: processed.quality,
            activity: processed.activity,
            activity_confidence: processed.activity_confidence,
            decision,
            ema_id: query.as_ref().map(|q| q.ema_id.clone()),
            suppressed,
        };
        let seq = {
            let mut store = self.store()?;
            store.append_payload(&sample_id, payload)?;
            store.append_sample(&record, query.as_ref())?
        };
        st.applied_seq = seq;
        if let Some(q) = &query {
            self.ema_index
                .write()
                .expect("ema index lock")
                .insert(q.ema_id.clone(), payload.subject_id.clone());
            st.queries.insert(
                q.ema_id.clone(),
                QueryEntry {
                    query: q.clone(),
                    response: None,
                    expiry_logged: false,
                },
            );
            st.open = Some(q.ema_id.clone());
        }
        st.push_record(record.clone());
        st.since_checkpoint += 1;
        if st.since_checkpoint >= self.config.checkpoint_every {
            self.write_checkpoint(st)?;
        }
        Ok(IngestOutcome {
            record,
            query,
            duplicate: false,
        })
    }

    fn log_expiry(&self, st: &mut SubjectState, now_ms: i64) -> Result<()> {
        if let Some(id) = st.take_expired(now_ms) {
            let entry = st.queries.get_mut(&id).expect("open query is indexed");
            if !entry.expiry_logged && self.store.is_some() {
                let at = entry.query.expires_at_ms;
                self.store()?
                    .append_expiry(&id, &entry.query.subject_id, at)?;
                entry.expiry_logged = true;
            }
        }
        Ok(())
    }

    fn write_checkpoint(&self, st: &mut SubjectState) -> Result<()> {
        let text = st.engine.to_checkpoint(st.applied_seq);
        store::write_checkpoint(&self.config.data_dir, &st.engine.subject_id, &text)?;
        st.since_checkpoint = 0;
        Ok(())
    }

    /// Writes a checkpoint for every subject.
    pub fn checkpoint_all(&self) -> Result<usize> {
        let handles: Vec<_> = self.subjects.read().expect("subject map lock").values().cloned().collect();
        for h in &handles {
            let mut st = h.lock().expect("subject lock");
            if !st.failed {
                self.write_checkpoint(&mut st)?;
            }
        }
        Ok(handles.len())
    }

    /// Unexpired, unanswered queries for the subject (at most one). An open
    /// query found past its expiry is marked expired.
    pub fn pending_queries(&self, subject_id: &str, now_ms: i64) -> Result<Vec<EmaQuery>> {
        let Some(handle) = self.subject(subject_id) else {
            return Ok(Vec::new());
        };
        let mut st = handle.lock().expect("subject lock");
        if !st.failed {
            self.log_expiry(&mut st, now_ms)?;
        }
        Ok(st.open_query().into_iter().cloned().collect())
    }

    pub fn query(&self, ema_id: &str) -> Option<QueryEntry> {
        let subject = self.ema_index.read().expect("ema index lock").get(ema_id).cloned()?;
        let handle = self.subject(&subject)?;
        let st = handle.lock().expect("subject lock");
        st.queries.get(ema_id).cloned()
    }

    /// Records an answer. Inside the query lifetime it becomes a label for
    /// the query's sample; after it the answer is kept as Stale. Only the
    /// first answer to a query counts.
    pub fn submit_response(&self, ema_id: &str, submission: ResponseSubmission, now_ms: i64) -> Result<ResponseAck> {
        let subject = self
            .ema_index
            .read()
            .expect("ema index lock")
            .get(ema_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownQuery(ema_id.to_string()))?;
        let handle = self.subject(&subject).ok_or_else(|| ServiceError::UnknownQuery(ema_id.to_string()))?;
        let mut st = handle.lock().expect("subject lock");
        let entry = st
            .queries
            .get(ema_id)
            .ok_or_else(|| ServiceError::UnknownQuery(ema_id.to_string()))?;
        if let Some(r) = &entry.response {
            return Ok(ack(r, true));
        }
        if st.failed {
            return Err(ServiceError::Unavailable(subject));
        }
        if self.is_read_only() {
            return Err(ServiceError::ReadOnly);
        }
        let query = entry.query.clone();
        let responded_at_ms = submission.responded_at_ms.unwrap_or(now_ms);
        if responded_at_ms < query.dispatched_at_ms {
            return Err(invalid(
                "responded_at_ms",
                format!("{responded_at_ms} is before dispatch at {}", query.dispatched_at_ms),
            ));
        }
        let status = if query.is_expired(responded_at_ms) {
            ResponseStatus::Stale
        } else {
            match st.engine.register_label(ema_id, &query.sample_id, responded_at_ms) {
                Ok(_) => ResponseStatus::Accepted,
                Err(QueryError::Stale { .. }) => ResponseStatus::Stale,
                Err(e) => return Err(invalid("ema_id", e.to_string())),
            }
        };
        let record = ResponseRecord {
            response: EmaResponse {
                ema_id: ema_id.to_string(),
                responded_at_ms,
                stress: submission.stress,
                emotion: submission.emotion,
                activity: submission.activity,
                client_render_ms: submission.client_render_ms,
            },
            subject_id: subject.clone(),
            sample_id: query.sample_id.clone(),
            dispatched_at_ms: query.dispatched_at_ms,
            response_time_s: (responded_at_ms - query.dispatched_at_ms) as f64 / 1000.0,
            status,
        };
        let seq = match self.store().and_then(|mut s| Ok(s.append_response(&record)?)) {
            Ok(seq) => seq,
            Err(e) => {
                st.failed = true;
                return Err(e);
            }
        };
        if status == ResponseStatus::Accepted {
            st.applied_seq = seq;
        }
        st.last_event_ms = st.last_event_ms.max(responded_at_ms);
        if st.open.as_deref() == Some(ema_id) {
            st.open = None;
        }
        st.queries.get_mut(ema_id).expect("checked above").response = Some(record.clone());
        Ok(ack(&record, false))
    }

    pub fn snapshot(&self, subject_id: &str) -> Option<SubjectSnapshot> {
        let handle = self.subject(subject_id)?;
        let st = handle.lock().expect("subject lock");
        Some(SubjectSnapshot {
            subject_id: subject_id.to_string(),
            engine: st.engine.clone(),
            records: st.records.clone(),
            queries: st.queries.values().cloned().collect(),
        })
    }

    /// Snapshots of the given subject, or of every subject when `None`.
    pub fn snapshots(&self, subject_id: Option<&str>) -> Vec<SubjectSnapshot> {
        match subject_id {
            Some(id) => self.snapshot(id).into_iter().collect(),
            None => self.subject_ids().iter().filter_map(|id| self.snapshot(id)).collect(),
        }
    }

    pub fn health(&self) -> Health {
        let handles: Vec<_> = self.subjects.read().expect("subject map lock").values().cloned().collect();
        let (mut samples, mut open, mut failed) = (0, 0, false);
        for h in &handles {
            let st = h.lock().expect("subject lock");
            samples += st.records.len();
            open += usize::from(st.open.is_some());
            failed |= st.failed;
        }
        Health {
            status: if failed { "degraded" } else { "ok" }.into(),
            subjects: handles.len(),
            samples,
            open_queries: open,
        }
    }
}

fn sample_ref(r: &SampleRecord) -> SampleRef {
    SampleRef {
        sample_id: r.sample_id.clone(),
        t_start_ms: r.t_start_ms,
        t_end_ms: r.t_end_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_deterministic_and_time_sorted() {
        let a = sample_id_for("S01", 1_000);
        assert_eq!(a, sample_id_for("S01", 1_000));
        assert_ne!(a, sample_id_for("S02", 1_000));
        assert!(a < sample_id_for("S01", 2_000));
        assert_eq!(a.len(), 26);
        assert_ne!(ema_id_for(&a, 5_000), a);
    }

    #[test]
    fn subject_id_alphabet() {
        assert!(validate_subject_id("S01").is_ok());
        assert!(validate_subject_id("sub-1_a.b").is_ok());
        for bad in ["", "../x", "a/b", ".hidden", "a b"] {
            assert!(validate_subject_id(bad).is_err(), "{bad}");
        }
    }
}
