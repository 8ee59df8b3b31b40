//! Feeds a recorded dataset through the service as if the windows were
//! arriving live: each window at its end time, each scripted answer at
//! dispatch time plus its recorded latency.
//!
//! Re-running a replay against the same data directory resumes it: stored
//! windows come back as duplicates with their original decisions and the
//! scripted answers to their queries are re-submitted, which is a no-op for
//! queries already answered.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::Path;
use std::time::Duration;

use ppgema_core::dataset::{DatasetError, DatasetReader, DatasetRecord};
use ppgema_core::model::{ResponseStatus, ResponseSubmission, SamplePayload};
use ppgema_core::simulator::ScriptedResponse;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::service::{IngestOutcome, ResponseAck, Service, ServiceError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(
        "record {index}: t_start_ms {t_start_ms} is earlier than the previous record's {previous}; \
         pass the sort option to reorder the dataset"
    )]
    OutOfOrder { index: usize, t_start_ms: i64, previous: i64 },
    #[error("{0}")]
    Target(String),
}

/// Why a target refused an event.
#[derive(Debug, Error)]
pub enum TargetError {
    /// The event was invalid; the replay counts it and moves on.
    #[error("{0}")]
    Rejected(String),
    /// The target cannot continue.
    #[error("{0}")]
    Fatal(String),
}

impl From<ServiceError> for TargetError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Invalid(_) | ServiceError::UnknownQuery(_) => TargetError::Rejected(e.to_string()),
            _ => TargetError::Fatal(e.to_string()),
        }
    }
}

/// Where replayed events go: the in-process service or a remote one.
pub trait ReplayTarget {
    fn ingest(&mut self, payload: SamplePayload, arrival_ms: i64) -> Result<IngestOutcome, TargetError>;
    fn respond(&mut self, ema_id: &str, submission: ResponseSubmission) -> Result<ResponseAck, TargetError>;
}

impl ReplayTarget for &Service {
    fn ingest(&mut self, payload: SamplePayload, arrival_ms: i64) -> Result<IngestOutcome, TargetError> {
        Ok(Service::ingest(self, payload, arrival_ms)?)
    }

    fn respond(&mut self, ema_id: &str, submission: ResponseSubmission) -> Result<ResponseAck, TargetError> {
        let now = submission.responded_at_ms.unwrap_or_default();
        Ok(Service::submit_response(self, ema_id, submission, now)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    /// Stream time per wall-clock time; 0 replays as fast as possible.
    pub speed: f64,
    /// Reorder the dataset by start time instead of rejecting disorder.
    pub sort: bool,
    /// Submit the dataset's scripted answers.
    pub responses: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            speed: 0.0,
            sort: false,
            responses: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// Windows read from the dataset and accepted by the service.
    pub samples: usize,
    /// Of those, windows the service had already stored.
    pub duplicates: usize,
    /// Windows or answers the service refused.
    pub rejected: usize,
    /// Windows whose draw triggered, dispatched or not.
    pub triggers: usize,
    /// Queries dispatched.
    pub queries: usize,
    /// Triggers dropped because a query was already open.
    pub suppressed: usize,
    /// Windows without measurable features.
    pub quality_too_low: usize,
    /// Answers registered as labels.
    pub labels: usize,
    /// Answers that arrived after their query expired.
    pub stale: usize,
    /// Queries left without an answer.
    pub unanswered: usize,
}

struct Pending {
    at_ms: i64,
    ema_id: String,
    script: ScriptedResponse,
}

struct Pacer {
    speed: f64,
    last_ms: Option<i64>,
}

impl Pacer {
    fn wait_until(&mut self, t_ms: i64) {
        if self.speed > 0.0 {
            if let Some(last) = self.last_ms {
                let dt = (t_ms - last).max(0) as f64 / self.speed;
                if dt > 0.0 {
                    std::thread::sleep(Duration::from_secs_f64(dt / 1000.0));
                }
            }
        }
        self.last_ms = Some(self.last_ms.map_or(t_ms, |l| l.max(t_ms)));
    }
}

/// Replays `records` (already in dataset order) into `target`.
pub fn replay<T, I>(target: &mut T, records: I, opts: &ReplayOptions) -> Result<ReplayReport, ReplayError>
where
    T: ReplayTarget,
    I: IntoIterator<Item = Result<DatasetRecord, DatasetError>>,
{
    let mut records: Box<dyn Iterator<Item = Result<DatasetRecord, DatasetError>>> = Box::new(records.into_iter());
    if opts.sort {
        let mut all = records.collect::<Result<Vec<_>, _>>()?;
        all.sort_by(|a, b| {
            (a.sample.t_start_ms, &a.sample.subject_id).cmp(&(b.sample.t_start_ms, &b.sample.subject_id))
        });
        records = Box::new(all.into_iter().map(Ok));
    }

    let mut report = ReplayReport::default();
    let mut heap: BinaryHeap<Reverse<(i64, u64)>> = BinaryHeap::new();
    let mut waiting: HashMap<u64, Pending> = HashMap::new();
    let mut scheduled: HashSet<String> = HashSet::new();
    let mut order = 0u64;
    let mut pacer = Pacer {
        speed: opts.speed,
        last_ms: None,
    };
    let mut previous: Option<i64> = None;

    for (index, rec) in records.enumerate() {
        let rec = rec?;
        let t_start = rec.sample.t_start_ms;
        if let Some(p) = previous {
            if t_start < p {
                return Err(ReplayError::OutOfOrder {
                    index,
                    t_start_ms: t_start,
                    previous: p,
                });
            }
        }
        previous = Some(t_start);
        let arrival = rec.sample.t_end_ms();
        deliver_due(target, &mut heap, &mut waiting, &mut pacer, &mut report, Some(arrival))?;

        pacer.wait_until(arrival);
        let outcome = match target.ingest(rec.sample, arrival) {
            Ok(o) => o,
            Err(TargetError::Rejected(msg)) => {
                tracing::warn!(index, %msg, "sample rejected");
                report.rejected += 1;
                continue;
            }
            Err(TargetError::Fatal(msg)) => return Err(ReplayError::Target(msg)),
        };
        report.samples += 1;
        report.duplicates += usize::from(outcome.duplicate);
        report.triggers += usize::from(outcome.record.decision.trigger);
        report.suppressed += usize::from(outcome.record.suppressed);
        report.quality_too_low += usize::from(outcome.record.features.is_none());
        if let Some(q) = &outcome.query {
            report.queries += 1;
            if let (true, Some(script)) = (opts.responses, rec.script) {
                if scheduled.insert(q.ema_id.clone()) {
                    order += 1;
                    let at_ms = q.dispatched_at_ms + script.latency_ms;
                    heap.push(Reverse((at_ms, order)));
                    waiting.insert(
                        order,
                        Pending {
                            at_ms,
                            ema_id: q.ema_id.clone(),
                            script,
                        },
                    );
                }
            }
        }
    }
    deliver_due(target, &mut heap, &mut waiting, &mut pacer, &mut report, None)?;
    report.unanswered = report.queries.saturating_sub(report.labels + report.stale);
    Ok(report)
}

fn deliver_due<T: ReplayTarget>(
    target: &mut T,
    heap: &mut BinaryHeap<Reverse<(i64, u64)>>,
    waiting: &mut HashMap<u64, Pending>,
    pacer: &mut Pacer,
    report: &mut ReplayReport,
    until_ms: Option<i64>,
) -> Result<(), ReplayError> {
    while let Some(Reverse((at, key))) = heap.peek().copied() {
        if until_ms.is_some_and(|u| at > u) {
            break;
        }
        heap.pop();
        let p = waiting.remove(&key).expect("scheduled answers are tracked");
        pacer.wait_until(p.at_ms);
        let submission = ResponseSubmission {
            responded_at_ms: Some(p.at_ms),
            stress: p.script.stress,
            emotion: p.script.emotion,
            activity: p.script.activity,
            client_render_ms: None,
        };
        match target.respond(&p.ema_id, submission) {
            Ok(ack) => match ack.status {
                ResponseStatus::Accepted => report.labels += 1,
                ResponseStatus::Stale => report.stale += 1,
            },
            Err(TargetError::Rejected(msg)) => {
                tracing::warn!(ema_id = %p.ema_id, %msg, "answer rejected");
                report.rejected += 1;
            }
            Err(TargetError::Fatal(msg)) => return Err(ReplayError::Target(msg)),
        }
    }
    Ok(())
}

/// Replays a dataset file into the service.
pub fn replay_file(service: &Service, path: &Path, opts: &ReplayOptions) -> Result<ReplayReport, ReplayError> {
    let reader = DatasetReader::open(path)?;
    let mut target = service;
    replay(&mut target, reader, opts)
}
