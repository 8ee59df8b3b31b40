//! The cloud tier: receives sensor windows, runs the processing pipeline,
//! decides and dispatches EMA queries, accepts answers and persists
//! everything in an append-only store that it can recover from.

pub mod activity_model;
pub mod http;
pub mod pipeline;
pub mod replay;
pub mod reports;
pub mod service;
pub mod store;

pub use replay::{replay, replay_file, ReplayError, ReplayOptions, ReplayReport, ReplayTarget, TargetError};
pub use service::{IngestOutcome, ResponseAck, Service, ServiceError, SubjectSnapshot};
