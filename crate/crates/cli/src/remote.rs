//! Replay target that talks to a running service over HTTP.

use ppgema_core::model::{ResponseSubmission, SamplePayload};
use ppgema_gateway::{IngestOutcome, ReplayTarget, ResponseAck, TargetError};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct HttpTarget {
    agent: ureq::Agent,
    base: String,
}

impl HttpTarget {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base: base.trim_end_matches('/').to_string(),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, TargetError> {
        let url = format!("{}{path}", self.base);
        let fatal = |e: ureq::Error| TargetError::Fatal(format!("{url}: {e}"));
        let mut resp = self.agent.post(&url).send_json(body).map_err(fatal)?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return resp.body_mut().read_json().map_err(fatal);
        }
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let msg = format!("{url}: HTTP {status} {text}");
        // Client errors concern one event; anything else stops the replay.
        if (400..500).contains(&status) {
            Err(TargetError::Rejected(msg))
        } else {
            Err(TargetError::Fatal(msg))
        }
    }
}

impl ReplayTarget for HttpTarget {
    fn ingest(&mut self, payload: SamplePayload, _arrival_ms: i64) -> Result<IngestOutcome, TargetError> {
        self.post("/v1/samples", &payload)
    }

    fn respond(&mut self, ema_id: &str, submission: ResponseSubmission) -> Result<ResponseAck, TargetError> {
        self.post(&format!("/v1/ema/{ema_id}/response"), &submission)
    }
}
