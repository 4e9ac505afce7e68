//! Protocol side of the live queue.

use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use prefeval_core::protocol::{AnnotationSource, BatchRequest, Protocol, ProtocolState, SourceError};
use prefeval_core::PreferenceRecord;
use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;

use crate::api::{BatchInfo, BatchProgress, ErrorBody, OpenBatch, RunStatus, RunUpdate, WireRequest};

/// [`AnnotationSource`] backed by a running annotation service. Each round
/// opens one batch holding every pair's tasks, then polls until all of them
/// are rated. If that takes longer than the timeout the round fails with
/// [`SourceError::Timeout`] and the protocol state is left as it was.
#[derive(Debug, Clone)]
pub struct LiveQueue {
    base: String,
    client: Client,
    poll: Duration,
    timeout: Duration,
}

impl LiveQueue {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, SourceError> {
        let client = Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| SourceError::Unavailable(e.to_string()))?;
        Ok(LiveQueue {
            base: base_url.trim_end_matches('/').to_string(),
            client,
            poll: Duration::from_millis(250),
            timeout,
        })
    }

    pub fn with_poll_interval(self, poll: Duration) -> Self {
        LiveQueue { poll, ..self }
    }

    fn send<T: DeserializeOwned>(&self, request: RequestBuilder) -> Result<T, SourceError> {
        let response = request
            .send()
            .map_err(|e| SourceError::Unavailable(format!("cannot reach annotation service at {}: {e}", self.base)))?;
        let status = response.status();
        if !status.is_success() {
            let detail = response
                .json::<ErrorBody>()
                .map(|b| b.error)
                .unwrap_or_else(|_| "no details".into());
            return Err(SourceError::Unavailable(format!("annotation service answered {status}: {detail}")));
        }
        response
            .json()
            .map_err(|e| SourceError::Invalid(format!("unreadable answer from annotation service: {e}")))
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &impl serde::Serialize) -> Result<T, SourceError> {
        self.send(self.client.post(format!("{}{path}", self.base)).json(body))
    }

    /// Start (or reconnect to) the service's run.
    pub fn start(&self, state: &ProtocolState) -> Result<RunStatus, SourceError> {
        self.post("/api/run/start", &RunUpdate::from_state(state))
    }

    /// Publish the loop state before a round.
    pub fn publish(&self, state: &ProtocolState) -> Result<RunStatus, SourceError> {
        self.post("/api/run/status", &RunUpdate::from_state(state))
    }

    pub fn finish(&self, state: &ProtocolState) -> Result<RunStatus, SourceError> {
        self.post("/api/run/finish", &RunUpdate::finished(state))
    }
}

impl AnnotationSource for LiveQueue {
    fn collect(&mut self, request: &BatchRequest) -> Result<Vec<PreferenceRecord>, SourceError> {
        Ok(self
            .collect_round(std::slice::from_ref(request))?
            .pop()
            .unwrap_or_default())
    }

    fn collect_round(&mut self, requests: &[BatchRequest]) -> Result<Vec<Vec<PreferenceRecord>>, SourceError> {
        let Some(first) = requests.first() else {
            return Ok(Vec::new());
        };
        let open = OpenBatch {
            requests: requests
                .iter()
                .map(|r| WireRequest {
                    count: r.count,
                    pair: r.pair.clone(),
                    seen: r.seen.clone(),
                })
                .collect(),
            round: first.round,
        };
        let info: BatchInfo = self.post("/api/run/batch", &open)?;
        let started = Instant::now();
        loop {
            let progress: BatchProgress = self.send(
                self.client
                    .get(format!("{}/api/run/batch/{}", self.base, info.batch_id)),
            )?;
            if progress.complete {
                let ratings = progress
                    .ratings
                    .ok_or_else(|| SourceError::Invalid("complete batch without ratings".into()))?;
                if ratings.len() != requests.len() {
                    return Err(SourceError::Invalid(format!(
                        "batch answered {} pairs, {} were asked",
                        ratings.len(),
                        requests.len()
                    )));
                }
                return Ok(ratings);
            }
            if started.elapsed() >= self.timeout {
                let waiting = requests
                    .iter()
                    .zip(progress.done.iter().zip(&progress.tasks))
                    .find(|(_, (done, total))| done < total)
                    .map_or_else(|| first.pair.key(), |(r, _)| r.pair.key());
                return Err(SourceError::Timeout { pair: waiting });
            }
            thread::sleep(self.poll);
        }
    }
}

/// Run `protocol` against the live queue until it ends. With a checkpoint
/// path the state is written after every round and when a round fails, so an
/// interrupted run can be resumed with [`Protocol::resume`].
pub fn drive_live(protocol: &mut Protocol, live: &mut LiveQueue, checkpoint: Option<&Path>) -> prefeval_core::Result<()> {
    live.start(protocol.state())?;
    while protocol.is_running() {
        live.publish(protocol.state())?;
        let stepped = protocol.step(live);
        if let Some(path) = checkpoint {
            prefeval_core::io::save_json(path, protocol.state())?;
        }
        stepped?;
    }
    live.finish(protocol.state())?;
    Ok(())
}
