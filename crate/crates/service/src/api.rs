//! JSON bodies exchanged between the service, the protocol side and
//! annotators.

use std::collections::BTreeSet;

use prefeval_core::protocol::ProtocolState;
use prefeval_core::{PreferenceRecord, SystemPair};
use serde::{Deserialize, Serialize};

/// One pair's share of a round, as sent by the protocol side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub count: usize,
    pub pair: SystemPair,
    pub seen: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenBatch {
    pub requests: Vec<WireRequest>,
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchInfo {
    pub batch_id: u64,
    /// Tasks created per request; fewer than requested means the catalog has
    /// no more samples for that pair.
    pub tasks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProgress {
    pub batch_id: u64,
    pub complete: bool,
    /// Rated tasks per request.
    pub done: Vec<usize>,
    /// Ratings per request, oriented to the request's pair. Present once the
    /// batch is complete.
    pub ratings: Option<Vec<Vec<PreferenceRecord>>>,
    pub tasks: Vec<usize>,
}

/// Loop state published by the protocol side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunUpdate {
    pub batch_size: usize,
    pub budget_remaining: i64,
    pub round: u64,
    pub undecided_pairs: Vec<String>,
}

impl RunUpdate {
    /// State of a run about to collect its next round.
    pub fn from_state(state: &ProtocolState) -> Self {
        RunUpdate {
            batch_size: state.config.batch_size,
            budget_remaining: state.budget_remaining,
            round: state.round + 1,
            undecided_pairs: undecided(state),
        }
    }

    /// State of a finished run.
    pub fn finished(state: &ProtocolState) -> Self {
        RunUpdate {
            round: state.round,
            ..Self::from_state(state)
        }
    }
}

fn undecided(state: &ProtocolState) -> Vec<String> {
    state
        .pairs
        .iter()
        .filter(|(_, p)| p.status == prefeval_core::protocol::PairStatus::Undecided)
        .map(|(k, _)| k.clone())
        .collect()
}

/// Body of `GET /api/status`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatus {
    pub batch_size: usize,
    pub budget_remaining: i64,
    /// Tasks of the open batch not yet rated.
    pub pending_tasks: usize,
    pub round: u64,
    pub running: bool,
    pub undecided_pairs: Vec<String>,
}

/// Body of an error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
