//! Task queue state. Every mutation goes through one `&mut Queue`, which the
//! server keeps behind a single mutex.

use std::collections::BTreeMap;
use std::time::Duration;

use prefeval_core::{PreferenceOutcome, PreferenceRecord, SystemId, SystemPair};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::api::{BatchInfo, BatchProgress, OpenBatch, RunStatus, RunUpdate, WireRequest};
use crate::catalog::SampleCatalog;

/// How long an assigned task stays reserved for its annotator.
pub const DEFAULT_LEASE: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Pending,
    Assigned,
    Done,
}

/// One sample to be rated for one pair. `payload_a` is the output of
/// `pair.0`; outcomes are read from `pair.0`'s side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub context: Option<String>,
    pub pair: (SystemId, SystemId),
    pub payload_a: String,
    pub payload_b: String,
    pub sample_id: String,
    pub status: TaskStatus,
    pub task_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("no protocol run is active")]
    NoActiveRun,
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("task '{0}' has already been rated")]
    AlreadyDone(String),
    #[error("invalid rating: {0}")]
    InvalidRating(String),
    #[error("unknown batch {0}")]
    UnknownBatch(u64),
    #[error("{0}")]
    Conflict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Active,
    Finished,
}

#[derive(Debug, Clone)]
struct Slot {
    task: AnnotationTask,
    lease_until: Option<Duration>,
    outcome: Option<PreferenceOutcome>,
}

#[derive(Debug, Clone)]
struct Batch {
    request: OpenBatch,
    /// Task sequence numbers per request.
    tasks: Vec<Vec<u64>>,
}

#[derive(Debug)]
pub struct Queue {
    batches: BTreeMap<u64, Batch>,
    catalog: Option<SampleCatalog>,
    lease: Duration,
    next_batch: u64,
    next_task: u64,
    phase: Phase,
    /// Tasks by creation order, so the first pending one is the oldest.
    tasks: BTreeMap<u64, Slot>,
    update: RunUpdate,
}

fn task_id(seq: u64) -> String {
    format!("t{seq}")
}

fn parse_task_id(id: &str) -> Option<u64> {
    id.strip_prefix('t')?.parse().ok()
}

/// Read the outcome of a rating body `{"outcome": ..., "flipped": bool}`.
/// `flipped` says the annotator saw the pair's outputs in swapped positions,
/// so the outcome is turned back to the pair's orientation.
pub fn parse_rating(body: &Value) -> Result<PreferenceOutcome, QueueError> {
    let Value::Object(map) = body else {
        return Err(QueueError::InvalidRating("expected a JSON object".into()));
    };
    if let Some(k) = map.keys().find(|k| *k != "outcome" && *k != "flipped") {
        return Err(QueueError::InvalidRating(format!("unknown field '{k}'")));
    }
    let outcome: PreferenceOutcome = map
        .get("outcome")
        .ok_or_else(|| QueueError::InvalidRating("missing outcome".into()))
        .and_then(|v| {
            serde_json::from_value(v.clone())
                .map_err(|_| QueueError::InvalidRating(format!("outcome must be \">\", \"=\" or \"<\", got {v}")))
        })?;
    let flipped = match map.get("flipped") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(v) => return Err(QueueError::InvalidRating(format!("flipped must be a boolean, got {v}"))),
    };
    Ok(if flipped { outcome.flipped() } else { outcome })
}

impl Queue {
    /// Without a catalog, tasks get generated sample ids and empty payloads.
    pub fn new(catalog: Option<SampleCatalog>, lease: Duration) -> Self {
        Queue {
            batches: BTreeMap::new(),
            catalog,
            lease,
            next_batch: 1,
            next_task: 1,
            phase: Phase::Idle,
            tasks: BTreeMap::new(),
            update: RunUpdate {
                batch_size: 0,
                budget_remaining: 0,
                round: 0,
                undecided_pairs: Vec::new(),
            },
        }
    }

    /// Start a run, or refresh the state of the active one (used when a
    /// checkpointed run reconnects). Starting after a finished run clears it.
    pub fn start(&mut self, update: RunUpdate) -> RunStatus {
        if self.phase == Phase::Finished {
            self.batches.clear();
            self.tasks.clear();
        }
        self.phase = Phase::Active;
        self.update = update;
        self.status().expect("run is active")
    }

    pub fn update(&mut self, update: RunUpdate) -> Result<RunStatus, QueueError> {
        self.require_active()?;
        self.update = update;
        self.status()
    }

    /// End the run. Unrated tasks are withdrawn.
    pub fn finish(&mut self, update: RunUpdate) -> Result<RunStatus, QueueError> {
        self.require_active()?;
        self.update = update;
        self.phase = Phase::Finished;
        self.tasks.retain(|_, s| s.task.status == TaskStatus::Done);
        self.status()
    }

    fn require_active(&self) -> Result<(), QueueError> {
        if self.phase == Phase::Active {
            Ok(())
        } else {
            Err(QueueError::NoActiveRun)
        }
    }

    pub fn status(&self) -> Result<RunStatus, QueueError> {
        if self.phase == Phase::Idle {
            return Err(QueueError::NoActiveRun);
        }
        Ok(RunStatus {
            batch_size: self.update.batch_size,
            budget_remaining: self.update.budget_remaining,
            pending_tasks: self.tasks.values().filter(|s| s.task.status != TaskStatus::Done).count(),
            round: self.update.round,
            running: self.phase == Phase::Active,
            undecided_pairs: self.update.undecided_pairs.clone(),
        })
    }

    /// Create the tasks of one round. Reopening the same round with the same
    /// requests returns the existing batch, so a resumed run picks up ratings
    /// made while it was away.
    pub fn open_batch(&mut self, request: OpenBatch) -> Result<BatchInfo, QueueError> {
        self.require_active()?;
        if let Some((&id, batch)) = self.batches.iter().find(|(_, b)| b.request.round == request.round) {
            if batch.request != request {
                return Err(QueueError::Conflict(format!(
                    "round {} is already open with different requests",
                    request.round
                )));
            }
            return Ok(BatchInfo {
                batch_id: id,
                tasks: batch.tasks.iter().map(Vec::len).collect(),
            });
        }
        let mut tasks = Vec::with_capacity(request.requests.len());
        for req in &request.requests {
            let created = self.create_tasks(req);
            tasks.push(created);
        }
        let id = self.next_batch;
        self.next_batch += 1;
        let info = BatchInfo {
            batch_id: id,
            tasks: tasks.iter().map(Vec::len).collect(),
        };
        self.batches.insert(id, Batch { request, tasks });
        Ok(info)
    }

    fn create_tasks(&mut self, req: &WireRequest) -> Vec<u64> {
        let SystemPair { first, second } = &req.pair;
        let samples: Vec<(String, Option<String>, String, String)> = match &self.catalog {
            Some(catalog) => catalog
                .for_pair(first, second)
                .filter(|it| !req.seen.contains(&it.sample_id))
                .take(req.count)
                .map(|it| {
                    (
                        it.sample_id.clone(),
                        it.context.clone(),
                        it.outputs[first].clone(),
                        it.outputs[second].clone(),
                    )
                })
                .collect(),
            None => {
                let (lo, hi) = if first <= second { (first, second) } else { (second, first) };
                (0..)
                    .map(|k| format!("{lo}:{hi}/live-{k}"))
                    .filter(|id| !req.seen.contains(id))
                    .take(req.count)
                    .map(|id| (id, None, String::new(), String::new()))
                    .collect()
            }
        };
        let mut seqs = Vec::with_capacity(samples.len());
        for (sample_id, context, payload_a, payload_b) in samples {
            let seq = self.next_task;
            self.next_task += 1;
            self.tasks.insert(
                seq,
                Slot {
                    task: AnnotationTask {
                        context,
                        pair: (first.clone(), second.clone()),
                        payload_a,
                        payload_b,
                        sample_id,
                        status: TaskStatus::Pending,
                        task_id: task_id(seq),
                    },
                    lease_until: None,
                    outcome: None,
                },
            );
            seqs.push(seq);
        }
        seqs
    }

    pub fn progress(&self, batch_id: u64) -> Result<BatchProgress, QueueError> {
        let batch = self.batches.get(&batch_id).ok_or(QueueError::UnknownBatch(batch_id))?;
        let done: Vec<usize> = batch
            .tasks
            .iter()
            .map(|seqs| seqs.iter().filter(|s| self.is_done(**s)).count())
            .collect();
        let tasks: Vec<usize> = batch.tasks.iter().map(Vec::len).collect();
        let complete = done == tasks;
        let ratings = complete.then(|| {
            batch
                .tasks
                .iter()
                .zip(&batch.request.requests)
                .map(|(seqs, req)| {
                    seqs.iter()
                        .map(|s| {
                            let slot = &self.tasks[s];
                            let outcome = slot.outcome.expect("done tasks have an outcome");
                            PreferenceRecord::human(slot.task.sample_id.clone(), &req.pair, outcome)
                        })
                        .collect()
                })
                .collect()
        });
        Ok(BatchProgress {
            batch_id,
            complete,
            done,
            ratings,
            tasks,
        })
    }

    fn is_done(&self, seq: u64) -> bool {
        self.tasks.get(&seq).is_some_and(|s| s.task.status == TaskStatus::Done)
    }

    /// Assign the oldest pending task, after returning expired leases to
    /// the pending state.
    pub fn next_task(&mut self, now: Duration) -> Result<Option<AnnotationTask>, QueueError> {
        self.require_active()?;
        for slot in self.tasks.values_mut() {
            if slot.task.status == TaskStatus::Assigned && slot.lease_until.is_some_and(|t| t <= now) {
                slot.task.status = TaskStatus::Pending;
                slot.lease_until = None;
            }
        }
        let lease = self.lease;
        Ok(self
            .tasks
            .values_mut()
            .find(|s| s.task.status == TaskStatus::Pending)
            .map(|slot| {
                slot.task.status = TaskStatus::Assigned;
                slot.lease_until = Some(now + lease);
                slot.task.clone()
            }))
    }

    /// Record a rating. A task whose lease expired can still be rated by its
    /// original annotator as long as nobody else rated it first.
    pub fn submit(&mut self, id: &str, body: &Value) -> Result<AnnotationTask, QueueError> {
        self.require_active()?;
        let slot = parse_task_id(id)
            .and_then(|seq| self.tasks.get_mut(&seq))
            .ok_or_else(|| QueueError::UnknownTask(id.to_string()))?;
        let outcome = parse_rating(body)?;
        if slot.task.status == TaskStatus::Done {
            return Err(QueueError::AlreadyDone(id.to_string()));
        }
        slot.task.status = TaskStatus::Done;
        slot.lease_until = None;
        slot.outcome = Some(outcome);
        Ok(slot.task.clone())
    }

    /// Look up a task without changing it.
    pub fn task(&self, id: &str) -> Option<&AnnotationTask> {
        parse_task_id(id).and_then(|seq| self.tasks.get(&seq)).map(|s| &s.task)
    }
}
