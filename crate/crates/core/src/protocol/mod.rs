//! Budgeted annotation protocol over every pair of a system set.
//!
//! Each round asks the [`AnnotationSource`] for one batch of human ratings per
//! undecided pair, charges the budget for what was delivered, re-decides those
//! pairs and retires the ones with a significant verdict. The loop ends when
//! the budget is spent or nothing is left undecided; decided pairs are then
//! assembled into an [`OrderGraph`].
//!
//! The budget is checked once per round, so the last round can overshoot by
//! up to one batch per open pair. A pair whose source delivers less than a
//! full batch is frozen after that round's decision (status
//! [`PairStatus::Exhausted`]), which is reported separately from a DRAW that
//! was still open when the budget ran out ([`PairStatus::Undecided`]).
//!
//! [`Protocol`] exposes the loop one round at a time so a run can be saved
//! with [`Protocol::state`] and continued with [`Protocol::resume`].

mod order;
mod source;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{decide_counts, DecisionConfig, EvidenceCounts, PairDecision};
use crate::error::{Error, Result};
use crate::seed::derive_indexed_seed;
use crate::simulator::canonical_pairs;
use crate::types::{
    ConfusionCounts, CountTriple, PreferenceOutcome, PreferenceRecord, ProbabilityTriple, RatingSource, SystemId,
    SystemPair,
};

pub use order::{compute_partial_order, OrderEdge, OrderGraph, MAX_LISTED_CYCLES};
pub use source::{AnnotationSource, BatchRequest, ReplayPool, SimulatedOracle, SourceError};

/// Version of the serialized state and result layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Ratings requested per open pair per round.
    pub batch_size: usize,
    /// Total human ratings to spend.
    pub budget: u64,
    /// Decision settings; the sampler seed is the base of every per-pair seed.
    pub decision: DecisionConfig,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.decision.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    /// Still open, or open when the budget ran out.
    Undecided,
    /// Significant verdict reached; no further annotations.
    Decided,
    /// The source ran out of ratings before a significant verdict.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub annotations_used: u64,
    pub decided_round: Option<u64>,
    /// Latest decision; `None` if the pair never received a rating.
    pub decision: Option<PairDecision>,
    pub evidence: EvidenceCounts,
    /// Collected human ratings by sample id, oriented to `pair`.
    pub human_ratings: BTreeMap<String, PreferenceOutcome>,
    pub pair: SystemPair,
    pub status: PairStatus,
}

/// State after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    pub budget_remaining: i64,
    /// Ratings delivered this round, per pair key.
    pub collected: BTreeMap<String, u64>,
    /// Posterior means of the pairs decided this round.
    pub posterior_means: BTreeMap<String, ProbabilityTriple>,
    pub round: u64,
    /// Pairs still open after this round.
    pub undecided: Vec<String>,
}

/// Everything needed to continue a run, apart from the metric ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolState {
    pub budget_remaining: i64,
    pub config: ProtocolConfig,
    pub format_version: u32,
    pub pairs: BTreeMap<String, PairRecord>,
    pub round: u64,
    pub systems: Vec<SystemId>,
    pub trace: Vec<RoundSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub budget_remaining: i64,
    pub config: ProtocolConfig,
    pub format_version: u32,
    /// Per pair key (`first:second`, in system-list order).
    pub pairs: BTreeMap<String, PairRecord>,
    pub partial_order: OrderGraph,
    pub rounds: u64,
    pub systems: Vec<SystemId>,
    pub total_annotations: u64,
    pub trace: Vec<RoundSnapshot>,
}

impl ProtocolResult {
    pub fn decisions(&self) -> BTreeMap<String, Option<PairDecision>> {
        self.pairs.iter().map(|(k, p)| (k.clone(), p.decision)).collect()
    }

    pub fn annotations_used(&self) -> BTreeMap<String, u64> {
        self.pairs.iter().map(|(k, p)| (k.clone(), p.annotations_used)).collect()
    }

    /// Final verdict per pair, DRAW for pairs that never reached significance.
    pub fn verdicts(&self) -> BTreeMap<String, PreferenceOutcome> {
        self.pairs
            .iter()
            .map(|(k, p)| {
                let v = match p.status {
                    PairStatus::Decided => p.decision.map_or(PreferenceOutcome::Draw, |d| d.verdict),
                    _ => PreferenceOutcome::Draw,
                };
                (k.clone(), v)
            })
            .collect()
    }

    pub fn undecided(&self) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|(_, p)| p.status != PairStatus::Decided)
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// Metric ratings per pair key, oriented to the canonical pair.
type MetricByPair = BTreeMap<String, BTreeMap<String, PreferenceOutcome>>;

/// Canonical pairs of `systems` after checking the list.
pub fn system_pairs(systems: &[SystemId]) -> Result<Vec<SystemPair>> {
    if systems.len() < 2 {
        return Err(Error::invalid("the protocol needs at least two systems"));
    }
    let unique: BTreeSet<&SystemId> = systems.iter().collect();
    if unique.len() != systems.len() {
        return Err(Error::invalid("system list contains duplicates"));
    }
    Ok(canonical_pairs(systems).into_iter().map(|(_, _, p)| p).collect())
}

fn group_metric(pairs: &[SystemPair], records: &[PreferenceRecord]) -> Result<MetricByPair> {
    let mut lookup: BTreeMap<(&SystemId, &SystemId), &SystemPair> = BTreeMap::new();
    let mut out = MetricByPair::new();
    for p in pairs {
        lookup.insert((&p.first, &p.second), p);
        lookup.insert((&p.second, &p.first), p);
        out.insert(p.key(), BTreeMap::new());
    }
    let mut metric_name: Option<&str> = None;
    for r in records {
        r.validate()?;
        if r.source != RatingSource::Metric {
            return Err(Error::invalid(format!("record '{}' is not a metric rating", r.sample_id)));
        }
        let name = r.metric_name.as_deref().unwrap_or_default();
        match metric_name {
            None => metric_name = Some(name),
            Some(m) if m != name => {
                return Err(Error::invalid(format!("ratings from several metrics ({m}, {name}); select one")))
            }
            Some(_) => {}
        }
        let pair = lookup.get(&(&r.system_a, &r.system_b)).ok_or_else(|| {
            Error::invalid(format!(
                "metric record '{}' names systems outside the system list ({} vs {})",
                r.sample_id, r.system_a, r.system_b
            ))
        })?;
        let outcome = r.outcome_for(pair).expect("looked up by its own systems");
        let slot = out.get_mut(&pair.key()).expect("every pair has a slot");
        if slot.insert(r.sample_id.clone(), outcome).is_some() {
            return Err(Error::invalid(format!(
                "sample '{}' has two metric ratings for {pair}",
                r.sample_id
            )));
        }
    }
    Ok(out)
}

/// Split a pair's ratings by sample id: human ratings of metric-rated samples
/// become paired and their metric rating leaves the metric-only counts.
fn evidence_counts(
    human: &BTreeMap<String, PreferenceOutcome>,
    metric: &BTreeMap<String, PreferenceOutcome>,
    metric_total: &CountTriple,
) -> EvidenceCounts {
    let mut confusion = ConfusionCounts::default();
    let mut human_counts = CountTriple::default();
    let mut metric_only = *metric_total;
    for (id, h) in human {
        human_counts.add(*h, 1);
        if let Some(m) = metric.get(id) {
            confusion.cells[m.index()][h.index()] += 1;
            match m {
                PreferenceOutcome::Win => metric_only.win -= 1,
                PreferenceOutcome::Draw => metric_only.draw -= 1,
                PreferenceOutcome::Loss => metric_only.loss -= 1,
            }
        }
    }
    EvidenceCounts {
        confusion,
        human: human_counts,
        metric_only,
    }
}

/// One protocol run, advanced a round at a time.
#[derive(Debug, Clone)]
pub struct Protocol {
    state: ProtocolState,
    metric: MetricByPair,
    metric_totals: BTreeMap<String, CountTriple>,
}

impl Protocol {
    /// Start a run. `metric_records` are the metric ratings of every pair,
    /// scored once up front; records of systems outside `systems` are rejected.
    pub fn new(systems: &[SystemId], metric_records: &[PreferenceRecord], config: ProtocolConfig) -> Result<Self> {
        config.validate()?;
        let pairs = system_pairs(systems)?;
        let budget = i64::try_from(config.budget).map_err(|_| Error::invalid("budget too large"))?;
        let records = pairs
            .into_iter()
            .map(|pair| {
                (
                    pair.key(),
                    PairRecord {
                        annotations_used: 0,
                        decided_round: None,
                        decision: None,
                        evidence: EvidenceCounts::default(),
                        human_ratings: BTreeMap::new(),
                        pair,
                        status: PairStatus::Undecided,
                    },
                )
            })
            .collect();
        let state = ProtocolState {
            budget_remaining: budget,
            config,
            format_version: FORMAT_VERSION,
            pairs: records,
            round: 0,
            systems: systems.to_vec(),
            trace: Vec::new(),
        };
        Self::resume(state, metric_records)
    }

    /// Continue from a saved state with the same metric ratings.
    pub fn resume(mut state: ProtocolState, metric_records: &[PreferenceRecord]) -> Result<Self> {
        if state.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported protocol state version {}",
                state.format_version
            )));
        }
        state.config.validate()?;
        let pairs = system_pairs(&state.systems)?;
        let keys: BTreeSet<String> = pairs.iter().map(|p| p.key()).collect();
        if keys.len() != state.pairs.len() || !state.pairs.keys().all(|k| keys.contains(k)) {
            return Err(Error::invalid("saved pairs do not match the system list"));
        }
        let metric = group_metric(&pairs, metric_records)?;
        let metric_totals: BTreeMap<String, CountTriple> = metric
            .iter()
            .map(|(k, m)| (k.clone(), crate::types::counts_from_ratings(m.values())))
            .collect();
        for (k, rec) in state.pairs.iter_mut() {
            rec.evidence = evidence_counts(&rec.human_ratings, &metric[k], &metric_totals[k]);
        }
        Ok(Protocol {
            state,
            metric,
            metric_totals,
        })
    }

    pub fn state(&self) -> &ProtocolState {
        &self.state
    }

    /// Whether another round would run.
    pub fn is_running(&self) -> bool {
        self.state.budget_remaining > 0 && self.open_pairs().next().is_some()
    }

    fn open_pairs(&self) -> impl Iterator<Item = &PairRecord> {
        self.state.pairs.values().filter(|p| p.status == PairStatus::Undecided)
    }

    /// Requests the next round would issue.
    pub fn next_requests(&self) -> Vec<BatchRequest> {
        let base = self.state.config.decision.sampler.seed;
        let round = self.state.round + 1;
        self.open_pairs()
            .map(|p| BatchRequest {
                pair: p.pair.clone(),
                count: self.state.config.batch_size,
                round,
                seen: p.human_ratings.keys().cloned().collect(),
                seed: derive_indexed_seed(base, &format!("collect:{}", p.pair.key()), round),
            })
            .collect()
    }

    /// Run one round. Returns whether another round would run. A source
    /// error leaves the state untouched so the round can be retried.
    pub fn step<S: AnnotationSource + ?Sized>(&mut self, source: &mut S) -> Result<bool> {
        if !self.is_running() {
            return Ok(false);
        }
        let requests = self.next_requests();
        let batches = source.collect_round(&requests)?;
        if batches.len() != requests.len() {
            return Err(SourceError::Invalid(format!(
                "expected {} batches, got {}",
                requests.len(),
                batches.len()
            ))
            .into());
        }
        let mut delivered = Vec::with_capacity(batches.len());
        for (req, batch) in requests.iter().zip(&batches) {
            delivered.push(validate_batch(req, batch)?);
        }

        let round = self.state.round + 1;
        let mut snapshot = RoundSnapshot {
            budget_remaining: 0,
            collected: BTreeMap::new(),
            posterior_means: BTreeMap::new(),
            round,
            undecided: Vec::new(),
        };
        let mut short = BTreeSet::new();
        for (req, ratings) in requests.iter().zip(delivered) {
            let key = req.pair.key();
            let n = ratings.len() as u64;
            if ratings.len() < req.count {
                short.insert(key.clone());
            }
            let rec = self.state.pairs.get_mut(&key).expect("requests come from state");
            rec.human_ratings.extend(ratings);
            rec.annotations_used += n;
            rec.evidence = evidence_counts(&rec.human_ratings, &self.metric[&key], &self.metric_totals[&key]);
            self.state.budget_remaining -= n as i64;
            snapshot.collected.insert(key, n);
        }

        let base = self.state.config.decision.sampler.seed;
        let decision_cfg = self.state.config.decision;
        let decisions: Vec<(String, Option<Result<PairDecision>>)> = requests
            .par_iter()
            .map(|req| {
                let key = req.pair.key();
                let evidence = &self.state.pairs[&key].evidence;
                // Pairs without a single human rating are not decided from
                // metric ratings alone.
                let decision = (evidence.human.total() > 0).then(|| {
                    let cfg = decision_cfg.with_seed(derive_indexed_seed(base, &key, round));
                    decide_counts(evidence, &cfg)
                });
                (key, decision)
            })
            .collect();

        for (key, decision) in decisions {
            let rec = self.state.pairs.get_mut(&key).expect("decided pairs come from state");
            if let Some(d) = decision.transpose()? {
                rec.decision = Some(d);
                snapshot.posterior_means.insert(key.clone(), d.posterior_mean);
                if d.verdict != PreferenceOutcome::Draw {
                    rec.status = PairStatus::Decided;
                    rec.decided_round = Some(round);
                    continue;
                }
            }
            if short.contains(&key) {
                rec.status = PairStatus::Exhausted;
            }
        }

        self.state.round = round;
        snapshot.budget_remaining = self.state.budget_remaining;
        snapshot.undecided = self.open_pairs().map(|p| p.pair.key()).collect();
        self.state.trace.push(snapshot);
        Ok(self.is_running())
    }

    /// Run rounds until the budget is spent or every pair is settled.
    pub fn run_to_end<S: AnnotationSource + ?Sized>(&mut self, source: &mut S) -> Result<()> {
        while self.step(source)? {}
        Ok(())
    }

    pub fn finish(self) -> Result<ProtocolResult> {
        let s = self.state;
        let verdicts: Vec<(SystemPair, PreferenceOutcome)> = s
            .pairs
            .values()
            .filter(|p| p.status == PairStatus::Decided)
            .filter_map(|p| p.decision.map(|d| (p.pair.clone(), d.verdict)))
            .collect();
        let partial_order = compute_partial_order(&s.systems, &verdicts)?;
        let total_annotations = s.pairs.values().map(|p| p.annotations_used).sum();
        Ok(ProtocolResult {
            budget_remaining: s.budget_remaining,
            config: s.config,
            format_version: s.format_version,
            pairs: s.pairs,
            partial_order,
            rounds: s.round,
            systems: s.systems,
            total_annotations,
            trace: s.trace,
        })
    }
}

/// Check a delivered batch against its request and orient it to the pair.
fn validate_batch(req: &BatchRequest, batch: &[PreferenceRecord]) -> Result<Vec<(String, PreferenceOutcome)>> {
    let invalid = |msg: String| -> Error { SourceError::Invalid(msg).into() };
    if batch.len() > req.count {
        return Err(invalid(format!(
            "{} ratings delivered for {} where {} were requested",
            batch.len(),
            req.pair,
            req.count
        )));
    }
    let mut ids = BTreeSet::new();
    let mut out = Vec::with_capacity(batch.len());
    for r in batch {
        r.validate().map_err(|e| invalid(e.to_string()))?;
        if r.source != RatingSource::Human {
            return Err(invalid(format!("rating '{}' is not a human rating", r.sample_id)));
        }
        let outcome = r
            .outcome_for(&req.pair)
            .ok_or_else(|| invalid(format!("rating '{}' does not belong to {}", r.sample_id, req.pair)))?;
        if req.seen.contains(&r.sample_id) || !ids.insert(r.sample_id.clone()) {
            return Err(invalid(format!("sample '{}' annotated twice for {}", r.sample_id, req.pair)));
        }
        out.push((r.sample_id.clone(), outcome));
    }
    Ok(out)
}

/// Run the whole protocol.
pub fn run_protocol<S: AnnotationSource + ?Sized>(
    systems: &[SystemId],
    metric_records: &[PreferenceRecord],
    source: &mut S,
    config: &ProtocolConfig,
) -> Result<ProtocolResult> {
    let mut protocol = Protocol::new(systems, metric_records, *config)?;
    protocol.run_to_end(source)?;
    protocol.finish()
}
