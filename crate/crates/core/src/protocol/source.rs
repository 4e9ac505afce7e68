use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::error::{Error, Result};
use crate::simulator::simulate_oracle_ratings;
use crate::types::{PreferenceRecord, ProbabilityTriple, RatingSource, SystemId, SystemPair};

/// Failure of an annotation source to deliver ratings.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("timed out waiting for annotations of {pair}")]
    Timeout { pair: String },
    #[error("annotation source unavailable: {0}")]
    Unavailable(String),
    #[error("annotation source returned invalid data: {0}")]
    Invalid(String),
}

/// One pair's share of a collection round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRequest {
    pub pair: SystemPair,
    pub count: usize,
    /// Protocol round the request belongs to, starting at 1.
    pub round: u64,
    /// Sample ids already annotated for this pair; must not be returned again.
    pub seen: BTreeSet<String>,
    /// Seed for sources that draw randomly.
    pub seed: u64,
}

/// Where human ratings come from.
///
/// A source returns at most `count` human records for the pair, none of them
/// with a sample id in `seen`. Returning fewer than `count` means the source
/// has nothing more for that pair; the protocol stops asking.
pub trait AnnotationSource {
    fn collect(&mut self, request: &BatchRequest) -> Result<Vec<PreferenceRecord>, SourceError>;

    /// Collect a whole round. Sources backed by people override this so that
    /// every pair's batch is open at the same time.
    fn collect_round(&mut self, requests: &[BatchRequest]) -> Result<Vec<Vec<PreferenceRecord>>, SourceError> {
        requests.iter().map(|r| self.collect(r)).collect()
    }
}

impl<S: AnnotationSource + ?Sized> AnnotationSource for &mut S {
    fn collect(&mut self, request: &BatchRequest) -> Result<Vec<PreferenceRecord>, SourceError> {
        (**self).collect(request)
    }

    fn collect_round(&mut self, requests: &[BatchRequest]) -> Result<Vec<Vec<PreferenceRecord>>, SourceError> {
        (**self).collect_round(requests)
    }
}

fn unordered_key(a: &SystemId, b: &SystemId) -> (SystemId, SystemId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Pre-recorded human ratings, dispensed in file order.
#[derive(Debug, Clone, Default)]
pub struct ReplayPool {
    pools: BTreeMap<(SystemId, SystemId), Vec<PreferenceRecord>>,
}

impl ReplayPool {
    /// Build from human records; metric records are rejected.
    pub fn new(records: impl IntoIterator<Item = PreferenceRecord>) -> Result<Self> {
        let mut pools: BTreeMap<_, Vec<PreferenceRecord>> = BTreeMap::new();
        let mut ids: BTreeSet<((SystemId, SystemId), String)> = BTreeSet::new();
        for r in records {
            r.validate()?;
            if r.source != RatingSource::Human {
                return Err(Error::invalid(format!(
                    "annotation pool record '{}' is not a human rating",
                    r.sample_id
                )));
            }
            let key = unordered_key(&r.system_a, &r.system_b);
            if !ids.insert((key.clone(), r.sample_id.clone())) {
                return Err(Error::invalid(format!(
                    "annotation pool rates sample '{}' of {} vs {} twice",
                    r.sample_id, key.0, key.1
                )));
            }
            pools.entry(key).or_default().push(r);
        }
        Ok(ReplayPool { pools })
    }

    /// Keep only the first `n` records of every pair.
    pub fn truncated(mut self, n: usize) -> Self {
        for v in self.pools.values_mut() {
            v.truncate(n);
        }
        self
    }

    /// Number of records available for a pair.
    pub fn available(&self, pair: &SystemPair) -> usize {
        self.pools
            .get(&unordered_key(&pair.first, &pair.second))
            .map_or(0, Vec::len)
    }

    /// Every record in the pool.
    pub fn records(&self) -> impl Iterator<Item = &PreferenceRecord> {
        self.pools.values().flatten()
    }
}

impl AnnotationSource for ReplayPool {
    fn collect(&mut self, request: &BatchRequest) -> Result<Vec<PreferenceRecord>, SourceError> {
        let key = unordered_key(&request.pair.first, &request.pair.second);
        Ok(self
            .pools
            .get(&key)
            .map(|pool| {
                pool.iter()
                    .filter(|r| !request.seen.contains(&r.sample_id))
                    .take(request.count)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default())
    }
}

/// Draws fresh ratings from configured true distributions.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    /// Keyed by pair key, oriented from the first system's side.
    probabilities: BTreeMap<String, ProbabilityTriple>,
    default: Option<ProbabilityTriple>,
    capacity: Option<usize>,
}

impl SimulatedOracle {
    /// Every pair uses `p` (oriented from whichever system is asked about first).
    pub fn uniform(p: ProbabilityTriple) -> Self {
        SimulatedOracle {
            probabilities: BTreeMap::new(),
            default: Some(p),
            capacity: None,
        }
    }

    /// Per-pair distributions keyed by [`SystemPair::key`].
    pub fn per_pair(probabilities: BTreeMap<String, ProbabilityTriple>) -> Self {
        SimulatedOracle {
            probabilities,
            default: None,
            capacity: None,
        }
    }

    /// Limit the number of ratings available per pair.
    pub fn with_capacity(self, capacity: usize) -> Self {
        SimulatedOracle {
            capacity: Some(capacity),
            ..self
        }
    }

    fn distribution(&self, pair: &SystemPair) -> Option<ProbabilityTriple> {
        if let Some(p) = self.probabilities.get(&pair.key()) {
            return Some(*p);
        }
        if let Some(p) = self.probabilities.get(&pair.reversed().key()) {
            return Some(p.swapped());
        }
        self.default
    }
}

impl AnnotationSource for SimulatedOracle {
    fn collect(&mut self, request: &BatchRequest) -> Result<Vec<PreferenceRecord>, SourceError> {
        let p = self
            .distribution(&request.pair)
            .ok_or_else(|| SourceError::Unavailable(format!("no simulated distribution for {}", request.pair)))?;
        let count = match self.capacity {
            Some(cap) => request.count.min(cap.saturating_sub(request.seen.len())),
            None => request.count,
        };
        let outcomes = simulate_oracle_ratings(&p, count, request.seed).map_err(|e| SourceError::Invalid(e.to_string()))?;
        let key = request.pair.key();
        let mut next = 0usize;
        let mut out = Vec::with_capacity(count);
        for o in outcomes {
            let id = loop {
                let id = format!("{key}/sim-{next}");
                next += 1;
                if !request.seen.contains(&id) {
                    break id;
                }
            };
            out.push(PreferenceRecord::human(id, &request.pair, o));
        }
        Ok(out)
    }
}
