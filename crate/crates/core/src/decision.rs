//! Per-pair significance verdicts.
//!
//! Human ratings enter through the Dirichlet prior on `p`, paired ratings
//! (samples rated by both a human and the metric) estimate the confusion
//! columns, and only metric ratings without a human counterpart contribute
//! likelihood. Using a paired sample's metric rating as well would count it
//! twice.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{
    exceedance_fraction, oracle_posterior, sample_dirichlet, sample_posterior_joint, PosteriorSampleSet,
    SamplerConfig, SamplerDiagnostics,
};
use crate::types::{
    confusion_counts, counts_from_ratings, ConfusionCounts, CountTriple, PreferenceOutcome, PreferenceRecord,
    ProbabilityTriple, RatingSource, SystemPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    /// Significance level; a pair is decided when the exceedance fraction
    /// leaves `[gamma / 2, 1 - gamma / 2]`.
    pub gamma: f64,
    pub sampler: SamplerConfig,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        DecisionConfig {
            gamma: 0.05,
            sampler: SamplerConfig::default(),
        }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        self.sampler.validate()
    }

    pub fn with_seed(self, seed: u64) -> Self {
        DecisionConfig {
            sampler: self.sampler.with_seed(seed),
            ..self
        }
    }
}

/// Ratings of one system pair, split by which raters saw each sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairEvidence {
    pub human_only: Vec<PreferenceOutcome>,
    /// `(metric, human)` outcomes of samples rated by both.
    pub paired: Vec<(PreferenceOutcome, PreferenceOutcome)>,
    pub metric_only: Vec<PreferenceOutcome>,
}

impl PairEvidence {
    /// Partition records of one pair by sample id. Outcomes are oriented to
    /// `pair`; records of other pairs are rejected, as are two ratings of the
    /// same sample from the same source or ratings from more than one metric.
    pub fn from_records(pair: &SystemPair, records: &[PreferenceRecord]) -> Result<Self> {
        let mut human: BTreeMap<&str, PreferenceOutcome> = BTreeMap::new();
        let mut metric: BTreeMap<&str, PreferenceOutcome> = BTreeMap::new();
        let mut metric_name: Option<&str> = None;
        for r in records {
            r.validate()?;
            let outcome = r
                .outcome_for(pair)
                .ok_or_else(|| Error::invalid(format!("record {} does not belong to {pair}", r.sample_id)))?;
            let slot = match r.source {
                RatingSource::Human => &mut human,
                RatingSource::Metric => {
                    let name = r.metric_name.as_deref().unwrap_or_default();
                    match metric_name {
                        None => metric_name = Some(name),
                        Some(m) if m != name => {
                            return Err(Error::invalid(format!(
                                "ratings from several metrics ({m}, {name}); select one"
                            )))
                        }
                        Some(_) => {}
                    }
                    &mut metric
                }
            };
            if slot.insert(&r.sample_id, outcome).is_some() {
                return Err(Error::invalid(format!(
                    "sample {} rated twice by the same source for {pair}",
                    r.sample_id
                )));
            }
        }

        let mut evidence = PairEvidence::default();
        for (id, h) in &human {
            match metric.get(id) {
                Some(m) => evidence.paired.push((*m, *h)),
                None => evidence.human_only.push(*h),
            }
        }
        evidence.metric_only = metric
            .iter()
            .filter(|(id, _)| !human.contains_key(*id))
            .map(|(_, m)| *m)
            .collect();
        Ok(evidence)
    }

    pub fn counts(&self) -> EvidenceCounts {
        let confusion = confusion_counts(&self.paired);
        EvidenceCounts {
            human: counts_from_ratings(&self.human_only) + confusion.oracle_counts(),
            confusion,
            metric_only: counts_from_ratings(&self.metric_only),
        }
    }

    /// The same evidence seen from the other system's side.
    pub fn swapped(&self) -> Self {
        PairEvidence {
            human_only: self.human_only.iter().map(|o| o.flipped()).collect(),
            paired: self.paired.iter().map(|(m, h)| (m.flipped(), h.flipped())).collect(),
            metric_only: self.metric_only.iter().map(|o| o.flipped()).collect(),
        }
    }
}

/// Sufficient statistics of [`PairEvidence`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceCounts {
    pub confusion: ConfusionCounts,
    /// Every human rating, paired or not.
    pub human: CountTriple,
    /// Metric ratings of samples without a human rating.
    pub metric_only: CountTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDecision {
    pub converged: bool,
    pub diagnostics: SamplerDiagnostics,
    pub posterior_mean: ProbabilityTriple,
    pub theta: f64,
    pub verdict: PreferenceOutcome,
}

impl PairDecision {
    fn from_samples(samples: &PosteriorSampleSet, gamma: f64) -> Result<Self> {
        let theta = exceedance_fraction(samples)?;
        Ok(PairDecision {
            converged: samples.diagnostics.converged(),
            diagnostics: samples.diagnostics,
            posterior_mean: samples.mean(),
            theta,
            verdict: verdict_from_theta(theta, gamma),
        })
    }

    /// The decision seen from the other system's side.
    pub fn swapped(&self) -> Self {
        PairDecision {
            posterior_mean: self.posterior_mean.swapped(),
            theta: 1.0 - self.theta,
            verdict: self.verdict.flipped(),
            ..*self
        }
    }
}

/// WIN when `theta > 1 - gamma/2`, LOSS when `theta < gamma/2`, DRAW otherwise.
pub fn verdict_from_theta(theta: f64, gamma: f64) -> PreferenceOutcome {
    if theta > 1.0 - gamma / 2.0 {
        PreferenceOutcome::Win
    } else if theta < gamma / 2.0 {
        PreferenceOutcome::Loss
    } else {
        PreferenceOutcome::Draw
    }
}

/// Decide one pair from human, paired and metric-only ratings.
pub fn decide_pair(evidence: &PairEvidence, cfg: &DecisionConfig) -> Result<PairDecision> {
    decide_counts(&evidence.counts(), cfg)
}

/// [`decide_pair`] on sufficient statistics.
pub fn decide_counts(counts: &EvidenceCounts, cfg: &DecisionConfig) -> Result<PairDecision> {
    cfg.validate()?;
    if counts.human.total() == 0 && counts.metric_only.total() == 0 {
        return Err(Error::invalid("cannot decide a pair without any ratings"));
    }
    let prior = oracle_posterior(&counts.human);
    let samples = sample_posterior_joint(&prior, &counts.confusion, &counts.metric_only, &cfg.sampler)?;
    PairDecision::from_samples(&samples, cfg.gamma)
}

/// Decide from human ratings alone by sampling their Dirichlet posterior
/// directly (`chains * draws_per_chain` draws).
pub fn decide_pair_human_only(ratings: &[PreferenceOutcome], cfg: &DecisionConfig) -> Result<PairDecision> {
    decide_human_counts(&counts_from_ratings(ratings), cfg)
}

/// [`decide_pair_human_only`] on counts.
pub fn decide_human_counts(counts: &CountTriple, cfg: &DecisionConfig) -> Result<PairDecision> {
    cfg.validate()?;
    if counts.total() == 0 {
        return Err(Error::invalid("cannot decide a pair without any ratings"));
    }
    let samples = sample_dirichlet(&oracle_posterior(counts), cfg.sampler.total_draws(), cfg.sampler.seed)?;
    PairDecision::from_samples(&samples, cfg.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use PreferenceOutcome::{Draw, Loss, Win};

    fn cfg() -> DecisionConfig {
        DecisionConfig {
            gamma: 0.05,
            sampler: SamplerConfig {
                chains: 4,
                warmup_per_chain: 500,
                draws_per_chain: 2500,
                seed: 9,
            },
        }
    }

    #[test]
    fn thresholds_are_strict() {
        assert_eq!(verdict_from_theta(0.975, 0.05), Draw);
        assert_eq!(verdict_from_theta(0.9751, 0.05), Win);
        assert_eq!(verdict_from_theta(0.025, 0.05), Draw);
        assert_eq!(verdict_from_theta(0.0249, 0.05), Loss);
        assert_eq!(verdict_from_theta(0.5, 0.05), Draw);
        assert_eq!(verdict_from_theta(1.0, 0.05), Win);
        assert_eq!(verdict_from_theta(0.0, 0.05), Loss);
    }

    #[test]
    fn many_human_wins() {
        let d = decide_pair_human_only(&[Win; 20], &cfg()).unwrap();
        assert_eq!(d.verdict, Win);
        assert!(d.theta > 0.999);
        let d = decide_pair(
            &PairEvidence {
                human_only: vec![Win; 20],
                ..Default::default()
            },
            &cfg(),
        )
        .unwrap();
        assert_eq!(d.verdict, Win);
    }

    #[test]
    fn symmetric_humans_draw() {
        let mut r = vec![Win; 7];
        r.extend([Loss; 7]);
        r.extend([Draw; 3]);
        assert_eq!(decide_pair_human_only(&r, &cfg()).unwrap().verdict, Draw);
        assert_eq!(decide_pair_human_only(&[Draw; 30], &cfg()).unwrap().verdict, Draw);
        assert_eq!(decide_pair_human_only(&[Win; 100], &cfg()).unwrap().verdict, Win);
    }

    #[test]
    fn corrected_metric_evidence_dominates() {
        let mut human_only = vec![Win; 5];
        human_only.extend([Loss; 5]);
        let mut paired = vec![(Win, Win); 20];
        paired.extend(vec![(Draw, Draw); 10]);
        paired.extend(vec![(Loss, Loss); 20]);
        let e = PairEvidence {
            human_only,
            paired,
            metric_only: vec![Win; 500],
        };
        let d = decide_pair(&e, &cfg()).unwrap();
        assert_eq!(d.verdict, Win);
        assert_eq!(decide_pair(&e.swapped(), &cfg()).unwrap().verdict, Loss);
    }

    #[test]
    fn empty_or_invalid_rejected() {
        assert!(decide_pair(&PairEvidence::default(), &cfg()).is_err());
        assert!(decide_pair_human_only(&[], &cfg()).is_err());
        let bad = DecisionConfig { gamma: 1.5, ..cfg() };
        assert!(decide_pair_human_only(&[Win], &bad).is_err());
        let bad = DecisionConfig { gamma: 0.0, ..cfg() };
        assert!(decide_pair_human_only(&[Win], &bad).is_err());
    }

    #[test]
    fn metric_only_mode_runs() {
        let e = PairEvidence {
            metric_only: vec![Win, Win, Loss],
            ..Default::default()
        };
        let d = decide_pair(&e, &cfg()).unwrap();
        assert_eq!(d.verdict, Draw);
    }

    #[test]
    fn partition_by_sample_id() {
        let pair = SystemPair::new("a", "b").unwrap();
        let rev = pair.reversed();
        let recs = vec![
            PreferenceRecord::human("s1", &pair, Win),
            PreferenceRecord::metric("s1", &pair, "bleu", Draw),
            PreferenceRecord::human("s2", &rev, Win),
            PreferenceRecord::metric("s3", &rev, "bleu", Win),
        ];
        let e = PairEvidence::from_records(&pair, &recs).unwrap();
        assert_eq!(e.paired, vec![(Draw, Win)]);
        assert_eq!(e.human_only, vec![Loss]);
        assert_eq!(e.metric_only, vec![Loss]);
        let c = e.counts();
        assert_eq!(c.human, CountTriple::new(1, 0, 1));
        assert_eq!(c.metric_only, CountTriple::new(0, 0, 1));

        let mut dup = recs.clone();
        dup.push(PreferenceRecord::human("s1", &rev, Loss));
        assert!(PairEvidence::from_records(&pair, &dup).is_err());

        let mut two_metrics = recs.clone();
        two_metrics.push(PreferenceRecord::metric("s9", &pair, "rouge", Win));
        assert!(PairEvidence::from_records(&pair, &two_metrics).is_err());

        let other = vec![PreferenceRecord::human("s1", &SystemPair::new("a", "c").unwrap(), Win)];
        assert!(PairEvidence::from_records(&pair, &other).is_err());
    }
}
