//! Conversion of scalar scores into preference outcomes.
//!
//! Automated metrics and Likert-style human ratings produce one real number
//! per (sample, system). Two systems are compared on a sample by the sign of
//! the score difference; human ratings from several annotators are averaged
//! first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PreferenceOutcome, PreferenceRecord, RatingSource, SystemId, SystemPair};

/// A scalar score assigned to one system's output on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarScoreRecord {
    /// Metric name for metric scores, annotator id for human scores.
    pub rater_id: String,
    pub rater_kind: RatingSource,
    pub sample_id: String,
    pub score: f64,
    pub system: SystemId,
}

impl ScalarScoreRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::invalid(format!(
                "score for sample '{}' system '{}' is not finite",
                self.sample_id, self.system
            )));
        }
        Ok(())
    }
}

/// Compare two scores. Differences no larger than `tie_threshold` are draws;
/// with a zero threshold only exactly equal scores draw.
pub fn derive_preference(score_a: f64, score_b: f64, tie_threshold: f64) -> Result<PreferenceOutcome> {
    if !score_a.is_finite() || !score_b.is_finite() {
        return Err(Error::invalid("scores must be finite"));
    }
    if !(tie_threshold >= 0.0) || !tie_threshold.is_finite() {
        return Err(Error::invalid(format!(
            "tie threshold must be a finite non-negative number, got {tie_threshold}"
        )));
    }
    Ok(if score_a - score_b > tie_threshold {
        PreferenceOutcome::Win
    } else if score_b - score_a > tie_threshold {
        PreferenceOutcome::Loss
    } else {
        PreferenceOutcome::Draw
    })
}

fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("cannot average an empty score list"));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Average each side's scores (e.g. several annotators) and compare the means.
pub fn average_then_compare(
    scores_a: &[f64],
    scores_b: &[f64],
    tie_threshold: f64,
) -> Result<PreferenceOutcome> {
    derive_preference(mean(scores_a)?, mean(scores_b)?, tie_threshold)
}

/// Turn scalar score records into preference records for every pair in
/// `pairs`.
///
/// Scores are grouped by rater: each metric (by `rater_id`) yields its own
/// preference records, while all human annotators' scores for a
/// (sample, system) are averaged into one human preference. A pair only gets
/// a record for samples on which both systems were scored.
pub fn preferences_from_scores(
    scores: &[ScalarScoreRecord],
    pairs: &[SystemPair],
    tie_threshold: f64,
) -> Result<Vec<PreferenceRecord>> {
    // (rater group, sample) -> system -> scores
    type Key = (Option<String>, String);
    let mut grouped: BTreeMap<Key, BTreeMap<SystemId, Vec<f64>>> = BTreeMap::new();
    for s in scores {
        s.validate()?;
        let group = match s.rater_kind {
            RatingSource::Metric => Some(s.rater_id.clone()),
            RatingSource::Human => None,
        };
        grouped
            .entry((group, s.sample_id.clone()))
            .or_default()
            .entry(s.system.clone())
            .or_default()
            .push(s.score);
    }

    let mut out = Vec::new();
    for ((metric, sample_id), by_system) in &grouped {
        for pair in pairs {
            let (Some(a), Some(b)) = (by_system.get(&pair.first), by_system.get(&pair.second))
            else {
                continue;
            };
            let outcome = average_then_compare(a, b, tie_threshold)?;
            out.push(match metric {
                Some(name) => PreferenceRecord::metric(sample_id.clone(), pair, name.clone(), outcome),
                None => PreferenceRecord::human(sample_id.clone(), pair, outcome),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PreferenceOutcome::*;

    #[test]
    fn derived_comparison_cases() {
        assert_eq!(derive_preference(0.7, 0.7, 0.0).unwrap(), Draw);
        assert_eq!(derive_preference(0.71, 0.70, 0.0).unwrap(), Win);
        assert_eq!(derive_preference(0.71, 0.70, 0.05).unwrap(), Draw);
        assert_eq!(derive_preference(0.2, 0.9, 0.05).unwrap(), Loss);
        assert!(derive_preference(0.2, 0.9, -0.1).is_err());
        assert!(derive_preference(f64::NAN, 0.9, 0.0).is_err());
    }

    #[test]
    fn averaged_cases() {
        assert_eq!(average_then_compare(&[4.0, 4.0, 4.0], &[4.0, 4.0, 4.0], 0.0).unwrap(), Draw);
        assert_eq!(average_then_compare(&[5.0, 4.0, 3.0], &[2.0, 2.0, 2.0], 0.0).unwrap(), Win);
        // Both means are 10/3; the sums are identical so the means are bitwise equal.
        assert_eq!(average_then_compare(&[3.0, 3.0, 4.0], &[3.0, 4.0, 3.0], 0.0).unwrap(), Draw);
        assert!(average_then_compare(&[], &[1.0], 0.0).is_err());
    }

    #[test]
    fn grouping_averages_annotators() {
        let rec = |rater: &str, kind, sample: &str, system: &str, score| ScalarScoreRecord {
            rater_id: rater.into(),
            rater_kind: kind,
            sample_id: sample.into(),
            score,
            system: SystemId::new(system),
        };
        let scores = vec![
            rec("h1", RatingSource::Human, "s1", "a", 5.0),
            rec("h2", RatingSource::Human, "s1", "a", 4.0),
            rec("h3", RatingSource::Human, "s1", "a", 3.0),
            rec("h1", RatingSource::Human, "s1", "b", 2.0),
            rec("h2", RatingSource::Human, "s1", "b", 2.0),
            rec("h3", RatingSource::Human, "s1", "b", 2.0),
            rec("rouge", RatingSource::Metric, "s1", "a", 0.1),
            rec("rouge", RatingSource::Metric, "s1", "b", 0.3),
            rec("rouge", RatingSource::Metric, "s2", "a", 0.3),
        ];
        let pair = SystemPair::new("a", "b").unwrap();
        let prefs = preferences_from_scores(&scores, &[pair], 0.0).unwrap();
        assert_eq!(prefs.len(), 2);
        let human = prefs.iter().find(|r| r.source == RatingSource::Human).unwrap();
        assert_eq!(human.outcome, Win);
        let metric = prefs.iter().find(|r| r.source == RatingSource::Metric).unwrap();
        assert_eq!(metric.outcome, Loss);
        assert_eq!(metric.metric_name.as_deref(), Some("rouge"));
    }

    proptest! {
        #[test]
        fn antisymmetric(a in -1e6f64..1e6, b in -1e6f64..1e6, t in 0.0f64..10.0) {
            let ab = derive_preference(a, b, t).unwrap();
            let ba = derive_preference(b, a, t).unwrap();
            prop_assert_eq!(ab, ba.flipped());
        }

        #[test]
        fn monotone_in_first_score(a in -1e3f64..1e3, d in 0.0f64..1e3, b in -1e3f64..1e3, t in 0.0f64..5.0) {
            let lo = derive_preference(a, b, t).unwrap();
            let hi = derive_preference(a + d, b, t).unwrap();
            // Win < Draw < Loss in index order, so a higher score never increases the index.
            prop_assert!(hi.index() <= lo.index());
        }
    }
}
