//! Synthetic rating campaigns: oracle labels drawn from a known win/draw/loss
//! distribution, metric labels obtained by passing each oracle label through a
//! fixed mixture matrix.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::{counts_from_ratings, MixtureMatrix, PreferenceOutcome, PreferenceRecord, ProbabilityTriple, SystemId, SystemPair};

/// Mixture matrix of the simulated "ideal" metric, rows = metric outcome.
pub const MU_SIM: MixtureMatrix = MixtureMatrix {
    cells: [[0.8, 0.25, 0.1], [0.1, 0.5, 0.1], [0.1, 0.25, 0.8]],
};

fn draw<R: Rng>(rng: &mut R, p: &[f64; 3]) -> PreferenceOutcome {
    let u: f64 = rng.random();
    if u < p[0] {
        PreferenceOutcome::Win
    } else if u < p[0] + p[1] {
        PreferenceOutcome::Draw
    } else {
        PreferenceOutcome::Loss
    }
}

/// `n` i.i.d. outcomes from `p`.
pub fn simulate_oracle_ratings(p: &ProbabilityTriple, n: usize, seed: u64) -> Result<Vec<PreferenceOutcome>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = p.as_array();
    Ok((0..n).map(|_| draw(&mut rng, &probs)).collect())
}

/// Replace each oracle label by a draw from the mixture column of that label.
pub fn corrupt_ratings(oracle: &[PreferenceOutcome], mu: &MixtureMatrix, seed: u64) -> Result<Vec<PreferenceOutcome>> {
    mu.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = PreferenceOutcome::ALL.map(|o| mu.column(o.index()));
    Ok(oracle.iter().map(|o| draw(&mut rng, &columns[o.index()])).collect())
}

/// What the labels behind metric ratings of samples without a human rating
/// are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTruth {
    /// The pair's true distribution.
    TrueRates,
    /// The outcome frequencies of the pair's human ratings, so that metric and
    /// human pool agree in expectation, as when an ideal metric is simulated
    /// from the win rates of an existing human evaluation.
    HumanRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCampaignSpec {
    /// Samples per pair that also get a human rating (the first ones).
    pub human_per_pair: usize,
    pub metric_name: String,
    pub metric_truth: MetricTruth,
    pub mu_true: MixtureMatrix,
    pub n_samples: usize,
    /// True outcome distribution per pair key (`first:second`), oriented from
    /// the first system's side. Every unordered pair of `systems` needs one.
    pub per_pair_true_p: BTreeMap<String, ProbabilityTriple>,
    pub seed: u64,
    pub systems: Vec<SystemId>,
}

impl SyntheticCampaignSpec {
    /// Systems `sys00, sys01, ...` on a quality ladder: system `i` has
    /// strength `exp(i * step)` and pair outcomes follow the Davidson tie
    /// model `win : draw : loss = s_a : tie * sqrt(s_a s_b) : s_b`.
    pub fn ladder(n_systems: usize, step: f64, tie: f64, n_samples: usize, mu_true: MixtureMatrix, seed: u64) -> Result<Self> {
        if n_systems < 2 {
            return Err(Error::invalid("a campaign needs at least two systems"));
        }
        if !(tie >= 0.0 && step.is_finite()) {
            return Err(Error::invalid("ladder step must be finite and tie weight non-negative"));
        }
        let systems: Vec<SystemId> = (0..n_systems).map(|i| SystemId::new(format!("sys{i:02}"))).collect();
        let mut per_pair_true_p = BTreeMap::new();
        for (i, j, pair) in canonical_pairs(&systems) {
            let (sa, sb) = ((i as f64 * step).exp(), (j as f64 * step).exp());
            let t = tie * (sa * sb).sqrt();
            let z = sa + sb + t;
            per_pair_true_p.insert(pair.key(), ProbabilityTriple::new(sa / z, t / z, sb / z)?);
        }
        Ok(SyntheticCampaignSpec {
            human_per_pair: n_samples,
            metric_name: "simulated".into(),
            metric_truth: MetricTruth::TrueRates,
            mu_true,
            n_samples,
            per_pair_true_p,
            seed,
            systems,
        })
    }

    /// Rate only the first `n` samples of each pair by humans and draw the
    /// remaining metric labels from the human outcome frequencies.
    pub fn with_human_pool(self, n: usize) -> Self {
        SyntheticCampaignSpec {
            human_per_pair: n,
            metric_truth: MetricTruth::HumanRates,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.len() < 2 {
            return Err(Error::invalid("a campaign needs at least two systems"));
        }
        if self.human_per_pair > self.n_samples {
            return Err(Error::invalid("more human-rated samples than samples"));
        }
        if self.metric_truth == MetricTruth::HumanRates && self.human_per_pair == 0 && self.n_samples > 0 {
            return Err(Error::invalid("metric labels from human rates need human ratings"));
        }
        self.mu_true.validate()?;
        for (_, _, pair) in canonical_pairs(&self.systems) {
            self.per_pair_true_p
                .get(&pair.key())
                .ok_or_else(|| Error::invalid(format!("no true distribution for {pair}")))?
                .validate()?;
        }
        Ok(())
    }
}

/// Generated ratings. Every sample has a metric record; the first
/// `human_per_pair` samples of each pair also have a human record with the
/// same sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub systems: Vec<SystemId>,
    pub human: Vec<PreferenceRecord>,
    pub metric: Vec<PreferenceRecord>,
}

/// Unordered pairs `(systems[i], systems[j])` with `i < j`, in lexicographic
/// index order.
pub fn canonical_pairs(systems: &[SystemId]) -> Vec<(usize, usize, SystemPair)> {
    let mut out = Vec::new();
    for i in 0..systems.len() {
        for j in i + 1..systems.len() {
            out.push((
                i,
                j,
                SystemPair {
                    first: systems[i].clone(),
                    second: systems[j].clone(),
                },
            ));
        }
    }
    out
}

pub fn generate_campaign(spec: &SyntheticCampaignSpec) -> Result<Campaign> {
    spec.validate()?;
    let per_pair: Vec<Result<(Vec<PreferenceRecord>, Vec<PreferenceRecord>)>> = canonical_pairs(&spec.systems)
        .into_par_iter()
        .map(|(_, _, pair)| {
            let key = pair.key();
            let p = &spec.per_pair_true_p[&key];
            let oracle_seed = derive_seed(spec.seed, &format!("oracle:{key}"));
            let labels = match spec.metric_truth {
                MetricTruth::TrueRates => simulate_oracle_ratings(p, spec.n_samples, oracle_seed)?,
                MetricTruth::HumanRates => {
                    let mut labels = simulate_oracle_ratings(p, spec.human_per_pair, oracle_seed)?;
                    let rates = counts_from_ratings(&labels)
                        .frequencies()
                        .unwrap_or_else(ProbabilityTriple::uniform);
                    let rest = spec.n_samples - spec.human_per_pair;
                    labels.extend(simulate_oracle_ratings(&rates, rest, derive_seed(spec.seed, &format!("truth:{key}")))?);
                    labels
                }
            };
            let metric = corrupt_ratings(&labels, &spec.mu_true, derive_seed(spec.seed, &format!("metric:{key}")))?;
            let mut h = Vec::with_capacity(spec.human_per_pair);
            let mut m = Vec::with_capacity(labels.len());
            for (i, (o, c)) in labels.into_iter().zip(metric).enumerate() {
                let id = format!("{key}/{i}");
                m.push(PreferenceRecord::metric(id.clone(), &pair, spec.metric_name.clone(), c));
                if i < spec.human_per_pair {
                    h.push(PreferenceRecord::human(id, &pair, o));
                }
            }
            Ok((h, m))
        })
        .collect();
    let mut campaign = Campaign {
        systems: spec.systems.clone(),
        human: Vec::new(),
        metric: Vec::new(),
    };
    for r in per_pair {
        let (h, m) = r?;
        campaign.human.extend(h);
        campaign.metric.extend(m);
    }
    Ok(campaign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{confusion_counts, counts_from_ratings};

    #[test]
    fn mu_sim_is_column_stochastic() {
        MU_SIM.validate().unwrap();
        assert_eq!(MU_SIM.column(1), [0.25, 0.5, 0.25]);
    }

    #[test]
    fn oracle_ratings() {
        let all_win = simulate_oracle_ratings(&ProbabilityTriple::new(1.0, 0.0, 0.0).unwrap(), 500, 1).unwrap();
        assert!(all_win.iter().all(|o| *o == PreferenceOutcome::Win));

        let p = ProbabilityTriple::new(0.5, 0.3, 0.2).unwrap();
        let r = simulate_oracle_ratings(&p, 10_000, 2).unwrap();
        let f = counts_from_ratings(&r).frequencies().unwrap();
        assert!((f.win - 0.5).abs() < 0.02 && (f.draw - 0.3).abs() < 0.02);
        assert_eq!(r, simulate_oracle_ratings(&p, 10_000, 2).unwrap());
    }

    #[test]
    fn corruption() {
        let p = ProbabilityTriple::new(0.4, 0.3, 0.3).unwrap();
        let oracle = simulate_oracle_ratings(&p, 2000, 3).unwrap();
        assert_eq!(corrupt_ratings(&oracle, &MixtureMatrix::identity(), 4).unwrap(), oracle);

        let wins = vec![PreferenceOutcome::Win; 10_000];
        let out = corrupt_ratings(&wins, &MU_SIM, 5).unwrap();
        let f = counts_from_ratings(&out).frequencies().unwrap();
        assert!((f.win - 0.8).abs() < 0.02 && (f.draw - 0.1).abs() < 0.02 && (f.loss - 0.1).abs() < 0.02);
    }

    #[test]
    fn empirical_confusion_recovers_mixture() {
        let oracle = simulate_oracle_ratings(&ProbabilityTriple::uniform(), 50_000, 6).unwrap();
        let metric = corrupt_ratings(&oracle, &MU_SIM, 7).unwrap();
        let pairs: Vec<_> = metric.into_iter().zip(oracle).collect();
        let conf = confusion_counts(&pairs);
        for c in PreferenceOutcome::ALL {
            let col = conf.column(c).frequencies().unwrap().as_array();
            for r in 0..3 {
                assert!((col[r] - MU_SIM.cells[r][c.index()]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn campaign_cardinality_and_identity() {
        let mut spec = SyntheticCampaignSpec::ladder(3, 0.5, 1.0, 40, MU_SIM, 8).unwrap();
        let c = generate_campaign(&spec).unwrap();
        assert_eq!(c.human.len(), 3 * 40);
        assert_eq!(c.metric.len(), 3 * 40);
        assert_eq!(c.human[0].sample_id, "sys00:sys01/0");
        assert_eq!(c, generate_campaign(&spec).unwrap());

        spec.mu_true = MixtureMatrix::identity();
        let c = generate_campaign(&spec).unwrap();
        for (h, m) in c.human.iter().zip(&c.metric) {
            assert_eq!(h.sample_id, m.sample_id);
            assert_eq!(h.outcome, m.outcome);
        }
    }

    #[test]
    fn human_rate_campaign() {
        let spec = SyntheticCampaignSpec::ladder(2, 2.0, 0.0, 5000, MixtureMatrix::identity(), 9)
            .unwrap()
            .with_human_pool(20);
        let c = generate_campaign(&spec).unwrap();
        assert_eq!(c.human.len(), 20);
        assert_eq!(c.metric.len(), 5000);
        for (h, m) in c.human.iter().zip(&c.metric) {
            assert_eq!((&h.sample_id, h.outcome), (&m.sample_id, m.outcome));
        }
        // With an identity metric the metric frequencies follow the human
        // frequencies, not the true rates.
        let human = counts_from_ratings(c.human.iter().map(|r| &r.outcome)).frequencies().unwrap();
        let metric = counts_from_ratings(c.metric.iter().map(|r| &r.outcome)).frequencies().unwrap();
        assert!((human.win - metric.win).abs() < 0.02, "{human:?} {metric:?}");

        let mut bad = spec.clone();
        bad.human_per_pair = 5001;
        assert!(generate_campaign(&bad).is_err());
        bad.human_per_pair = 0;
        assert!(generate_campaign(&bad).is_err());
    }

    #[test]
    fn ladder_probabilities() {
        let spec = SyntheticCampaignSpec::ladder(3, 0.0, 1.0, 1, MU_SIM, 0).unwrap();
        for p in spec.per_pair_true_p.values() {
            assert!((p.win - 1.0 / 3.0).abs() < 1e-12);
        }
        let spec = SyntheticCampaignSpec::ladder(3, 1.0, 0.0, 1, MU_SIM, 0).unwrap();
        let p = spec.per_pair_true_p["sys00:sys02"];
        assert!((p.loss - 2f64.exp() / (1.0 + 2f64.exp())).abs() < 1e-12 && p.draw == 0.0);
        let mut missing = spec.clone();
        missing.per_pair_true_p.remove("sys00:sys01");
        assert!(generate_campaign(&missing).is_err());
    }
}
