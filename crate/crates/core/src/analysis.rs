//! Comparison of automated verdicts against a human reference: error-type
//! rates, a naive sign-test baseline, KL divergence between outcome
//! distributions and budget/quality curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::decision::{decide_human_counts, DecisionConfig};
use crate::error::{Error, Result};
use crate::protocol::{run_protocol, PairRecord, ProtocolConfig, ReplayPool};
use crate::types::{counts_from_ratings, CountTriple, PreferenceOutcome, PreferenceRecord, ProbabilityTriple, SystemId};

/// Pseudo-probability added to every cell before a KL divergence is taken.
pub const KLD_SMOOTHING: f64 = 1e-6;

/// How an automated verdict relates to the human reference verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    /// Both significant, same direction.
    CorrectSig,
    /// Neither significant.
    CorrectNosig,
    /// Both significant, opposite directions.
    Inversion,
    /// Human significant, automated not.
    Omission,
    /// Automated significant, human not.
    Insertion,
}

pub fn classify_outcome(human: PreferenceOutcome, automated: PreferenceOutcome) -> ErrorType {
    use PreferenceOutcome::Draw;
    match (human, automated) {
        (Draw, Draw) => ErrorType::CorrectNosig,
        (Draw, _) => ErrorType::Insertion,
        (_, Draw) => ErrorType::Omission,
        (h, a) if h == a => ErrorType::CorrectSig,
        _ => ErrorType::Inversion,
    }
}

/// Two-sided exact binomial test of `win` against `loss` (draws ignored)
/// under a fair coin.
pub fn sign_test_p_value(counts: &CountTriple) -> f64 {
    let n = counts.win + counts.loss;
    if n == 0 {
        return 1.0;
    }
    let extreme = counts.win.max(counts.loss);
    let dist = Binomial::new(0.5, n).expect("0.5 is a valid probability");
    // P(X >= extreme) = sf(extreme - 1); extreme >= 1 since n >= 1.
    (2.0 * dist.sf(extreme - 1)).min(1.0)
}

/// Decide a pair from metric counts alone with the sign test.
pub fn naive_decision(metric_counts: &CountTriple, gamma: f64) -> PreferenceOutcome {
    if sign_test_p_value(metric_counts) >= gamma || metric_counts.win == metric_counts.loss {
        PreferenceOutcome::Draw
    } else if metric_counts.win > metric_counts.loss {
        PreferenceOutcome::Win
    } else {
        PreferenceOutcome::Loss
    }
}

/// `KL(p || q)` in nats, with `0 ln 0 = 0`. Fails when `q` is zero where `p`
/// is not; see [`smoothed`].
pub fn kld(p: &ProbabilityTriple, q: &ProbabilityTriple) -> Result<f64> {
    let (p, q) = (p.as_array(), q.as_array());
    let mut acc = 0.0;
    for c in 0..3 {
        if p[c] == 0.0 {
            continue;
        }
        if q[c] == 0.0 {
            return Err(Error::invalid("divergence undefined: reference has zero mass where the estimate does not"));
        }
        acc += p[c] * (p[c] / q[c]).ln();
    }
    Ok(acc.max(0.0))
}

/// Add `eps` to every component and renormalize.
pub fn smoothed(p: &ProbabilityTriple, eps: f64) -> ProbabilityTriple {
    ProbabilityTriple::from_normalized(p.as_array().map(|x| x + eps))
}

/// Arithmetic mean over pairs of `KL(protocol || human)`, after smoothing
/// both sides with `eps` (0 disables smoothing).
pub fn mean_pairwise_kld(
    protocol: &BTreeMap<String, ProbabilityTriple>,
    human: &BTreeMap<String, ProbabilityTriple>,
    eps: f64,
) -> Result<f64> {
    if protocol.len() != human.len() || !protocol.keys().all(|k| human.contains_key(k)) {
        return Err(Error::invalid("protocol and human distributions cover different pairs"));
    }
    if protocol.is_empty() {
        return Err(Error::invalid("no pairs to compare"));
    }
    let mut total = 0.0;
    for (k, p) in protocol {
        total += kld(&smoothed(p, eps), &smoothed(&human[k], eps))?;
    }
    Ok(total / protocol.len() as f64)
}

/// Posterior mode of the human outcome distribution under a uniform prior,
/// i.e. normalized counts; uniform when there are no ratings.
pub fn human_distribution(counts: &CountTriple) -> ProbabilityTriple {
    counts.frequencies().unwrap_or_else(ProbabilityTriple::uniform)
}

/// Posterior mean of the pair's latest decision; uniform (the prior mean)
/// when the pair was never decided.
pub fn protocol_distribution(record: &PairRecord) -> ProbabilityTriple {
    record
        .decision
        .map_or_else(ProbabilityTriple::uniform, |d| d.posterior_mean)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairComparison {
    pub automated: PreferenceOutcome,
    pub error: ErrorType,
    pub human: PreferenceOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// `correct_sig + correct_nosig`.
    pub correct: f64,
    pub correct_nosig: f64,
    pub correct_sig: f64,
    pub insertion: f64,
    pub inversion: f64,
    pub omission: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Human annotations used divided by those available.
    pub annotation_fraction: Option<f64>,
    pub mean_kld: Option<f64>,
    pub per_pair: BTreeMap<String, PairComparison>,
    pub rates: ErrorRates,
}

/// Outcome distributions for the KL column of a report.
#[derive(Debug, Clone, Copy)]
pub struct DistributionPair<'a> {
    pub protocol: &'a BTreeMap<String, ProbabilityTriple>,
    pub human: &'a BTreeMap<String, ProbabilityTriple>,
}

/// Tabulate automated verdicts against the human reference.
pub fn build_report(
    human_reference: &BTreeMap<String, PreferenceOutcome>,
    automated: &BTreeMap<String, PreferenceOutcome>,
    dists: Option<DistributionPair<'_>>,
    annotations: Option<(u64, u64)>,
) -> Result<EvaluationReport> {
    if human_reference.len() != automated.len() || !human_reference.keys().all(|k| automated.contains_key(k)) {
        return Err(Error::invalid("reference and automated verdicts cover different pairs"));
    }
    if human_reference.is_empty() {
        return Err(Error::invalid("no pairs to compare"));
    }
    let mut per_pair = BTreeMap::new();
    let mut tally: BTreeMap<ErrorType, usize> = BTreeMap::new();
    for (k, h) in human_reference {
        let a = automated[k];
        let error = classify_outcome(*h, a);
        *tally.entry(error).or_default() += 1;
        per_pair.insert(
            k.clone(),
            PairComparison {
                automated: a,
                error,
                human: *h,
            },
        );
    }
    let n = human_reference.len() as f64;
    let rate = |e| tally.get(&e).copied().unwrap_or(0) as f64 / n;
    let rates = ErrorRates {
        correct: rate(ErrorType::CorrectSig) + rate(ErrorType::CorrectNosig),
        correct_nosig: rate(ErrorType::CorrectNosig),
        correct_sig: rate(ErrorType::CorrectSig),
        insertion: rate(ErrorType::Insertion),
        inversion: rate(ErrorType::Inversion),
        omission: rate(ErrorType::Omission),
    };
    let mean_kld = dists
        .map(|d| mean_pairwise_kld(d.protocol, d.human, KLD_SMOOTHING))
        .transpose()?;
    let annotation_fraction = match annotations {
        Some((_, 0)) => return Err(Error::invalid("no human annotations available")),
        Some((used, available)) => Some(used as f64 / available as f64),
        None => None,
    };
    Ok(EvaluationReport {
        annotation_fraction,
        mean_kld,
        per_pair,
        rates,
    })
}

/// Plain-text table: Cor. / Inv. / Omi. / Ins. / KLD / Ann.
pub fn format_report_table(rows: &[(&str, &EvaluationReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
        "", "Cor.", "Inv.", "Omi.", "Ins.", "KLD", "Ann."
    );
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6}  {:>6}",
            name,
            r.rates.correct,
            r.rates.inversion,
            r.rates.omission,
            r.rates.insertion,
            opt(r.mean_kld),
            opt(r.annotation_fraction),
        );
    }
    out
}

/// Reference verdicts from every available human rating of each pair.
pub fn human_reference(
    systems: &[SystemId],
    human_records: &[PreferenceRecord],
    cfg: &DecisionConfig,
) -> Result<BTreeMap<String, (PreferenceOutcome, CountTriple)>> {
    let pairs = crate::protocol::system_pairs(systems)?;
    let mut out = BTreeMap::new();
    for pair in pairs {
        let outcomes: Vec<PreferenceOutcome> = human_records
            .iter()
            .filter(|r| r.source == crate::types::RatingSource::Human)
            .filter_map(|r| r.outcome_for(&pair))
            .collect();
        let counts = counts_from_ratings(&outcomes);
        let key = pair.key();
        let verdict = if counts.total() == 0 {
            PreferenceOutcome::Draw
        } else {
            let seed = crate::seed::derive_seed(cfg.sampler.seed, &format!("reference:{key}"));
            decide_human_counts(&counts, &cfg.with_seed(seed))?.verdict
        };
        out.insert(key, (verdict, counts));
    }
    Ok(out)
}

/// Inputs shared by every point of a budget curve.
#[derive(Debug, Clone)]
pub struct CurveCampaign {
    pub systems: Vec<SystemId>,
    pub metric: Vec<PreferenceRecord>,
    /// The full human pool; the protocol draws from it in file order.
    pub pool: ReplayPool,
    pub config: ProtocolConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub annotation_fraction: f64,
    pub budget: u64,
    pub budget_fraction: f64,
    pub mean_kld: f64,
}

/// One protocol run per budget, each compared against the distribution of
/// the full human pool.
pub fn budget_curve(campaign: &CurveCampaign, budgets: &[u64]) -> Result<Vec<CurvePoint>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("budgets must be ascending"));
    }
    let pool_records: Vec<PreferenceRecord> = campaign.pool.records().cloned().collect();
    let available = pool_records.len() as u64;
    if available == 0 {
        return Err(Error::invalid("the human pool is empty"));
    }
    let pairs = crate::protocol::system_pairs(&campaign.systems)?;
    let human: BTreeMap<String, ProbabilityTriple> = pairs
        .iter()
        .map(|p| {
            let outcomes: Vec<_> = pool_records.iter().filter_map(|r| r.outcome_for(p)).collect();
            (p.key(), human_distribution(&counts_from_ratings(&outcomes)))
        })
        .collect();

    let mut out = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let cfg = ProtocolConfig { budget, ..campaign.config };
        let mut pool = campaign.pool.clone();
        let result = run_protocol(&campaign.systems, &campaign.metric, &mut pool, &cfg)?;
        let protocol: BTreeMap<String, ProbabilityTriple> = result
            .pairs
            .iter()
            .map(|(k, r)| (k.clone(), protocol_distribution(r)))
            .collect();
        out.push(CurvePoint {
            annotation_fraction: result.total_annotations as f64 / available as f64,
            budget,
            budget_fraction: budget as f64 / available as f64,
            mean_kld: mean_pairwise_kld(&protocol, &human, KLD_SMOOTHING)?,
        });
    }
    Ok(out)
}

pub fn format_curve_table(points: &[CurvePoint]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>8}  {:>8}  {:>8}  {:>8}", "budget", "fraction", "KLD", "Ann.");
    for p in points {
        let _ = writeln!(
            out,
            "{:>8}  {:>8.3}  {:>8.4}  {:>8.3}",
            p.budget, p.budget_fraction, p.mean_kld, p.annotation_fraction
        );
    }
    out
}
