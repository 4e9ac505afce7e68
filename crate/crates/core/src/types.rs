//! Value types shared by every stage of the pipeline: preference outcomes,
//! rating records, exact tallies, probability triples and the mixture matrix.
//!
//! Matrices are indexed `[metric_outcome][oracle_outcome]`, so each column of a
//! [`MixtureMatrix`] is the distribution of metric outcomes given one oracle
//! outcome.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for simplex sums and mixture-matrix column sums.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

// =============================================================================
// Outcomes and records
// =============================================================================

/// Result of comparing the output of system A against system B on one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PreferenceOutcome {
    #[serde(rename = ">")]
    Win,
    #[serde(rename = "=")]
    Draw,
    #[serde(rename = "<")]
    Loss,
}

impl PreferenceOutcome {
    /// All outcomes in index order.
    pub const ALL: [PreferenceOutcome; 3] = [Self::Win, Self::Draw, Self::Loss];

    pub fn index(self) -> usize {
        match self {
            Self::Win => 0,
            Self::Draw => 1,
            Self::Loss => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// The outcome seen from the other system's side.
    pub fn flipped(self) -> Self {
        match self {
            Self::Win => Self::Loss,
            Self::Draw => Self::Draw,
            Self::Loss => Self::Win,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Win => ">",
            Self::Draw => "=",
            Self::Loss => "<",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            ">" => Some(Self::Win),
            "=" => Some(Self::Draw),
            "<" => Some(Self::Loss),
            _ => None,
        }
    }
}

impl fmt::Display for PreferenceOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Opaque identifier of a generation system.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemId(pub String);

impl SystemId {
    pub fn new(id: impl Into<String>) -> Self {
        SystemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SystemId {
    fn from(s: &str) -> Self {
        SystemId(s.to_string())
    }
}

/// An ordered pair of distinct systems. Outcomes attached to a pair are always
/// read from the point of view of `first`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemPair {
    pub first: SystemId,
    pub second: SystemId,
}

impl SystemPair {
    pub fn new(first: impl Into<SystemId>, second: impl Into<SystemId>) -> Result<Self> {
        let (first, second) = (first.into(), second.into());
        if first == second {
            return Err(Error::invalid(format!("pair of identical systems '{first}'")));
        }
        Ok(SystemPair { first, second })
    }

    pub fn reversed(&self) -> Self {
        SystemPair {
            first: self.second.clone(),
            second: self.first.clone(),
        }
    }

    /// True when both pairs name the same two systems in either orientation.
    pub fn same_systems(&self, other: &SystemPair) -> bool {
        self == other || (self.first == other.second && self.second == other.first)
    }

    /// Stable textual key, used for seeds and sample ids.
    pub fn key(&self) -> String {
        format!("{}:{}", self.first, self.second)
    }
}

impl fmt::Display for SystemPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vs {}", self.first, self.second)
    }
}

/// Who produced a rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingSource {
    Human,
    Metric,
}

/// One sample-level preference rating of `system_a` against `system_b`.
///
/// Fields are declared in key order so that serialized records are canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_name: Option<String>,
    pub outcome: PreferenceOutcome,
    pub sample_id: String,
    pub source: RatingSource,
    pub system_a: SystemId,
    pub system_b: SystemId,
}

impl PreferenceRecord {
    pub fn human(
        sample_id: impl Into<String>,
        pair: &SystemPair,
        outcome: PreferenceOutcome,
    ) -> Self {
        PreferenceRecord {
            metric_name: None,
            outcome,
            sample_id: sample_id.into(),
            source: RatingSource::Human,
            system_a: pair.first.clone(),
            system_b: pair.second.clone(),
        }
    }

    pub fn metric(
        sample_id: impl Into<String>,
        pair: &SystemPair,
        metric: impl Into<String>,
        outcome: PreferenceOutcome,
    ) -> Self {
        PreferenceRecord {
            metric_name: Some(metric.into()),
            outcome,
            sample_id: sample_id.into(),
            source: RatingSource::Metric,
            system_a: pair.first.clone(),
            system_b: pair.second.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.system_a == self.system_b {
            return Err(Error::invalid(format!(
                "record '{}' compares system '{}' with itself",
                self.sample_id, self.system_a
            )));
        }
        match (self.source, &self.metric_name) {
            (RatingSource::Metric, None) => Err(Error::invalid(format!(
                "metric record '{}' has no metric_name",
                self.sample_id
            ))),
            (RatingSource::Human, Some(_)) => Err(Error::invalid(format!(
                "human record '{}' carries a metric_name",
                self.sample_id
            ))),
            _ => Ok(()),
        }
    }

    pub fn pair(&self) -> SystemPair {
        SystemPair {
            first: self.system_a.clone(),
            second: self.system_b.clone(),
        }
    }

    /// The outcome read from `pair.first`'s side, or `None` when the record
    /// concerns a different pair of systems.
    pub fn outcome_for(&self, pair: &SystemPair) -> Option<PreferenceOutcome> {
        if self.system_a == pair.first && self.system_b == pair.second {
            Some(self.outcome)
        } else if self.system_a == pair.second && self.system_b == pair.first {
            Some(self.outcome.flipped())
        } else {
            None
        }
    }
}

// =============================================================================
// Counts
// =============================================================================

/// Tallies of wins, draws and losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CountTriple {
    pub win: u64,
    pub draw: u64,
    pub loss: u64,
}

impl CountTriple {
    pub const fn new(win: u64, draw: u64, loss: u64) -> Self {
        CountTriple { win, draw, loss }
    }

    pub fn total(&self) -> u64 {
        self.win + self.draw + self.loss
    }

    pub fn get(&self, outcome: PreferenceOutcome) -> u64 {
        self.as_array()[outcome.index()]
    }

    pub fn add(&mut self, outcome: PreferenceOutcome, n: u64) {
        match outcome {
            PreferenceOutcome::Win => self.win += n,
            PreferenceOutcome::Draw => self.draw += n,
            PreferenceOutcome::Loss => self.loss += n,
        }
    }

    pub fn as_array(&self) -> [u64; 3] {
        [self.win, self.draw, self.loss]
    }

    pub fn from_array(c: [u64; 3]) -> Self {
        CountTriple::new(c[0], c[1], c[2])
    }

    /// Counts seen from the other system's side.
    pub fn swapped(&self) -> Self {
        CountTriple::new(self.loss, self.draw, self.win)
    }

    /// The count vector normalized to frequencies; `None` when empty.
    pub fn frequencies(&self) -> Option<ProbabilityTriple> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(ProbabilityTriple {
            win: self.win as f64 / n,
            draw: self.draw as f64 / n,
            loss: self.loss as f64 / n,
        })
    }
}

impl std::ops::Add for CountTriple {
    type Output = CountTriple;

    fn add(self, rhs: CountTriple) -> CountTriple {
        CountTriple::new(self.win + rhs.win, self.draw + rhs.draw, self.loss + rhs.loss)
    }
}

/// Tally the outcomes of a rating list.
pub fn counts_from_ratings<'a, I>(ratings: I) -> CountTriple
where
    I: IntoIterator<Item = &'a PreferenceOutcome>,
{
    let mut counts = CountTriple::default();
    for &r in ratings {
        counts.add(r, 1);
    }
    counts
}

/// Paired tallies `cells[metric][oracle]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub cells: [[u64; 3]; 3],
}

impl ConfusionCounts {
    pub fn get(&self, metric: PreferenceOutcome, oracle: PreferenceOutcome) -> u64 {
        self.cells[metric.index()][oracle.index()]
    }

    /// Metric-outcome tallies among samples whose oracle label is `oracle`.
    pub fn column(&self, oracle: PreferenceOutcome) -> CountTriple {
        let c = oracle.index();
        CountTriple::new(self.cells[0][c], self.cells[1][c], self.cells[2][c])
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// Oracle-label tallies (column sums).
    pub fn oracle_counts(&self) -> CountTriple {
        CountTriple::from_array([0, 1, 2].map(|c| (0..3).map(|r| self.cells[r][c]).sum()))
    }

    /// Metric-label tallies (row sums).
    pub fn metric_counts(&self) -> CountTriple {
        CountTriple::from_array([0, 1, 2].map(|r| self.cells[r].iter().sum()))
    }

    /// Confusion seen from the other system's side: both axes flip WIN/LOSS.
    pub fn swapped(&self) -> Self {
        let mut out = ConfusionCounts::default();
        for r in 0..3 {
            for c in 0..3 {
                out.cells[2 - r][2 - c] = self.cells[r][c];
            }
        }
        out
    }

    /// A diagonal confusion with `k` agreements per outcome.
    pub fn diagonal(k: u64) -> Self {
        let mut out = ConfusionCounts::default();
        for i in 0..3 {
            out.cells[i][i] = k;
        }
        out
    }
}

/// Tally `(metric, oracle)` label pairs.
pub fn confusion_counts<'a, I>(paired: I) -> ConfusionCounts
where
    I: IntoIterator<Item = &'a (PreferenceOutcome, PreferenceOutcome)>,
{
    let mut out = ConfusionCounts::default();
    for &(metric, oracle) in paired {
        out.cells[metric.index()][oracle.index()] += 1;
    }
    out
}

// =============================================================================
// Probabilities
// =============================================================================

/// Win/draw/loss probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTriple {
    pub win: f64,
    pub draw: f64,
    pub loss: f64,
}

impl ProbabilityTriple {
    pub fn new(win: f64, draw: f64, loss: f64) -> Result<Self> {
        let p = ProbabilityTriple { win, draw, loss };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform() -> Self {
        ProbabilityTriple {
            win: 1.0 / 3.0,
            draw: 1.0 / 3.0,
            loss: 1.0 / 3.0,
        }
    }

    pub fn from_array(p: [f64; 3]) -> Result<Self> {
        Self::new(p[0], p[1], p[2])
    }

    /// Build from a vector that is a distribution up to float noise; the result
    /// is renormalized so that it sums to one.
    pub(crate) fn from_normalized(p: [f64; 3]) -> Self {
        let s = p[0] + p[1] + p[2];
        ProbabilityTriple {
            win: p[0] / s,
            draw: p[1] / s,
            loss: p[2] / s,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.win, self.draw, self.loss]
    }

    pub fn get(&self, outcome: PreferenceOutcome) -> f64 {
        self.as_array()[outcome.index()]
    }

    pub fn swapped(&self) -> Self {
        ProbabilityTriple {
            win: self.loss,
            draw: self.draw,
            loss: self.win,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0 + SIMPLEX_TOLERANCE) {
            return Err(Error::invalid(format!(
                "probability triple {a:?} has a component outside [0, 1]"
            )));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!(
                "probability triple {a:?} sums to {s}, not 1"
            )));
        }
        Ok(())
    }
}

/// Column-stochastic matrix of confusion probabilities,
/// `cells[c][c'] = Pr(metric = c | oracle = c')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureMatrix {
    pub cells: [[f64; 3]; 3],
}

impl MixtureMatrix {
    pub fn new(cells: [[f64; 3]; 3]) -> Result<Self> {
        let mu = MixtureMatrix { cells };
        mu.validate()?;
        Ok(mu)
    }

    pub fn identity() -> Self {
        MixtureMatrix {
            cells: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Assemble a matrix from its three columns (oracle WIN, DRAW, LOSS).
    pub fn from_columns(cols: [[f64; 3]; 3]) -> Result<Self> {
        let mut cells = [[0.0; 3]; 3];
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                cells[r][c] = *v;
            }
        }
        Self::new(cells)
    }

    pub fn column(&self, oracle: usize) -> [f64; 3] {
        [self.cells[0][oracle], self.cells[1][oracle], self.cells[2][oracle]]
    }

    pub fn get(&self, metric: PreferenceOutcome, oracle: PreferenceOutcome) -> f64 {
        self.cells[metric.index()][oracle.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for c in 0..3 {
            let col = self.column(c);
            if col.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0 + SIMPLEX_TOLERANCE) {
                return Err(Error::invalid(format!(
                    "mixture column {c} = {col:?} has an entry outside [0, 1]"
                )));
            }
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::invalid(format!(
                    "mixture column {c} = {col:?} sums to {s}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Mixture seen from the other system's side.
    pub fn swapped(&self) -> Self {
        let mut cells = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                cells[2 - r][2 - c] = self.cells[r][c];
            }
        }
        MixtureMatrix { cells }
    }

    pub(crate) fn mul_vec(&self, p: &[f64; 3]) -> [f64; 3] {
        let m = &self.cells;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    pub(crate) fn determinant(&self) -> f64 {
        let m = &self.cells;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Solve `self · x = q` by Cramer's rule; `None` when (nearly) singular.
    pub(crate) fn solve(&self, q: &[f64; 3]) -> Option<[f64; 3]> {
        let det = self.determinant();
        if det.abs() < 1e-12 {
            return None;
        }
        let mut x = [0.0; 3];
        for (k, xk) in x.iter_mut().enumerate() {
            let mut m = *self;
            for r in 0..3 {
                m.cells[r][k] = q[r];
            }
            *xk = m.determinant() / det;
        }
        Some(x)
    }
}

/// Distribution of metric outcomes implied by true outcome probabilities `p`
/// and confusion probabilities `mu`: `p̂ = μ p`.
pub fn mixture_apply(mu: &MixtureMatrix, p: &ProbabilityTriple) -> Result<ProbabilityTriple> {
    mu.validate()?;
    p.validate()?;
    let q = mu.mul_vec(&p.as_array());
    // Column-stochasticity guarantees a distribution; clamp rounding residue.
    Ok(ProbabilityTriple::from_normalized(q.map(|x| x.max(0.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use PreferenceOutcome::*;

    #[test]
    fn counts_small_cases() {
        assert_eq!(counts_from_ratings(&[]), CountTriple::new(0, 0, 0));
        assert_eq!(counts_from_ratings(&[Win, Win, Draw, Loss]), CountTriple::new(2, 1, 1));
    }

    #[test]
    fn confusion_small_cases() {
        assert_eq!(confusion_counts(&[]), ConfusionCounts::default());

        let c = confusion_counts(&[(Loss, Draw)]);
        assert_eq!(c.get(Loss, Draw), 1);
        assert_eq!(c.total(), 1);

        let c = confusion_counts(&[(Win, Win), (Win, Win), (Draw, Win)]);
        assert_eq!(c.column(Win), CountTriple::new(2, 1, 0));
        assert_eq!(c.column(Draw), CountTriple::default());
        assert_eq!(c.column(Loss), CountTriple::default());
    }

    #[test]
    fn outcome_symbols_round_trip() {
        for o in PreferenceOutcome::ALL {
            assert_eq!(PreferenceOutcome::parse(o.symbol()), Some(o));
            assert_eq!(o.flipped().flipped(), o);
            assert_eq!(PreferenceOutcome::from_index(o.index()), o);
        }
        assert_eq!(PreferenceOutcome::parse("≥"), None);
        assert_eq!(serde_json::to_string(&Win).unwrap(), "\">\"");
    }

    #[test]
    fn record_validation() {
        let pair = SystemPair::new("a", "b").unwrap();
        assert!(PreferenceRecord::human("s", &pair, Win).validate().is_ok());
        assert!(PreferenceRecord::metric("s", &pair, "bleu", Win).validate().is_ok());

        let mut r = PreferenceRecord::human("s", &pair, Win);
        r.metric_name = Some("bleu".into());
        assert!(r.validate().is_err());

        let mut r = PreferenceRecord::metric("s", &pair, "bleu", Win);
        r.metric_name = None;
        assert!(r.validate().is_err());

        let mut r = PreferenceRecord::human("s", &pair, Win);
        r.system_b = r.system_a.clone();
        assert!(r.validate().is_err());
        assert!(SystemPair::new("a", "a").is_err());
    }

    #[test]
    fn record_orientation() {
        let pair = SystemPair::new("a", "b").unwrap();
        let r = PreferenceRecord::human("s", &pair, Win);
        assert_eq!(r.outcome_for(&pair), Some(Win));
        assert_eq!(r.outcome_for(&pair.reversed()), Some(Loss));
        assert_eq!(r.outcome_for(&SystemPair::new("a", "c").unwrap()), None);
    }

    #[test]
    fn mixture_apply_hand_products() {
        let p = ProbabilityTriple::new(0.2, 0.5, 0.3).unwrap();
        assert_eq!(mixture_apply(&MixtureMatrix::identity(), &p).unwrap(), p);

        let mu = MixtureMatrix::new([[0.8, 0.25, 0.1], [0.1, 0.5, 0.1], [0.1, 0.25, 0.8]]).unwrap();
        let q = mixture_apply(&mu, &ProbabilityTriple::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert!((q.win - 0.8).abs() < 1e-12 && (q.draw - 0.1).abs() < 1e-12);
        assert!((q.loss - 0.1).abs() < 1e-12);

        let third = 1.0 / 3.0;
        let q = mixture_apply(&mu, &ProbabilityTriple::new(third, third, 1.0 - 2.0 * third).unwrap())
            .unwrap();
        // (0.8 + 0.25 + 0.1) / 3, (0.1 + 0.5 + 0.1) / 3
        assert!((q.win - 1.15 / 3.0).abs() < 1e-9);
        assert!((q.draw - 0.7 / 3.0).abs() < 1e-9);
        assert!((q.loss - 1.15 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(ProbabilityTriple::new(0.5, 0.5, 0.5).is_err());
        assert!(ProbabilityTriple::new(-0.1, 0.6, 0.5).is_err());
        assert!(MixtureMatrix::new([[0.5, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        let bad = MixtureMatrix {
            cells: [[0.9, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        assert!(mixture_apply(&bad, &ProbabilityTriple::uniform()).is_err());
    }

    #[test]
    fn solve_inverts_mul() {
        let mu = MixtureMatrix::new([[0.8, 0.25, 0.1], [0.1, 0.5, 0.1], [0.1, 0.25, 0.8]]).unwrap();
        let p = [0.3, 0.2, 0.5];
        let q = mu.mul_vec(&p);
        let back = mu.solve(&q).unwrap();
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn swapped_confusion_keeps_agreement_on_diagonal() {
        let c = confusion_counts(&[(Win, Win), (Loss, Draw), (Draw, Win)]);
        let s = c.swapped();
        assert_eq!(s.get(Loss, Loss), 1);
        assert_eq!(s.get(Win, Draw), 1);
        assert_eq!(s.get(Draw, Loss), 1);
    }
}
