//! Posterior inference over the win/draw/loss probabilities of a system pair.
//!
//! Three levels of evidence are supported:
//!
//! * oracle (human) ratings only: the posterior is `Dir(n + 1)` and is sampled
//!   directly ([`oracle_posterior`], [`sample_dirichlet`]);
//! * metric ratings with a known mixture matrix
//!   ([`sample_posterior_fixed_mu`]);
//! * metric ratings with a mixture matrix estimated from paired ratings, each
//!   column carrying a `Dir(confusion column + 1)` prior
//!   ([`sample_posterior_joint`]).
//!
//! The last two are sampled by data augmentation: the true label of every
//! metric-rated sample is latent, and conditional on those labels `p` and the
//! columns of `μ` are Dirichlet. Because the metric likelihood only depends on
//! `μp`, the joint sampler additionally proposes new mixture columns while
//! moving `p` so that `μp` stays fixed, which lets the chain travel along the
//! ridge that large metric samples create.

mod diagnostics;
mod gibbs;
mod random;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CountTriple, MixtureMatrix, ProbabilityTriple};

pub use diagnostics::{effective_sample_size, split_rhat};
pub use gibbs::{sample_posterior_fixed_mu, sample_posterior_joint};

/// Chains whose split R-hat reaches this value are flagged as not converged.
pub const RHAT_THRESHOLD: f64 = 1.05;
/// Chains whose effective sample size does not exceed this value are flagged.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 400.0;

/// Parameters of a Dirichlet distribution over (win, draw, loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    pub win: f64,
    pub draw: f64,
    pub loss: f64,
}

impl DirichletParams {
    pub fn new(win: f64, draw: f64, loss: f64) -> Result<Self> {
        let d = DirichletParams { win, draw, loss };
        d.validate()?;
        Ok(d)
    }

    /// `Dir(1, 1, 1)`.
    pub fn uniform() -> Self {
        DirichletParams {
            win: 1.0,
            draw: 1.0,
            loss: 1.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.win, self.draw, self.loss]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|a| a.is_finite() && *a > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "dirichlet parameters must be positive, got {:?}",
                self.as_array()
            )))
        }
    }

    pub fn mean(&self) -> ProbabilityTriple {
        ProbabilityTriple::from_normalized(self.as_array())
    }

    /// Mode `(α - 1) / (Σα - 3)`; `None` unless every `α ≥ 1` and `Σα > 3`.
    pub fn mode(&self) -> Option<ProbabilityTriple> {
        let a = self.as_array();
        if a.iter().any(|x| *x < 1.0) || a.iter().sum::<f64>() <= 3.0 {
            return None;
        }
        Some(ProbabilityTriple::from_normalized(a.map(|x| x - 1.0)))
    }

    pub fn swapped(&self) -> Self {
        DirichletParams {
            win: self.loss,
            draw: self.draw,
            loss: self.win,
        }
    }
}

/// Posterior of the outcome probabilities given oracle counts under a uniform
/// prior: `Dir(n_win + 1, n_draw + 1, n_loss + 1)`.
pub fn oracle_posterior(counts: &CountTriple) -> DirichletParams {
    DirichletParams {
        win: counts.win as f64 + 1.0,
        draw: counts.draw as f64 + 1.0,
        loss: counts.loss as f64 + 1.0,
    }
}

/// MCMC run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_per_chain: usize,
    pub draws_per_chain: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 5,
            warmup_per_chain: 2000,
            draws_per_chain: 10_000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        SamplerConfig { seed, ..self }
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::invalid("sampler needs at least one chain"));
        }
        if self.draws_per_chain < 4 {
            return Err(Error::invalid("sampler needs at least four draws per chain"));
        }
        Ok(())
    }
}

/// Convergence summary of a sample set, per component of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub rhat: [f64; 3],
    pub ess: [f64; 3],
    /// True when draws are independent and exact (no Markov chain).
    pub exact: bool,
    /// Acceptance rate of the mixture-column proposals, joint sampler only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_acceptance: Option<f64>,
}

impl SamplerDiagnostics {
    pub(crate) fn exact(n: usize) -> Self {
        SamplerDiagnostics {
            rhat: [1.0; 3],
            ess: [n as f64; 3],
            exact: true,
            mu_acceptance: None,
        }
    }

    /// Convergence gate: split R-hat below [`RHAT_THRESHOLD`] and ESS above
    /// [`MIN_EFFECTIVE_SAMPLES`] for every component. Exact samplers pass.
    pub fn converged(&self) -> bool {
        self.exact
            || (self.rhat.iter().all(|r| *r < RHAT_THRESHOLD)
                && self.ess.iter().all(|e| *e > MIN_EFFECTIVE_SAMPLES))
    }
}

/// Draws of `p` (and optionally `μ`), stored chain after chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSampleSet {
    pub samples: Vec<ProbabilityTriple>,
    pub mu_samples: Option<Vec<MixtureMatrix>>,
    pub chains: usize,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> ProbabilityTriple {
        let mut acc = [0.0; 3];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.as_array()) {
                *a += v;
            }
        }
        ProbabilityTriple::from_normalized(acc)
    }

    /// Per-component sample variance.
    pub fn variance(&self) -> [f64; 3] {
        let m = self.mean().as_array();
        let n = self.samples.len() as f64;
        let mut acc = [0.0; 3];
        for s in &self.samples {
            for (k, v) in s.as_array().iter().enumerate() {
                acc[k] += (v - m[k]).powi(2);
            }
        }
        acc.map(|a| a / (n - 1.0))
    }

    /// Build from per-chain draws and compute diagnostics.
    pub(crate) fn from_chains(
        chains: Vec<Vec<[f64; 3]>>,
        mu: Option<Vec<Vec<MixtureMatrix>>>,
        mu_acceptance: Option<f64>,
    ) -> Self {
        let n_chains = chains.len();
        let mut rhat = [1.0; 3];
        let mut ess = [0.0; 3];
        for k in 0..3 {
            let series: Vec<Vec<f64>> =
                chains.iter().map(|c| c.iter().map(|p| p[k]).collect()).collect();
            let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
            rhat[k] = split_rhat(&refs);
            ess[k] = effective_sample_size(&refs);
        }
        let samples = chains
            .into_iter()
            .flatten()
            .map(ProbabilityTriple::from_normalized)
            .collect();
        PosteriorSampleSet {
            samples,
            mu_samples: mu.map(|m| m.into_iter().flatten().collect()),
            chains: n_chains,
            diagnostics: SamplerDiagnostics {
                rhat,
                ess,
                exact: false,
                mu_acceptance,
            },
        }
    }
}

/// `n` independent draws from `Dir(params)`.
pub fn sample_dirichlet(params: &DirichletParams, n: usize, seed: u64) -> Result<PosteriorSampleSet> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = params.as_array();
    let samples = (0..n)
        .map(|_| ProbabilityTriple::from_normalized(random::dirichlet(&mut rng, &alpha)))
        .collect();
    Ok(PosteriorSampleSet {
        samples,
        mu_samples: None,
        chains: 1,
        diagnostics: SamplerDiagnostics::exact(n),
    })
}

/// Fraction of draws in which the win probability strictly exceeds the loss
/// probability.
pub fn exceedance_fraction(samples: &PosteriorSampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("exceedance of an empty sample set"));
    }
    let hits = samples.samples.iter().filter(|p| p.win > p.loss).count();
    Ok(hits as f64 / samples.len() as f64)
}
