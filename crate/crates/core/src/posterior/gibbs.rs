use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::random::{dirichlet, dirichlet_log_kernel, multinomial};
use super::{DirichletParams, PosteriorSampleSet, SamplerConfig, SamplerDiagnostics};
use crate::error::Result;
use crate::seed::derive_indexed_seed;
use crate::types::{ConfusionCounts, CountTriple, MixtureMatrix, PreferenceOutcome, ProbabilityTriple};

/// What is known about the mixture matrix.
#[derive(Debug, Clone, Copy)]
enum MixtureKnowledge {
    Fixed(MixtureMatrix),
    /// Dirichlet parameters of each column, indexed by oracle outcome.
    Uncertain([[f64; 3]; 3]),
}

#[derive(Debug, Clone, Copy)]
struct Model {
    alpha: [f64; 3],
    mixture: MixtureKnowledge,
    metric: [u64; 3],
}

struct ChainOutput {
    p: Vec<[f64; 3]>,
    mu: Vec<MixtureMatrix>,
    proposed: u64,
    accepted: u64,
}

/// Sample `Pr(p | m)` for metric counts `m ~ Mult(n, μp)` with `μ` known and
/// `p ~ Dir(prior)`.
pub fn sample_posterior_fixed_mu(
    prior: &DirichletParams,
    mu: &MixtureMatrix,
    metric_counts: &CountTriple,
    cfg: &SamplerConfig,
) -> Result<PosteriorSampleSet> {
    prior.validate()?;
    mu.validate()?;
    cfg.validate()?;
    let model = Model {
        alpha: prior.as_array(),
        mixture: MixtureKnowledge::Fixed(*mu),
        metric: metric_counts.as_array(),
    };
    Ok(run(&model, cfg))
}

/// Sample the joint posterior `Pr(p, μ | m)` where each column `c` of `μ` has
/// prior `Dir(confusion column c + 1)` and `p ~ Dir(prior)`. The returned set
/// carries the `μ` draws alongside the `p` draws.
pub fn sample_posterior_joint(
    prior: &DirichletParams,
    confusion: &ConfusionCounts,
    metric_counts: &CountTriple,
    cfg: &SamplerConfig,
) -> Result<PosteriorSampleSet> {
    prior.validate()?;
    cfg.validate()?;
    let columns = PreferenceOutcome::ALL.map(|c| confusion.column(c).as_array().map(|n| n as f64 + 1.0));
    let model = Model {
        alpha: prior.as_array(),
        mixture: MixtureKnowledge::Uncertain(columns),
        metric: metric_counts.as_array(),
    };
    Ok(run(&model, cfg))
}

fn run(model: &Model, cfg: &SamplerConfig) -> PosteriorSampleSet {
    if model.metric.iter().sum::<u64>() == 0 {
        return sample_prior(model, cfg);
    }
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed_seed(cfg.seed, "chain", chain as u64));
            run_chain(model, cfg.warmup_per_chain, cfg.draws_per_chain, &mut rng)
        })
        .collect();

    let (proposed, accepted) = outputs
        .iter()
        .fold((0, 0), |(p, a), o| (p + o.proposed, a + o.accepted));
    let uncertain = matches!(model.mixture, MixtureKnowledge::Uncertain(_));
    let mut p_chains = Vec::with_capacity(outputs.len());
    let mut mu_chains = Vec::with_capacity(outputs.len());
    for o in outputs {
        p_chains.push(o.p);
        mu_chains.push(o.mu);
    }
    PosteriorSampleSet::from_chains(
        p_chains,
        uncertain.then_some(mu_chains),
        (uncertain && proposed > 0).then(|| accepted as f64 / proposed as f64),
    )
}

/// No metric evidence: the posterior is the prior, drawn exactly.
fn sample_prior(model: &Model, cfg: &SamplerConfig) -> PosteriorSampleSet {
    let n = cfg.total_draws();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(n);
    let mut mus = Vec::new();
    for _ in 0..n {
        samples.push(ProbabilityTriple::from_normalized(dirichlet(&mut rng, &model.alpha)));
        if let MixtureKnowledge::Uncertain(cols) = &model.mixture {
            mus.push(draw_mixture(&mut rng, cols, &[[0; 3]; 3]));
        }
    }
    let uncertain = matches!(model.mixture, MixtureKnowledge::Uncertain(_));
    PosteriorSampleSet {
        samples,
        mu_samples: uncertain.then_some(mus),
        chains: cfg.chains,
        diagnostics: SamplerDiagnostics::exact(n),
    }
}

/// Draw every column of `μ` from `Dir(prior column + latent column)`.
fn draw_mixture<R: Rng>(rng: &mut R, cols: &[[f64; 3]; 3], latent: &[[u64; 3]; 3]) -> MixtureMatrix {
    let mut cells = [[0.0; 3]; 3];
    for c in 0..3 {
        let alpha = [0, 1, 2].map(|r| cols[c][r] + latent[r][c] as f64);
        let col = dirichlet(rng, &alpha);
        for r in 0..3 {
            cells[r][c] = col[r];
        }
    }
    MixtureMatrix { cells }
}

fn draw_p<R: Rng>(rng: &mut R, alpha: &[f64; 3], latent: &[[u64; 3]; 3]) -> [f64; 3] {
    let post = [0, 1, 2].map(|c| alpha[c] + (0..3).map(|r| latent[r][c]).sum::<u64>() as f64);
    dirichlet(rng, &post)
}

fn run_chain<R: Rng>(model: &Model, warmup: usize, draws: usize, rng: &mut R) -> ChainOutput {
    let m = model.metric;
    // latent[r][c]: metric-rated samples with observed label r and true label c.
    // Initialized to agreement with the observed labels.
    let mut latent = [[0u64; 3]; 3];
    for r in 0..3 {
        latent[r][r] = m[r];
    }
    let mut p = draw_p(rng, &model.alpha, &latent);
    let mut mu = match &model.mixture {
        MixtureKnowledge::Fixed(mu) => *mu,
        MixtureKnowledge::Uncertain(cols) => draw_mixture(rng, cols, &latent),
    };

    let mut out = ChainOutput {
        p: Vec::with_capacity(draws),
        mu: Vec::new(),
        proposed: 0,
        accepted: 0,
    };
    if matches!(model.mixture, MixtureKnowledge::Uncertain(_)) {
        out.mu.reserve(draws);
    }

    for it in 0..warmup + draws {
        for r in 0..3 {
            let w = [0, 1, 2].map(|c| mu.cells[r][c] * p[c]);
            latent[r] = multinomial(rng, m[r], &w);
        }
        p = draw_p(rng, &model.alpha, &latent);

        if let MixtureKnowledge::Uncertain(cols) = &model.mixture {
            mu = draw_mixture(rng, cols, &latent);
            for c in 0..3 {
                out.proposed += 1;
                if ridge_move(rng, &model.alpha, &cols[c], c, &mut mu, &mut p) {
                    out.accepted += 1;
                }
            }
        }

        if it >= warmup {
            out.p.push(p);
            if matches!(model.mixture, MixtureKnowledge::Uncertain(_)) {
                out.mu.push(mu);
            }
        }
    }
    out
}

/// Metropolis-Hastings move on the marginal posterior of `(p, μ)` that keeps
/// `μp` (and therefore the metric likelihood) unchanged.
///
/// Column `c` of `μ` is proposed independently from its prior and `p` is mapped
/// to `p' = μ'⁻¹ μ p`. The prior density of `μ` cancels against the proposal,
/// leaving the prior ratio of `p` and the Jacobian `|det μ| / |det μ'|` of the
/// linear map restricted to the simplex plane. Returns whether the move was
/// accepted.
fn ridge_move<R: Rng>(
    rng: &mut R,
    alpha: &[f64; 3],
    col_prior: &[f64; 3],
    c: usize,
    mu: &mut MixtureMatrix,
    p: &mut [f64; 3],
) -> bool {
    let q = mu.mul_vec(p);
    let col = dirichlet(rng, col_prior);
    let mut proposal = *mu;
    for r in 0..3 {
        proposal.cells[r][c] = col[r];
    }
    let Some(p_new) = proposal.solve(&q) else {
        return false;
    };
    if p_new.iter().any(|x| !(*x >= 0.0)) {
        return false;
    }
    let log_ratio = dirichlet_log_kernel(alpha, &p_new) - dirichlet_log_kernel(alpha, p)
        + mu.determinant().abs().ln()
        - proposal.determinant().abs().ln();
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    if log_ratio >= 0.0 || u.ln() < log_ratio {
        let s: f64 = p_new.iter().sum();
        *p = p_new.map(|x| x / s);
        *mu = proposal;
        true
    } else {
        false
    }
}
