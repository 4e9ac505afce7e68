//! Independent numerical oracles for the posterior samplers. Nothing here
//! calls into the sampler code; they integrate the unnormalized posterior
//! directly.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Summary of a posterior over p computed by an oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleSummary {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    /// Posterior probability that p_win > p_loss.
    pub theta: f64,
}

fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Points of the regular lattice of the 2-simplex with the given step
/// (vertices included).
pub fn simplex_grid(step: f64) -> Vec<[f64; 3]> {
    let k = (1.0 / step).round() as usize;
    let mut out = Vec::with_capacity((k + 1) * (k + 2) / 2);
    for i in 0..=k {
        for j in 0..=(k - i) {
            let a = i as f64 / k as f64;
            let b = j as f64 / k as f64;
            out.push([a, b, (1.0 - a - b).max(0.0)]);
        }
    }
    out
}

fn mat_vec(mu: &[[f64; 3]; 3], p: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| mu[r][0] * p[0] + mu[r][1] * p[1] + mu[r][2] * p[2])
}

/// Log of the unnormalized posterior Dir(p; alpha) * prod_r (mu p)_r^m_r.
fn log_target(alpha: &[f64; 3], mu: &[[f64; 3]; 3], m: &[u64; 3], p: &[f64; 3]) -> f64 {
    let q = mat_vec(mu, p);
    let mut acc = 0.0;
    for c in 0..3 {
        acc += xlny(alpha[c] - 1.0, p[c]);
        acc += xlny(m[c] as f64, q[c]);
    }
    acc
}

/// Weighted grid quadrature of the fixed-mixture posterior. Also returns the
/// log normalizer (up to the constant cell area), for nesting.
pub fn grid_fixed_mu(alpha: &[f64; 3], mu: &[[f64; 3]; 3], m: &[u64; 3], step: f64) -> (OracleSummary, f64) {
    let grid = simplex_grid(step);
    let logs: Vec<f64> = grid.iter().map(|p| log_target(alpha, mu, m, p)).collect();
    let lz = log_sum_exp(&logs);
    let mut mean = [0.0; 3];
    let mut second = [0.0; 3];
    let mut theta = 0.0;
    for (p, l) in grid.iter().zip(&logs) {
        let w = (l - lz).exp();
        for c in 0..3 {
            mean[c] += w * p[c];
            second[c] += w * p[c] * p[c];
        }
        if p[0] > p[2] {
            theta += w;
        } else if p[0] == p[2] {
            // Lattice points on the boundary p_win = p_loss split evenly.
            theta += 0.5 * w;
        }
    }
    let variance = [0, 1, 2].map(|c| second[c] - mean[c] * mean[c]);
    (OracleSummary { mean, variance, theta }, lz)
}

pub fn dirichlet(rng: &mut ChaCha8Rng, alpha: &[f64; 3]) -> [f64; 3] {
    let g = alpha.map(|a| Gamma::new(a, 1.0).unwrap().sample(rng));
    let s: f64 = g.iter().sum();
    g.map(|x| x / s)
}

/// Joint posterior over (p, mu) integrated by drawing mixture matrices from
/// their column priors and integrating p on a grid for each draw.
pub fn nested_joint(
    alpha: &[f64; 3],
    column_priors: &[[f64; 3]; 3],
    m: &[u64; 3],
    mu_draws: usize,
    step: f64,
    seed: u64,
) -> OracleSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(mu_draws);
    for _ in 0..mu_draws {
        let cols = column_priors.map(|a| dirichlet(&mut rng, &a));
        let mu = [0, 1, 2].map(|r| [cols[0][r], cols[1][r], cols[2][r]]);
        parts.push(grid_fixed_mu(alpha, &mu, m, step));
    }
    combine(&parts)
}

fn combine(parts: &[(OracleSummary, f64)]) -> OracleSummary {
    let lz: Vec<f64> = parts.iter().map(|(_, l)| *l).collect();
    let total = log_sum_exp(&lz);
    let mut mean = [0.0; 3];
    let mut second = [0.0; 3];
    let mut theta = 0.0;
    for (s, l) in parts {
        let w = (l - total).exp();
        for c in 0..3 {
            mean[c] += w * s.mean[c];
            second[c] += w * (s.variance[c] + s.mean[c] * s.mean[c]);
        }
        theta += w * s.theta;
    }
    let variance = [0, 1, 2].map(|c| second[c] - mean[c] * mean[c]);
    OracleSummary { mean, variance, theta }
}

/// Plain importance sampling from the joint prior, weighting by the metric
/// likelihood. Only usable for small metric counts.
pub fn prior_importance_joint(
    alpha: &[f64; 3],
    column_priors: &[[f64; 3]; 3],
    m: &[u64; 3],
    draws: usize,
    seed: u64,
) -> OracleSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sw = 0.0;
    let mut mean = [0.0; 3];
    let mut theta = 0.0;
    for _ in 0..draws {
        let cols = column_priors.map(|a| dirichlet(&mut rng, &a));
        let mu = [0, 1, 2].map(|r| [cols[0][r], cols[1][r], cols[2][r]]);
        let p = dirichlet(&mut rng, alpha);
        let q = mat_vec(&mu, &p);
        let w: f64 = (0..3).map(|r| xlny(m[r] as f64, q[r])).sum::<f64>().exp();
        sw += w;
        for c in 0..3 {
            mean[c] += w * p[c];
        }
        if p[0] > p[2] {
            theta += w;
        }
    }
    OracleSummary {
        mean: mean.map(|x| x / sw),
        variance: [f64::NAN; 3],
        theta: theta / sw,
    }
}

/// Exceedance probability of Dir(alpha) by direct sampling.
pub fn dirichlet_theta(alpha: &[f64; 3], draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..draws)
        .filter(|_| {
            let p = dirichlet(&mut rng, alpha);
            p[0] > p[2]
        })
        .count();
    hits as f64 / draws as f64
}

/// Dirichlet moments in closed form.
pub fn dirichlet_moments(alpha: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a0: f64 = alpha.iter().sum();
    let mean = alpha.map(|a| a / a0);
    let var = alpha.map(|a| a * (a0 - a) / (a0 * a0 * (a0 + 1.0)));
    (mean, var)
}

/// The simulation mixture matrix written out by hand, rows = metric outcome.
pub const MU_SIM_ROWS: [[f64; 3]; 3] = [[0.8, 0.25, 0.1], [0.1, 0.5, 0.1], [0.1, 0.25, 0.8]];

/// Exact two-sided binomial p-value by direct summation, for checking the
/// naive baseline.
pub fn two_sided_binomial(k: u64, n: u64) -> f64 {
    let pmf = |i: u64| -> f64 {
        let mut ln = 0.0;
        for j in 0..i {
            ln += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
        }
        (ln - n as f64 * std::f64::consts::LN_2).exp()
    };
    let hi = k.max(n - k);
    let tail: f64 = (hi..=n).map(pmf).sum();
    (2.0 * tail).min(1.0)
}
