//! Sampling primitives: Dirichlet via normalized gammas, multinomial via
//! sequential binomials.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};

/// Draw from `Dirichlet(alpha)`; every `alpha` entry must be positive.
pub(crate) fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64; 3]) -> [f64; 3] {
    loop {
        let g = alpha.map(|a| {
            Gamma::new(a, 1.0)
                .expect("dirichlet parameters are validated positive")
                .sample(rng)
        });
        let s = g[0] + g[1] + g[2];
        // All three gammas can underflow to zero for tiny shapes; redraw.
        if s > 0.0 && s.is_finite() {
            return g.map(|x| x / s);
        }
    }
}

/// Draw counts from `Multinomial(n, weights / sum(weights))`.
pub(crate) fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, weights: &[f64; 3]) -> [u64; 3] {
    let mut out = [0u64; 3];
    if n == 0 {
        return out;
    }
    let mut mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        // Degenerate weights: spread uniformly rather than panic.
        return multinomial(rng, n, &[1.0, 1.0, 1.0]);
    }
    let mut remaining = n;
    for i in 0..2 {
        if remaining == 0 {
            break;
        }
        let prob = (weights[i] / mass).clamp(0.0, 1.0);
        let k = if prob >= 1.0 {
            remaining
        } else if prob <= 0.0 {
            0
        } else {
            Binomial::new(remaining, prob)
                .expect("probability clamped to [0, 1]")
                .sample(rng)
        };
        out[i] = k;
        remaining -= k;
        mass -= weights[i];
        if !(mass > 0.0) {
            break;
        }
    }
    out[2] += remaining;
    out
}

/// Unnormalized log-density of `Dirichlet(alpha)` at `p`.
pub(crate) fn dirichlet_log_kernel(alpha: &[f64; 3], p: &[f64; 3]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        let e = alpha[i] - 1.0;
        if e != 0.0 {
            acc += e * p[i].ln();
        }
    }
    acc
}
