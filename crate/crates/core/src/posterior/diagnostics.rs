//! Convergence diagnostics for multi-chain output: split R-hat and effective
//! sample size with Geyer's initial monotone sequence estimator.

/// Split R-hat of one scalar quantity. `chains` must all have the same length
/// (at least 4 draws). Returns 1.0 when every draw is identical.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;

    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = halves.iter().zip(&means).map(|(c, mu)| variance(c, *mu)).collect();

    let grand = means.iter().sum::<f64>() / m;
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = vars.iter().sum::<f64>() / m;

    if within <= 0.0 {
        return if between <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Effective sample size of one scalar quantity across chains (split halves,
/// Geyer's initial monotone sequence). Constant output counts as fully
/// effective.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let halves = split(chains);
    let m = halves.len();
    let n = halves[0].len();
    let total = (m * n) as f64;
    let nf = n as f64;

    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = halves.iter().zip(&means).map(|(c, mu)| variance(c, *mu)).collect();
    let within = vars.iter().sum::<f64>() / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let between_over_n = if m > 1 {
        means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * within + between_over_n;
    if !(var_plus > 0.0) {
        return total;
    }

    // Mean over chains of the lag-t autocovariance (1/n normalization).
    let acov = |t: usize| -> f64 {
        halves
            .iter()
            .zip(&means)
            .map(|(c, mu)| {
                c[..n - t]
                    .iter()
                    .zip(&c[t..])
                    .map(|(a, b)| (a - mu) * (b - mu))
                    .sum::<f64>()
                    / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |t: usize| {
        if t == 0 {
            1.0
        } else {
            1.0 - (within - acov(t)) / var_plus
        }
    };

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        // Monotone: pair sums may not increase.
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    // Antithetic chains can push tau below 1/log10(N); cap the ESS there.
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

fn split<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    assert!(!chains.is_empty(), "diagnostics need at least one chain");
    let n = chains[0].len();
    assert!(chains.iter().all(|c| c.len() == n), "chains must have equal length");
    assert!(n >= 4, "diagnostics need at least four draws per chain");
    let half = n / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        // Odd lengths drop the middle draw.
        out.push(&c[..half]);
        out.push(&c[n - half..]);
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64], mu: f64) -> f64 {
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}
