//! Samplers checked against independent quadrature and importance-sampling
//! oracles.

mod common;

use common::*;
use prefeval_core::posterior::*;
use prefeval_core::*;

fn cfg(seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains: 4,
        warmup_per_chain: 1000,
        draws_per_chain: 5000,
        seed,
    }
}

fn assert_close(got: [f64; 3], want: [f64; 3], tol: f64, what: &str) {
    for c in 0..3 {
        assert!((got[c] - want[c]).abs() < tol, "{what}: {got:?} vs {want:?}");
    }
}

fn mu_sim() -> MixtureMatrix {
    MixtureMatrix::new(MU_SIM_ROWS).unwrap()
}

#[test]
fn fixed_mu_matches_grid_for_several_count_vectors() {
    for (m, alpha) in [
        ([8u64, 1, 1], [1.0, 1.0, 1.0]),
        ([2, 5, 3], [1.0, 1.0, 1.0]),
        ([40, 10, 30], [3.0, 2.0, 6.0]),
        ([0, 0, 7], [1.0, 1.0, 1.0]),
    ] {
        let (oracle, _) = grid_fixed_mu(&alpha, &MU_SIM_ROWS, &m, 0.005);
        let s = sample_posterior_fixed_mu(
            &DirichletParams::new(alpha[0], alpha[1], alpha[2]).unwrap(),
            &mu_sim(),
            &CountTriple::from_array(m),
            &cfg(3),
        )
        .unwrap();
        assert_close(s.mean().as_array(), oracle.mean, 0.02, &format!("m={m:?}"));
        let theta = exceedance_fraction(&s).unwrap();
        assert!((theta - oracle.theta).abs() < 0.02, "m={m:?}: {theta} vs {}", oracle.theta);
        assert!(s.diagnostics.converged(), "{:?}", s.diagnostics);
    }
}

#[test]
fn joint_with_flat_mixture_prior_matches_importance_oracle() {
    let m = [2u64, 0, 1];
    let oracle = prior_importance_joint(&[1.0; 3], &[[1.0; 3]; 3], &m, 2_000_000, 17);
    let s = sample_posterior_joint(
        &DirichletParams::uniform(),
        &ConfusionCounts::default(),
        &CountTriple::from_array(m),
        &cfg(5),
    )
    .unwrap();
    assert_close(s.mean().as_array(), oracle.mean, 0.03, "flat mixture prior");
    assert!((exceedance_fraction(&s).unwrap() - oracle.theta).abs() < 0.02);
}

#[test]
fn joint_with_informative_confusion_matches_importance_oracle() {
    let conf = ConfusionCounts {
        cells: [[5, 1, 0], [1, 2, 1], [0, 1, 3]],
    };
    let priors = [0, 1, 2].map(|c| [0, 1, 2].map(|r| conf.cells[r][c] as f64 + 1.0));
    let alpha = [7.0, 5.0, 5.0];
    let m = [6u64, 2, 3];
    let oracle = prior_importance_joint(&alpha, &priors, &m, 2_000_000, 23);
    let s = sample_posterior_joint(
        &DirichletParams::new(alpha[0], alpha[1], alpha[2]).unwrap(),
        &conf,
        &CountTriple::from_array(m),
        &cfg(6),
    )
    .unwrap();
    assert_close(s.mean().as_array(), oracle.mean, 0.02, "informative confusion");
    assert!((exceedance_fraction(&s).unwrap() - oracle.theta).abs() < 0.02);
}

/// Many metric ratings and few paired ones: the posterior is a narrow ridge
/// in (p, mu). Checked against a nested oracle (mixture drawn from its prior,
/// p integrated on a grid).
#[test]
fn joint_with_many_metric_ratings_matches_nested_oracle() {
    let conf = ConfusionCounts {
        cells: [[8, 1, 1], [1, 3, 1], [1, 1, 6]],
    };
    let priors = [0, 1, 2].map(|c| [0, 1, 2].map(|r| conf.cells[r][c] as f64 + 1.0));
    let alpha = oracle_posterior(&conf.oracle_counts()).as_array();
    let m = [330u64, 140, 230];
    let oracle = nested_joint(&alpha, &priors, &m, 3000, 0.005, 29);
    let s = sample_posterior_joint(
        &DirichletParams::new(alpha[0], alpha[1], alpha[2]).unwrap(),
        &conf,
        &CountTriple::from_array(m),
        &cfg(7),
    )
    .unwrap();
    assert_close(s.mean().as_array(), oracle.mean, 0.02, "many metric ratings");
    for (got, want) in s.variance().iter().zip(oracle.variance) {
        assert!((got / want - 1.0).abs() < 0.2, "variance {got} vs {want}");
    }
    let theta = exceedance_fraction(&s).unwrap();
    assert!((theta - oracle.theta).abs() < 0.03, "{theta} vs {}", oracle.theta);
    assert!(s.diagnostics.converged(), "{:?}", s.diagnostics);
}

#[test]
fn pinned_identity_reduces_to_conjugate_posterior() {
    let s = sample_posterior_joint(
        &DirichletParams::uniform(),
        &ConfusionCounts::diagonal(1_000_000),
        &CountTriple::new(6, 1, 3),
        &cfg(8),
    )
    .unwrap();
    let (mean, var) = dirichlet_moments(&[7.0, 2.0, 4.0]);
    assert_close(s.mean().as_array(), mean, 0.02, "pinned identity");
    for (got, want) in s.variance().iter().zip(var) {
        assert!((got / want - 1.0).abs() < 0.2, "variance {got} vs {want}");
    }
}

#[test]
fn exceedance_matches_direct_sampling_oracle() {
    let oracle = dirichlet_theta(&[10.0, 1.0, 2.0], 1_000_000, 31);
    let s = sample_dirichlet(&DirichletParams::new(10.0, 1.0, 2.0).unwrap(), 50_000, 4).unwrap();
    assert!((exceedance_fraction(&s).unwrap() - oracle).abs() < 0.01);
}

#[test]
fn identical_seeds_identical_draws() {
    let run = |seed| {
        sample_posterior_joint(
            &DirichletParams::new(3.0, 2.0, 2.0).unwrap(),
            &ConfusionCounts { cells: [[3, 0, 1], [0, 1, 0], [1, 0, 2]] },
            &CountTriple::new(40, 9, 21),
            &cfg(seed),
        )
        .unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).samples, run(2).samples);
}
