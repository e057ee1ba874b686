//! What a survey of `m` people can learn about the error-link rate.

use serde::Serialize;

use super::mean_sd;
use crate::error::{input, Result};
use crate::generate::bernoulli_indices;
use crate::rng::par_replicate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSamplingResult {
    pub n: usize,
    pub beta: f64,
    pub m: usize,
    pub pairs: u64,
    pub reps: usize,
    /// Share of replications in which no error link was found.
    pub p_no_links: f64,
    /// `(1 - beta)^pairs`.
    pub p_no_links_analytic: f64,
    /// Binomial standard error of `p_no_links` under the analytic value.
    pub p_no_links_stderr: f64,
    pub beta_hat_mean: f64,
    pub beta_hat_sd: f64,
    /// 5%, 50% and 95% quantiles of the estimate.
    pub beta_hat_quantiles: [f64; 3],
}

/// Samples `m` of `n` nodes and counts error links among the sampled pairs,
/// each present independently with probability `beta`. Under an i.i.d. error
/// graph the identity of the sampled nodes is irrelevant, so each replication
/// draws the `C(m,2)` pair indicators directly.
pub fn beta_sampling_experiment(n: usize, beta: f64, m: usize, reps: usize, seed: u64) -> Result<BetaSamplingResult> {
    if m < 2 {
        return input(format!("need at least two sampled nodes, got {m}"));
    }
    if m > n {
        return input(format!("sample of {m} exceeds population {n}"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return input(format!("beta = {beta} outside [0,1]"));
    }
    if reps == 0 {
        return input("need at least one replication");
    }
    let pairs = (m as u64) * (m as u64 - 1) / 2;
    let counts = par_replicate(seed, reps, |_, rng| {
        let mut c = 0u64;
        bernoulli_indices(pairs, beta, rng, |_| c += 1);
        c
    });
    let analytic = (pairs as f64 * (-beta).ln_1p()).exp();
    let mut hats: Vec<f64> = counts.iter().map(|&c| c as f64 / pairs as f64).collect();
    let (beta_hat_mean, beta_hat_sd) = mean_sd(&hats);
    hats.sort_by(f64::total_cmp);
    let q = |f: f64| hats[((f * reps as f64).ceil() as usize).clamp(1, reps) - 1];
    Ok(BetaSamplingResult {
        n,
        beta,
        m,
        pairs,
        reps,
        p_no_links: counts.iter().filter(|&&c| c == 0).count() as f64 / reps as f64,
        p_no_links_analytic: analytic,
        p_no_links_stderr: (analytic * (1.0 - analytic) / reps as f64).sqrt(),
        beta_hat_mean,
        beta_hat_sd,
        beta_hat_quantiles: [q(0.05), q(0.5), q(0.95)],
    })
}
