//! How many activated regions random testing uncovers.

use rand::Rng;
use serde::Serialize;

use super::CurveResult;
use crate::diffusion::{jump_regions, run_diffusion, DiffusionTrace, Percolation, PercolationMode, NEVER};
use crate::error::{input, Result};
use crate::generate::ErrorSupport;
use crate::graph::{union, Graph, NodeId};
use crate::rng::par_replicate;

/// Region counts for one diffusion run, per step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionCounts {
    /// Regions containing at least one activated node by `t`.
    pub k_star: Vec<usize>,
    /// Regions containing at least one flagged activated node by `t`,
    /// averaged over flag draws.
    pub k_hat: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionResult {
    /// `mean K_hat_t / mean K_star_t`.
    pub ratio: CurveResult,
    pub k_star_mean: Vec<f64>,
    pub k_hat_mean: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return input(format!("alpha = {alpha} outside [0,1]"));
    }
    Ok(())
}

/// Splits the activated set of `trace` into the seed cluster and one region
/// per attributed jump, then flags each activated node independently with
/// probability `alpha`, `flag_reps` times.
pub fn detection_experiment<R: Rng + ?Sized>(
    trace: &DiffusionTrace,
    perc: &Percolation<'_>,
    l: &Graph,
    e: &Graph,
    alpha: f64,
    flag_reps: usize,
    rng: &mut R,
) -> Result<DetectionCounts> {
    check_alpha(alpha)?;
    if flag_reps == 0 {
        return input("need at least one flag draw");
    }
    let (labels, regions) = jump_regions(trace, perc, l, e)?;
    let at = &trace.activation_time;
    let h = trace.horizon as usize;
    let mut born = vec![NEVER; regions];
    let activated: Vec<NodeId> = (0..trace.n()).filter(|&v| at[v] != NEVER).collect();
    for &v in &activated {
        born[labels[v]] = born[labels[v]].min(at[v]);
    }
    let k_star = cumulative_counts(&born, h);
    let mut k_hat = vec![0.0; h + 1];
    let mut seen = vec![NEVER; regions];
    for _ in 0..flag_reps {
        seen.fill(NEVER);
        for &v in &activated {
            if rng.random_bool(alpha) {
                seen[labels[v]] = seen[labels[v]].min(at[v]);
            }
        }
        for (acc, c) in k_hat.iter_mut().zip(cumulative_counts(&seen, h)) {
            *acc += c as f64;
        }
    }
    k_hat.iter_mut().for_each(|x| *x /= flag_reps as f64);
    Ok(DetectionCounts { k_star, k_hat })
}

/// Number of entries `<= t` for each `t = 0..=h`.
fn cumulative_counts(times: &[u32], h: usize) -> Vec<usize> {
    let mut per = vec![0usize; h + 1];
    for &t in times {
        if t != NEVER && (t as usize) <= h {
            per[t as usize] += 1;
        }
    }
    per.iter()
        .scan(0, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect()
}

/// Monte Carlo detection ratio: each replication draws an error graph, a
/// percolation of `l ∪ E`, one run from `seeds`, and one set of flags.
#[allow(clippy::too_many_arguments)]
pub fn detection_curve(
    l: &Graph,
    support: &ErrorSupport,
    seeds: &[NodeId],
    p: f64,
    alpha: f64,
    horizon: u32,
    reps: usize,
    seed: u64,
) -> Result<DetectionResult> {
    check_alpha(alpha)?;
    if reps == 0 {
        return input("need at least one replication");
    }
    let rows = par_replicate(seed, reps, |_, rng| -> Result<(Vec<f64>, Vec<f64>)> {
        let e = support.draw(rng);
        let g = union(l, &e)?;
        let perc = Percolation::sample(&g, p, PercolationMode::Undirected, rng)?;
        let trace = run_diffusion(&perc, seeds, horizon)?;
        let c = detection_experiment(&trace, &perc, l, &e, alpha, 1, rng)?;
        Ok((c.k_hat, c.k_star.into_iter().map(|k| k as f64).collect()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (hat, star): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let ratio = CurveResult::ratio_of_means(&hat, &star)?
        .with_meta("experiment", "detection")
        .with_meta("seed", seed)
        .with_meta("alpha", alpha)
        .with_meta("p", p)
        .with_meta("horizon", horizon)
        .with_meta("error_graph", support.spec());
    let col_mean = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..rows[0].len())
            .map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    Ok(DetectionResult {
        k_star_mean: col_mean(&star),
        k_hat_mean: col_mean(&hat),
        ratio,
    })
}
