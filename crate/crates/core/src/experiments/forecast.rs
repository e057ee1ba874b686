//! How much a forecast built on the observed graph undershoots the spread on
//! the true graph.

use rand::Rng;
use serde::Serialize;

use super::CurveResult;
use crate::diffusion::{run_diffusion, run_diffusion_decaying, DecaySpec, Percolation, PercolationMode};
use crate::error::{input, Result};
use crate::generate::ErrorSupport;
use crate::graph::{union, Graph, NodeId};
use crate::rng::par_replicate;

/// How transmission probability evolves over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Transmission {
    Constant { p: f64 },
    Decaying(DecaySpec),
}

/// Where each replication starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "nodes")]
pub enum SeedRule {
    /// The same seed set in every replication.
    Fixed(Vec<NodeId>),
    /// A single seed drawn uniformly per replication, shared by both runs.
    Uniform,
}

impl SeedRule {
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<NodeId> {
        match self {
            SeedRule::Fixed(s) => s.clone(),
            SeedRule::Uniform => vec![rng.random_range(0..n)],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastResult {
    /// `mean Y_t(L) / mean Y_t(G)` per step.
    pub ratio: CurveResult,
    pub mean_l: Vec<f64>,
    pub mean_g: Vec<f64>,
    pub min_ratio: f64,
    pub argmin: usize,
}

/// Ratio of mean ever-activated counts on `l` and on `l ∪ E`, with `E`
/// redrawn every replication.
///
/// Replications use common random numbers: with a constant passing
/// probability the percolation is sampled on `G` and the `L` run sees its
/// restriction; in decaying mode both runs consume the same stream. An empty
/// error graph therefore gives a ratio of exactly one.
pub fn forecast_ratio_curve(
    l: &Graph,
    support: &ErrorSupport,
    seeds: &SeedRule,
    tx: Transmission,
    horizon: u32,
    reps: usize,
    seed: u64,
) -> Result<ForecastResult> {
    if reps == 0 {
        return input("need at least one replication");
    }
    if let Transmission::Decaying(d) = tx {
        d.validate()?;
    }
    match seeds {
        SeedRule::Fixed(s) if s.is_empty() => return input("need at least one seed"),
        SeedRule::Uniform if l.n() == 0 => return input("graph has no nodes"),
        _ => {}
    }
    let pairs = par_replicate(seed, reps, |_, rng| -> Result<(Vec<f64>, Vec<f64>)> {
        let start = seeds.draw(l.n(), rng);
        let seeds = &start[..];
        let e = support.draw(rng);
        let g = union(l, &e)?;
        let (tl, tg) = match tx {
            Transmission::Constant { p } => {
                let perc_g = Percolation::sample(&g, p, PercolationMode::Undirected, rng)?;
                let perc_l = perc_g.restrict(l)?;
                (
                    run_diffusion(&perc_l, seeds, horizon)?,
                    run_diffusion(&perc_g, seeds, horizon)?,
                )
            }
            Transmission::Decaying(d) => {
                let mut twin = rng.clone();
                let tl = run_diffusion_decaying(l, seeds, horizon, &d, rng)?;
                (tl, run_diffusion_decaying(&g, seeds, horizon, &d, &mut twin)?)
            }
        };
        let as_f64 = |v: Vec<usize>| v.into_iter().map(|c| c as f64).collect::<Vec<_>>();
        Ok((as_f64(tl.ever_activated()), as_f64(tg.ever_activated())))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (yl, yg): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let ratio = CurveResult::ratio_of_means(&yl, &yg)?;
    let col_mean = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..rows[0].len())
            .map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let (mean_l, mean_g) = (col_mean(&yl), col_mean(&yg));
    let (argmin, min_ratio) = ratio.argmin().unwrap_or((0, f64::NAN));
    let spec = *support.spec();
    let ratio = ratio
        .with_meta("experiment", "forecast-ratio")
        .with_meta("seed", seed)
        .with_meta("seeds", seeds)
        .with_meta("horizon", horizon)
        .with_meta("transmission", tx)
        .with_meta("error_graph", spec)
        .with_meta("min_ratio", min_ratio)
        .with_meta("argmin", argmin);
    Ok(ForecastResult {
        ratio,
        mean_l,
        mean_g,
        min_ratio,
        argmin,
    })
}
