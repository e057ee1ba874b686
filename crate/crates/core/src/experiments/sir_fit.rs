//! Compartmental SIR fits to simulated network diffusion.

use serde::Serialize;

use super::mean_sd;
use crate::compartmental::{fit_and_forecast, simulate_sir, FitReport, SirObserved, SirParams};
use crate::diffusion::{run_diffusion, Percolation, PercolationMode};
use crate::error::{input, Result};
use crate::generate::ErrorSupport;
use crate::graph::{union, Graph, NodeId};
use crate::rng::par_replicate;

/// Which graph generates the diffusion data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataGraph {
    Observed,
    /// Observed graph plus a fresh error graph every replication.
    True,
}

#[derive(Debug, Clone, Serialize)]
pub struct SirFitResult {
    pub data_graph: DataGraph,
    pub t_fit: usize,
    pub horizon: u32,
    /// Mean over successful fits of `s/r`.
    pub r0_mean: f64,
    pub r0_stderr: f64,
    pub in_sample_rmse: f64,
    pub out_of_sample_rmse: f64,
    pub fits: usize,
    /// Replications whose fit failed and were left out.
    pub failed: usize,
    /// Mean ever-activated count per step in the data.
    pub observed_mean: Vec<f64>,
    /// Mean over fits of the fitted model's ever-infected count per step.
    pub fitted_mean: Vec<f64>,
}

/// Simulates `reps` diffusions from `seeds`, fits the compartmental model to
/// each on steps `1..=t_fit` (with `n` the graph size and one initial
/// infected per seed), and scores each fit inside and after the window.
#[allow(clippy::too_many_arguments)]
pub fn sir_fit_experiment(
    l: &Graph,
    support: Option<&ErrorSupport>,
    seeds: &[NodeId],
    p: f64,
    horizon: u32,
    t_fit: usize,
    reps: usize,
    seed: u64,
) -> Result<SirFitResult> {
    if reps == 0 {
        return input("need at least one replication");
    }
    if 2 * t_fit > horizon as usize {
        return input(format!(
            "fit window {t_fit} leaves no room for a forecast of equal length in {horizon} steps"
        ));
    }
    // observed ever-infected series and the fit with its model curve, if it succeeded
    type Row = (Vec<f64>, Result<(FitReport, Vec<f64>)>);
    let n = l.n() as f64;
    let i0 = seeds.len() as f64;
    let rows = par_replicate(seed, reps, |_, rng| -> Result<Row> {
        let trace = match support {
            Some(s) => {
                let g = union(l, &s.draw(rng))?;
                let perc = Percolation::sample(&g, p, PercolationMode::Undirected, rng)?;
                run_diffusion(&perc, seeds, horizon)?
            }
            None => {
                let perc = Percolation::sample(l, p, PercolationMode::Undirected, rng)?;
                run_diffusion(&perc, seeds, horizon)?
            }
        };
        let obs = SirObserved::from_trace(&trace);
        let ever = obs.ever_infected();
        let fit = fit_and_forecast(&obs, n, i0, t_fit).and_then(|rep| {
            let model = simulate_sir(SirParams { s: rep.s, r: rep.r }, n, i0, horizon as usize)?;
            Ok((rep, model.ever_infected()))
        });
        Ok((ever, fit))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let len = horizon as usize + 1;
    let mut observed_mean = vec![0.0; len];
    let mut fitted_mean = vec![0.0; len];
    let (mut r0s, mut ins, mut outs) = (Vec::new(), Vec::new(), Vec::new());
    let mut failed = 0;
    for (ever, fit) in &rows {
        for (m, x) in observed_mean.iter_mut().zip(ever) {
            *m += x;
        }
        match fit {
            Ok((rep, curve)) => {
                r0s.push(rep.r0);
                ins.push(rep.in_sample_rmse);
                outs.push(rep.out_of_sample_rmse);
                for (m, x) in fitted_mean.iter_mut().zip(curve) {
                    *m += x;
                }
            }
            Err(e) => {
                log::debug!("fit excluded: {e}");
                failed += 1;
            }
        }
    }
    let fits = r0s.len();
    if fits == 0 {
        return Err(crate::Error::Fit("every replication failed to fit".into()));
    }
    for m in &mut observed_mean {
        *m /= reps as f64;
    }
    for m in &mut fitted_mean {
        *m /= fits as f64;
    }
    let (r0_mean, r0_sd) = mean_sd(&r0s);
    Ok(SirFitResult {
        data_graph: if support.is_some() {
            DataGraph::True
        } else {
            DataGraph::Observed
        },
        t_fit,
        horizon,
        r0_mean,
        r0_stderr: r0_sd / (fits as f64).sqrt(),
        in_sample_rmse: mean_sd(&ins).0,
        out_of_sample_rmse: mean_sd(&outs).0,
        fits,
        failed,
        observed_mean,
        fitted_mean,
    })
}
