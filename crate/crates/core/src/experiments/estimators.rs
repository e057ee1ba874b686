//! Passing-probability and reproductive-number estimators from observed runs.

use serde::Serialize;

use crate::diffusion::{DiffusionTrace, NEVER};
use crate::error::{input, Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PEstimate {
    pub p_hat: f64,
    /// Qualifying node-steps that ended in activation.
    pub successes: u64,
    /// Node-steps where a susceptible node had exactly one `L`-neighbor
    /// activated in the previous step.
    pub exposures: u64,
}

/// Share of single-exposure node-steps that transmitted, pooled over traces.
///
/// A node-step `(i, t)` qualifies when `i` is still susceptible after `t-1`
/// and exactly one of its `L`-neighbors was activated at `t-1`.
pub fn estimate_p(traces: &[DiffusionTrace], l: &Graph) -> Result<PEstimate> {
    let n = l.n();
    let mut count = vec![0u32; n];
    let mut touched = Vec::new();
    let (mut successes, mut exposures) = (0u64, 0u64);
    for trace in traces {
        if trace.n() != n {
            return input(format!("trace over {} nodes, graph has {n}", trace.n()));
        }
        let at = &trace.activation_time;
        let mut by_step: Vec<Vec<usize>> = vec![Vec::new(); trace.horizon as usize + 1];
        for (v, &t) in at.iter().enumerate() {
            if t != NEVER {
                by_step[t as usize].push(v);
            }
        }
        for t in 1..=trace.horizon {
            for &u in &by_step[t as usize - 1] {
                for &w in l.neighbors(u) {
                    let w = w as usize;
                    if at[w] >= t {
                        if count[w] == 0 {
                            touched.push(w);
                        }
                        count[w] += 1;
                    }
                }
            }
            for &w in &touched {
                if count[w] == 1 {
                    exposures += 1;
                    successes += u64::from(at[w] == t);
                }
                count[w] = 0;
            }
            touched.clear();
        }
    }
    if exposures == 0 {
        return Err(Error::Estimation("no single-exposure node-steps observed".into()));
    }
    Ok(PEstimate {
        p_hat: successes as f64 / exposures as f64,
        successes,
        exposures,
    })
}

/// `p_hat * mean_degree`.
pub fn estimate_r0(p_hat: f64, mean_degree: f64) -> Result<f64> {
    if !(p_hat.is_finite() && mean_degree.is_finite() && p_hat >= 0.0 && mean_degree >= 0.0) {
        return input(format!(
            "estimate_r0 needs finite nonnegative inputs, got {p_hat} and {mean_degree}"
        ));
    }
    Ok(p_hat * mean_degree)
}
