//! Method-of-simulated-moments fit of the passing probability to observed
//! village-level adoption counts.
//!
//! Each replication draws one uniform `U_e` per edge and lets edge `e` pass
//! exactly when `U_e < p`, so every candidate `p` sees the same random
//! numbers. A node is activated within `T` steps exactly when some path of at
//! most `T` hops from a seed has all its uniforms below `p`; the smallest such
//! bottleneck over paths is computed once per replication, which yields the
//! simulated count for every `p` at once.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{run_diffusion, Percolation, PercolationMode};
use crate::error::{input, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{derive_seed, par_replicate, stream, SimRng};

pub const DEFAULT_GRID_STEP: f64 = 0.01;

/// Resolution of the `p` lattice the objective is evaluated on.
const BINS: usize = 10_000;
/// Golden-section refinement stops once the bracket is this many lattice steps.
const REFINE_WIDTH: usize = 10;

#[derive(Debug, Clone)]
pub struct MsmVillage {
    pub graph: Graph,
    pub seeds: Vec<NodeId>,
    /// Observed number of adopters, seeds included.
    pub observed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MsmFit {
    pub p_hat: f64,
    pub objective: f64,
    /// `(p, objective)` at each grid point.
    pub grid: Vec<(f64, f64)>,
    pub horizon: u32,
    pub reps: usize,
}

/// Per node, the smallest over paths of at most `horizon` hops from `seeds`
/// of the largest edge weight on the path. Seeds get `-inf`; nodes with no
/// such path get `+inf`.
pub fn hop_limited_bottleneck(g: &Graph, seeds: &[NodeId], weights: &[f64], horizon: u32) -> Result<Vec<f64>> {
    if weights.len() != g.edge_count() {
        return input(format!("{} weights for {} edges", weights.len(), g.edge_count()));
    }
    let mut b = vec![f64::INFINITY; g.n()];
    for &s in seeds {
        if s >= g.n() {
            return input(format!("seed {s} out of range"));
        }
        b[s] = f64::NEG_INFINITY;
    }
    let mut next = b.clone();
    for _ in 0..horizon {
        let mut changed = false;
        for (&(u, v), &w) in g.edges().iter().zip(weights) {
            let (u, v) = (u as usize, v as usize);
            let via_u = b[u].max(w);
            if via_u < next[v] {
                next[v] = via_u;
                changed = true;
            }
            let via_v = b[v].max(w);
            if via_v < next[u] {
                next[u] = via_v;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        b.copy_from_slice(&next);
    }
    Ok(b)
}

fn edge_uniforms(g: &Graph, rng: &mut SimRng) -> Vec<f64> {
    (0..g.edge_count()).map(|_| rng.random::<f64>()).collect()
}

fn village_stream_seed(seed: u64, village: usize) -> u64 {
    derive_seed(seed, village as u64)
}

fn check_villages(villages: &[MsmVillage]) -> Result<()> {
    if villages.is_empty() {
        return input("need at least one village");
    }
    for (i, v) in villages.iter().enumerate() {
        if v.seeds.is_empty() {
            return input(format!("village {i} has no seeds"));
        }
        if v.observed < v.seeds.len() {
            return input(format!(
                "village {i}: observed count {} below seed count {}",
                v.observed,
                v.seeds.len()
            ));
        }
    }
    Ok(())
}

/// Cumulative simulated activations per lattice point for one village:
/// entry `k` is the total over replications of nodes with bottleneck below
/// `k / BINS`.
fn village_cumulative(v: &MsmVillage, horizon: u32, reps: usize, seed: u64) -> Result<Vec<u64>> {
    let rows = par_replicate(seed, reps, |_, rng| {
        let u = edge_uniforms(&v.graph, rng);
        hop_limited_bottleneck(&v.graph, &v.seeds, &u, horizon)
    });
    let mut hist = vec![0u64; BINS + 1];
    let mut seeds_total = 0u64;
    for row in rows {
        for b in row? {
            if b == f64::NEG_INFINITY {
                seeds_total += 1;
            } else if b.is_finite() {
                hist[((b * BINS as f64) as usize).min(BINS - 1) + 1] += 1;
            }
        }
    }
    hist[0] = seeds_total;
    for k in 1..=BINS {
        hist[k] += hist[k - 1];
    }
    Ok(hist)
}

/// The squared mean moment at lattice point `k`.
fn objective_at(villages: &[MsmVillage], cum: &[Vec<u64>], reps: usize, k: usize) -> f64 {
    let m = villages
        .iter()
        .zip(cum)
        .map(|(v, c)| v.observed as f64 - c[k] as f64 / reps as f64)
        .sum::<f64>()
        / villages.len() as f64;
    m * m
}

/// Minimizes `(mean over villages of observed - simulated mean count)^2`
/// over `grid`, then refines by golden-section search inside the cells next
/// to the best grid point. The objective is evaluated on a lattice of step
/// `1e-4`, so grid values are snapped to it.
pub fn msm_fit_p(villages: &[MsmVillage], horizon: u32, reps: usize, grid: &[f64], seed: u64) -> Result<MsmFit> {
    check_villages(villages)?;
    if grid.is_empty() {
        return input("empty p grid");
    }
    if reps == 0 {
        return input("need at least one replication");
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return input(format!("grid value {p} outside [0,1]"));
    }
    let cum = villages
        .iter()
        .enumerate()
        .map(|(i, v)| village_cumulative(v, horizon, reps, village_stream_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let f = |k: usize| objective_at(villages, &cum, reps, k);

    let mut ks: Vec<usize> = grid.iter().map(|&p| (p * BINS as f64).round() as usize).collect();
    ks.sort_unstable();
    ks.dedup();
    let grid_obj: Vec<f64> = ks.par_iter().map(|&k| f(k)).collect();
    let best = (0..ks.len()).fold(0, |b, i| if grid_obj[i] < grid_obj[b] { i } else { b });

    let lo = ks[best.saturating_sub(1)];
    let hi = ks[(best + 1).min(ks.len() - 1)];
    let (mut k_hat, mut obj) = (ks[best], grid_obj[best]);
    let (rk, ro) = golden_section_lattice(&f, lo, hi);
    if ro < obj || (ro == obj && rk < k_hat) {
        (k_hat, obj) = (rk, ro);
    }
    Ok(MsmFit {
        p_hat: k_hat as f64 / BINS as f64,
        objective: obj,
        grid: ks
            .iter()
            .zip(&grid_obj)
            .map(|(&k, &o)| (k as f64 / BINS as f64, o))
            .collect(),
        horizon,
        reps,
    })
}

/// Golden-section search over integers in `[lo, hi]`, finished by a scan of
/// the last few points. Ties go to the smaller argument.
fn golden_section_lattice(f: &impl Fn(usize) -> f64, mut lo: usize, mut hi: usize) -> (usize, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    while hi - lo > REFINE_WIDTH {
        let span = (hi - lo) as f64;
        let a = hi - (INV_PHI * span).round() as usize;
        let b = lo + (INV_PHI * span).round() as usize;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    (lo..=hi)
        .map(|k| (k, f(k)))
        .fold((lo, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// The objective at `p` by direct simulation on the same random numbers
/// [`msm_fit_p`] uses.
pub fn msm_objective(villages: &[MsmVillage], horizon: u32, reps: usize, p: f64, seed: u64) -> Result<f64> {
    check_villages(villages)?;
    let mut moment = 0.0;
    for (i, v) in villages.iter().enumerate() {
        let counts = par_replicate(village_stream_seed(seed, i), reps, |_, rng| -> Result<usize> {
            let pass = edge_uniforms(&v.graph, rng).into_iter().map(|u| u < p).collect();
            let perc = Percolation::from_indicators(&v.graph, PercolationMode::Undirected, pass)?;
            Ok(run_diffusion(&perc, &v.seeds, horizon)?.total_activated())
        });
        let total: usize = counts.into_iter().sum::<Result<usize>>()?;
        moment += v.observed as f64 - total as f64 / reps as f64;
    }
    let m = moment / villages.len() as f64;
    Ok(m * m)
}

/// `0, step, 2*step, ..., 1`.
pub fn default_grid(step: f64) -> Vec<f64> {
    let k = (1.0 / step).round() as usize;
    (0..=k).map(|i| (i as f64 * step).min(1.0)).collect()
}

/// Synthetic observed counts: one run per village at `p`.
pub fn simulate_observed(villages: &mut [MsmVillage], p: f64, horizon: u32, seed: u64) -> Result<()> {
    for (i, v) in villages.iter_mut().enumerate() {
        let mut rng = stream(seed, i as u64);
        let perc = Percolation::sample(&v.graph, p, PercolationMode::Undirected, &mut rng)?;
        v.observed = run_diffusion(&perc, &v.seeds, horizon)?.total_activated();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::generate_lattice_random;
    use crate::graph::fixtures::{cycle, path};

    #[test]
    fn bottleneck_matches_reachability() {
        let g = path(4);
        let w = [0.3, 0.1, 0.8];
        let b = hop_limited_bottleneck(&g, &[0], &w, 10).unwrap();
        assert_eq!(b, vec![f64::NEG_INFINITY, 0.3, 0.3, 0.8]);
        let b = hop_limited_bottleneck(&g, &[0], &w, 2).unwrap();
        assert_eq!(b[3], f64::INFINITY);
    }

    #[test]
    fn hop_limit_can_force_a_worse_path() {
        // every edge costs 0.2 except 0-5
        let g = cycle(6);
        let w: Vec<f64> = g
            .edges()
            .iter()
            .map(|&(u, v)| if (u, v) == (0, 5) { 0.9 } else { 0.2 })
            .collect();
        // node 4: two hops via 5 (max 0.9) or four hops via 1,2,3 (max 0.2)
        assert_eq!(hop_limited_bottleneck(&g, &[0], &w, 2).unwrap()[4], 0.9);
        assert_eq!(hop_limited_bottleneck(&g, &[0], &w, 4).unwrap()[4], 0.2);
    }

    fn villages(count: usize, seed: u64) -> Vec<MsmVillage> {
        (0..count)
            .map(|i| {
                let (g, _) = generate_lattice_random(80, 2, 7, &mut stream(seed, i as u64)).unwrap();
                MsmVillage {
                    graph: g,
                    seeds: vec![0, 24],
                    observed: 2,
                }
            })
            .collect()
    }

    #[test]
    fn lattice_objective_equals_direct_simulation() {
        let mut vs = villages(4, 1);
        simulate_observed(&mut vs, 0.3, 6, 2).unwrap();
        let fit = msm_fit_p(&vs, 6, 300, &default_grid(0.1), 3).unwrap();
        for &(p, obj) in &fit.grid {
            let direct = msm_objective(&vs, 6, 300, p, 3).unwrap();
            assert!((obj - direct).abs() < 1e-9 * (1.0 + direct), "p={p}: {obj} vs {direct}");
        }
    }

    #[test]
    fn fit_recovers_generating_p() {
        let mut vs = villages(30, 4);
        simulate_observed(&mut vs, 0.3, 8, 5).unwrap();
        let fit = msm_fit_p(&vs, 8, 200, &default_grid(DEFAULT_GRID_STEP), 6).unwrap();
        assert!((fit.p_hat - 0.3).abs() < 0.06, "p_hat = {}", fit.p_hat);
        assert!(fit.grid.iter().all(|&(_, o)| fit.objective <= o));
    }

    #[test]
    fn seeds_only_fit_to_zero() {
        let vs = villages(3, 7);
        let fit = msm_fit_p(&vs, 5, 100, &default_grid(DEFAULT_GRID_STEP), 1).unwrap();
        assert_eq!(fit.p_hat, 0.0);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn fit_is_reproducible_and_checks_inputs() {
        let mut vs = villages(3, 8);
        simulate_observed(&mut vs, 0.5, 5, 2).unwrap();
        let a = msm_fit_p(&vs, 5, 50, &default_grid(0.05), 11).unwrap();
        let b = msm_fit_p(&vs, 5, 50, &default_grid(0.05), 11).unwrap();
        assert_eq!(a.p_hat, b.p_hat);
        assert_eq!(a.grid, b.grid);
        assert!(msm_fit_p(&vs, 5, 50, &[], 11).is_err());
        assert!(msm_fit_p(&[], 5, 50, &[0.5], 11).is_err());
        vs[0].observed = 0;
        assert!(msm_fit_p(&vs, 5, 50, &[0.5], 11).is_err());
    }
}
