//! Sensitivity of the diffusion to a local move of the seed.

use rand::Rng;
use serde::Serialize;

use super::CurveResult;
use crate::diffusion::{jaccard_curve, run_diffusion, Percolation, PercolationMode};
use crate::error::{input, Error, Result};
use crate::generate::ErrorSupport;
use crate::graph::{union, Graph, NodeId, UNREACHABLE};
use crate::rng::{derive_seed, par_replicate, stream};

/// Redraw budget in [`multi_seed_perturb`].
const MAX_REDRAWS: usize = 10_000;

/// An original seed `i0` and an alternative `j0` drawn from the ring of nodes
/// just beyond the second-nearest error-graph endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedPerturbation {
    pub i0: NodeId,
    pub j0: NodeId,
    /// Nearest and second-nearest nodes to `i0` with an error-graph link.
    pub e1: NodeId,
    pub e2: NodeId,
    pub d_e2: u32,
    /// Candidate alternatives: nodes at distance `d_e2 + 1` from `i0`.
    pub candidates: Vec<NodeId>,
    /// `|ball(i0, d_e2 + 1)| / n`.
    pub neighborhood_share: f64,
    /// `|candidates| / |ball(i0, d_e2 + 1)|`.
    pub j_share: f64,
}

/// Builds the alternative-seed set around `i0` on `union(l, e)` and draws
/// `j0` uniformly from it.
pub fn build_perturbation<R: Rng + ?Sized>(l: &Graph, e: &Graph, i0: NodeId, rng: &mut R) -> Result<SeedPerturbation> {
    if e.n() != l.n() {
        return input(format!("graphs over {} and {} nodes", l.n(), e.n()));
    }
    if e.edge_count() == 0 {
        return Err(Error::Experiment("error graph has no links".into()));
    }
    let g = union(l, e)?;
    let dist = g.distances_from(i0)?;
    let mut incident: Vec<(u32, NodeId)> = (0..g.n())
        .filter(|&v| e.degree(v) > 0 && dist[v] != UNREACHABLE)
        .map(|v| (dist[v], v))
        .collect();
    incident.sort_unstable();
    if incident.len() < 2 {
        return Err(Error::Experiment(format!(
            "fewer than two error-graph endpoints reachable from node {i0}"
        )));
    }
    let (e1, e2) = (incident[0].1, incident[1].1);
    let d_e2 = incident[1].0;
    let candidates: Vec<NodeId> = (0..g.n()).filter(|&v| dist[v] == d_e2 + 1).collect();
    if candidates.is_empty() {
        return Err(Error::Experiment(format!(
            "no nodes at distance {} from {i0}",
            d_e2 + 1
        )));
    }
    let ball = dist.iter().filter(|&&d| d <= d_e2 + 1).count();
    let j0 = candidates[rng.random_range(0..candidates.len())];
    Ok(SeedPerturbation {
        i0,
        j0,
        e1,
        e2,
        d_e2,
        neighborhood_share: ball as f64 / g.n() as f64,
        j_share: candidates.len() as f64 / ball as f64,
        candidates,
    })
}

/// Mean Jaccard overlap per step of the runs from `i0` and from `j0`, both
/// over the same percolation of `union(l, e)`. Steps where both runs are
/// empty are dropped and counted.
pub fn sensitive_dependence_curve(
    l: &Graph,
    e: &Graph,
    pert: &SeedPerturbation,
    p: f64,
    horizon: u32,
    reps: usize,
    seed: u64,
) -> Result<CurveResult> {
    let g = union(l, e)?;
    if pert.i0 >= g.n() || pert.j0 >= g.n() {
        return input("perturbation seeds out of range");
    }
    let samples = par_replicate(seed, reps, |_, rng| -> Result<Vec<Option<f64>>> {
        let perc = Percolation::sample(&g, p, PercolationMode::Undirected, rng)?;
        let a = run_diffusion(&perc, &[pert.i0], horizon)?;
        let b = run_diffusion(&perc, &[pert.j0], horizon)?;
        jaccard_curve(&a, &b, horizon)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let curve = CurveResult::from_samples(&samples)?;
    let dropped: Vec<usize> = curve.counts.iter().map(|&c| reps - c).collect();
    Ok(curve
        .with_meta("experiment", "sensitive-dependence")
        .with_meta("seed", seed)
        .with_meta("p", p)
        .with_meta("horizon", horizon)
        .with_meta("i0", pert.i0)
        .with_meta("j0", pert.j0)
        .with_meta("d_e2", pert.d_e2)
        .with_meta("undefined_dropped", dropped))
}

/// Sensitivity curves over independent `(E, j0)` draws.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityDraws {
    pub perturbations: Vec<SeedPerturbation>,
    pub curves: Vec<CurveResult>,
    /// Mean over draws of each draw's mean curve.
    pub pooled: Vec<f64>,
}

/// Repeats the sensitivity experiment over `draws` fresh error graphs, each
/// with its own `j0`.
#[allow(clippy::too_many_arguments)]
pub fn sensitive_dependence_over_draws(
    l: &Graph,
    support: &ErrorSupport,
    i0: NodeId,
    p: f64,
    horizon: u32,
    draws: usize,
    reps: usize,
    seed: u64,
) -> Result<SensitivityDraws> {
    if draws == 0 {
        return input("need at least one draw");
    }
    let (graph_seed, sim_seed) = (derive_seed(seed, 1), derive_seed(seed, 2));
    let mut perturbations = Vec::with_capacity(draws);
    let mut curves = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut rng = stream(graph_seed, d as u64);
        let e = support.draw(&mut rng);
        let pert = build_perturbation(l, &e, i0, &mut rng)?;
        curves.push(sensitive_dependence_curve(
            l,
            &e,
            &pert,
            p,
            horizon,
            reps,
            derive_seed(sim_seed, d as u64),
        )?);
        perturbations.push(pert);
    }
    let len = curves[0].mean.len();
    let pooled = (0..len)
        .map(|t| {
            let vals: Vec<f64> = curves.iter().map(|c| c.mean[t]).filter(|m| !m.is_nan()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    Ok(SensitivityDraws {
        perturbations,
        curves,
        pooled,
    })
}

/// Replaces one uniformly chosen seed by a uniformly chosen neighbor that is
/// not already a seed.
pub fn multi_seed_perturb<R: Rng + ?Sized>(seeds: &[NodeId], g: &Graph, rng: &mut R) -> Result<Vec<NodeId>> {
    if seeds.is_empty() {
        return input("seed set is empty");
    }
    if let Some(&s) = seeds.iter().find(|&&s| s >= g.n()) {
        return input(format!("seed {s} out of range for {} nodes", g.n()));
    }
    if let Some(&s) = seeds.iter().find(|&&s| g.degree(s) == 0) {
        return Err(Error::Experiment(format!("seed {s} has no neighbors")));
    }
    let is_seed = |v: NodeId| seeds.contains(&v);
    let movable = seeds
        .iter()
        .any(|&s| g.neighbors(s).iter().any(|&w| !is_seed(w as NodeId)));
    if !movable {
        return Err(Error::Experiment("every neighbor of every seed is a seed".into()));
    }
    for _ in 0..MAX_REDRAWS {
        let k = rng.random_range(0..seeds.len());
        let nb = g.neighbors(seeds[k]);
        let w = nb[rng.random_range(0..nb.len())] as NodeId;
        if !is_seed(w) {
            let mut out = seeds.to_vec();
            out[k] = w;
            return Ok(out);
        }
    }
    Err(Error::Experiment(format!(
        "no admissible replacement after {MAX_REDRAWS} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{cycle, path, star};

    #[test]
    fn perturbation_on_path_with_one_end_link() {
        let l = path(6);
        let e = Graph::from_edges(6, [(0, 1)]).unwrap();
        let pert = build_perturbation(&l, &e, 0, &mut stream(0, 0)).unwrap();
        assert_eq!((pert.e1, pert.e2, pert.d_e2), (0, 1, 1));
        assert_eq!(pert.candidates, vec![2]);
        assert_eq!(pert.j0, 2);
        assert!((pert.neighborhood_share - 0.5).abs() < 1e-12);
        assert!((pert.j_share - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_picks_ring_beyond_second_endpoint() {
        let l = path(8);
        let e = Graph::from_edges(8, [(1, 2)]).unwrap();
        let pert = build_perturbation(&l, &e, 0, &mut stream(1, 0)).unwrap();
        assert_eq!((pert.e1, pert.e2, pert.d_e2), (1, 2, 2));
        assert_eq!(pert.candidates, vec![3]);
        assert_eq!(pert.j0, 3);
        assert!((pert.neighborhood_share - 0.5).abs() < 1e-12);
        assert!((pert.j_share - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perturbation_errors() {
        let l = path(4);
        assert!(build_perturbation(&l, &Graph::empty(4), 0, &mut stream(0, 0)).is_err());
        // J empty: the far endpoint is the last node
        let e = Graph::from_edges(4, [(2, 3)]).unwrap();
        assert!(build_perturbation(&l, &e, 0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn same_seed_gives_unit_overlap() {
        let l = cycle(12);
        let e = Graph::from_edges(12, [(0, 6)]).unwrap();
        let mut pert = build_perturbation(&l, &e, 3, &mut stream(0, 0)).unwrap();
        pert.j0 = pert.i0;
        let c = sensitive_dependence_curve(&l, &e, &pert, 0.5, 10, 200, 9).unwrap();
        assert!(c.mean.iter().all(|&m| m == 1.0));
        assert!(c.counts.iter().all(|&k| k == 200));
    }

    #[test]
    fn overlap_stays_in_unit_interval() {
        let l = cycle(30);
        let e = Graph::from_edges(30, [(0, 15), (4, 20)]).unwrap();
        let pert = build_perturbation(&l, &e, 2, &mut stream(3, 0)).unwrap();
        let c = sensitive_dependence_curve(&l, &e, &pert, 0.7, 20, 300, 4).unwrap();
        assert!(c.mean.iter().all(|&m| (0.0..=1.0).contains(&m)));
        // disjoint seeds start with zero overlap
        assert_eq!(c.mean[0], 0.0);
    }

    #[test]
    fn singleton_seed_moves_to_either_side() {
        let g = path(3);
        let mut hits = [0usize; 3];
        let reps = 4000;
        for r in 0..reps {
            let out = multi_seed_perturb(&[1], &g, &mut stream(5, r)).unwrap();
            assert_eq!(out.len(), 1);
            hits[out[0]] += 1;
        }
        assert_eq!(hits[1], 0);
        // each side has probability 1/2; 4 sigma band
        let sd = (reps as f64 * 0.25).sqrt();
        assert!((hits[0] as f64 - reps as f64 / 2.0).abs() < 4.0 * sd);
    }

    #[test]
    fn perturb_preserves_size_and_rejects_stuck_sets() {
        let g = star(3);
        let out = multi_seed_perturb(&[1, 2], &g, &mut stream(0, 0)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(multi_seed_perturb(&[0, 1, 2, 3], &g, &mut stream(0, 0)).is_err());
        assert!(multi_seed_perturb(&[0], &Graph::empty(2), &mut stream(0, 0)).is_err());
    }
}
