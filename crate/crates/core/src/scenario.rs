//! The standard simulation setup: an observed lattice-random graph, the
//! error-link support around it, and the derived passing probability,
//! horizon and seed nodes.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::generate::{
    generate_lattice_random, lattice_center, ErrorGraphSpec, ErrorSupport, LatentPositions, SupportRule,
};
use crate::graph::{diameter, read_edge_list, Graph, NodeId};
use crate::rng::{derive_seed, stream};

/// Seed-family labels carved out of a master seed.
pub const GRAPH_STREAM: u64 = 11;
pub const SEED_NODE_STREAM: u64 = 12;
pub const SIM_STREAM: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Read the observed graph from this edge list instead of generating one.
    pub graph: Option<PathBuf>,
    pub q: usize,
    pub n: usize,
    pub n_side: usize,
    /// Basic reproductive number; `p = r0 / mean degree` unless `p` is set.
    pub r0: f64,
    pub p: Option<f64>,
    /// Error-link probability; defaults to `1 / (beta_divisor * n)`.
    pub beta: Option<f64>,
    pub beta_divisor: f64,
    /// Share of each node's nearest nodes eligible for error links.
    pub delta: f64,
    /// Steps to simulate; defaults to twice the observed diameter.
    pub horizon: Option<u32>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            graph: None,
            q: 4,
            n: 4000,
            n_side: 7,
            r0: 2.5,
            p: None,
            beta: None,
            beta_divisor: 10.0,
            delta: 1.0,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub l: Graph,
    pub positions: Option<LatentPositions>,
    pub support: ErrorSupport,
    pub p: f64,
    pub beta: f64,
    pub horizon: u32,
    pub diameter: u32,
    pub mean_degree: f64,
    /// Uniformly drawn node, fixed for the whole experiment.
    pub random_seed_node: NodeId,
    /// Lattice center when the graph was generated, else the random node.
    pub center_seed_node: NodeId,
}

/// Summary of a built scenario for run metadata.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub n: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub diameter: u32,
    pub p: f64,
    pub beta: f64,
    pub horizon: u32,
    pub error_pairs: u64,
    pub random_seed_node: NodeId,
    pub center_seed_node: NodeId,
}

impl Scenario {
    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            n: self.l.n(),
            edges: self.l.edge_count(),
            mean_degree: self.mean_degree,
            diameter: self.diameter,
            p: self.p,
            beta: self.beta,
            horizon: self.horizon,
            error_pairs: self.support.pair_count(),
            random_seed_node: self.random_seed_node,
            center_seed_node: self.center_seed_node,
        }
    }

    /// Seed for the Monte Carlo replications.
    pub fn sim_seed(master: u64) -> u64 {
        derive_seed(master, SIM_STREAM)
    }
}

/// Observed graph generated from (or read for) `spec` under `master`.
pub fn observed_graph(spec: &ScenarioSpec, master: u64) -> Result<(Graph, Option<LatentPositions>)> {
    match &spec.graph {
        Some(path) => Ok((read_edge_list(path)?, None)),
        None => {
            let mut rng = stream(derive_seed(master, GRAPH_STREAM), 0);
            let (g, pos) = generate_lattice_random(spec.n, spec.q, spec.n_side, &mut rng)?;
            Ok((g, Some(pos)))
        }
    }
}

pub fn build_scenario(spec: &ScenarioSpec, master: u64) -> Result<Scenario> {
    let (l, positions) = observed_graph(spec, master)?;
    let n = l.n();
    if n < 2 {
        return input("graph needs at least two nodes");
    }
    let mean_degree = l.mean_degree();
    let p = match spec.p {
        Some(p) => p,
        None if mean_degree > 0.0 => spec.r0 / mean_degree,
        None => return input("graph has no links; set p explicitly"),
    };
    if !(0.0..=1.0).contains(&p) {
        return input(format!("passing probability {p} outside [0,1]"));
    }
    if !(spec.beta_divisor > 0.0) {
        return input("beta divisor must be positive");
    }
    let beta = spec.beta.unwrap_or(1.0 / (spec.beta_divisor * n as f64));
    let rule = if spec.delta == 1.0 {
        SupportRule::AllPairs
    } else if positions.is_some() {
        SupportRule::LatentNearest
    } else {
        SupportRule::HopNearest
    };
    let es = ErrorGraphSpec {
        beta,
        delta: spec.delta,
        support: rule,
    };
    let support = ErrorSupport::new(n, &es, Some(&l), positions.as_ref())?;
    let diam = diameter(&l);
    let horizon = spec.horizon.unwrap_or(2 * diam);
    let random_seed_node = stream(derive_seed(master, SEED_NODE_STREAM), 0).random_range(0..n);
    let center_seed_node = if spec.graph.is_none() {
        lattice_center(spec.q, spec.n_side)
    } else {
        random_seed_node
    };
    Ok(Scenario {
        l,
        positions,
        support,
        p,
        beta,
        horizon,
        diameter: diam,
        mean_degree,
        random_seed_node,
        center_seed_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lattice_scenario() {
        let spec = ScenarioSpec {
            q: 2,
            n: 120,
            n_side: 10,
            ..Default::default()
        };
        let s = build_scenario(&spec, 3).unwrap();
        assert_eq!(s.l.n(), 120);
        assert!((s.p * s.mean_degree - 2.5).abs() < 1e-12);
        assert_eq!(s.beta, 1.0 / 1200.0);
        assert_eq!(s.horizon, 2 * s.diameter);
        assert_eq!(s.center_seed_node, lattice_center(2, 10));
        let again = build_scenario(&spec, 3).unwrap();
        assert_eq!(again.l.edges(), s.l.edges());
        assert_eq!(again.random_seed_node, s.random_seed_node);
        let local = build_scenario(&ScenarioSpec { delta: 0.1, ..spec }, 3).unwrap();
        assert_eq!(local.support.spec().support, SupportRule::LatentNearest);
    }
}
