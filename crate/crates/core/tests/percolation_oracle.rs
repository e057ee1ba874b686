use std::collections::VecDeque;

use netdiff::diffusion::{run_diffusion, Percolation, PercolationMode};
use netdiff::rng::par_replicate;
use netdiff::Graph;

/// Shortest-path layers over the passing edges, written independently of the library.
fn layers(n: usize, edges: &[(u32, u32)], pass: &[bool], seed: usize) -> Vec<Option<u32>> {
    let mut adj = vec![Vec::new(); n];
    for (&(u, v), &ok) in edges.iter().zip(pass) {
        if ok {
            adj[u as usize].push(v as usize);
            adj[v as usize].push(u as usize);
        }
    }
    let mut dist = vec![None; n];
    dist[seed] = Some(0);
    let mut queue = VecDeque::from([seed]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &w in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Exact `E[#activated by t]` for `t = 0..=horizon` by summing over all edge subsets.
fn exact_curve(g: &Graph, p: f64, seed: usize, horizon: u32) -> Vec<f64> {
    let m = g.edge_count();
    let mut curve = vec![0.0; horizon as usize + 1];
    for mask in 0u32..(1 << m) {
        let pass: Vec<bool> = (0..m).map(|e| mask >> e & 1 == 1).collect();
        let k = pass.iter().filter(|&&b| b).count() as i32;
        let w = p.powi(k) * (1.0 - p).powi(m as i32 - k);
        let dist = layers(g.n(), g.edges(), &pass, seed);
        for (t, c) in curve.iter_mut().enumerate() {
            *c += w * dist.iter().filter(|d| d.is_some_and(|d| d as usize <= t)).count() as f64;
        }
    }
    curve
}

fn corpus() -> Vec<Graph> {
    vec![
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap(),
        Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
        Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap(),
        Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap(),
        Graph::from_edges(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)]).unwrap(),
    ]
}

#[test]
fn every_subset_reproduces_the_reference_layers() {
    for g in corpus() {
        let m = g.edge_count();
        for mask in 0u32..(1 << m) {
            let pass: Vec<bool> = (0..m).map(|e| mask >> e & 1 == 1).collect();
            let perc = Percolation::from_indicators(&g, PercolationMode::Undirected, pass.clone()).unwrap();
            let trace = run_diffusion(&perc, &[0], g.n() as u32).unwrap();
            let dist = layers(g.n(), g.edges(), &pass, 0);
            for (d, &t) in dist.iter().zip(&trace.activation_time) {
                assert_eq!(*d, (t != u32::MAX).then_some(t));
            }
        }
    }
}

#[test]
fn path_of_three_matches_hand_computation() {
    let g = &corpus()[0];
    let exact = exact_curve(g, 0.5, 0, 2);
    assert_eq!(exact, vec![1.0, 1.5, 1.75]);
}

#[test]
fn monte_carlo_mean_agrees_with_enumeration() {
    let reps = 20_000;
    for (k, g) in corpus().iter().enumerate() {
        let p = 0.35;
        let horizon = 3;
        let exact = exact_curve(g, p, 0, horizon);
        let runs: Vec<Vec<usize>> = par_replicate(100 + k as u64, reps, |_, rng| {
            let perc = Percolation::sample(g, p, PercolationMode::Undirected, rng).unwrap();
            run_diffusion(&perc, &[0], horizon).unwrap().ever_activated()
        });
        for t in 0..=horizon as usize {
            let xs: Vec<f64> = runs.iter().map(|r| r[t] as f64).collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            assert!(
                (mean - exact[t]).abs() <= 4.0 * se + 1e-12,
                "graph {k} t {t}: {mean} vs {}",
                exact[t]
            );
        }
    }
}
