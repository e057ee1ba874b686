//! Graph generators: the lattice-plus-random geometric graph used as the
//! observed network, Bernoulli error graphs with restricted support,
//! random regular graphs, and independent link dropping.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::graph::{Graph, NodeId, UNREACHABLE};

/// Pairwise distance checks above this node count switch to grid buckets.
pub const EXACT_GEOMETRY_LIMIT: usize = 20_000;

// Lattice neighbors sit exactly at distance r; rounding must not drop them.
const RADIUS_SLACK: f64 = 1e-9;

/// Node coordinates in `[0,1]^q`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPositions {
    q: usize,
    coords: Vec<f64>,
}

impl LatentPositions {
    pub fn new(q: usize, coords: Vec<f64>) -> Result<Self> {
        if q == 0 || !coords.len().is_multiple_of(q) {
            return input(format!("{} coordinates do not split into dimension {q}", coords.len()));
        }
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return input("coordinates must lie in [0,1]");
        }
        Ok(LatentPositions { q, coords })
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: NodeId) -> &[f64] {
        &self.coords[i * self.q..(i + 1) * self.q]
    }

    pub fn dist2(&self, i: NodeId, j: NodeId) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Writes a `node,x1,...,xq` table with header.
    pub fn write_table(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node");
        for k in 1..=self.q {
            write!(out, ",x{k}").unwrap();
        }
        out.push('\n');
        for i in 0..self.len() {
            write!(out, "{i}").unwrap();
            for c in self.point(i) {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Connection radius `max{1/(s-1), (sqrt(q)/2) / (s-1)}` for lattice side `s`.
pub fn lattice_radius(q: usize, n_side: usize) -> f64 {
    let h = 1.0 / (n_side as f64 - 1.0);
    h.max((q as f64).sqrt() / 2.0 * h)
}

/// `n_side^q` lattice nodes (row-major, last coordinate fastest) followed by
/// `n - n_side^q` uniform nodes, every pair within the lattice radius linked.
pub fn generate_lattice_random<R: Rng + ?Sized>(
    n: usize,
    q: usize,
    n_side: usize,
    rng: &mut R,
) -> Result<(Graph, LatentPositions)> {
    if n_side < 2 {
        return input("n_side must be at least 2");
    }
    if q == 0 {
        return input("dimension q must be positive");
    }
    let lattice = n_side
        .checked_pow(q as u32)
        .filter(|&m| m <= n)
        .ok_or_else(|| crate::Error::Input(format!("n = {n} is smaller than n_side^q = {n_side}^{q}")))?;

    let step = 1.0 / (n_side as f64 - 1.0);
    let mut coords = Vec::with_capacity(n * q);
    let mut digits = vec![0usize; q];
    for _ in 0..lattice {
        coords.extend(digits.iter().map(|&d| d as f64 * step));
        for k in (0..q).rev() {
            digits[k] += 1;
            if digits[k] < n_side {
                break;
            }
            digits[k] = 0;
        }
    }
    for _ in lattice..n {
        for _ in 0..q {
            coords.push(rng.random::<f64>());
        }
    }
    let pos = LatentPositions { q, coords };
    let r = lattice_radius(q, n_side);
    let graph = geometric_graph(&pos, r, n > EXACT_GEOMETRY_LIMIT);
    Ok((graph, pos))
}

/// Links every pair within Euclidean distance `r`.
pub(crate) fn geometric_graph(pos: &LatentPositions, r: f64, bucketed: bool) -> Graph {
    let n = pos.len();
    let r2 = r * r * (1.0 + RADIUS_SLACK);
    let mut edges = Vec::new();
    if !bucketed {
        for i in 0..n {
            for j in i + 1..n {
                if pos.dist2(i, j) <= r2 {
                    edges.push((i as u32, j as u32));
                }
            }
        }
    } else {
        let q = pos.dim();
        let cells = ((1.0 / r).floor() as usize).max(1);
        let cell_of = |i: NodeId| -> Vec<usize> {
            pos.point(i)
                .iter()
                .map(|&c| ((c * cells as f64) as usize).min(cells - 1))
                .collect()
        };
        let flat = |c: &[usize]| c.iter().fold(0usize, |acc, &x| acc * cells + x);
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); cells.pow(q as u32)];
        for i in 0..n {
            buckets[flat(&cell_of(i))].push(i as u32);
        }
        let offsets: Vec<Vec<isize>> = (0..3usize.pow(q as u32))
            .map(|mut k| {
                (0..q)
                    .map(|_| {
                        let o = (k % 3) as isize - 1;
                        k /= 3;
                        o
                    })
                    .collect()
            })
            .collect();
        let mut probe = vec![0usize; q];
        for i in 0..n {
            let home = cell_of(i);
            'off: for off in &offsets {
                for k in 0..q {
                    let c = home[k] as isize + off[k];
                    if c < 0 || c >= cells as isize {
                        continue 'off;
                    }
                    probe[k] = c as usize;
                }
                for &j in &buckets[flat(&probe)] {
                    if (j as usize) > i && pos.dist2(i, j as usize) <= r2 {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
        edges.sort_unstable();
    }
    Graph::from_sorted_unique(n, edges)
}

/// Which node pairs may carry an error link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportRule {
    /// Each node's `ceil(delta*n)` nearest nodes by latent distance.
    LatentNearest,
    /// Each node's `ceil(delta*n)` nearest nodes by hop distance in a base graph.
    HopNearest,
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorGraphSpec {
    pub beta: f64,
    pub delta: f64,
    pub support: SupportRule,
}

impl ErrorGraphSpec {
    /// Unrestricted support (`delta = 1`).
    pub fn all_pairs(beta: f64) -> Self {
        ErrorGraphSpec {
            beta,
            delta: 1.0,
            support: SupportRule::AllPairs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return input(format!("beta = {} outside [0,1]", self.beta));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return input(format!("delta = {} outside (0,1]", self.delta));
        }
        if (self.delta == 1.0) != (self.support == SupportRule::AllPairs) {
            return input("delta = 1 exactly when support is all-pairs");
        }
        Ok(())
    }
}

/// Index of the lattice node nearest the center of `[0,1]^q` in the layout
/// used by [`generate_lattice_random`] (lower coordinate on even sides).
pub fn lattice_center(q: usize, n_side: usize) -> NodeId {
    let c = (n_side.saturating_sub(1)) / 2;
    (0..q).fold(0, |acc, _| acc * n_side + c)
}

/// Error graph: each admissible unordered pair linked independently with
/// probability `beta`. A pair is admissible if either endpoint has the other
/// among its `ceil(delta*n)` nearest nodes (ties by index).
pub fn generate_error_graph<R: Rng + ?Sized>(
    n: usize,
    spec: &ErrorGraphSpec,
    base: Option<&Graph>,
    positions: Option<&LatentPositions>,
    rng: &mut R,
) -> Result<Graph> {
    Ok(ErrorSupport::new(n, spec, base, positions)?.draw(rng))
}

/// An error-graph law with its admissible pair set resolved once, for
/// experiments that redraw the error graph every replication.
#[derive(Debug, Clone)]
pub struct ErrorSupport {
    n: usize,
    spec: ErrorGraphSpec,
    // None means all C(n,2) pairs
    pairs: Option<Vec<(u32, u32)>>,
}

impl ErrorSupport {
    pub fn new(
        n: usize,
        spec: &ErrorGraphSpec,
        base: Option<&Graph>,
        positions: Option<&LatentPositions>,
    ) -> Result<Self> {
        spec.validate()?;
        let pairs = match spec.support {
            SupportRule::AllPairs => None,
            SupportRule::LatentNearest => {
                let pos =
                    positions.ok_or_else(|| crate::Error::Input("latent-nearest support needs positions".into()))?;
                if pos.len() != n {
                    return input(format!("{} positions for {n} nodes", pos.len()));
                }
                Some(admissible_pairs(n, support_size(n, spec.delta), |i, k| {
                    latent_nearest(pos, i, k)
                }))
            }
            SupportRule::HopNearest => {
                let g = base.ok_or_else(|| crate::Error::Input("hop-nearest support needs a base graph".into()))?;
                if g.n() != n {
                    return input(format!("base graph has {} nodes, expected {n}", g.n()));
                }
                Some(admissible_pairs(n, support_size(n, spec.delta), |i, k| {
                    hop_nearest(g, i, k)
                }))
            }
        };
        Ok(ErrorSupport { n, spec: *spec, pairs })
    }

    pub fn spec(&self) -> &ErrorGraphSpec {
        &self.spec
    }

    /// Number of admissible pairs.
    pub fn pair_count(&self) -> u64 {
        match &self.pairs {
            Some(p) => p.len() as u64,
            None => (self.n as u64) * (self.n as u64).saturating_sub(1) / 2,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Graph {
        match &self.pairs {
            None => erdos_renyi(self.n, self.spec.beta, rng),
            Some(pairs) => bernoulli_subset(self.n, pairs, self.spec.beta, rng),
        }
    }
}

fn support_size(n: usize, delta: f64) -> usize {
    ((delta * n as f64).ceil() as usize).min(n.saturating_sub(1))
}

fn admissible_pairs<F>(n: usize, k: usize, nearest: F) -> Vec<(u32, u32)>
where
    F: Fn(NodeId, usize) -> Vec<NodeId>,
{
    let mut pairs = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in nearest(i, k) {
            pairs.push(if i < j {
                (i as u32, j as u32)
            } else {
                (j as u32, i as u32)
            });
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn latent_nearest(pos: &LatentPositions, i: NodeId, k: usize) -> Vec<NodeId> {
    let mut others: Vec<(f64, NodeId)> = (0..pos.len())
        .filter(|&j| j != i)
        .map(|j| (pos.dist2(i, j), j))
        .collect();
    let cmp = |a: &(f64, NodeId), b: &(f64, NodeId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < others.len() {
        others.select_nth_unstable_by(k, cmp);
        others.truncate(k);
    }
    others.into_iter().map(|(_, j)| j).collect()
}

/// The `k` nodes closest to `i` by hop distance (ties by index). Nodes outside
/// `i`'s component count as infinitely far.
fn hop_nearest(g: &Graph, i: NodeId, k: usize) -> Vec<NodeId> {
    let n = g.n();
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = VecDeque::new();
    dist[i] = 0;
    queue.push_back(i);
    let mut found: Vec<(u32, NodeId)> = Vec::new();
    let mut cutoff = UNREACHABLE;
    while let Some(u) = queue.pop_front() {
        if dist[u] > cutoff {
            break;
        }
        if u != i {
            found.push((dist[u], u));
            if found.len() == k {
                // finish this layer so index tie-breaking sees all of it
                cutoff = dist[u];
            }
        }
        for &w in g.neighbors(u) {
            let w = w as usize;
            if dist[w] == UNREACHABLE {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    found.sort_unstable();
    found.truncate(k);
    let mut out: Vec<NodeId> = found.into_iter().map(|(_, v)| v).collect();
    if out.len() < k {
        out.extend((0..n).filter(|&v| v != i && dist[v] == UNREACHABLE).take(k - out.len()));
    }
    out
}

/// Index gap to the next success in a run of Bernoulli(`p`) trials.
fn geometric_gap<R: Rng + ?Sized>(rng: &mut R, log_q: f64) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let g = (u.ln() / log_q).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Visits the successes of `total` independent Bernoulli(`p`) trials in
/// increasing index order, skipping geometrically between them.
pub(crate) fn bernoulli_indices<R: Rng + ?Sized>(total: u64, p: f64, rng: &mut R, mut visit: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(visit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut idx: u64 = 0;
    loop {
        let gap = geometric_gap(rng, log_q);
        idx = match idx.checked_add(gap) {
            Some(i) if i < total => i,
            _ => return,
        };
        visit(idx);
        idx += 1;
    }
}

/// G(n, beta) by geometric skipping over the `C(n,2)` pairs in lexicographic order.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Graph {
    let total = (n as u64) * (n as u64).saturating_sub(1) / 2;
    let mut edges = Vec::new();
    // walk the row structure alongside the flat index
    let (mut row, mut row_start) = (0u64, 0u64);
    bernoulli_indices(total, beta, rng, |idx| {
        while idx >= row_start + (n as u64 - 1 - row) {
            row_start += n as u64 - 1 - row;
            row += 1;
        }
        let col = row + 1 + (idx - row_start);
        edges.push((row as u32, col as u32));
    });
    Graph::from_sorted_unique(n, edges)
}

fn bernoulli_subset<R: Rng + ?Sized>(n: usize, pairs: &[(u32, u32)], p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    bernoulli_indices(pairs.len() as u64, p, rng, |i| edges.push(pairs[i as usize]));
    Graph::from_sorted_unique(n, edges)
}

/// Simple `d`-regular graph from the configuration model; the whole pairing is
/// redrawn whenever it produces a self-loop or a repeated edge.
pub fn generate_random_regular<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Graph> {
    if !(n * d).is_multiple_of(2) {
        return input(format!("n*d = {} must be even", n * d));
    }
    if d >= n && !(d == 0 && n == 0) {
        return input(format!("degree {d} must be below n = {n}"));
    }
    let mut stubs: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut attempts = 0u64;
    loop {
        attempts += 1;
        stubs.shuffle(rng);
        let mut edges: Vec<(u32, u32)> = stubs
            .chunks_exact(2)
            .map(|c| if c[0] < c[1] { (c[0], c[1]) } else { (c[1], c[0]) })
            .collect();
        if edges.iter().any(|&(u, v)| u == v) {
            continue;
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        log::debug!("random {d}-regular graph on {n} nodes after {attempts} pairings");
        return Ok(Graph::from_sorted_unique(n, edges));
    }
}

/// Removes each edge independently with probability `beta_drop`.
pub fn drop_links<R: Rng + ?Sized>(g: &Graph, beta_drop: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&beta_drop) {
        return input(format!("drop probability {beta_drop} outside [0,1]"));
    }
    let kept = g
        .edges()
        .iter()
        .copied()
        .filter(|_| !rng.random_bool(beta_drop))
        .collect();
    Ok(Graph::from_sorted_unique(g.n(), kept))
}
