//! Undirected, unweighted graphs in compressed adjacency form, plus the
//! traversal primitives and summary statistics the rest of the crate uses.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Dense node index in `[0, n)`.
pub type NodeId = usize;

/// Hop distance / time sentinel for "never reached".
pub const UNREACHABLE: u32 = u32::MAX;

/// Above this size `graph_stats` samples BFS sources instead of running all of them.
pub const EXACT_STATS_LIMIT: usize = 20_000;
const DEFAULT_STATS_SAMPLE: usize = 1_000;

/// Immutable simple undirected graph.
///
/// Neighbor lists are sorted ascending. Every undirected edge `{u, v}` with
/// `u < v` has a dense id in `[0, edge_count)`, assigned in lexicographic
/// order of `(u, v)`; both adjacency slots of an edge carry the same id.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    slot_edge: Vec<u32>,
    edges: Vec<(u32, u32)>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n())
            .field("edges", &self.edges)
            .finish()
    }
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
            slot_edge: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Strict constructor: rejects self-loops, duplicate edges (in either
    /// orientation) and out-of-range endpoints.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut canon = Vec::new();
        for (u, v) in edges {
            check_endpoints(n, u, v)?;
            canon.push(ordered(u, v));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return input(format!("duplicate edge {}-{}", w[0].0, w[0].1));
        }
        Ok(Self::from_sorted_unique(n, canon))
    }

    /// Lenient constructor: duplicates collapse to one edge. Self-loops and
    /// out-of-range endpoints are still errors.
    pub fn from_edges_dedup<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut canon = Vec::new();
        for (u, v) in edges {
            check_endpoints(n, u, v)?;
            canon.push(ordered(u, v));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self::from_sorted_unique(n, canon))
    }

    pub(crate) fn from_sorted_unique(n: usize, edges: Vec<(u32, u32)>) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut neighbors = vec![0u32; total];
        let mut slot_edge = vec![0u32; total];
        let mut fill = offsets[..n].to_vec();
        for (id, &(u, v)) in edges.iter().enumerate() {
            let (u, v) = (u as usize, v as usize);
            neighbors[fill[u]] = v as u32;
            slot_edge[fill[u]] = id as u32;
            fill[u] += 1;
            neighbors[fill[v]] = u as u32;
            slot_edge[fill[v]] = id as u32;
            fill[v] += 1;
        }
        for v in 0..n {
            let (a, b) = (offsets[v], offsets[v + 1]);
            let mut pairs: Vec<(u32, u32)> = neighbors[a..b]
                .iter()
                .copied()
                .zip(slot_edge[a..b].iter().copied())
                .collect();
            pairs.sort_unstable();
            for (k, (w, e)) in pairs.into_iter().enumerate() {
                neighbors[a + k] = w;
                slot_edge[a + k] = e;
            }
        }
        Graph {
            offsets,
            neighbors,
            slot_edge,
            edges,
        }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(low, high)` endpoint pairs indexed by edge id.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: NodeId) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Edge ids aligned with [`Graph::neighbors`].
    pub fn neighbor_edge_ids(&self, v: NodeId) -> &[u32] {
        &self.slot_edge[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n() && v < self.n() && self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Id of edge `{u, v}` if present.
    pub fn edge_id(&self, u: NodeId, v: NodeId) -> Option<usize> {
        if u >= self.n() || v >= self.n() {
            return None;
        }
        let nb = self.neighbors(u);
        nb.binary_search(&(v as u32))
            .ok()
            .map(|k| self.neighbor_edge_ids(u)[k] as usize)
    }

    fn check_node(&self, v: NodeId, what: &str) -> Result<()> {
        if v >= self.n() {
            return input(format!("{what} {v} out of range for graph with {} nodes", self.n()));
        }
        Ok(())
    }

    /// BFS hop distances from `source`; unreachable nodes get [`UNREACHABLE`].
    pub fn distances_from(&self, source: NodeId) -> Result<Vec<u32>> {
        self.check_node(source, "source")?;
        let mut dist = vec![UNREACHABLE; self.n()];
        let mut queue = VecDeque::new();
        bfs_into(self, source, &mut dist, &mut queue, None);
        Ok(dist)
    }

    /// Nodes within `radius` hops of `center`, ascending.
    pub fn ball(&self, center: NodeId, radius: u32) -> Result<Vec<NodeId>> {
        self.check_node(center, "center")?;
        let mut dist = vec![UNREACHABLE; self.n()];
        let mut queue = VecDeque::new();
        bfs_into(self, center, &mut dist, &mut queue, Some(radius));
        Ok((0..self.n()).filter(|&v| dist[v] <= radius).collect())
    }

    /// Connected-component label per node (labels ordered by smallest member)
    /// and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u) {
                    let w = w as usize;
                    if label[w] == usize::MAX {
                        label[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.components().1 == 1
    }

    /// Induced subgraph on `keep` (ascending, unique). Returns the subgraph and
    /// the old-to-new index map.
    pub fn induced_subgraph(&self, keep: &[NodeId]) -> (Graph, Vec<Option<NodeId>>) {
        let mut map = vec![None; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(u, v)| match (map[u as usize], map[v as usize]) {
                (Some(a), Some(b)) => Some(ordered(a, b)),
                _ => None,
            })
            .collect::<Vec<_>>();
        let mut edges = edges;
        edges.sort_unstable();
        (Graph::from_sorted_unique(keep.len(), edges), map)
    }
}

fn ordered(u: NodeId, v: NodeId) -> (u32, u32) {
    if u < v {
        (u as u32, v as u32)
    } else {
        (v as u32, u as u32)
    }
}

fn check_endpoints(n: usize, u: NodeId, v: NodeId) -> Result<()> {
    if u >= n || v >= n {
        return input(format!("edge {u}-{v} out of range for {n} nodes"));
    }
    if u == v {
        return input(format!("self-loop at node {u}"));
    }
    Ok(())
}

/// BFS into a caller-owned buffer. `dist` must be all [`UNREACHABLE`] on entry
/// for the nodes this search can reach. Returns the visit order.
fn bfs_into(
    g: &Graph,
    source: NodeId,
    dist: &mut [u32],
    queue: &mut VecDeque<NodeId>,
    max_depth: Option<u32>,
) -> Vec<NodeId> {
    let mut order = Vec::new();
    queue.clear();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        let du = dist[u];
        if max_depth.is_some_and(|m| du >= m) {
            continue;
        }
        for &w in g.neighbors(u) {
            let w = w as usize;
            if dist[w] == UNREACHABLE {
                dist[w] = du + 1;
                queue.push_back(w);
            }
        }
    }
    order
}

/// Edge-set union of two graphs on the same node set.
pub fn union(a: &Graph, b: &Graph) -> Result<Graph> {
    if a.n() != b.n() {
        return input(format!("union of graphs with {} and {} nodes", a.n(), b.n()));
    }
    let mut edges = Vec::with_capacity(a.edge_count() + b.edge_count());
    let (mut i, mut j) = (0, 0);
    while i < a.edges.len() || j < b.edges.len() {
        let next = match (a.edges.get(i), b.edges.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
                *x
            }
            (Some(x), Some(y)) if x < y => {
                i += 1;
                *x
            }
            (Some(_), Some(y)) => {
                j += 1;
                *y
            }
            (Some(x), None) => {
                i += 1;
                *x
            }
            (None, Some(y)) => {
                j += 1;
                *y
            }
            (None, None) => unreachable!(),
        };
        edges.push(next);
    }
    Ok(Graph::from_sorted_unique(a.n(), edges))
}

/// Induced subgraph on the largest connected component. Ties go to the
/// component whose smallest original index is lowest.
pub fn largest_component(g: &Graph) -> (Graph, Vec<Option<NodeId>>) {
    let (label, count) = g.components();
    let mut sizes = vec![0usize; count];
    for &l in &label {
        sizes[l] += 1;
    }
    // labels are assigned in order of smallest member, so the first maximum wins ties
    let best = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
    let keep: Vec<NodeId> = (0..g.n()).filter(|&v| label[v] == best).collect();
    g.induced_subgraph(&keep)
}

/// Largest finite eccentricity, exact, by iterative fringe upper bounding
/// within each component from the midpoint of a double sweep.
pub fn diameter(g: &Graph) -> u32 {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut dist = vec![UNREACHABLE; n];
    let mut other = vec![UNREACHABLE; n];
    let mut queue = VecDeque::new();
    let mut bits = [vec![0u64; n], vec![0u64; n], vec![0u64; n]];
    let mut best = 0;
    let ecc = |s: NodeId, dist: &mut [u32], queue: &mut VecDeque<NodeId>| -> (u32, NodeId, Vec<NodeId>) {
        let order = bfs_into(g, s, dist, queue, None);
        let far = *order.last().expect("source is visited");
        (dist[far], far, order)
    };
    let reset = |d: &mut [u32], order: &[NodeId]| order.iter().for_each(|&v| d[v] = UNREACHABLE);
    for root in 0..n {
        if seen[root] {
            continue;
        }
        let (_, a, comp) = ecc(root, &mut dist, &mut queue);
        comp.iter().for_each(|&v| seen[v] = true);
        reset(&mut dist, &comp);
        if comp.len() <= 2 {
            best = best.max(comp.len() as u32 - 1);
            continue;
        }
        let (dab, b, _) = ecc(a, &mut dist, &mut queue);
        let (eb, _, _) = ecc(b, &mut other, &mut queue);
        let half = dab / 2;
        let mid = comp
            .iter()
            .copied()
            .find(|&v| dist[v] == half && dist[v] + other[v] == dab)
            .expect("a shortest path passes every level");
        reset(&mut dist, &comp);
        reset(&mut other, &comp);

        let (e, _, order) = ecc(mid, &mut other, &mut queue);
        let mut lb = eb.max(e);
        let mut level = e;
        let mut end = order.len();
        while level > 0 && lb < 2 * level {
            let start = order[..end].partition_point(|&v| other[v] < level);
            let mut fringe = 0;
            for batch in order[start..end].chunks(64) {
                fringe = fringe.max(batch_max_eccentricity(g, batch, &mut bits));
            }
            lb = lb.max(fringe);
            if lb > 2 * (level - 1) {
                break;
            }
            end = start;
            level -= 1;
        }
        reset(&mut other, &comp);
        best = best.max(lb);
    }
    best
}

/// Largest eccentricity among up to 64 `sources`, one BFS per bit lane.
fn batch_max_eccentricity(g: &Graph, sources: &[NodeId], bits: &mut [Vec<u64>; 3]) -> u32 {
    debug_assert!(sources.len() <= 64);
    let [seen, frontier, next] = bits;
    seen.fill(0);
    frontier.fill(0);
    for (k, &s) in sources.iter().enumerate() {
        seen[s] |= 1 << k;
        frontier[s] |= 1 << k;
    }
    let mut level = 0;
    loop {
        let mut grew = false;
        for v in 0..g.n() {
            let reach = g.neighbors(v).iter().fold(0u64, |acc, &w| acc | frontier[w as usize]);
            let fresh = reach & !seen[v];
            next[v] = fresh;
            if fresh != 0 {
                seen[v] |= fresh;
                grew = true;
            }
        }
        if !grew {
            return level;
        }
        level += 1;
        std::mem::swap(frontier, next);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n: usize,
    pub edge_count: usize,
    /// Largest finite eccentricity among the BFS sources used.
    pub diameter: u32,
    pub mean_degree: f64,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_clustering: f64,
    /// Mean hop distance over reachable ordered pairs.
    pub avg_path_length: f64,
    pub component_count: usize,
    /// `None` when every node was a BFS source.
    pub sampled_sources: Option<usize>,
}

/// Mean local clustering; nodes of degree < 2 contribute 0.
pub fn mean_clustering(g: &Graph) -> f64 {
    let n = g.n();
    if n == 0 {
        return 0.0;
    }
    let mut mark = vec![false; n];
    let mut total = 0.0;
    for v in 0..n {
        let nb = g.neighbors(v);
        let k = nb.len();
        if k < 2 {
            continue;
        }
        for &w in nb {
            mark[w as usize] = true;
        }
        let mut links = 0usize;
        for &w in nb {
            links += g.neighbors(w as usize).iter().filter(|&&x| mark[x as usize]).count();
        }
        for &w in nb {
            mark[w as usize] = false;
        }
        // each triangle edge counted from both ends
        let triangles = links / 2;
        total += triangles as f64 / (k * (k - 1) / 2) as f64;
    }
    total / n as f64
}

/// Summary statistics. With `path_length_sample = None` diameter and average
/// path length are exact (all-source BFS) up to [`EXACT_STATS_LIMIT`] nodes;
/// otherwise they are estimated from uniformly sampled sources.
pub fn graph_stats<R: Rng + ?Sized>(g: &Graph, path_length_sample: Option<usize>, rng: &mut R) -> Result<GraphStats> {
    let n = g.n();
    if n == 0 {
        return input("graph_stats on an empty graph");
    }
    let sample = match path_length_sample {
        Some(k) if k < n => Some(k.max(1)),
        Some(_) => None,
        None if n > EXACT_STATS_LIMIT => {
            log::info!("graph with {n} nodes exceeds exact limit; sampling {DEFAULT_STATS_SAMPLE} BFS sources");
            Some(DEFAULT_STATS_SAMPLE)
        }
        None => None,
    };
    let sources: Vec<NodeId> = match sample {
        Some(k) => {
            let mut s = index::sample(rng, n, k).into_vec();
            s.sort_unstable();
            s
        }
        None => (0..n).collect(),
    };

    let mut dist = vec![UNREACHABLE; n];
    let mut queue = VecDeque::new();
    let mut diameter = 0u32;
    let mut path_sum = 0u128;
    let mut path_pairs = 0u128;
    for &s in &sources {
        let order = bfs_into(g, s, &mut dist, &mut queue, None);
        for &v in &order {
            let d = dist[v];
            diameter = diameter.max(d);
            path_sum += d as u128;
            dist[v] = UNREACHABLE;
        }
        path_pairs += (order.len() - 1) as u128;
    }

    let degrees = (0..n).map(|v| g.degree(v));
    let min_degree = degrees.clone().min().unwrap();
    let max_degree = degrees.max().unwrap();
    Ok(GraphStats {
        n,
        edge_count: g.edge_count(),
        diameter,
        mean_degree: g.mean_degree(),
        min_degree,
        max_degree,
        mean_clustering: mean_clustering(g),
        avg_path_length: if path_pairs == 0 {
            0.0
        } else {
            path_sum as f64 / path_pairs as f64
        },
        component_count: g.components().1,
        sampled_sources: sample,
    })
}

/// Reads a `u,v` edge list. Blank lines and `#` comments are skipped; a
/// `# n=<count>` comment fixes the node count, otherwise it is `max id + 1`.
/// Duplicates (either orientation) and self-loops are rejected.
pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let file = fs::File::open(path)?;
    let mut n_decl = None;
    let mut pairs = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("n=") {
                n_decl = Some(v.trim().parse::<usize>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("bad node count: {e}"),
                })?);
            }
            continue;
        }
        let (u, v) = parse_pair(t).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        })?;
        pairs.push((u, v, lineno));
    }
    let n = n_decl.unwrap_or_else(|| pairs.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
    let mut seen = std::collections::HashSet::new();
    for &(u, v, line) in &pairs {
        let fail = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if u == v {
            return Err(fail(format!("self-loop at node {u}")));
        }
        if u >= n || v >= n {
            return Err(fail(format!("edge {u}-{v} out of range for {n} nodes")));
        }
        if !seen.insert(ordered(u, v)) {
            return Err(fail(format!("duplicate edge {u}-{v}")));
        }
    }
    Graph::from_edges(n, pairs.into_iter().map(|(u, v, _)| (u, v)))
}

pub(crate) fn parse_pair(t: &str) -> std::result::Result<(usize, usize), String> {
    let mut it = t.split(',').map(str::trim);
    let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
        return Err(format!("expected `u,v`, got {t:?}"));
    };
    let u = a.parse::<usize>().map_err(|e| format!("bad node id {a:?}: {e}"))?;
    let v = b.parse::<usize>().map_err(|e| format!("bad node id {b:?}: {e}"))?;
    Ok((u, v))
}

/// Writes the edge list with a leading `# n=<count>` line.
pub fn write_edge_list(g: &Graph, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(g.edge_count() * 12 + 16);
    writeln!(out, "# n={}", g.n()).unwrap();
    for &(u, v) in g.edges() {
        writeln!(out, "{u},{v}").unwrap();
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn path(n: usize) -> Graph {
        Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    pub fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    pub fn triangle() -> Graph {
        cycle(3)
    }

    pub fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i))).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const U: u32 = UNREACHABLE;

    #[test]
    fn distances_examples() {
        assert_eq!(path(3).distances_from(0).unwrap(), vec![0, 1, 2]);
        let two = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(two.distances_from(0).unwrap(), vec![0, 1, U, U]);
        assert_eq!(cycle(4).distances_from(0).unwrap(), vec![0, 1, 2, 1]);
        assert!(path(3).distances_from(3).is_err());
    }

    #[test]
    fn ball_examples() {
        assert_eq!(cycle(5).ball(2, 0).unwrap(), vec![2]);
        assert_eq!(path(3).ball(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(cycle(4).ball(0, 1).unwrap(), vec![0, 1, 3]);
        assert!(cycle(4).ball(9, 1).is_err());
    }

    #[test]
    fn stats_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = graph_stats(&triangle(), None, &mut rng).unwrap();
        assert_eq!(s.diameter, 1);
        assert_eq!(s.mean_degree, 2.0);
        assert_eq!(s.mean_clustering, 1.0);

        let s = graph_stats(&path(3), None, &mut rng).unwrap();
        assert_eq!(s.diameter, 2);
        assert!((s.mean_degree - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.mean_clustering, 0.0);
        // pairs: (0,1)=1 (0,2)=2 (1,2)=1, both directions
        assert!((s.avg_path_length - 4.0 / 3.0).abs() < 1e-12);

        let s = graph_stats(&star(3), None, &mut rng).unwrap();
        assert_eq!(s.diameter, 2);
        assert_eq!(s.max_degree, 3);
        assert_eq!(s.min_degree, 1);
        assert_eq!(s.mean_clustering, 0.0);

        assert!(graph_stats(&Graph::empty(0), None, &mut rng).is_err());
    }

    #[test]
    fn stats_ignore_unreachable_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let s = graph_stats(&g, None, &mut rng).unwrap();
        assert_eq!(s.component_count, 2);
        assert_eq!(s.diameter, 2);
        // path component: 8 ordered-pair hops over 6 pairs; edge: 2 over 2
        assert!((s.avg_path_length - 10.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_stats_record_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = graph_stats(&cycle(50), Some(10), &mut rng).unwrap();
        assert_eq!(s.sampled_sources, Some(10));
        assert_eq!(s.diameter, 25);
    }

    #[test]
    fn union_examples() {
        let g = cycle(4);
        assert_eq!(union(&g, &Graph::empty(4)).unwrap(), g);
        assert_eq!(union(&g, &g).unwrap(), g);
        let a = Graph::from_edges(3, [(0, 1)]).unwrap();
        let b = Graph::from_edges(3, [(1, 2)]).unwrap();
        assert_eq!(union(&a, &b).unwrap(), path(3));
        assert!(union(&a, &Graph::empty(4)).is_err());
    }

    #[test]
    fn largest_component_examples() {
        let g = cycle(5);
        let (h, map) = largest_component(&g);
        assert_eq!(h, g);
        assert!(map.iter().enumerate().all(|(i, m)| *m == Some(i)));

        let g = Graph::from_edges(4, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let (h, map) = largest_component(&g);
        assert_eq!(h, triangle());
        assert_eq!(map[3], None);

        let g = Graph::from_edges(5, [(0, 1), (2, 3), (3, 4)]).unwrap();
        let (h, map) = largest_component(&g);
        assert_eq!(h, path(3));
        assert_eq!(map, vec![None, None, Some(0), Some(1), Some(2)]);

        // tie: smallest minimum index wins
        let g = Graph::from_edges(4, [(2, 3), (0, 1)]).unwrap();
        let (_, map) = largest_component(&g);
        assert_eq!(map, vec![Some(0), Some(1), None, None]);
    }

    #[test]
    fn strict_constructor_rejects_bad_edges() {
        assert!(Graph::from_edges(3, [(0, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
        assert_eq!(Graph::from_edges_dedup(3, [(0, 1), (1, 0)]).unwrap().edge_count(), 1);
    }

    #[test]
    fn edge_ids_are_shared_by_both_slots() {
        let g = Graph::from_edges(4, [(2, 3), (0, 2), (1, 2), (0, 1)]).unwrap();
        for (id, &(u, v)) in g.edges().iter().enumerate() {
            assert_eq!(g.edge_id(u as usize, v as usize), Some(id));
            assert_eq!(g.edge_id(v as usize, u as usize), Some(id));
        }
        assert_eq!(g.neighbors(2), &[0, 1, 3]);
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (4, 2)]).unwrap();
        write_edge_list(&g, &p).unwrap();
        assert_eq!(read_edge_list(&p).unwrap(), g);

        fs::write(&p, "0,1\n1,0\n").unwrap();
        match read_edge_list(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&p, "0,1\n2,2\n").unwrap();
        assert!(matches!(read_edge_list(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "0;1\n").unwrap();
        assert!(matches!(read_edge_list(&p), Err(Error::Parse { line: 1, .. })));
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
        (2..max_n).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..3 * n)
                .prop_map(move |pairs| Graph::from_edges_dedup(n, pairs.into_iter().filter(|(u, v)| u != v)).unwrap())
        })
    }

    fn brute_diameter(g: &Graph) -> u32 {
        (0..g.n())
            .flat_map(|s| g.distances_from(s).unwrap())
            .filter(|&d| d != UNREACHABLE)
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #[test]
        fn diameter_matches_all_sources(g in arb_graph(30)) {
            prop_assert_eq!(diameter(&g), brute_diameter(&g));
        }

        #[test]
        fn invariants_hold(g in arb_graph(20)) {
            let mut slots = 0;
            for v in 0..g.n() {
                let nb = g.neighbors(v);
                prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
                for &w in nb {
                    prop_assert!(w as usize != v);
                    prop_assert!(g.has_edge(w as usize, v));
                }
                slots += nb.len();
            }
            prop_assert_eq!(slots, 2 * g.edge_count());
        }

        #[test]
        fn distances_differ_by_at_most_one_along_edges(g in arb_graph(25), s in 0usize..25) {
            let s = s % g.n();
            let d = g.distances_from(s).unwrap();
            for &(u, v) in g.edges() {
                let (a, b) = (d[u as usize], d[v as usize]);
                if a == U || b == U {
                    prop_assert_eq!(a, b);
                } else {
                    prop_assert!(a.abs_diff(b) <= 1);
                }
            }
        }

        #[test]
        fn balls_nest_and_saturate(g in arb_graph(25), c in 0usize..25) {
            let c = c % g.n();
            let mut prev = g.ball(c, 0).unwrap();
            for r in 1..g.n() as u32 {
                let cur = g.ball(c, r).unwrap();
                prop_assert!(prev.iter().all(|v| cur.binary_search(v).is_ok()));
                prev = cur;
            }
            let (label, _) = g.components();
            let comp: Vec<_> = (0..g.n()).filter(|&v| label[v] == label[c]).collect();
            prop_assert_eq!(prev, comp);
        }

        #[test]
        fn union_is_a_semilattice(a in arb_graph(12), b in arb_graph(12), c in arb_graph(12)) {
            let n = a.n().min(b.n()).min(c.n());
            let cut = |g: &Graph| g.induced_subgraph(&(0..n).collect::<Vec<_>>()).0;
            let (a, b, c) = (cut(&a), cut(&b), cut(&c));
            prop_assert_eq!(union(&a, &b).unwrap(), union(&b, &a).unwrap());
            prop_assert_eq!(union(&a, &a).unwrap(), a.clone());
            prop_assert_eq!(
                union(&union(&a, &b).unwrap(), &c).unwrap(),
                union(&a, &union(&b, &c).unwrap()).unwrap()
            );
        }

        #[test]
        fn largest_component_preserves_adjacency(g in arb_graph(20)) {
            let (h, map) = largest_component(&g);
            prop_assert!(h.is_connected());
            for &(u, v) in g.edges() {
                let (u, v) = (u as usize, v as usize);
                if let (Some(a), Some(b)) = (map[u], map[v]) {
                    prop_assert!(h.has_edge(a, b));
                }
            }
            let kept = map.iter().flatten().count();
            prop_assert_eq!(kept, h.n());
        }
    }
}
