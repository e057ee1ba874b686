//! One-period SIR diffusion as deterministic reachability over a sampled
//! percolation, the lazily-sampled decaying variant, overlap between two
//! runs, and attribution of activations to error-graph jumps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::graph::{Graph, NodeId};

/// Activation-time sentinel for nodes never activated.
pub const NEVER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercolationMode {
    /// One indicator per edge; an edge transmits at most once in either direction.
    #[default]
    Undirected,
    /// One indicator per ordered pair.
    Directed,
}

/// Realized transmission indicators over the edges of a graph.
#[derive(Debug, Clone)]
pub struct Percolation<'g> {
    graph: &'g Graph,
    mode: PercolationMode,
    // undirected: indexed by edge id; directed: 2*id for low->high, 2*id+1 for high->low
    pass: Vec<bool>,
}

impl<'g> Percolation<'g> {
    pub fn sample<R: Rng + ?Sized>(graph: &'g Graph, p: f64, mode: PercolationMode, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return input(format!("passing probability {p} outside [0,1]"));
        }
        let slots = match mode {
            PercolationMode::Undirected => graph.edge_count(),
            PercolationMode::Directed => 2 * graph.edge_count(),
        };
        let pass = (0..slots).map(|_| rng.random_bool(p)).collect();
        Ok(Percolation { graph, mode, pass })
    }

    /// Explicit indicators, laid out as described on the type.
    pub fn from_indicators(graph: &'g Graph, mode: PercolationMode, pass: Vec<bool>) -> Result<Self> {
        let expect = match mode {
            PercolationMode::Undirected => graph.edge_count(),
            PercolationMode::Directed => 2 * graph.edge_count(),
        };
        if pass.len() != expect {
            return input(format!("{} indicators for {expect} slots", pass.len()));
        }
        Ok(Percolation { graph, mode, pass })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn mode(&self) -> PercolationMode {
        self.mode
    }

    pub fn indicators(&self) -> &[bool] {
        &self.pass
    }

    pub fn passing_count(&self) -> usize {
        self.pass.iter().filter(|&&b| b).count()
    }

    #[inline]
    fn slot(&self, from: NodeId, to: NodeId, edge: usize) -> usize {
        match self.mode {
            PercolationMode::Undirected => edge,
            PercolationMode::Directed => 2 * edge + usize::from(from > to),
        }
    }

    /// Whether `from` would transmit to `to`. False when there is no such edge.
    pub fn passes(&self, from: NodeId, to: NodeId) -> bool {
        self.graph
            .edge_id(from, to)
            .is_some_and(|e| self.pass[self.slot(from, to, e)])
    }

    /// The same indicators seen on a subgraph: each edge of `sub` keeps the
    /// indicator(s) it has here.
    pub fn restrict<'s>(&self, sub: &'s Graph) -> Result<Percolation<'s>> {
        if sub.n() != self.graph.n() {
            return input("restriction to a graph with a different node count");
        }
        let mut pass = Vec::with_capacity(match self.mode {
            PercolationMode::Undirected => sub.edge_count(),
            PercolationMode::Directed => 2 * sub.edge_count(),
        });
        for &(u, v) in sub.edges() {
            let (u, v) = (u as usize, v as usize);
            let Some(e) = self.graph.edge_id(u, v) else {
                return input(format!("edge {u}-{v} not in the percolated graph"));
            };
            pass.push(self.pass[self.slot(u, v, e)]);
            if self.mode == PercolationMode::Directed {
                pass.push(self.pass[self.slot(v, u, e)]);
            }
        }
        Ok(Percolation {
            graph: sub,
            mode: self.mode,
            pass,
        })
    }
}

/// Outcome of one diffusion run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionTrace {
    /// Step at which each node was activated, or [`NEVER`].
    pub activation_time: Vec<u32>,
    /// Newly activated count per step `0..=horizon` (step 0 = seeds).
    pub new_by_step: Vec<usize>,
    pub seeds: Vec<NodeId>,
    pub horizon: u32,
}

impl DiffusionTrace {
    pub fn n(&self) -> usize {
        self.activation_time.len()
    }

    pub fn is_active_by(&self, v: NodeId, t: u32) -> bool {
        self.activation_time[v] <= t
    }

    /// Cumulative ever-activated counts for `t = 0..=horizon`.
    pub fn ever_activated(&self) -> Vec<usize> {
        self.new_by_step
            .iter()
            .scan(0usize, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }

    pub fn total_activated(&self) -> usize {
        self.new_by_step.iter().sum()
    }

    /// Writes a `node,activation_time` table; never-activated nodes are left blank.
    pub fn write_table(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::from("node,activation_time\n");
        for (v, &t) in self.activation_time.iter().enumerate() {
            if t == NEVER {
                writeln!(out, "{v},").unwrap();
            } else {
                writeln!(out, "{v},{t}").unwrap();
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn checked_seeds(n: usize, seeds: &[NodeId]) -> Result<Vec<NodeId>> {
    if seeds.is_empty() {
        return input("seed set is empty");
    }
    if let Some(&s) = seeds.iter().find(|&&s| s >= n) {
        return input(format!("seed {s} out of range for {n} nodes"));
    }
    let mut s = seeds.to_vec();
    s.sort_unstable();
    s.dedup();
    Ok(s)
}

/// Deterministic one-period SIR over `perc`: a node activated at step `t-1`
/// activates every not-yet-activated neighbor it passes to at step `t`, then
/// is removed.
pub fn run_diffusion(perc: &Percolation<'_>, seeds: &[NodeId], horizon: u32) -> Result<DiffusionTrace> {
    let g = perc.graph();
    let seeds = checked_seeds(g.n(), seeds)?;
    let mut time = vec![NEVER; g.n()];
    let mut new_by_step = vec![0usize; horizon as usize + 1];
    for &s in &seeds {
        time[s] = 0;
    }
    new_by_step[0] = seeds.len();
    let mut frontier = seeds.clone();
    let mut next = Vec::new();
    for t in 1..=horizon {
        if frontier.is_empty() {
            break;
        }
        next.clear();
        for &u in &frontier {
            for (&w, &e) in g.neighbors(u).iter().zip(g.neighbor_edge_ids(u)) {
                let w = w as usize;
                if time[w] == NEVER && perc.pass[perc.slot(u, w, e as usize)] {
                    time[w] = t;
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        new_by_step[t as usize] = next.len();
        std::mem::swap(&mut frontier, &mut next);
    }
    Ok(DiffusionTrace {
        activation_time: time,
        new_by_step,
        seeds,
        horizon,
    })
}

/// Passing probability `p0 / t^lambda` at step `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    pub p0: f64,
    pub lambda: f64,
}

impl DecaySpec {
    pub fn constant(p: f64) -> Self {
        DecaySpec { p0: p, lambda: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 >= 0.0 && self.p0 <= 1.0) {
            return input(format!("p(1) = {} outside [0,1]", self.p0));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return input(format!("decay exponent {} must be finite and nonnegative", self.lambda));
        }
        Ok(())
    }

    pub fn p_at(&self, t: u32) -> f64 {
        if self.lambda == 0.0 {
            self.p0
        } else {
            self.p0 / (t.max(1) as f64).powf(self.lambda)
        }
    }
}

/// Step-by-step simulation with a time-varying passing probability. Each
/// frontier edge to a susceptible node is flipped once, at first contact.
/// With `lambda = 0` this has the law of [`run_diffusion`] over an
/// undirected percolation.
pub fn run_diffusion_decaying<R: Rng + ?Sized>(
    g: &Graph,
    seeds: &[NodeId],
    horizon: u32,
    decay: &DecaySpec,
    rng: &mut R,
) -> Result<DiffusionTrace> {
    decay.validate()?;
    let seeds = checked_seeds(g.n(), seeds)?;
    let mut time = vec![NEVER; g.n()];
    let mut new_by_step = vec![0usize; horizon as usize + 1];
    for &s in &seeds {
        time[s] = 0;
    }
    new_by_step[0] = seeds.len();
    let mut frontier = seeds.clone();
    let mut next = Vec::new();
    for t in 1..=horizon {
        if frontier.is_empty() {
            break;
        }
        let p = decay.p_at(t);
        next.clear();
        for &u in &frontier {
            for &w in g.neighbors(u) {
                let w = w as usize;
                if time[w] == NEVER && rng.random_bool(p) {
                    time[w] = t;
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        new_by_step[t as usize] = next.len();
        std::mem::swap(&mut frontier, &mut next);
    }
    Ok(DiffusionTrace {
        activation_time: time,
        new_by_step,
        seeds,
        horizon,
    })
}

/// `|A(t) ∩ B(t)| / |A(t) ∪ B(t)|` over ever-activated sets; `None` when the
/// union is empty.
pub fn jaccard_overlap(a: &DiffusionTrace, b: &DiffusionTrace, t: u32) -> Result<Option<f64>> {
    if a.n() != b.n() {
        return input(format!("traces over {} and {} nodes", a.n(), b.n()));
    }
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&x, &y) in a.activation_time.iter().zip(&b.activation_time) {
        let (ia, ib) = (x <= t, y <= t);
        inter += usize::from(ia && ib);
        uni += usize::from(ia || ib);
    }
    Ok((uni > 0).then(|| inter as f64 / uni as f64))
}

/// [`jaccard_overlap`] for every `t = 0..=horizon` in one pass.
pub fn jaccard_curve(a: &DiffusionTrace, b: &DiffusionTrace, horizon: u32) -> Result<Vec<Option<f64>>> {
    if a.n() != b.n() {
        return input(format!("traces over {} and {} nodes", a.n(), b.n()));
    }
    let h = horizon as usize;
    let mut inter = vec![0usize; h + 2];
    let mut uni = vec![0usize; h + 2];
    for (&x, &y) in a.activation_time.iter().zip(&b.activation_time) {
        let (lo, hi) = (x.min(y), x.max(y));
        if lo != NEVER {
            uni[(lo as usize).min(h + 1)] += 1;
        }
        if hi != NEVER {
            inter[(hi as usize).min(h + 1)] += 1;
        }
    }
    let (mut ci, mut cu) = (0usize, 0usize);
    Ok((0..=h)
        .map(|t| {
            ci += inter[t];
            cu += uni[t];
            (cu > 0).then(|| ci as f64 / cu as f64)
        })
        .collect())
}

fn check_jump_inputs(trace: &DiffusionTrace, perc: &Percolation<'_>, l: &Graph, e: &Graph) -> Result<()> {
    let n = trace.n();
    if l.n() != n || e.n() != n || perc.graph().n() != n {
        return input("trace, percolation and graphs disagree on node count");
    }
    Ok(())
}

/// Whether `v` (activated at `t`) has an `L`-neighbor activated at `t-1` whose
/// percolation edge passes to it.
fn has_l_parent(trace: &DiffusionTrace, perc: &Percolation<'_>, l: &Graph, v: NodeId, t: u32) -> bool {
    l.neighbors(v)
        .iter()
        .any(|&w| trace.activation_time[w as usize] == t - 1 && perc.passes(w as usize, v))
}

/// Per step, the number of `E`-edges `(u, v)` that carried an activation
/// (`u` at `t-1`, `v` at `t`, edge passing `u -> v`) into a node with no
/// passing `L`-neighbor activated at `t-1`.
pub fn count_jumps(trace: &DiffusionTrace, perc: &Percolation<'_>, l: &Graph, e: &Graph) -> Result<Vec<usize>> {
    check_jump_inputs(trace, perc, l, e)?;
    let g = perc.graph();
    let at = &trace.activation_time;
    let mut jumps = vec![0usize; trace.horizon as usize + 1];
    for &(a, b) in e.edges() {
        let (a, b) = (a as usize, b as usize);
        if !g.has_edge(a, b) {
            return input(format!("E-edge {a}-{b} is not in the percolated graph"));
        }
        for (u, v) in [(a, b), (b, a)] {
            let tv = at[v];
            if tv == NEVER || tv == 0 || at[u] != tv - 1 || !perc.passes(u, v) {
                continue;
            }
            if !has_l_parent(trace, perc, l, v, tv) {
                jumps[tv as usize] += 1;
            }
        }
    }
    Ok(jumps)
}

/// Region label per activated node: 0 for the cluster grown from the seeds,
/// and a fresh label for each node entered through an attributed jump.
/// Non-jump nodes inherit the label of their lowest-index passing
/// `L`-parent. Returns labels ([`usize::MAX`] for never-activated nodes) and
/// the region count.
pub fn jump_regions(
    trace: &DiffusionTrace,
    perc: &Percolation<'_>,
    l: &Graph,
    e: &Graph,
) -> Result<(Vec<usize>, usize)> {
    check_jump_inputs(trace, perc, l, e)?;
    let at = &trace.activation_time;
    let n = trace.n();
    let mut order: Vec<NodeId> = (0..n).filter(|&v| at[v] != NEVER).collect();
    order.sort_by_key(|&v| (at[v], v));
    let mut label = vec![usize::MAX; n];
    let mut regions = 1;
    for v in order {
        let t = at[v];
        if t == 0 {
            label[v] = 0;
            continue;
        }
        let parent = l
            .neighbors(v)
            .iter()
            .map(|&w| w as usize)
            .find(|&w| at[w] == t - 1 && perc.passes(w, v));
        label[v] = match parent {
            Some(w) => label[w],
            None => {
                let jumped = e
                    .neighbors(v)
                    .iter()
                    .any(|&w| at[w as usize] == t - 1 && perc.passes(w as usize, v));
                if !jumped {
                    return input(format!("node {v} activated at step {t} without a passing parent"));
                }
                regions += 1;
                regions - 1
            }
        };
    }
    Ok((label, regions))
}
