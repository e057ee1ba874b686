//! Loaders for origin-destination flow tables and village network files.
//!
//! Formats (all comma separated, UTF-8):
//! - flows: header `origin,destination,flow`, one directed flow per row;
//! - village graph: optional `# n=<count>` line, then one directed report
//!   `u,v` per line;
//! - seeds: one node id per line;
//! - outcomes: header `node,<col>...`, exactly one row per node.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::graph::{largest_component, parse_pair, Graph, NodeId};

/// One directed flow, with region names interned to dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowRecord {
    pub origin: NodeId,
    pub destination: NodeId,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTable {
    /// Region names sorted lexicographically; a region's id is its index.
    pub regions: Vec<String>,
    pub records: Vec<FlowRecord>,
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_error(path, line, e.to_string())
}

/// Reads an `origin,destination,flow` table. Ids follow the sorted order of
/// region names, so the result does not depend on row order.
pub fn load_flows(path: &Path) -> Result<FlowTable> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(FlowTable {
            regions: Vec::new(),
            records: Vec::new(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["origin", "destination", "flow"] {
        return Err(parse_error(
            path,
            1,
            format!("expected header origin,destination,flow, got {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    let mut seen = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let (o, d, f) = (&rec[0], &rec[1], &rec[2]);
        if o.is_empty() || d.is_empty() {
            return Err(parse_error(path, line, "empty region id"));
        }
        let flow: f64 = f
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad flow {f:?}: {e}")))?;
        if !(flow.is_finite() && flow >= 0.0) {
            return Err(parse_error(
                path,
                line,
                format!("flow {flow} must be finite and nonnegative"),
            ));
        }
        if let Some(prev) = seen.insert((o.to_string(), d.to_string()), line) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate flow {o}->{d} (first on line {prev})"),
            ));
        }
        rows.push((o.to_string(), d.to_string(), flow));
    }
    let names: BTreeSet<&str> = rows.iter().flat_map(|(o, d, _)| [o.as_str(), d.as_str()]).collect();
    let regions: Vec<String> = names.into_iter().map(String::from).collect();
    let id = |s: &str| regions.binary_search_by(|r| r.as_str().cmp(s)).unwrap();
    let records = rows
        .iter()
        .map(|(o, d, f)| FlowRecord {
            origin: id(o),
            destination: id(d),
            flow: *f,
        })
        .collect();
    Ok(FlowTable { regions, records })
}

/// Link rule for symmetrized flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// Link when the mean flow strictly exceeds this many trips.
    Cutoff(f64),
    /// Cutoff at this percentile (nearest rank) of the positive mean flows.
    Percentile(f64),
}

#[derive(Debug, Clone)]
pub struct PrunedNetwork {
    /// Largest connected component of the thresholded graph.
    pub graph: Graph,
    /// Region id of each retained node.
    pub regions: Vec<NodeId>,
    pub cutoff: f64,
    /// Node and edge counts before component extraction.
    pub nodes_before: usize,
    pub edges_before: usize,
}

/// Mean of the two directed flows per unordered pair; a missing direction
/// counts as zero. Self-flows are dropped.
pub fn symmetrized_flows(table: &FlowTable) -> BTreeMap<(NodeId, NodeId), f64> {
    let mut sums: BTreeMap<(NodeId, NodeId), [f64; 2]> = BTreeMap::new();
    for r in &table.records {
        if r.origin == r.destination {
            continue;
        }
        let key = (r.origin.min(r.destination), r.origin.max(r.destination));
        let slot = usize::from(r.origin > r.destination);
        sums.entry(key).or_default()[slot] = r.flow;
    }
    sums.into_iter().map(|(k, [a, b])| (k, (a + b) / 2.0)).collect()
}

/// Nearest-rank percentile: the smallest value with at least `pct` percent
/// of the sample at or below it.
pub fn nearest_rank(values: &[f64], pct: f64) -> Result<f64> {
    if !(pct > 0.0 && pct < 100.0) {
        return input(format!("percentile {pct} outside (0, 100)"));
    }
    if values.is_empty() {
        return input("percentile of an empty sample");
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * v.len() as f64).ceil() as usize;
    Ok(v[rank.clamp(1, v.len()) - 1])
}

/// Links regions whose mean flow strictly exceeds the cutoff and keeps the
/// largest connected component.
pub fn symmetrize_and_prune(table: &FlowTable, threshold: Threshold) -> Result<PrunedNetwork> {
    if table.records.is_empty() {
        return input("no flow records");
    }
    let sym = symmetrized_flows(table);
    let cutoff = match threshold {
        Threshold::Cutoff(c) if c.is_finite() => c,
        Threshold::Cutoff(c) => return input(format!("cutoff {c} must be finite")),
        Threshold::Percentile(p) => {
            let positive: Vec<f64> = sym.values().copied().filter(|&f| f > 0.0).collect();
            nearest_rank(&positive, p)?
        }
    };
    let n = table.regions.len();
    let full = Graph::from_edges(n, sym.iter().filter(|(_, &f)| f > cutoff).map(|(&k, _)| k))?;
    let (graph, map) = largest_component(&full);
    let mut regions = vec![0; graph.n()];
    for (old, new) in map.iter().enumerate() {
        if let Some(new) = new {
            regions[*new] = old;
        }
    }
    Ok(PrunedNetwork {
        graph,
        regions,
        cutoff,
        nodes_before: n,
        edges_before: full.edge_count(),
    })
}

/// A village network with its seed set and optional per-node columns.
#[derive(Debug, Clone)]
pub struct VillageData {
    pub graph: Graph,
    pub seeds: Vec<NodeId>,
    pub observed_count: Option<u64>,
    /// Named columns in header order, one value per node.
    pub columns: Vec<(String, Vec<f64>)>,
}

impl VillageData {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    pub fn seed_indicator(&self) -> Vec<bool> {
        let mut s = vec![false; self.graph.n()];
        for &v in &self.seeds {
            s[v] = true;
        }
        s
    }
}

/// Reads directed reports and links `i` and `j` when either names the
/// other.
pub fn load_directed_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let mut n_decl = None;
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("n=") {
                n_decl = Some(
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| parse_error(path, k + 1, format!("bad node count: {e}")))?,
                );
            }
            continue;
        }
        let (u, v) = parse_pair(t).map_err(|msg| parse_error(path, k + 1, msg))?;
        if u == v {
            return Err(parse_error(path, k + 1, format!("self-report at node {u}")));
        }
        pairs.push((u, v, k + 1));
    }
    let n = n_decl.unwrap_or_else(|| pairs.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
    if let Some(&(u, v, line)) = pairs.iter().find(|&&(u, v, _)| u >= n || v >= n) {
        return Err(parse_error(
            path,
            line,
            format!("report {u}->{v} out of range for {n} nodes"),
        ));
    }
    Graph::from_edges_dedup(n, pairs.into_iter().map(|(u, v, _)| (u, v)))
}

/// One node id per line; duplicates are rejected.
pub fn load_seeds(path: &Path, n: usize) -> Result<Vec<NodeId>> {
    let text = fs::read_to_string(path)?;
    let mut seeds = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: usize = t
            .parse()
            .map_err(|e| parse_error(path, k + 1, format!("bad node id {t:?}: {e}")))?;
        if v >= n {
            return Err(Error::Input(format!(
                "{}:{}: seed {v} is not a node of a {n}-node graph",
                path.display(),
                k + 1
            )));
        }
        if !seen.insert(v) {
            return Err(parse_error(path, k + 1, format!("duplicate seed {v}")));
        }
        seeds.push(v);
    }
    Ok(seeds)
}

/// `node,<col>...` table with exactly one row per node, returned in header
/// order and aligned by node id.
pub fn load_columns(path: &Path, n: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("node") || header.len() < 2 {
        return Err(parse_error(path, 1, "expected header node,<col>..."));
    }
    let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut cols = vec![vec![f64::NAN; n]; names.len()];
    let mut filled = vec![false; n];
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let v: usize = rec[0]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad node id {:?}: {e}", &rec[0])))?;
        if v >= n {
            return Err(parse_error(path, line, format!("node {v} out of range for {n} nodes")));
        }
        if std::mem::replace(&mut filled[v], true) {
            return Err(parse_error(path, line, format!("duplicate row for node {v}")));
        }
        for (c, field) in rec.iter().skip(1).enumerate() {
            cols[c][v] = field
                .parse()
                .map_err(|e| parse_error(path, line, format!("bad value {field:?} in column {}: {e}", names[c])))?;
        }
    }
    if let Some(v) = filled.iter().position(|f| !f) {
        return input(format!("{}: no row for node {v}", path.display()));
    }
    Ok(names.into_iter().zip(cols).collect())
}

pub fn load_village(graph_path: &Path, seeds_path: &Path, columns_path: Option<&Path>) -> Result<VillageData> {
    let graph = load_directed_graph(graph_path)?;
    let seeds = load_seeds(seeds_path, graph.n())?;
    let columns = match columns_path {
        Some(p) => load_columns(p, graph.n())?,
        None => Vec::new(),
    };
    Ok(VillageData {
        graph,
        seeds,
        observed_count: None,
        columns,
    })
}

/// One village in a manifest; paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub graph: PathBuf,
    pub seeds: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<PathBuf>,
    pub nodes: usize,
    pub edges: usize,
    pub seed_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VillageManifest {
    pub villages: Vec<ManifestEntry>,
}

/// Loads every village listed in a JSON manifest and checks its node, edge
/// and seed counts against the manifest.
pub fn load_manifest(path: &Path) -> Result<Vec<(String, VillageData)>> {
    let manifest: VillageManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(manifest.villages.len());
    for e in &manifest.villages {
        let mut v = load_village(
            &dir.join(&e.graph),
            &dir.join(&e.seeds),
            e.columns.as_ref().map(|c| dir.join(c)).as_deref(),
        )?;
        let got = (v.graph.n(), v.graph.edge_count(), v.seeds.len());
        if got != (e.nodes, e.edges, e.seed_count) {
            return input(format!(
                "village {}: loaded (nodes, edges, seeds) = {got:?}, manifest says ({}, {}, {})",
                e.name, e.nodes, e.edges, e.seed_count
            ));
        }
        v.observed_count = e.observed_count;
        out.push((e.name.clone(), v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn table(rows: &[(&str, &str, f64)]) -> FlowTable {
        let body: String = std::iter::once("origin,destination,flow\n".to_string())
            .chain(rows.iter().map(|(o, d, f)| format!("{o},{d},{f}\n")))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        load_flows(&write(dir.path(), "f.csv", &body)).unwrap()
    }

    #[test]
    fn flow_file_examples() {
        let dir = tempfile::tempdir().unwrap();
        let empty = load_flows(&write(dir.path(), "e.csv", "")).unwrap();
        assert!(empty.records.is_empty());
        let one = load_flows(&write(dir.path(), "o.csv", "origin,destination,flow\nA,B,3.0\n")).unwrap();
        assert_eq!(one.regions, vec!["A", "B"]);
        assert_eq!(
            one.records,
            vec![FlowRecord {
                origin: 0,
                destination: 1,
                flow: 3.0
            }]
        );
        let dup = load_flows(&write(
            dir.path(),
            "d.csv",
            "origin,destination,flow\nA,B,1\nB,A,2\nA,B,3\n",
        ));
        match dup {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
        let neg = load_flows(&write(dir.path(), "n.csv", "origin,destination,flow\nA,B,-1\n"));
        assert!(matches!(neg, Err(Error::Parse { line: 2, .. })));
        let bad = load_flows(&write(dir.path(), "b.csv", "origin,destination,flow\nA,B,x\n"));
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })));
        let hdr = load_flows(&write(dir.path(), "h.csv", "from,to,flow\nA,B,1\n"));
        assert!(matches!(hdr, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn strict_cutoff() {
        let t = table(&[("A", "B", 6.0), ("B", "A", 6.0)]);
        assert_eq!(
            symmetrize_and_prune(&t, Threshold::Cutoff(5.0))
                .unwrap()
                .graph
                .edge_count(),
            1
        );
        let at = symmetrize_and_prune(&t, Threshold::Cutoff(6.0)).unwrap();
        assert_eq!(at.graph.edge_count(), 0);
    }

    #[test]
    fn missing_direction_counts_as_zero() {
        let t = table(&[("A", "B", 10.0), ("B", "C", 4.0), ("C", "B", 4.0)]);
        let sym = symmetrized_flows(&t);
        assert_eq!(sym[&(0, 1)], 5.0);
        assert_eq!(sym[&(1, 2)], 4.0);
        let zero = symmetrize_and_prune(&t, Threshold::Cutoff(0.0)).unwrap();
        assert_eq!(zero.graph.edge_count(), 2);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(nearest_rank(&v, 90.0).unwrap(), 9.0);
        assert_eq!(nearest_rank(&v, 91.0).unwrap(), 10.0);
        assert_eq!(nearest_rank(&v, 5.0).unwrap(), 1.0);
        assert!(nearest_rank(&v, 0.0).is_err());
        assert!(nearest_rank(&v, 100.0).is_err());
        let t = table(&[("A", "B", 1.0)]);
        assert!(symmetrize_and_prune(&t, Threshold::Percentile(120.0)).is_err());
    }

    #[test]
    fn keeps_largest_component_with_map() {
        let t = table(&[("A", "B", 9.0), ("C", "D", 9.0), ("D", "E", 9.0), ("B", "C", 1.0)]);
        let p = symmetrize_and_prune(&t, Threshold::Cutoff(2.0)).unwrap();
        assert_eq!((p.nodes_before, p.edges_before), (5, 3));
        assert_eq!(p.graph.n(), 3);
        let names: Vec<&str> = p.regions.iter().map(|&r| t.regions[r].as_str()).collect();
        assert_eq!(names, vec!["C", "D", "E"]);
        assert!(p.graph.has_edge(0, 1) && p.graph.has_edge(1, 2));
    }

    #[test]
    fn village_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let g = write(d, "g.csv", "# n=4\n0,1\n1,0\n2,1\n");
        let s = write(d, "s.txt", "2\n0\n");
        let c = write(d, "c.csv", "node,takeup,age\n1,1,30\n0,0,41\n3,1,22\n2,0,50\n");
        let v = load_village(&g, &s, Some(&c)).unwrap();
        assert_eq!(v.graph.n(), 4);
        assert_eq!(v.graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(v.seeds, vec![2, 0]);
        assert_eq!(v.column("takeup").unwrap(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(v.column("age").unwrap(), &[41.0, 30.0, 50.0, 22.0]);
        let bad = write(d, "bad.txt", "7\n");
        assert!(matches!(load_village(&g, &bad, None), Err(Error::Input(_))));
        let short = write(d, "short.csv", "node,takeup\n0,1\n");
        assert!(load_village(&g, &s, Some(&short)).is_err());
    }

    #[test]
    fn manifest_counts_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(d, "g.csv", "0,1\n1,2\n");
        write(d, "s.txt", "0\n");
        let entry = |edges| ManifestEntry {
            name: "v0".into(),
            graph: "g.csv".into(),
            seeds: "s.txt".into(),
            columns: None,
            nodes: 3,
            edges,
            seed_count: 1,
            observed_count: Some(2),
        };
        let ok = VillageManifest {
            villages: vec![entry(2)],
        };
        let m = write(d, "m.json", &serde_json::to_string(&ok).unwrap());
        let vs = load_manifest(&m).unwrap();
        assert_eq!(vs[0].1.observed_count, Some(2));
        let bad = VillageManifest {
            villages: vec![entry(3)],
        };
        let m = write(d, "m2.json", &serde_json::to_string(&bad).unwrap());
        assert!(load_manifest(&m).is_err());
    }

    proptest! {
        #[test]
        fn record_order_and_pruning_properties(
            flows in proptest::collection::btree_map((0u8..8, 0u8..8), 0.0f64..20.0, 1..30),
            c1 in 0.0f64..10.0,
            dc in 0.0f64..10.0,
            rot in 0usize..30,
        ) {
            let rows: Vec<(String, String, f64)> =
                flows.iter().map(|(&(o, d), &f)| (format!("r{o}"), format!("r{d}"), f)).collect();
            let mut rotated = rows.clone();
            rotated.rotate_left(rot % rows.len());
            rotated.reverse();
            let as_ref = |r: &Vec<(String, String, f64)>| {
                table(&r.iter().map(|(o, d, f)| (o.as_str(), d.as_str(), *f)).collect::<Vec<_>>())
            };
            let (a, b) = (as_ref(&rows), as_ref(&rotated));
            prop_assert_eq!(&a.regions, &b.regions);
            prop_assert_eq!(symmetrized_flows(&a), symmetrized_flows(&b));
            let pa = symmetrize_and_prune(&a, Threshold::Cutoff(c1)).unwrap();
            let pb = symmetrize_and_prune(&b, Threshold::Cutoff(c1)).unwrap();
            prop_assert_eq!(pa.graph.edges(), pb.graph.edges());

            let sym = symmetrized_flows(&a);
            let linked = |c: f64| -> BTreeSet<(usize, usize)> {
                sym.iter().filter(|(_, &f)| f > c).map(|(&k, _)| k).collect()
            };
            prop_assert!(linked(c1 + dc).is_subset(&linked(c1)));
            // component extraction keeps adjacency among retained nodes
            for u in 0..pa.graph.n() {
                for v in 0..pa.graph.n() {
                    let (ru, rv) = (pa.regions[u], pa.regions[v]);
                    let key = (ru.min(rv), ru.max(rv));
                    prop_assert_eq!(pa.graph.has_edge(u, v), u != v && linked(c1).contains(&key));
                }
            }
        }
    }
}
