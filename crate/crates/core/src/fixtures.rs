//! Synthetic stand-ins for the village and mobility data sets, with the same
//! file schemas as the real ones.
//!
//! - `msm/`: village networks of about 196 households, 2-d geometric with
//!   a lattice backbone, a few seeds each and an observed adopter count
//!   simulated at `MSM_P` over `MSM_HORIZON` steps.
//! - `peer/`: village networks of about 104 households, purely random
//!   geometric (so some have isolated households), about a fifth treated,
//!   and outcome and control columns drawn from a linear model with a
//!   known exposure effect.
//! - `flows.csv`: directed trip counts between tracts from a gravity model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::experiments::{simulate_observed, MsmVillage};
use crate::generate::{generate_lattice_random, geometric_graph, LatentPositions};
use crate::graph::{Graph, NodeId};
use crate::ingestion::{load_manifest, ManifestEntry, VillageData, VillageManifest};
use crate::peer_effects::{full_information_regression, ExposureOptions, PeerVillage};
use crate::rng::{derive_seed, stream, SimRng};

pub const MSM_VILLAGES: usize = 69;
pub const MSM_P: f64 = 0.13;
pub const MSM_HORIZON: u32 = 15;
pub const PEER_VILLAGES: usize = 47;
pub const PEER_GAMMA: f64 = 0.03;
pub const FLOW_TRACTS: usize = 120;

/// Outcome column of the peer villages; every other column is a control.
pub const OUTCOME_COLUMN: &str = "takeup";

/// Writes every village as directed reports: each link is reported by one
/// side or by both.
fn directed_reports(g: &Graph, rng: &mut SimRng) -> String {
    let mut out = String::new();
    writeln!(out, "# n={}", g.n()).unwrap();
    for &(u, v) in g.edges() {
        let x: f64 = rng.random();
        if !(0.4..0.8).contains(&x) {
            writeln!(out, "{u},{v}").unwrap();
        }
        if x >= 0.4 {
            writeln!(out, "{v},{u}").unwrap();
        }
    }
    out
}

fn seeds_text(seeds: &[NodeId]) -> String {
    seeds.iter().map(|s| format!("{s}\n")).collect()
}

/// Villages for the simulated-moments exercise; observed counts are one
/// diffusion run at `MSM_P`.
pub fn msm_villages(seed: u64) -> Result<Vec<MsmVillage>> {
    let mut villages = Vec::with_capacity(MSM_VILLAGES);
    for v in 0..MSM_VILLAGES {
        let mut rng = stream(derive_seed(seed, 1), v as u64);
        let n = rng.random_range(150..=245);
        let (graph, _) = generate_lattice_random(n, 2, 10, &mut rng)?;
        let k = rng.random_range(1..=6usize);
        let seeds = index::sample(&mut rng, n, k).into_vec();
        villages.push(MsmVillage {
            graph,
            seeds,
            observed: 0,
        });
    }
    simulate_observed(&mut villages, MSM_P, MSM_HORIZON, derive_seed(seed, 2))?;
    Ok(villages)
}

/// Villages for the peer-effects exercise with treatment and controls but
/// outcomes still zero; see [`draw_outcomes`].
pub fn peer_villages_without_outcomes(seed: u64) -> Result<Vec<PeerVillage>> {
    let mut villages = Vec::with_capacity(PEER_VILLAGES);
    for v in 0..PEER_VILLAGES {
        let mut rng = stream(derive_seed(seed, 3), v as u64);
        let n = rng.random_range(80..=130);
        let coords: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
        let pos = LatentPositions::new(2, coords)?;
        let r = (7.5 / (std::f64::consts::PI * n as f64)).sqrt();
        let graph = geometric_graph(&pos, r, false);
        let k = (n as f64 * 0.2).round() as usize;
        let mut treated = vec![false; n];
        for i in index::sample(&mut rng, n, k) {
            treated[i] = true;
        }
        let age_dist = Normal::<f64>::new(52.0, 11.0).unwrap();
        let area_dist = LogNormal::<f64>::new(0.5, 0.6).unwrap();
        let male: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.9)))).collect();
        let age: Vec<f64> = (0..n)
            .map(|_| age_dist.sample(&mut rng).round().clamp(20.0, 90.0))
            .collect();
        let educ: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..4u8))).collect();
        let rice_area: Vec<f64> = (0..n)
            .map(|_| (area_dist.sample(&mut rng) * 100.0).round() / 100.0)
            .collect();
        let degree: Vec<f64> = (0..n).map(|i| graph.degree(i) as f64).collect();
        villages.push(PeerVillage {
            graph,
            treated,
            outcome: vec![0.0; n],
            controls: vec![
                ("male".into(), male),
                ("age".into(), age),
                ("educ".into(), educ),
                ("rice_area".into(), rice_area),
                ("degree".into(), degree),
            ],
        });
    }
    Ok(villages)
}

/// Standardized exposure per village (untreated pooled), as used by the
/// regression.
pub fn standardized_exposure(villages: &[PeerVillage]) -> Result<Vec<Vec<f64>>> {
    use crate::graph::diameter;
    use crate::peer_effects::{diffusion_exposure, spectral_radius, standardize};
    let mut flat = Vec::new();
    let mut mask = Vec::new();
    for v in villages {
        let seeds: Vec<f64> = v.treated.iter().map(|&b| f64::from(u8::from(b))).collect();
        let lambda = spectral_radius(&v.graph)?;
        flat.extend(diffusion_exposure(&v.graph, &seeds, 1.0 / lambda, diameter(&v.graph).max(1))?.values);
        mask.extend(v.treated.iter().map(|&b| !b));
    }
    let z = standardize(&flat, &mask)?;
    let mut out = Vec::with_capacity(villages.len());
    let mut off = 0;
    for v in villages {
        out.push(z[off..off + v.graph.n()].to_vec());
        off += v.graph.n();
    }
    Ok(out)
}

/// Outcome model `y = 0.46 + fe_v + gamma * z + 0.02 * educ + noise`, where
/// `z` is the standardized exposure.
pub fn draw_outcomes(
    villages: &mut [PeerVillage],
    exposure: &[Vec<f64>],
    gamma: f64,
    noise_sd: f64,
    rng: &mut SimRng,
) -> Result<()> {
    if exposure.len() != villages.len() {
        return input("one exposure vector per village");
    }
    let fe = Normal::new(0.0, 0.08).unwrap();
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Input(e.to_string()))?;
    for (v, z) in villages.iter_mut().zip(exposure) {
        let mu = 0.46 + fe.sample(rng);
        let educ = v
            .controls
            .iter()
            .find(|(n, _)| n == "educ")
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| vec![0.0; v.graph.n()]);
        for i in 0..v.graph.n() {
            v.outcome[i] = mu + gamma * z[i] + 0.02 * educ[i] + noise.sample(rng);
        }
    }
    Ok(())
}

/// Peer villages with binary take-up drawn from the linear probability
/// model.
pub fn peer_villages(seed: u64) -> Result<Vec<PeerVillage>> {
    let mut villages = peer_villages_without_outcomes(seed)?;
    let z = standardized_exposure(&villages)?;
    let mut rng = stream(derive_seed(seed, 4), 0);
    draw_outcomes(&mut villages, &z, PEER_GAMMA, 0.0, &mut rng)?;
    for v in &mut villages {
        for y in &mut v.outcome {
            *y = f64::from(u8::from(rng.random_bool(y.clamp(0.0, 1.0))));
        }
    }
    Ok(villages)
}

/// Gravity-model directed trip counts between tracts placed in the unit
/// square: `Poisson(k * m_a * m_b / (d^2 + h))`, zero flows omitted.
pub fn gravity_flows(seed: u64) -> Vec<(String, String, f64)> {
    let mut rng = stream(derive_seed(seed, 5), 0);
    let mass = LogNormal::new(0.0, 0.8).unwrap();
    let tracts: Vec<(f64, f64, f64)> = (0..FLOW_TRACTS)
        .map(|_| (rng.random(), rng.random(), mass.sample(&mut rng)))
        .collect();
    let mut rows = Vec::new();
    for (a, ta) in tracts.iter().enumerate() {
        for (b, tb) in tracts.iter().enumerate() {
            if a == b {
                continue;
            }
            let d2 = (ta.0 - tb.0).powi(2) + (ta.1 - tb.1).powi(2);
            let lambda = 0.05 * ta.2 * tb.2 / (d2 + 0.002);
            let f: f64 = Poisson::new(lambda).unwrap().sample(&mut rng);
            if f > 0.0 {
                rows.push((format!("T{a:03}"), format!("T{b:03}"), f));
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureSummary {
    pub msm_villages: usize,
    pub msm_mean_nodes: f64,
    pub msm_mean_degree: f64,
    pub msm_mean_seeds: f64,
    pub peer_villages: usize,
    pub peer_mean_nodes: f64,
    pub peer_mean_degree: f64,
    pub peer_gamma_hat: f64,
    pub peer_gamma_se: f64,
    pub flow_rows: usize,
}

fn write_village(
    dir: &Path,
    name: &str,
    graph: &Graph,
    seeds: &[NodeId],
    columns: Option<String>,
    observed: Option<u64>,
    rng: &mut SimRng,
) -> Result<ManifestEntry> {
    let graph_file = format!("{name}.edges");
    let seeds_file = format!("{name}.seeds");
    fs::write(dir.join(&graph_file), directed_reports(graph, rng))?;
    fs::write(dir.join(&seeds_file), seeds_text(seeds))?;
    let columns = match columns {
        Some(body) => {
            let f = format!("{name}.csv");
            fs::write(dir.join(&f), body)?;
            Some(f.into())
        }
        None => None,
    };
    Ok(ManifestEntry {
        name: name.to_string(),
        graph: graph_file.into(),
        seeds: seeds_file.into(),
        columns,
        nodes: graph.n(),
        edges: graph.edge_count(),
        seed_count: seeds.len(),
        observed_count: observed,
    })
}

fn write_manifest(path: &Path, villages: Vec<ManifestEntry>) -> Result<()> {
    let body = serde_json::to_string_pretty(&VillageManifest { villages })?;
    fs::write(path, body + "\n")?;
    Ok(())
}

fn columns_text(v: &PeerVillage) -> String {
    let mut out = String::from("node,");
    out.push_str(OUTCOME_COLUMN);
    for (name, _) in &v.controls {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..v.graph.n() {
        write!(out, "{i},{}", v.outcome[i]).unwrap();
        for (_, col) in &v.controls {
            write!(out, ",{}", col[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `msm/`, `peer/` and `flows.csv` under `dir`.
pub fn write_fixtures(dir: &Path, seed: u64) -> Result<FixtureSummary> {
    let msm_dir = dir.join("msm");
    let peer_dir = dir.join("peer");
    fs::create_dir_all(&msm_dir)?;
    fs::create_dir_all(&peer_dir)?;
    let mut rng = stream(derive_seed(seed, 6), 0);

    let msm = msm_villages(seed)?;
    let mut entries = Vec::new();
    for (i, v) in msm.iter().enumerate() {
        let e = write_village(
            &msm_dir,
            &format!("v{i:02}"),
            &v.graph,
            &v.seeds,
            None,
            Some(v.observed as u64),
            &mut rng,
        )?;
        entries.push(e);
    }
    write_manifest(&msm_dir.join("manifest.json"), entries)?;

    let peer = peer_villages(seed)?;
    let mut entries = Vec::new();
    for (i, v) in peer.iter().enumerate() {
        let seeds: Vec<NodeId> = (0..v.graph.n()).filter(|&j| v.treated[j]).collect();
        let e = write_village(
            &peer_dir,
            &format!("v{i:02}"),
            &v.graph,
            &seeds,
            Some(columns_text(v)),
            None,
            &mut rng,
        )?;
        entries.push(e);
    }
    write_manifest(&peer_dir.join("manifest.json"), entries)?;

    let flows = gravity_flows(seed);
    let mut body = String::from("origin,destination,flow\n");
    for (o, d, f) in &flows {
        writeln!(body, "{o},{d},{f}").unwrap();
    }
    fs::write(dir.join("flows.csv"), body)?;

    let fit = full_information_regression(&peer, &ExposureOptions::default())?;
    let mean = |xs: &mut dyn Iterator<Item = f64>, k: usize| xs.sum::<f64>() / k as f64;
    Ok(FixtureSummary {
        msm_villages: msm.len(),
        msm_mean_nodes: mean(&mut msm.iter().map(|v| v.graph.n() as f64), msm.len()),
        msm_mean_degree: mean(&mut msm.iter().map(|v| v.graph.mean_degree()), msm.len()),
        msm_mean_seeds: mean(&mut msm.iter().map(|v| v.seeds.len() as f64), msm.len()),
        peer_villages: peer.len(),
        peer_mean_nodes: mean(&mut peer.iter().map(|v| v.graph.n() as f64), peer.len()),
        peer_mean_degree: mean(&mut peer.iter().map(|v| v.graph.mean_degree()), peer.len()),
        peer_gamma_hat: fit.coefficient,
        peer_gamma_se: fit.clustered_se,
        flow_rows: flows.len(),
    })
}

/// MSM villages from a manifest; every village needs an observed count.
pub fn load_msm_villages(manifest: &Path) -> Result<Vec<MsmVillage>> {
    load_manifest(manifest)?
        .into_iter()
        .map(|(name, v)| {
            let observed = v
                .observed_count
                .ok_or_else(|| Error::Input(format!("village {name} has no observed count")))?;
            Ok(MsmVillage {
                graph: v.graph,
                seeds: v.seeds,
                observed: observed as usize,
            })
        })
        .collect()
}

/// Peer villages from a manifest: seeds are the treated households, the
/// `takeup` column the outcome and every other column a control.
pub fn load_peer_villages(manifest: &Path) -> Result<Vec<PeerVillage>> {
    load_manifest(manifest)?
        .into_iter()
        .map(|(name, v)| peer_from_village(&name, v))
        .collect()
}

fn peer_from_village(name: &str, v: VillageData) -> Result<PeerVillage> {
    let treated = v.seed_indicator();
    let mut outcome = None;
    let mut controls = Vec::new();
    for (col, values) in v.columns {
        if col == OUTCOME_COLUMN {
            outcome = Some(values);
        } else {
            controls.push((col, values));
        }
    }
    let outcome = outcome.ok_or_else(|| Error::Input(format!("village {name} has no {OUTCOME_COLUMN} column")))?;
    Ok(PeerVillage {
        graph: v.graph,
        treated,
        outcome,
        controls,
    })
}
