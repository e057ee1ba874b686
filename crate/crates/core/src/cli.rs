//! Command-line front end.
//!
//! Every subcommand resolves its settings from, in decreasing precedence,
//! command-line flags, `NETDIFF_<KEY>` environment variables, the
//! `[<subcommand>]` table of the `--config` TOML file, and built-in
//! defaults. Results go to the `--out` directory as `t,mean,stderr` CSV
//! curves plus `report.json` and `config.json`; given the same seed the
//! bytes do not depend on `--threads`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::diffusion::DecaySpec;
use crate::diffusion::{count_jumps, run_diffusion, Percolation, PercolationMode};
use crate::error::Error;
use crate::experiments::{
    beta_sampling_experiment, default_grid, detection_curve, estimate_p, estimate_r0, forecast_ratio_curve, msm_fit_p,
    sensitive_dependence_over_draws, sir_fit_experiment, CurveResult, SeedRule, Transmission,
};
use crate::fixtures::{load_msm_villages, load_peer_villages, write_fixtures};
use crate::generate::{erdos_renyi, generate_lattice_random, generate_random_regular};
use crate::graph::{diameter, graph_stats, read_edge_list, union, write_edge_list, Graph};
use crate::ingestion::{load_directed_graph, load_flows, load_seeds, nearest_rank, symmetrize_and_prune, Threshold};
use crate::peer_effects::{diffusion_exposure, mc_mismeasurement, spectral_radius, ExposureOptions};
use crate::rng::{derive_seed, par_replicate, stream, GENERATOR};
use crate::scenario::{build_scenario, Scenario, ScenarioSpec, GRAPH_STREAM};

const ENV_PREFIX: &str = "NETDIFF_";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit without computing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommonCfg {
    seed: u64,
    threads: usize,
    out: PathBuf,
}

impl Default for CommonCfg {
    fn default() -> Self {
        CommonCfg {
            seed: 1,
            threads: 0,
            out: PathBuf::from("netdiff-out"),
        }
    }
}

/// Declares a subcommand's flag struct (every field optional) and its
/// resolved configuration struct with defaults.
macro_rules! command_config {
    (
        $args:ident => $cfg:ident {
            $( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr, )*
        }
        optional {
            $( $(#[doc = $odoc:literal])* $ofield:ident : $oty:ty, )*
        }
    ) => {
        #[derive(Debug, Clone, Args, Serialize)]
        pub struct $args {
            $( $(#[doc = $doc])* #[arg(long)] #[serde(skip_serializing_if = "Option::is_none")] $field: Option<$ty>, )*
            $( $(#[doc = $odoc])* #[arg(long)] #[serde(skip_serializing_if = "Option::is_none")] $ofield: Option<$oty>, )*
            #[command(flatten)]
            #[serde(skip)]
            common: CommonArgs,
        }

        #[derive(Debug, Clone, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $cfg {
            $( $field: $ty, )*
            $( #[serde(default)] $ofield: Option<$oty>, )*
        }

        impl Default for $cfg {
            fn default() -> Self {
                $cfg {
                    $( $field: $default, )*
                    $( $ofield: None, )*
                }
            }
        }
    };
}

/// Scenario fields shared by the simulation subcommands.
macro_rules! scenario_spec {
    ($c:expr) => {
        ScenarioSpec {
            graph: $c.graph.clone(),
            q: $c.q,
            n: $c.n,
            n_side: $c.n_side,
            r0: $c.r0,
            p: $c.p,
            beta: $c.beta,
            beta_divisor: $c.beta_divisor,
            delta: $c.delta,
            horizon: $c.horizon,
        }
    };
}

command_config! {
    GenGraphArgs => GenGraphCfg {
        /// Generator: lattice, er or regular.
        kind: String = "lattice".into(),
        /// Latent dimension (lattice).
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side (lattice).
        n_side: usize = 7,
        /// Degree (regular).
        degree: usize = 3,
    }
    optional {
        /// Link probability (er); defaults to 10/n.
        beta: f64,
    }
}

command_config! {
    StatsArgs => StatsCfg {}
    optional {
        /// Edge list to summarize.
        graph: PathBuf,
        /// BFS sources to sample for path statistics.
        path_sample: usize,
    }
}

command_config! {
    SensDepArgs => SensDepCfg {
        /// Latent dimension of the lattice.
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side.
        n_side: usize = 7,
        /// Target reproductive number; p = r0 / mean degree unless p is set.
        r0: f64 = 2.5,
        /// beta = 1/(beta_divisor * n) unless beta is set.
        beta_divisor: f64 = 10.0,
        /// Share of nearest nodes an error link may reach.
        delta: f64 = 1.0,
        /// Monte Carlo replications.
        reps: usize = 2500,
        /// Independent (error graph, alternative seed) draws.
        draws: usize = 1,
    }
    optional {
        /// Observed graph as an edge list instead of the generated lattice.
        graph: PathBuf,
        /// Passing probability; overrides r0.
        p: f64,
        /// Error link probability; overrides beta_divisor.
        beta: f64,
        /// Steps to simulate; defaults to twice the diameter.
        horizon: u32,
        /// Original seed node; defaults to the lattice center.
        seed_node: usize,
    }
}

command_config! {
    ForecastArgs => ForecastCfg {
        /// Latent dimension of the lattice.
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side.
        n_side: usize = 7,
        /// Target reproductive number; p = r0 / mean degree unless p is set.
        r0: f64 = 2.5,
        /// beta = 1/(beta_divisor * n) unless beta is set.
        beta_divisor: f64 = 10.0,
        /// Share of nearest nodes an error link may reach.
        delta: f64 = 1.0,
        /// Monte Carlo replications.
        reps: usize = 2500,
        /// Draw a fresh seed node every replication instead of fixing one.
        uniform_seed: bool = false,
    }
    optional {
        /// Observed graph as an edge list instead of the generated lattice.
        graph: PathBuf,
        /// Passing probability; overrides r0.
        p: f64,
        /// Error link probability; overrides beta_divisor.
        beta: f64,
        /// Steps to simulate; defaults to twice the diameter.
        horizon: u32,
        /// Seed node; defaults to one drawn uniformly from the master seed.
        seed_node: usize,
        /// Passing probability p / t^decay at step t instead of constant p.
        decay: f64,
    }
}

command_config! {
    CountJumpsArgs => CountJumpsCfg {
        /// Latent dimension of the lattice.
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side.
        n_side: usize = 7,
        /// Target reproductive number; p = r0 / mean degree unless p is set.
        r0: f64 = 2.5,
        /// beta = 1/(beta_divisor * n) unless beta is set.
        beta_divisor: f64 = 10.0,
        /// Share of nearest nodes an error link may reach.
        delta: f64 = 1.0,
        /// Monte Carlo replications.
        reps: usize = 500,
    }
    optional {
        /// Observed graph as an edge list instead of the generated lattice.
        graph: PathBuf,
        /// Passing probability; overrides r0.
        p: f64,
        /// Error link probability; overrides beta_divisor.
        beta: f64,
        /// Steps to simulate; defaults to twice the diameter.
        horizon: u32,
        /// Seed node; defaults to one drawn uniformly from the master seed.
        seed_node: usize,
    }
}

command_config! {
    EstimatePArgs => EstimatePCfg {
        /// Latent dimension of the lattice.
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side.
        n_side: usize = 7,
        /// Target reproductive number; p = r0 / mean degree unless p is set.
        r0: f64 = 2.5,
        /// beta = 1/(beta_divisor * n) unless beta is set.
        beta_divisor: f64 = 10.0,
        /// Share of nearest nodes an error link may reach.
        delta: f64 = 1.0,
        /// Diffusion runs, each from a fresh uniformly drawn seed node.
        reps: usize = 200,
        /// Simulate on the observed graph plus error links instead of the
        /// observed graph alone.
        true_graph: bool = false,
    }
    optional {
        /// Observed graph as an edge list instead of the generated lattice.
        graph: PathBuf,
        /// Passing probability; overrides r0.
        p: f64,
        /// Error link probability; overrides beta_divisor.
        beta: f64,
        /// Steps to simulate; defaults to twice the diameter.
        horizon: u32,
    }
}

command_config! {
    BetaSampleArgs => BetaSampleCfg {
        /// Population size.
        n: usize = 1_000_000,
        /// Surveyed nodes.
        m: usize = 13_800,
        /// Simulated surveys.
        reps: usize = 10_000,
    }
    optional {
        /// Defaults to 1/(n (ln n)^2).
        beta: f64,
    }
}

command_config! {
    DetectArgs => DetectCfg {
        /// Latent dimension of the lattice.
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side.
        n_side: usize = 7,
        /// Target reproductive number; p = r0 / mean degree unless p is set.
        r0: f64 = 2.5,
        /// beta = 1/(beta_divisor * n) unless beta is set.
        beta_divisor: f64 = 10.0,
        /// Share of nearest nodes an error link may reach.
        delta: f64 = 1.0,
        /// Probability that an activated node is tested.
        alpha: f64 = 0.05,
        /// Monte Carlo replications.
        reps: usize = 1000,
    }
    optional {
        /// Observed graph as an edge list instead of the generated lattice.
        graph: PathBuf,
        /// Passing probability; overrides r0.
        p: f64,
        /// Error link probability; overrides beta_divisor.
        beta: f64,
        /// Steps to simulate; defaults to twice the diameter.
        horizon: u32,
        /// Seed node; defaults to one drawn uniformly from the master seed.
        seed_node: usize,
    }
}

command_config! {
    FitSirArgs => FitSirCfg {
        /// Latent dimension of the lattice.
        q: usize = 4,
        /// Node count.
        n: usize = 4000,
        /// Lattice points per side.
        n_side: usize = 7,
        /// Target reproductive number; p = r0 / mean degree unless p is set.
        r0: f64 = 2.5,
        /// beta = 1/(beta_divisor * n) unless beta is set.
        beta_divisor: f64 = 10.0,
        /// Share of nearest nodes an error link may reach.
        delta: f64 = 1.0,
        /// Monte Carlo replications.
        reps: usize = 500,
        /// Data from the observed graph alone or from it plus error links.
        true_graph: bool = false,
    }
    optional {
        /// Observed graph as an edge list instead of the generated lattice.
        graph: PathBuf,
        /// Passing probability; overrides r0.
        p: f64,
        /// Error link probability; overrides beta_divisor.
        beta: f64,
        /// Steps to simulate; defaults to twice the diameter.
        horizon: u32,
        /// Seed node; defaults to one drawn uniformly from the master seed.
        seed_node: usize,
        /// Fit window; defaults to a quarter of the horizon.
        t_fit: usize,
    }
}

command_config! {
    MsmFitArgs => MsmFitCfg {
        /// Village manifest (JSON) with observed counts.
        manifest: PathBuf = "fixtures/msm/manifest.json".into(),
        /// Diffusion steps per village.
        horizon: u32 = 15,
        /// Simulations per village and grid point.
        reps: usize = 2500,
        /// Spacing of the coarse p grid.
        grid_step: f64 = 0.01,
    }
    optional {}
}

command_config! {
    ExposureArgs => ExposureCfg {}
    optional {
        /// Edge list, directed reports allowed.
        graph: PathBuf,
        /// Seed node ids, one per line.
        seeds: PathBuf,
        /// Passing probability; defaults to 1/lambda_max.
        p: f64,
        /// Steps; defaults to the graph diameter.
        horizon: u32,
    }
}

command_config! {
    PeerMcArgs => PeerMcCfg {
        /// Village manifest (JSON) with outcomes and controls.
        manifest: PathBuf = "fixtures/peer/manifest.json".into(),
        /// Comma-separated k values (inf drops nothing).
        ks: String = "5,10,15".into(),
        /// Link-dropping draws per k.
        reps: usize = 2500,
        /// Keep the full graph's p and horizon on degraded graphs.
        hold_fixed: bool = false,
    }
    optional {
        /// Passing probability for every village instead of 1/lambda_max.
        p: f64,
    }
}

command_config! {
    IngestFlowsArgs => IngestFlowsCfg {}
    optional {
        /// Table with header origin,destination,flow.
        flows: PathBuf,
        /// Link when the mean flow exceeds this (default 6 trips).
        cutoff: f64,
        /// Link above this percentile of positive mean flows instead.
        percentile: f64,
    }
}

command_config! {
    GenFixturesArgs => GenFixturesCfg {}
    optional {}
}

#[derive(Debug, Parser)]
#[command(name = "netdiff", version, about = "SIR diffusion on networks with missing links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a graph and write its edge list.
    GenGraph(GenGraphArgs),
    /// Summary statistics of an edge list.
    Stats(StatsArgs),
    /// Overlap of runs from a seed and from a nearby alternative seed.
    SensDep(SensDepArgs),
    /// Ratio of mean spread on the observed graph to the true graph.
    ForecastRatio(ForecastArgs),
    /// Activations carried by error links, per step.
    CountJumps(CountJumpsArgs),
    /// Passing probability and reproductive number from simulated runs.
    EstimateP(EstimatePArgs),
    /// Chance a random survey finds no error links.
    BetaSample(BetaSampleArgs),
    /// Share of activated regions found by random testing.
    Detect(DetectArgs),
    /// Compartmental model fits to network diffusion.
    FitSir(FitSirArgs),
    /// Passing probability by simulated moments on village data.
    MsmFit(MsmFitArgs),
    /// Diffusion exposure of every node.
    Exposure(ExposureArgs),
    /// Peer-effect estimates when links are dropped at random.
    PeerMc(PeerMcArgs),
    /// Threshold a flow table into a graph.
    IngestFlows(IngestFlowsArgs),
    /// Write the synthetic village and flow fixtures.
    GenFixtures(GenFixturesArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenGraph(_) => "gen-graph",
            Command::Stats(_) => "stats",
            Command::SensDep(_) => "sens-dep",
            Command::ForecastRatio(_) => "forecast-ratio",
            Command::CountJumps(_) => "count-jumps",
            Command::EstimateP(_) => "estimate-p",
            Command::BetaSample(_) => "beta-sample",
            Command::Detect(_) => "detect",
            Command::FitSir(_) => "fit-sir",
            Command::MsmFit(_) => "msm-fit",
            Command::Exposure(_) => "exposure",
            Command::PeerMc(_) => "peer-mc",
            Command::IngestFlows(_) => "ingest-flows",
            Command::GenFixtures(_) => "gen-fixtures",
        }
    }
}

const COMMANDS: [&str; 14] = [
    "gen-graph",
    "stats",
    "sens-dep",
    "forecast-ratio",
    "count-jumps",
    "estimate-p",
    "beta-sample",
    "detect",
    "fit-sir",
    "msm-fit",
    "exposure",
    "peer-mc",
    "ingest-flows",
    "gen-fixtures",
];

/// Parses an environment value as a TOML scalar, falling back to a string.
fn env_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Layers file, environment and flag values over the defaults of `C`.
fn layer<C>(file: Option<&toml::Table>, flags: Value, what: &str) -> CliResult<C>
where
    C: Default + Serialize + DeserializeOwned,
{
    let Value::Object(mut merged) = serde_json::to_value(C::default())? else {
        unreachable!("configs serialize to objects");
    };
    let keys: Vec<String> = merged.keys().cloned().collect();
    if let Some(table) = file {
        for (k, v) in table {
            if !merged.contains_key(k) {
                return usage(format!("unknown key `{k}` in {what}"));
            }
            merged.insert(k.clone(), serde_json::to_value(v)?);
        }
    }
    for k in &keys {
        if let Ok(raw) = std::env::var(format!("{ENV_PREFIX}{}", k.to_uppercase())) {
            merged.insert(k.clone(), env_value(&raw));
        }
    }
    if let Value::Object(flags) = flags {
        for (k, v) in flags {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

fn read_config_file(path: Option<&Path>) -> CliResult<Option<toml::Table>> {
    let Some(path) = path else {
        return Ok(None);
    };
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    for (k, v) in &table {
        let known =
            ["seed", "threads", "out"].contains(&k.as_str()) || (COMMANDS.contains(&k.as_str()) && v.is_table());
        if !known {
            return usage(format!("unknown key `{k}` in config {}", path.display()));
        }
    }
    Ok(Some(table))
}

fn resolve<C, A>(command: &str, args: &A, common: &CommonArgs) -> CliResult<(CommonCfg, C)>
where
    C: Default + Serialize + DeserializeOwned,
    A: Serialize,
{
    let config_path = common
        .config
        .clone()
        .or_else(|| std::env::var_os(format!("{ENV_PREFIX}CONFIG")).map(PathBuf::from));
    let file = read_config_file(config_path.as_deref())?;
    let top: Option<toml::Table> = file.as_ref().map(|t| {
        t.iter()
            .filter(|(k, _)| !COMMANDS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    });
    let section = file.as_ref().and_then(|t| t.get(command)).and_then(|v| v.as_table());
    let mut flags = Map::new();
    if let Some(s) = common.seed {
        flags.insert("seed".into(), json!(s));
    }
    if let Some(t) = common.threads {
        flags.insert("threads".into(), json!(t));
    }
    if let Some(o) = &common.out {
        flags.insert("out".into(), serde_json::to_value(o)?);
    }
    let common_cfg: CommonCfg = layer(top.as_ref(), Value::Object(flags), "common settings")?;
    let cfg: C = layer(section, serde_json::to_value(args)?, command)?;
    Ok((common_cfg, cfg))
}

/// Writes result files into the output directory, created on first use so
/// that failed runs leave nothing behind.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Output { dir: dir.to_path_buf() }
    }

    /// A failure to create the directory surfaces when the file is written.
    fn path(&self, name: &str) -> PathBuf {
        let _ = fs::create_dir_all(&self.dir);
        self.dir.join(name)
    }

    fn text(&self, name: &str, body: &str) -> CliResult<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

struct Run<C> {
    command: &'static str,
    common: CommonCfg,
    cfg: C,
}

impl<C: Serialize> Run<C> {
    fn config_echo(&self) -> Value {
        json!({
            "command": self.command,
            "seed": self.common.seed,
            "config": self.cfg,
        })
    }

    /// Writes `config.json` and `report.json` around `result`.
    fn finish(&self, out: &Output, result: impl Serialize) -> CliResult<()> {
        out.json("config.json", &self.config_echo())?;
        out.json(
            "report.json",
            &json!({
                "command": self.command,
                "generator": GENERATOR,
                "version": env!("CARGO_PKG_VERSION"),
                "seed": self.common.seed,
                "config": self.cfg,
                "result": result,
            }),
        )
    }
}

fn col_csv(header: &str, cols: &[&[f64]]) -> String {
    let mut out = format!("{header}\n");
    let len = cols.iter().map(|c| c.len()).min().unwrap_or(0);
    for t in 0..len {
        write!(out, "{t}").unwrap();
        for c in cols {
            write!(out, ",{}", c[t]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn scenario_for(spec: &ScenarioSpec, seed: u64) -> CliResult<Scenario> {
    Ok(build_scenario(spec, seed)?)
}

fn check_node(node: Option<usize>, default: usize, n: usize) -> CliResult<usize> {
    let v = node.unwrap_or(default);
    if v >= n {
        return usage(format!("seed node {v} out of range for {n} nodes"));
    }
    Ok(v)
}

fn require<T: Clone>(v: &Option<T>, name: &str) -> CliResult<T> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("missing required setting `{name}`")))
}

fn gen_graph(run: &Run<GenGraphCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let mut rng = stream(derive_seed(run.common.seed, GRAPH_STREAM), 0);
    let graph = match c.kind.as_str() {
        "lattice" => {
            let (g, pos) = generate_lattice_random(c.n, c.q, c.n_side, &mut rng)?;
            pos.write_table(&out.path("positions.csv"))?;
            g
        }
        "er" => erdos_renyi(c.n, c.beta.unwrap_or(10.0 / c.n as f64), &mut rng),
        "regular" => generate_random_regular(c.n, c.degree, &mut rng)?,
        other => return usage(format!("unknown graph kind `{other}` (lattice, er, regular)")),
    };
    write_edge_list(&graph, &out.path("graph.edges"))?;
    let stats = graph_stats(&graph, None, &mut stream(run.common.seed, 1))?;
    run.finish(out, stats)
}

fn stats(run: &Run<StatsCfg>, out: &Output) -> CliResult<()> {
    let graph = read_edge_list(&require(&run.cfg.graph, "graph")?)?;
    let stats = graph_stats(&graph, run.cfg.path_sample, &mut stream(run.common.seed, 1))?;
    run.finish(out, stats)
}

fn sens_dep(run: &Run<SensDepCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let sc = scenario_for(&scenario_spec!(c), run.common.seed)?;
    let i0 = check_node(c.seed_node, sc.center_seed_node, sc.l.n())?;
    let res = sensitive_dependence_over_draws(
        &sc.l,
        &sc.support,
        i0,
        sc.p,
        sc.horizon,
        c.draws,
        c.reps,
        Scenario::sim_seed(run.common.seed),
    )?;
    let curve = if res.curves.len() == 1 {
        res.curves[0].clone()
    } else {
        let per_draw: Vec<Vec<Option<f64>>> = res
            .curves
            .iter()
            .map(|cr| cr.mean.iter().map(|&m| (!m.is_nan()).then_some(m)).collect())
            .collect();
        CurveResult::from_samples(&per_draw)?
    };
    out.text("curve.csv", &curve.to_csv())?;
    let summaries: Vec<Value> = res
        .perturbations
        .iter()
        .map(|p| {
            json!({
                "i0": p.i0, "j0": p.j0, "e1": p.e1, "e2": p.e2, "d_e2": p.d_e2,
                "candidates": p.candidates.len(),
                "neighborhood_share": p.neighborhood_share, "j_share": p.j_share,
            })
        })
        .collect();
    run.finish(
        out,
        json!({
            "scenario": sc.summary(),
            "perturbations": summaries,
            "curve": curve.mean,
            "stderr": curve.stderr,
            "undefined_dropped": res.curves.iter().map(|cr| cr.metadata.get("undefined_dropped").cloned()).collect::<Vec<_>>(),
        }),
    )
}

fn forecast(run: &Run<ForecastCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let sc = scenario_for(&scenario_spec!(c), run.common.seed)?;
    let rule = if c.uniform_seed {
        if c.seed_node.is_some() {
            return usage("seed_node and uniform_seed are exclusive");
        }
        SeedRule::Uniform
    } else {
        SeedRule::Fixed(vec![check_node(c.seed_node, sc.random_seed_node, sc.l.n())?])
    };
    let tx = match c.decay {
        Some(lambda) => Transmission::Decaying(DecaySpec { p0: sc.p, lambda }),
        None => Transmission::Constant { p: sc.p },
    };
    let res = forecast_ratio_curve(
        &sc.l,
        &sc.support,
        &rule,
        tx,
        sc.horizon,
        c.reps,
        Scenario::sim_seed(run.common.seed),
    )?;
    out.text("curve.csv", &res.ratio.to_csv())?;
    out.text("means.csv", &col_csv("t,mean_l,mean_g", &[&res.mean_l, &res.mean_g]))?;
    run.finish(
        out,
        json!({
            "scenario": sc.summary(),
            "seeds": rule,
            "transmission": tx,
            "min_ratio": res.min_ratio,
            "argmin": res.argmin,
            "ratio": res.ratio.mean,
        }),
    )
}

fn count_jumps_cmd(run: &Run<CountJumpsCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let sc = scenario_for(&scenario_spec!(c), run.common.seed)?;
    let i0 = check_node(c.seed_node, sc.random_seed_node, sc.l.n())?;
    let rows = par_replicate(
        Scenario::sim_seed(run.common.seed),
        c.reps,
        |_, rng| -> crate::Result<Vec<f64>> {
            let e = sc.support.draw(rng);
            let g = union(&sc.l, &e)?;
            let perc = Percolation::sample(&g, sc.p, PercolationMode::Undirected, rng)?;
            let trace = run_diffusion(&perc, &[i0], sc.horizon)?;
            Ok(count_jumps(&trace, &perc, &sc.l, &e)?
                .into_iter()
                .map(|j| j as f64)
                .collect())
        },
    )
    .into_iter()
    .collect::<crate::Result<Vec<_>>>()?;
    if rows.is_empty() {
        return usage("reps must be positive");
    }
    let curve = CurveResult::from_dense(&rows)?;
    out.text("curve.csv", &curve.to_csv())?;
    let total: f64 = curve.mean.iter().sum();
    run.finish(
        out,
        json!({"scenario": sc.summary(), "seed_node": i0, "mean_total_jumps": total}),
    )
}

fn estimate_p_cmd(run: &Run<EstimatePCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let sc = scenario_for(&scenario_spec!(c), run.common.seed)?;
    let n = sc.l.n();
    let traces = par_replicate(Scenario::sim_seed(run.common.seed), c.reps, |_, rng| {
        use rand::Rng;
        let i0 = rng.random_range(0..n);
        let perc = if c.true_graph {
            let g = union(&sc.l, &sc.support.draw(rng))?;
            // keep the owned graph alive for the run
            let perc = Percolation::sample(&g, sc.p, PercolationMode::Undirected, rng)?;
            return run_diffusion(&perc, &[i0], sc.horizon);
        } else {
            Percolation::sample(&sc.l, sc.p, PercolationMode::Undirected, rng)?
        };
        run_diffusion(&perc, &[i0], sc.horizon)
    })
    .into_iter()
    .collect::<crate::Result<Vec<_>>>()?;
    let est = estimate_p(&traces, &sc.l)?;
    let r0 = estimate_r0(est.p_hat, sc.mean_degree)?;
    run.finish(
        out,
        json!({
            "scenario": sc.summary(),
            "true_p": sc.p,
            "p_hat": est.p_hat,
            "successes": est.successes,
            "exposures": est.exposures,
            "r0_hat": r0,
            "r0_observed_graph": sc.p * sc.mean_degree,
        }),
    )
}

fn beta_sample(run: &Run<BetaSampleCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let ln = (c.n as f64).ln();
    let beta = c.beta.unwrap_or(1.0 / (c.n as f64 * ln * ln));
    let res = beta_sampling_experiment(c.n, beta, c.m, c.reps, run.common.seed)?;
    run.finish(out, res)
}

fn detect(run: &Run<DetectCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let sc = scenario_for(&scenario_spec!(c), run.common.seed)?;
    let i0 = check_node(c.seed_node, sc.random_seed_node, sc.l.n())?;
    let res = detection_curve(
        &sc.l,
        &sc.support,
        &[i0],
        sc.p,
        c.alpha,
        sc.horizon,
        c.reps,
        Scenario::sim_seed(run.common.seed),
    )?;
    out.text("curve.csv", &res.ratio.to_csv())?;
    // inclusive step count: by step t a region has had t + 1 periods
    let bound: Vec<f64> = (0..res.ratio.mean.len())
        .map(|t| (c.alpha * ((t + 1) as f64).powi(c.q as i32 + 1)).min(1.0))
        .collect();
    // the bound is tight at t = 0, so allow three standard errors of noise
    let violations = (0..bound.len())
        .filter(|&t| {
            let (m, se) = (res.ratio.mean[t], res.ratio.stderr[t]);
            !m.is_nan() && m > bound[t] + 3.0 * se + 1e-12
        })
        .count();
    run.finish(
        out,
        json!({
            "scenario": sc.summary(),
            "seed_node": i0,
            "ratio": res.ratio.mean,
            "k_star_mean": res.k_star_mean,
            "k_hat_mean": res.k_hat_mean,
            "bound": bound,
            "bound_violations": violations,
        }),
    )
}

fn fit_sir(run: &Run<FitSirCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let sc = scenario_for(&scenario_spec!(c), run.common.seed)?;
    let i0 = check_node(c.seed_node, sc.random_seed_node, sc.l.n())?;
    let t_fit = c.t_fit.unwrap_or(sc.horizon as usize / 4);
    let support = c.true_graph.then_some(&sc.support);
    let res = sir_fit_experiment(
        &sc.l,
        support,
        &[i0],
        sc.p,
        sc.horizon,
        t_fit,
        c.reps,
        Scenario::sim_seed(run.common.seed),
    )?;
    out.text(
        "trajectories.csv",
        &col_csv("t,observed,fitted", &[&res.observed_mean, &res.fitted_mean]),
    )?;
    run.finish(out, json!({"scenario": sc.summary(), "seed_node": i0, "fit": res}))
}

fn msm_fit(run: &Run<MsmFitCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let villages = load_msm_villages(&c.manifest)?;
    let fit = msm_fit_p(
        &villages,
        c.horizon,
        c.reps,
        &default_grid(c.grid_step),
        run.common.seed,
    )?;
    let mut csv = String::from("p,objective\n");
    for (p, v) in &fit.grid {
        writeln!(csv, "{p},{v}").unwrap();
    }
    out.text("objective.csv", &csv)?;
    run.finish(
        out,
        json!({
            "villages": villages.len(),
            "p_hat": fit.p_hat,
            "objective": fit.objective,
            "horizon": fit.horizon,
            "reps": fit.reps,
        }),
    )
}

fn exposure(run: &Run<ExposureCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let g: Graph = load_directed_graph(&require(&c.graph, "graph")?)?;
    let seeds = load_seeds(&require(&c.seeds, "seeds")?, g.n())?;
    let lambda = spectral_radius(&g)?;
    let p = match c.p {
        Some(p) => p,
        None if lambda > 0.0 => 1.0 / lambda,
        None => return Err(Error::Numeric("graph has no links; 1/lambda_max undefined".into()).into()),
    };
    if p * lambda > 1.0 + 1e-12 {
        log::warn!(
            "p * lambda_max = {} exceeds 1; exposure grows with the horizon",
            p * lambda
        );
    }
    let horizon = c.horizon.unwrap_or_else(|| diameter(&g).max(1));
    let mut s = vec![0.0; g.n()];
    for &v in &seeds {
        s[v] = 1.0;
    }
    let de = diffusion_exposure(&g, &s, p, horizon)?;
    let mut csv = String::from("node,exposure\n");
    for (v, x) in de.values.iter().enumerate() {
        writeln!(csv, "{v},{x}").unwrap();
    }
    out.text("exposure.csv", &csv)?;
    run.finish(
        out,
        json!({"p_used": de.p_used, "t_used": de.t_used, "lambda_max": lambda, "nodes": g.n(), "seeds": seeds.len()}),
    )
}

fn parse_ks(raw: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("bad k value {s:?}: {e}")))
        })
        .collect()
}

fn summarize(xs: &[f64]) -> Value {
    if xs.is_empty() {
        return Value::Null;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let q: BTreeMap<String, f64> = [5.0, 25.0, 50.0, 75.0, 95.0]
        .iter()
        .map(|&p| (format!("p{p}"), nearest_rank(xs, p).unwrap_or(f64::NAN)))
        .collect();
    json!({"mean": mean, "sd": sd, "quantiles": q})
}

fn peer_mc(run: &Run<PeerMcCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let ks = parse_ks(&c.ks)?;
    let villages = load_peer_villages(&c.manifest)?;
    let opts = ExposureOptions {
        p_override: c.p,
        hold_fixed: c.hold_fixed,
    };
    let res = mc_mismeasurement(&villages, &ks, c.reps, run.common.seed, &opts)?;
    let mut per_k = Vec::new();
    for d in &res.draws {
        let mut csv = String::from("rep,bias_pct,p_value\n");
        for i in 0..d.rep.len() {
            writeln!(csv, "{},{},{}", d.rep[i], d.bias_pct[i], d.p_value[i]).unwrap();
        }
        out.text(&format!("k_{}.csv", d.k), &csv)?;
        let fail_to_reject = d.p_value.iter().filter(|&&p| p >= 0.05).count() as f64 / d.p_value.len().max(1) as f64;
        per_k.push(json!({
            "k": d.k,
            "kept": d.rep.len(),
            "excluded": d.excluded,
            "bias_pct": summarize(&d.bias_pct),
            "p_value": summarize(&d.p_value),
            "fail_to_reject_5pct": fail_to_reject,
        }));
    }
    run.finish(
        out,
        json!({"villages": villages.len(), "full": res.full, "per_k": per_k}),
    )
}

fn ingest_flows(run: &Run<IngestFlowsCfg>, out: &Output) -> CliResult<()> {
    let c = &run.cfg;
    let threshold = match (c.cutoff, c.percentile) {
        (Some(_), Some(_)) => return usage("set either cutoff or percentile, not both"),
        (Some(x), None) => Threshold::Cutoff(x),
        (None, Some(p)) => Threshold::Percentile(p),
        (None, None) => Threshold::Cutoff(6.0),
    };
    let table = load_flows(&require(&c.flows, "flows")?)?;
    let net = symmetrize_and_prune(&table, threshold)?;
    write_edge_list(&net.graph, &out.path("graph.edges"))?;
    let mut csv = String::from("node,region\n");
    for (v, &r) in net.regions.iter().enumerate() {
        writeln!(csv, "{v},{}", table.regions[r]).unwrap();
    }
    out.text("nodes.csv", &csv)?;
    let stats = graph_stats(&net.graph, None, &mut stream(run.common.seed, 1)).ok();
    run.finish(
        out,
        json!({
            "records": table.records.len(),
            "regions": table.regions.len(),
            "cutoff": net.cutoff,
            "nodes_before": net.nodes_before,
            "edges_before": net.edges_before,
            "stats": stats,
        }),
    )
}

fn gen_fixtures(run: &Run<GenFixturesCfg>, out: &Output) -> CliResult<()> {
    let summary = write_fixtures(&out.dir, run.common.seed)?;
    run.finish(out, summary)
}

fn execute<C, A>(
    name: &'static str,
    args: &A,
    common: &CommonArgs,
    body: fn(&Run<C>, &Output) -> CliResult<()>,
) -> CliResult<()>
where
    C: Default + Serialize + DeserializeOwned + Sync,
    A: Serialize,
{
    let (common_cfg, cfg) = resolve::<C, A>(name, args, common)?;
    let run = Run {
        command: name,
        common: common_cfg,
        cfg,
    };
    if common.dry_run {
        let mut echo = run.config_echo();
        echo["threads"] = json!(run.common.threads);
        echo["out"] = serde_json::to_value(&run.common.out)?;
        println!("{}", serde_json::to_string_pretty(&echo)?);
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.common.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let out = Output::new(&run.common.out);
    log::info!("{name}: writing to {}", run.common.out.display());
    pool.install(|| body(&run, &out))
}

fn dispatch(cmd: &Command) -> CliResult<()> {
    let name = cmd.name();
    match cmd {
        Command::GenGraph(a) => execute(name, a, &a.common, gen_graph),
        Command::Stats(a) => execute(name, a, &a.common, stats),
        Command::SensDep(a) => execute(name, a, &a.common, sens_dep),
        Command::ForecastRatio(a) => execute(name, a, &a.common, forecast),
        Command::CountJumps(a) => execute(name, a, &a.common, count_jumps_cmd),
        Command::EstimateP(a) => execute(name, a, &a.common, estimate_p_cmd),
        Command::BetaSample(a) => execute(name, a, &a.common, beta_sample),
        Command::Detect(a) => execute(name, a, &a.common, detect),
        Command::FitSir(a) => execute(name, a, &a.common, fit_sir),
        Command::MsmFit(a) => execute(name, a, &a.common, msm_fit),
        Command::Exposure(a) => execute(name, a, &a.common, exposure),
        Command::PeerMc(a) => execute(name, a, &a.common, peer_mc),
        Command::IngestFlows(a) => execute(name, a, &a.common, ingest_flows),
        Command::GenFixtures(a) => execute(name, a, &a.common, gen_fixtures),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on a runtime failure, 2 on a usage or
/// configuration error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("netdiff: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("netdiff: {e}");
            1
        }
    }
}
