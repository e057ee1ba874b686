//! Python bindings. Results with nested structure come back as plain
//! dicts and lists; graphs are wrapped in the `Graph` class.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use netdiff::compartmental::{fit_and_forecast, simulate_sir, SirObserved, SirParams};
use netdiff::diffusion::{run_diffusion, Percolation, PercolationMode};
use netdiff::experiments::{
    beta_sampling_experiment, forecast_ratio_curve, sensitive_dependence_over_draws, SeedRule, Transmission,
};
use netdiff::generate::{erdos_renyi, generate_lattice_random, generate_random_regular};
use netdiff::graph::{diameter, graph_stats, read_edge_list, write_edge_list};
use netdiff::ingestion::{load_flows, symmetrize_and_prune, Threshold};
use netdiff::peer_effects::{diffusion_exposure, spectral_radius};
use netdiff::rng::stream;
use netdiff::scenario::{build_scenario, Scenario, ScenarioSpec};
use netdiff::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Input(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Round-trips a serializable value through JSON into Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Undirected simple graph on nodes `0..n`.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: netdiff::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = netdiff::Graph::from_edges(n, edges).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    /// Reads a whitespace-separated edge list (optional `# n=` header).
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyGraph {
            inner: read_edge_list(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_edge_list(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn mean_degree(&self) -> f64 {
        self.inner.mean_degree()
    }

    fn degree(&self, v: usize) -> PyResult<usize> {
        if v >= self.inner.n() {
            return Err(PyValueError::new_err(format!("node {v} out of range")));
        }
        Ok(self.inner.degree(v))
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.edges().to_vec()
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<u32>> {
        if v >= self.inner.n() {
            return Err(PyValueError::new_err(format!("node {v} out of range")));
        }
        Ok(self.inner.neighbors(v).to_vec())
    }

    fn diameter(&self, py: Python<'_>) -> u32 {
        py.detach(|| diameter(&self.inner))
    }

    #[pyo3(signature = (seed = 1, path_sample = None))]
    fn stats<'py>(&self, py: Python<'py>, seed: u64, path_sample: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let s = graph_stats(&self.inner, path_sample, &mut stream(seed, 1)).map_err(py_err)?;
        to_py(py, &s)
    }

    fn spectral_radius(&self) -> PyResult<f64> {
        spectral_radius(&self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

/// Lattice-plus-random-points graph; returns the graph and its latent
/// coordinates, one list per node.
#[pyfunction]
#[pyo3(signature = (n, q, n_side, seed = 1))]
fn lattice_random(n: usize, q: usize, n_side: usize, seed: u64) -> PyResult<(PyGraph, Vec<Vec<f64>>)> {
    let (g, pos) = generate_lattice_random(n, q, n_side, &mut stream(seed, 0)).map_err(py_err)?;
    let coords = (0..pos.len()).map(|i| pos.point(i).to_vec()).collect();
    Ok((PyGraph { inner: g }, coords))
}

#[pyfunction]
#[pyo3(signature = (n, beta, seed = 1))]
fn gnp(n: usize, beta: f64, seed: u64) -> PyGraph {
    PyGraph {
        inner: erdos_renyi(n, beta, &mut stream(seed, 0)),
    }
}

#[pyfunction]
#[pyo3(signature = (n, degree, seed = 1))]
fn random_regular(n: usize, degree: usize, seed: u64) -> PyResult<PyGraph> {
    Ok(PyGraph {
        inner: generate_random_regular(n, degree, &mut stream(seed, 0)).map_err(py_err)?,
    })
}

/// One SIR run; returns the ever-activated count at each step.
#[pyfunction]
#[pyo3(signature = (graph, p, seeds, horizon, seed = 1))]
fn simulate(graph: &PyGraph, p: f64, seeds: Vec<usize>, horizon: u32, seed: u64) -> PyResult<Vec<usize>> {
    let perc =
        Percolation::sample(&graph.inner, p, PercolationMode::Undirected, &mut stream(seed, 0)).map_err(py_err)?;
    Ok(run_diffusion(&perc, &seeds, horizon).map_err(py_err)?.ever_activated())
}

fn spec_from(q: usize, n: usize, n_side: usize, beta_divisor: f64, graph: Option<PathBuf>) -> ScenarioSpec {
    ScenarioSpec {
        graph,
        q,
        n,
        n_side,
        beta_divisor,
        ..ScenarioSpec::default()
    }
}

/// Forecast ratio `mean Y(L) / mean Y(G)` on the standard scenario.
#[pyfunction]
#[pyo3(signature = (q = 4, n = 4000, n_side = 7, reps = 2500, seed = 1, beta_divisor = 10.0, uniform_seed = true, graph = None))]
#[allow(clippy::too_many_arguments)]
fn forecast_ratio<'py>(
    py: Python<'py>,
    q: usize,
    n: usize,
    n_side: usize,
    reps: usize,
    seed: u64,
    beta_divisor: f64,
    uniform_seed: bool,
    graph: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec_from(q, n, n_side, beta_divisor, graph);
    let res = py
        .detach(|| {
            let sc = build_scenario(&spec, seed)?;
            let rule = if uniform_seed {
                SeedRule::Uniform
            } else {
                SeedRule::Fixed(vec![sc.random_seed_node])
            };
            forecast_ratio_curve(
                &sc.l,
                &sc.support,
                &rule,
                Transmission::Constant { p: sc.p },
                sc.horizon,
                reps,
                Scenario::sim_seed(seed),
            )
        })
        .map_err(py_err)?;
    to_py(py, &res)
}

/// Jaccard overlap of runs from the lattice center and a perturbed seed,
/// pooled over `draws` error graphs.
#[pyfunction]
#[pyo3(signature = (q = 4, n = 4000, n_side = 7, reps = 500, draws = 1, seed = 1))]
fn sensitive_dependence<'py>(
    py: Python<'py>,
    q: usize,
    n: usize,
    n_side: usize,
    reps: usize,
    draws: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec_from(q, n, n_side, 10.0, None);
    let pooled = py
        .detach(|| {
            let sc = build_scenario(&spec, seed)?;
            sensitive_dependence_over_draws(
                &sc.l,
                &sc.support,
                sc.center_seed_node,
                sc.p,
                sc.horizon,
                draws,
                reps,
                Scenario::sim_seed(seed),
            )
        })
        .map_err(py_err)?
        .pooled;
    to_py(py, &pooled)
}

#[pyfunction]
#[pyo3(signature = (n, beta, m, reps, seed = 1))]
fn beta_sampling<'py>(
    py: Python<'py>,
    n: usize,
    beta: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let res = beta_sampling_experiment(n, beta, m, reps, seed).map_err(py_err)?;
    to_py(py, &res)
}

/// `sum_{t=1..T} (pA)^t s` for a seed vector `s`.
#[pyfunction]
fn exposure(graph: &PyGraph, seeds: Vec<f64>, p: f64, horizon: u32) -> PyResult<Vec<f64>> {
    Ok(diffusion_exposure(&graph.inner, &seeds, p, horizon)
        .map_err(py_err)?
        .values)
}

/// Discrete-time compartmental trajectory as `{"s": [...], "i": [...], "r": [...]}`.
#[pyfunction]
fn sir_trajectory<'py>(py: Python<'py>, s: f64, r: f64, n: f64, i0: f64, steps: usize) -> PyResult<Bound<'py, PyAny>> {
    let traj = simulate_sir(SirParams { s, r }, n, i0, steps).map_err(py_err)?;
    to_py(py, &traj)
}

/// Fits `(s, r)` to observed infected and removed series on steps `1..=t_fit`.
#[pyfunction]
fn fit_sir<'py>(
    py: Python<'py>,
    infected: Vec<f64>,
    removed: Vec<f64>,
    n: f64,
    i0: f64,
    t_fit: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let obs = SirObserved {
        i: infected,
        r: removed,
    };
    let report = py.detach(|| fit_and_forecast(&obs, n, i0, t_fit)).map_err(py_err)?;
    to_py(py, &report)
}

/// Thresholds a flow table into a graph; returns the graph and the region
/// name of each node.
#[pyfunction]
#[pyo3(signature = (path, cutoff = None, percentile = None))]
fn prune_flows(path: PathBuf, cutoff: Option<f64>, percentile: Option<f64>) -> PyResult<(PyGraph, Vec<String>)> {
    let threshold = match (cutoff, percentile) {
        (Some(c), None) => Threshold::Cutoff(c),
        (None, Some(p)) => Threshold::Percentile(p),
        _ => return Err(PyValueError::new_err("give exactly one of cutoff or percentile")),
    };
    let table = load_flows(&path).map_err(py_err)?;
    let net = symmetrize_and_prune(&table, threshold).map_err(py_err)?;
    let names = net.regions.iter().map(|&r| table.regions[r].clone()).collect();
    Ok((PyGraph { inner: net.graph }, names))
}

/// Runs the command-line front end with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("netdiff".to_string()).chain(args).collect();
    py.detach(|| netdiff::cli::run(argv))
}

#[pymodule]
mod netdiff_py {
    #[pymodule_export]
    use super::{
        beta_sampling, exposure, fit_sir, forecast_ratio, gnp, lattice_random, prune_flows, random_regular, run_cli,
        sensitive_dependence, simulate, sir_trajectory, PyGraph,
    };
}
