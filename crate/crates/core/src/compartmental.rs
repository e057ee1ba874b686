//! Discrete-time mean-field SIR model and its moment-matching fit to
//! network diffusion traces.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionTrace;
use crate::error::{input, Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Upper end of the transmission-parameter search box.
pub const S_MAX: f64 = 5.0;
/// Lower end of the removal-rate box; the rate itself must stay positive.
pub const R_MIN: f64 = 1e-6;
/// Starting points per axis in the multi-start grid.
pub const GRID_SIDE: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    /// Transmission parameter.
    pub s: f64,
    /// Removal rate.
    pub r: f64,
}

impl SirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s >= 0.0) {
            return input(format!(
                "transmission parameter s = {} must be finite and nonnegative",
                self.s
            ));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return input(format!("removal rate r = {} outside [0,1]", self.r));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SirTrajectory {
    pub n: f64,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    /// Steps at which some compartment had to be clamped into `[0, n]`.
    pub clamped_steps: Vec<usize>,
}

impl SirTrajectory {
    /// `I(t) + R(t)`, everyone ever infected.
    pub fn ever_infected(&self) -> Vec<f64> {
        self.i.iter().zip(&self.r).map(|(a, b)| a + b).collect()
    }
}

/// `S(t) = S - (s/n) S I`, `I(t) = I + (s/n) S I - r I`, `R(t) = R + r I`
/// for `t = 1..=steps`, starting from `S = n - i0`, `I = i0`, `R = 0`.
pub fn simulate_sir(params: SirParams, n: f64, i0: f64, steps: usize) -> Result<SirTrajectory> {
    params.validate()?;
    if !(i0 > 0.0 && i0 <= n) {
        return input(format!("initial infected {i0} outside (0, {n}]"));
    }
    let mut traj = SirTrajectory {
        n,
        s: Vec::with_capacity(steps + 1),
        i: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
        clamped_steps: Vec::new(),
    };
    let (mut s, mut i, mut r) = (n - i0, i0, 0.0);
    traj.s.push(s);
    traj.i.push(i);
    traj.r.push(r);
    for t in 1..=steps {
        let infections = params.s / n * s * i;
        let removals = params.r * i;
        let (ns, ni, nr) = (s - infections, i + infections - removals, r + removals);
        let (cs, ci, cr) = (ns.clamp(0.0, n), ni.clamp(0.0, n), nr.clamp(0.0, n));
        if (cs, ci, cr) != (ns, ni, nr) {
            log::debug!("compartment clamped at step {t}: S={ns} I={ni} R={nr}");
            traj.clamped_steps.push(t);
        }
        (s, i, r) = (cs, ci, cr);
        traj.s.push(s);
        traj.i.push(i);
        traj.r.push(r);
    }
    Ok(traj)
}

/// `s / r`.
pub fn r0_from_params(params: SirParams) -> Result<f64> {
    if params.r == 0.0 {
        return input("removal rate is zero; reproductive number undefined");
    }
    params.validate()?;
    Ok(params.s / params.r)
}

/// Observed infected and removed counts, indexed from step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirObserved {
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirObserved {
    /// Network trace as compartments: a node is infected only in the step it
    /// is activated, then removed.
    pub fn from_trace(trace: &DiffusionTrace) -> Self {
        let i: Vec<f64> = trace.new_by_step.iter().map(|&c| c as f64).collect();
        let r = i
            .iter()
            .scan(0.0, |acc, &x| {
                let before = *acc;
                *acc += x;
                Some(before)
            })
            .collect();
        SirObserved { i, r }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn ever_infected(&self) -> Vec<f64> {
        self.i.iter().zip(&self.r).map(|(a, b)| a + b).collect()
    }

    /// Elementwise mean of several series of equal length.
    pub fn mean(series: &[SirObserved]) -> Result<Self> {
        let Some(first) = series.first() else {
            return input("no series to average");
        };
        let len = first.len();
        if series.iter().any(|s| s.len() != len || s.r.len() != len) {
            return input("series lengths differ");
        }
        let k = series.len() as f64;
        let avg = |f: fn(&SirObserved) -> &Vec<f64>| {
            (0..len)
                .map(|t| series.iter().map(|s| f(s)[t]).sum::<f64>() / k)
                .collect()
        };
        Ok(SirObserved {
            i: avg(|s| &s.i),
            r: avg(|s| &s.r),
        })
    }
}

/// Mean squared moment gap over steps `1..=t_fit`.
pub fn gmm_objective(params: SirParams, observed: &SirObserved, n: f64, i0: f64, t_fit: usize) -> f64 {
    let Ok(m) = simulate_sir(params, n, i0, t_fit) else {
        return f64::INFINITY;
    };
    (1..=t_fit)
        .map(|t| (observed.i[t] - m.i[t]).powi(2) + (observed.r[t] - m.r[t]).powi(2))
        .sum::<f64>()
        / t_fit as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmmFit {
    pub params: SirParams,
    pub objective: f64,
}

/// The `GRID_SIDE x GRID_SIDE` starting points: `s` evenly over `[0, S_MAX]`,
/// `r` evenly over `(0, 1]`.
pub fn start_grid() -> Vec<SirParams> {
    let mut out = Vec::with_capacity(GRID_SIDE * GRID_SIDE);
    for a in 0..GRID_SIDE {
        for b in 0..GRID_SIDE {
            out.push(SirParams {
                s: S_MAX * a as f64 / (GRID_SIDE - 1) as f64,
                r: (b + 1) as f64 / GRID_SIDE as f64,
            });
        }
    }
    out
}

/// Fits `(s, r)` by minimizing [`gmm_objective`] from every point of
/// [`start_grid`] with box-projected Nelder–Mead, keeping the best result.
pub fn fit_gmm(observed: &SirObserved, n: f64, i0: f64, t_fit: usize) -> Result<GmmFit> {
    if t_fit < 2 {
        return input(format!("fit window {t_fit} shorter than 2 steps"));
    }
    if observed.i.len() <= t_fit || observed.r.len() <= t_fit {
        return input(format!("observed series shorter than the fit window {t_fit}"));
    }
    if observed.i[..=t_fit]
        .iter()
        .chain(&observed.r[..=t_fit])
        .all(|&x| x == 0.0)
    {
        return Err(Error::Fit("observed series is identically zero".into()));
    }
    let bounds = [(0.0, S_MAX), (R_MIN, 1.0)];
    let f = |x: &[f64]| gmm_objective(SirParams { s: x[0], r: x[1] }, observed, n, i0, t_fit);
    let opts = NelderMeadOptions::default();
    let mut best: Option<GmmFit> = None;
    let mut best_start = f64::INFINITY;
    for start in start_grid() {
        let x0 = [start.s, start.r];
        best_start = best_start.min(f(&x0));
        let mut m = nelder_mead(f, &x0, &bounds, &opts);
        // one restart from the result guards against a collapsed simplex
        let again = nelder_mead(f, &m.x, &bounds, &opts);
        if again.value < m.value {
            m = again;
        }
        if best.is_none_or(|b| m.value < b.objective) {
            best = Some(GmmFit {
                params: SirParams { s: m.x[0], r: m.x[1] },
                objective: m.value,
            });
        }
    }
    let best = best.expect("start grid is nonempty");
    assert!(best.objective <= best_start, "fit worse than its best start");
    if !best.objective.is_finite() {
        return Err(Error::Fit("objective is not finite at any start".into()));
    }
    let at_opt = simulate_sir(best.params, n, i0, t_fit)?;
    if !at_opt.clamped_steps.is_empty() {
        return Err(Error::Fit(format!(
            "compartments clamped at the optimum (steps {:?})",
            at_opt.clamped_steps
        )));
    }
    Ok(best)
}

/// Fit summary with forecast accuracy inside and after the fit window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub s: f64,
    pub r: f64,
    pub r0: f64,
    pub objective: f64,
    pub n: f64,
    pub i0: f64,
    pub t_fit: usize,
    /// RMSE of ever-infected over steps `1..=t_fit`.
    pub in_sample_rmse: f64,
    /// RMSE of ever-infected over steps `t_fit+1..=2*t_fit` (or the end of the data).
    pub out_of_sample_rmse: f64,
    pub clamped: bool,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return f64::NAN;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Fits on the first `t_fit` steps and scores the forward simulation on the
/// following `t_fit` steps.
pub fn fit_and_forecast(observed: &SirObserved, n: f64, i0: f64, t_fit: usize) -> Result<FitReport> {
    let fit = fit_gmm(observed, n, i0, t_fit)?;
    let end = (2 * t_fit).min(observed.len() - 1);
    let model = simulate_sir(fit.params, n, i0, end)?;
    let (obs, fitted) = (observed.ever_infected(), model.ever_infected());
    Ok(FitReport {
        s: fit.params.s,
        r: fit.params.r,
        r0: r0_from_params(fit.params)?,
        objective: fit.objective,
        n,
        i0,
        t_fit,
        in_sample_rmse: rmse(&obs[1..=t_fit], &fitted[1..=t_fit]),
        out_of_sample_rmse: rmse(&obs[t_fit + 1..=end], &fitted[t_fit + 1..=end]),
        clamped: !model.clamped_steps.is_empty(),
    })
}
