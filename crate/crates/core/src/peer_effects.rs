//! Diffusion exposure, fixed-effects regression with village-clustered
//! errors, and the Monte Carlo of how dropped links distort the estimate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::generate::drop_links;
use crate::graph::{diameter, Graph};
use crate::rng::stream;

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITER: usize = 10_000;

/// Largest adjacency eigenvalue by power iteration on `A + I` from the
/// all-ones vector. The shift keeps bipartite graphs from oscillating.
pub fn spectral_radius(g: &Graph) -> Result<f64> {
    let n = g.n();
    if n == 0 {
        return input("spectral radius of an empty graph");
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut prev = f64::NAN;
    for iter in 1..=POWER_MAX_ITER {
        for v in 0..n {
            y[v] = x[v] + g.neighbors(v).iter().map(|&w| x[w as usize]).sum::<f64>();
        }
        // Rayleigh quotient of the shifted matrix at x (x has unit norm)
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        for v in 0..n {
            x[v] = y[v] / norm;
        }
        if (rq - prev).abs() <= POWER_TOL * rq.abs() {
            return Ok(rq - 1.0);
        }
        prev = rq;
        if iter == POWER_MAX_ITER {
            break;
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge in {POWER_MAX_ITER} iterations"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureVector {
    pub values: Vec<f64>,
    pub p_used: f64,
    pub t_used: u32,
}

/// `sum_{t=1..T} (pA)^t s` by repeated sparse products.
pub fn diffusion_exposure(g: &Graph, seeds: &[f64], p: f64, horizon: u32) -> Result<ExposureVector> {
    let n = g.n();
    if seeds.len() != n {
        return input(format!("seed vector of length {} for {n} nodes", seeds.len()));
    }
    if !(p.is_finite() && p >= 0.0) {
        return input(format!("passing probability {p} must be finite and nonnegative"));
    }
    if horizon == 0 {
        return input("exposure horizon must be at least 1");
    }
    let mut cur = seeds.to_vec();
    let mut next = vec![0.0; n];
    let mut total = vec![0.0; n];
    for _ in 0..horizon {
        for v in 0..n {
            next[v] = p * g.neighbors(v).iter().map(|&w| cur[w as usize]).sum::<f64>();
        }
        std::mem::swap(&mut cur, &mut next);
        for (t, c) in total.iter_mut().zip(&cur) {
            *t += c;
        }
    }
    Ok(ExposureVector {
        values: total,
        p_used: p,
        t_used: horizon,
    })
}

/// Centers and scales `v` by the mean and sample standard deviation of the
/// entries selected by `mask`. Every entry is transformed.
pub fn standardize(v: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != v.len() {
        return input(format!("mask of length {} for {} values", mask.len(), v.len()));
    }
    let sample: Vec<f64> = v.iter().zip(mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect();
    if sample.len() < 2 {
        return input(format!(
            "standardizing needs at least 2 sample values, got {}",
            sample.len()
        ));
    }
    let k = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / k;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    if !(var > 0.0) {
        return Err(Error::Numeric("zero variance in standardization sample".into()));
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    /// Coefficient on the main regressor.
    pub coefficient: f64,
    pub clustered_se: f64,
    pub p_value: f64,
    pub n_obs: usize,
    pub cluster_count: usize,
    /// Main regressor first, then the controls.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

/// Two-sided normal p-value.
fn normal_p_value(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    libm::erfc(t.abs() / std::f64::consts::SQRT_2)
}

fn dense_ids(ids: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let dense = ids
        .iter()
        .map(|&g| {
            let next = map.len();
            *map.entry(g).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

fn demean(col: &mut [f64], groups: &[usize], count: usize) {
    let mut sum = vec![0.0; count];
    let mut n = vec![0usize; count];
    for (x, &g) in col.iter().zip(groups) {
        sum[g] += x;
        n[g] += 1;
    }
    for (x, &g) in col.iter_mut().zip(groups) {
        *x -= sum[g] / n[g] as f64;
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix; a pivot
/// that has lost all but a sliver of its column's own norm marks that column
/// as a linear combination of the earlier ones.
fn cholesky(a: &[Vec<f64>], names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let k = a.len();
    let mut l = vec![vec![0.0; k]; k];
    for j in 0..k {
        let d = a[j][j] - (0..j).map(|m| l[j][m] * l[j][m]).sum::<f64>();
        if !(d > 1e-10 * a[j][j]) || a[j][j] == 0.0 {
            return Err(Error::Numeric(format!(
                "regressor '{}' is collinear with the fixed effects or earlier regressors",
                names[j]
            )));
        }
        l[j][j] = d.sqrt();
        for i in j + 1..k {
            let s = a[i][j] - (0..j).map(|m| l[i][m] * l[j][m]).sum::<f64>();
            l[i][j] = s / l[j][j];
        }
    }
    Ok(l)
}

fn cholesky_inverse(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = l.len();
    let mut inv = vec![vec![0.0; k]; k];
    for c in 0..k {
        // solve L z = e_c, then L' x = z
        let mut z = vec![0.0; k];
        for i in 0..k {
            let rhs = if i == c { 1.0 } else { 0.0 };
            z[i] = (rhs - (0..i).map(|m| l[i][m] * z[m]).sum::<f64>()) / l[i][i];
        }
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            x[i] = (z[i] - (i + 1..k).map(|m| l[m][i] * x[m]).sum::<f64>()) / l[i][i];
        }
        for i in 0..k {
            inv[i][c] = x[i];
        }
    }
    inv
}

/// OLS of `y` on `x_main` and `controls` with fixed effects absorbed by
/// within-group demeaning and a cluster-robust variance scaled by
/// `G/(G-1) * (N-1)/(N-K)`, where `K` counts regressors plus fixed-effect
/// groups.
pub fn ols_fe(
    y: &[f64],
    x_main: &[f64],
    controls: &[(&str, &[f64])],
    fe: &[usize],
    clusters: &[usize],
) -> Result<RegressionResult> {
    let n = y.len();
    if x_main.len() != n || fe.len() != n || clusters.len() != n || controls.iter().any(|(_, c)| c.len() != n) {
        return input("regression columns have different lengths");
    }
    let (fe_ids, fe_count) = dense_ids(fe);
    let (cl_ids, cl_count) = dense_ids(clusters);
    let k = 1 + controls.len();
    if n <= k + fe_count {
        return input(format!(
            "{n} observations for {k} regressors and {fe_count} fixed-effect groups"
        ));
    }
    if cl_count < 2 {
        return input("clustered errors need at least two clusters");
    }
    let mut names = vec!["exposure"];
    names.extend(controls.iter().map(|(nm, _)| *nm));
    let mut cols: Vec<Vec<f64>> = std::iter::once(x_main.to_vec())
        .chain(controls.iter().map(|(_, c)| c.to_vec()))
        .collect();
    let mut yd = y.to_vec();
    demean(&mut yd, &fe_ids, fe_count);
    for c in &mut cols {
        demean(c, &fe_ids, fe_count);
    }

    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| cols[a].iter().zip(&cols[b]).map(|(p, q)| p * q).sum())
                .collect()
        })
        .collect();
    let xty: Vec<f64> = (0..k)
        .map(|a| cols[a].iter().zip(&yd).map(|(p, q)| p * q).sum())
        .collect();
    let chol = cholesky(&xtx, &names)?;
    let bread = cholesky_inverse(&chol);
    let beta: Vec<f64> = (0..k).map(|a| (0..k).map(|b| bread[a][b] * xty[b]).sum()).collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| yd[i] - (0..k).map(|a| cols[a][i] * beta[a]).sum::<f64>())
        .collect();

    let mut scores = vec![vec![0.0; k]; cl_count];
    for i in 0..n {
        for a in 0..k {
            scores[cl_ids[i]][a] += cols[a][i] * resid[i];
        }
    }
    let mut meat = vec![vec![0.0; k]; k];
    for s in &scores {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    let (g, nn, kk) = (cl_count as f64, n as f64, (k + fe_count) as f64);
    let scale = g / (g - 1.0) * (nn - 1.0) / (nn - kk);
    let se: Vec<f64> = (0..k)
        .map(|a| {
            let v: f64 = (0..k)
                .map(|b| (0..k).map(|c| bread[a][b] * meat[b][c] * bread[c][a]).sum::<f64>())
                .sum();
            (scale * v).max(0.0).sqrt()
        })
        .collect();
    let t = beta[0] / se[0];
    Ok(RegressionResult {
        coefficient: beta[0],
        clustered_se: se[0],
        p_value: if se[0] == 0.0 { 0.0 } else { normal_p_value(t) },
        n_obs: n,
        cluster_count: cl_count,
        coefficients: beta,
        standard_errors: se,
    })
}

/// One village of the peer-effects design.
#[derive(Debug, Clone)]
pub struct PeerVillage {
    pub graph: Graph,
    /// Households given the intensive session; exposure is seeded from them.
    pub treated: Vec<bool>,
    pub outcome: Vec<f64>,
    /// Named control columns, one value per household.
    pub controls: Vec<(String, Vec<f64>)>,
}

impl PeerVillage {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.treated.len() != n || self.outcome.len() != n || self.controls.iter().any(|(_, c)| c.len() != n) {
            return input("village columns do not match its node count");
        }
        Ok(())
    }
}

/// How the exposure's passing probability and horizon are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExposureOptions {
    /// Fixed passing probability for every village instead of `1/lambda_max`.
    pub p_override: Option<f64>,
    /// Keep the full graph's `p` and horizon when recomputing exposure on a
    /// degraded graph, instead of the degraded graph's own.
    pub hold_fixed: bool,
}

/// Passing probability and horizon for one village graph.
fn exposure_params(g: &Graph, opts: &ExposureOptions) -> Result<(f64, u32)> {
    let p = match opts.p_override {
        Some(p) => p,
        None => {
            let lambda = spectral_radius(g)?;
            if !(lambda > 0.0) {
                return Err(Error::Numeric("graph has no links; 1/lambda_max undefined".into()));
            }
            1.0 / lambda
        }
    };
    Ok((p, diameter(g).max(1)))
}

/// Village exposures computed from `graphs` (one per village), standardized
/// over untreated households, and regressed with village fixed effects and
/// village clusters on the untreated sample.
pub fn exposure_regression(
    villages: &[PeerVillage],
    graphs: &[&Graph],
    params: &[(f64, u32)],
) -> Result<RegressionResult> {
    let mut de = Vec::new();
    let mut mask = Vec::new();
    for ((v, g), &(p, t)) in villages.iter().zip(graphs).zip(params) {
        let seeds: Vec<f64> = v.treated.iter().map(|&b| f64::from(u8::from(b))).collect();
        de.extend(diffusion_exposure(g, &seeds, p, t)?.values);
        mask.extend(v.treated.iter().map(|&b| !b));
    }
    let de = standardize(&de, &mask)?;
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut ids = Vec::new();
    let control_names: Vec<&str> = villages
        .first()
        .map(|v| v.controls.iter().map(|(n, _)| n.as_str()).collect())
        .unwrap_or_default();
    let mut ctrl: Vec<Vec<f64>> = vec![Vec::new(); control_names.len()];
    let mut offset = 0;
    for (vi, v) in villages.iter().enumerate() {
        if v.controls.len() != control_names.len() {
            return input(format!("village {vi} has a different set of controls"));
        }
        for i in 0..v.graph.n() {
            if v.treated[i] {
                continue;
            }
            y.push(v.outcome[i]);
            x.push(de[offset + i]);
            ids.push(vi);
            for (c, (_, col)) in ctrl.iter_mut().zip(&v.controls) {
                c.push(col[i]);
            }
        }
        offset += v.graph.n();
    }
    let controls: Vec<(&str, &[f64])> = control_names
        .iter()
        .zip(&ctrl)
        .map(|(n, c)| (*n, c.as_slice()))
        .collect();
    ols_fe(&y, &x, &controls, &ids, &ids)
}

/// Regression with exposure measured on the full village graphs.
pub fn full_information_regression(villages: &[PeerVillage], opts: &ExposureOptions) -> Result<RegressionResult> {
    for v in villages {
        v.validate()?;
    }
    let graphs: Vec<&Graph> = villages.iter().map(|v| &v.graph).collect();
    let params = villages
        .iter()
        .map(|v| exposure_params(&v.graph, opts))
        .collect::<Result<Vec<_>>>()?;
    exposure_regression(villages, &graphs, &params)
}

#[derive(Debug, Clone, Serialize)]
pub struct MismeasurementDraws {
    pub k: f64,
    /// `100 * (gamma_L - gamma_G) / gamma_G` per kept replication.
    pub bias_pct: Vec<f64>,
    pub p_value: Vec<f64>,
    /// Replication index of each kept entry.
    pub rep: Vec<usize>,
    /// Replications whose fit failed and were left out.
    pub excluded: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MismeasurementResult {
    pub full: RegressionResult,
    pub draws: Vec<MismeasurementDraws>,
}

/// For each `k`, drops every link of village `v` independently with
/// probability `1/(k * mean degree of v)`, recomputes exposure on the
/// degraded graphs and re-estimates. Replication `r` uses stream `r` of
/// `seed` for every `k`, so draws are coupled across `k`.
pub fn mc_mismeasurement(
    villages: &[PeerVillage],
    ks: &[f64],
    reps: usize,
    seed: u64,
    opts: &ExposureOptions,
) -> Result<MismeasurementResult> {
    if villages.is_empty() {
        return input("no villages");
    }
    if let Some(k) = ks.iter().find(|&&k| !(k >= 1.0)) {
        return input(format!("k = {k} must be at least 1"));
    }
    let full = full_information_regression(villages, opts)?;
    let full_params = villages
        .iter()
        .map(|v| exposure_params(&v.graph, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut draws = Vec::with_capacity(ks.len());
    for &k in ks {
        let betas: Vec<f64> = villages
            .iter()
            .map(|v| {
                let d = v.graph.mean_degree();
                if k.is_infinite() || d == 0.0 {
                    0.0
                } else {
                    (1.0 / (k * d)).min(1.0)
                }
            })
            .collect();
        let rows: Vec<Result<RegressionResult>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, r as u64);
                let degraded = villages
                    .iter()
                    .zip(&betas)
                    .map(|(v, &b)| drop_links(&v.graph, b, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let params = if opts.hold_fixed {
                    full_params.clone()
                } else {
                    degraded
                        .iter()
                        .map(|g| exposure_params(g, opts))
                        .collect::<Result<Vec<_>>>()?
                };
                let refs: Vec<&Graph> = degraded.iter().collect();
                exposure_regression(villages, &refs, &params)
            })
            .collect();
        let mut out = MismeasurementDraws {
            k,
            bias_pct: Vec::new(),
            p_value: Vec::new(),
            rep: Vec::new(),
            excluded: 0,
        };
        for (r, row) in rows.into_iter().enumerate() {
            match row {
                Ok(fit) => {
                    out.bias_pct
                        .push(100.0 * (fit.coefficient - full.coefficient) / full.coefficient);
                    out.p_value.push(fit.p_value);
                    out.rep.push(r);
                }
                Err(e) => {
                    log::warn!("k = {k}, replication {r} excluded: {e}");
                    out.excluded += 1;
                }
            }
        }
        draws.push(out);
    }
    Ok(MismeasurementResult { full, draws })
}
