//! Monte Carlo drivers for the replication suite.
//!
//! Every driver takes a master seed and runs replication `r` on stream `r`
//! of that seed, reducing results sequentially in replication order, so the
//! output does not depend on the worker-thread count.

mod detection;
mod estimators;
mod forecast;
mod msm;
mod sampling;
mod sensitivity;
mod sir_fit;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{input, Result};

pub use detection::{detection_curve, detection_experiment, DetectionCounts, DetectionResult};
pub use estimators::{estimate_p, estimate_r0, PEstimate};
pub use forecast::{forecast_ratio_curve, ForecastResult, SeedRule, Transmission};
pub use msm::{
    default_grid, hop_limited_bottleneck, msm_fit_p, msm_objective, simulate_observed, MsmFit, MsmVillage,
    DEFAULT_GRID_STEP,
};
pub use sampling::{beta_sampling_experiment, BetaSamplingResult};
pub use sensitivity::{
    build_perturbation, multi_seed_perturb, sensitive_dependence_curve, sensitive_dependence_over_draws,
    SeedPerturbation, SensitivityDraws,
};
pub use sir_fit::{sir_fit_experiment, DataGraph, SirFitResult};

/// Per-step Monte Carlo summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveResult {
    pub mean: Vec<f64>,
    /// Monte Carlo standard error of `mean`.
    pub stderr: Vec<f64>,
    /// Replications contributing at each step (fewer than `reps` when some
    /// were undefined there).
    pub counts: Vec<usize>,
    pub reps: usize,
    pub metadata: BTreeMap<String, Value>,
}

impl CurveResult {
    /// Pointwise mean and standard error over replications; `None` entries
    /// are skipped.
    pub fn from_samples(samples: &[Vec<Option<f64>>]) -> Result<Self> {
        let reps = samples.len();
        if reps == 0 {
            return input("no replications");
        }
        let len = samples[0].len();
        if samples.iter().any(|s| s.len() != len) {
            return input("replications disagree on curve length");
        }
        let mut mean = vec![0.0; len];
        let mut stderr = vec![0.0; len];
        let mut counts = vec![0usize; len];
        for t in 0..len {
            let vals = || samples.iter().filter_map(|s| s[t]);
            let c = vals().count();
            counts[t] = c;
            if c == 0 {
                mean[t] = f64::NAN;
                stderr[t] = f64::NAN;
                continue;
            }
            let m = vals().sum::<f64>() / c as f64;
            mean[t] = m;
            if c > 1 {
                let ss: f64 = vals().map(|x| (x - m) * (x - m)).sum();
                stderr[t] = (ss / (c - 1) as f64 / c as f64).sqrt();
            }
        }
        Ok(CurveResult {
            mean,
            stderr,
            counts,
            reps,
            metadata: BTreeMap::new(),
        })
    }

    /// Curve from fully defined replications.
    pub fn from_dense(samples: &[Vec<f64>]) -> Result<Self> {
        let wrapped: Vec<Vec<Option<f64>>> = samples.iter().map(|s| s.iter().map(|&x| Some(x)).collect()).collect();
        Self::from_samples(&wrapped)
    }

    /// `mean(num_t) / mean(den_t)` per step, with a delta-method standard
    /// error that accounts for the pairing of numerator and denominator.
    pub fn ratio_of_means(num: &[Vec<f64>], den: &[Vec<f64>]) -> Result<Self> {
        let reps = num.len();
        if reps == 0 || den.len() != reps {
            return input("ratio needs the same positive number of replications on both sides");
        }
        let len = num[0].len();
        if num.iter().chain(den).any(|s| s.len() != len) {
            return input("replications disagree on curve length");
        }
        let r = reps as f64;
        let mut mean = vec![0.0; len];
        let mut stderr = vec![0.0; len];
        for t in 0..len {
            let a = num.iter().map(|s| s[t]).sum::<f64>() / r;
            let b = den.iter().map(|s| s[t]).sum::<f64>() / r;
            mean[t] = a / b;
            if reps > 1 {
                let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
                for (x, y) in num.iter().zip(den) {
                    let (dx, dy) = (x[t] - a, y[t] - b);
                    vaa += dx * dx;
                    vbb += dy * dy;
                    vab += dx * dy;
                }
                let (vaa, vbb, vab) = (vaa / (r - 1.0), vbb / (r - 1.0), vab / (r - 1.0));
                let v = (vaa / (b * b) + a * a * vbb / b.powi(4) - 2.0 * a * vab / b.powi(3)) / r;
                stderr[t] = v.max(0.0).sqrt();
            }
        }
        Ok(CurveResult {
            mean,
            stderr,
            counts: vec![reps; len],
            reps,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        self.metadata
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    /// Smallest defined mean and its step (first on ties).
    pub fn argmin(&self) -> Option<(usize, f64)> {
        self.mean
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_nan())
            .fold(None, |best, (t, &m)| match best {
                Some((_, b)) if b <= m => best,
                _ => Some((t, m)),
            })
    }

    /// `t,mean,stderr` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean,stderr\n");
        for t in 0..self.mean.len() {
            writeln!(out, "{t},{},{}", self.mean[t], self.stderr[t]).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_stderr_is_sd_over_root_reps() {
        let c = CurveResult::from_dense(&[vec![1.0, 0.0], vec![3.0, 0.0], vec![5.0, 0.0]]).unwrap();
        assert_eq!(c.mean, vec![3.0, 0.0]);
        assert!((c.stderr[0] - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.stderr[1], 0.0);
        assert_eq!(c.reps, 3);
    }

    #[test]
    fn undefined_entries_are_dropped_and_counted() {
        let c = CurveResult::from_samples(&[vec![Some(1.0), None], vec![Some(0.0), None]]).unwrap();
        assert_eq!(c.counts, vec![2, 0]);
        assert_eq!(c.mean[0], 0.5);
        assert!(c.mean[1].is_nan());
        assert_eq!(c.argmin(), Some((0, 0.5)));
        assert!(CurveResult::from_samples(&[]).is_err());
    }

    #[test]
    fn identical_ratio_has_zero_error() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 5.0]];
        let c = CurveResult::ratio_of_means(&x, &x).unwrap();
        assert_eq!(c.mean, vec![1.0, 1.0]);
        assert!(c.stderr.iter().all(|&s| s.abs() < 1e-12));
    }

    #[test]
    fn ratio_is_of_means_not_mean_of_ratios() {
        let c = CurveResult::ratio_of_means(&[vec![1.0], vec![3.0]], &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(c.mean, vec![2.0]);
        let c = CurveResult::ratio_of_means(&[vec![1.0], vec![1.0]], &[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(c.mean, vec![0.5]);
    }

    #[test]
    fn csv_layout() {
        let c = CurveResult::from_dense(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(c.to_csv(), "t,mean,stderr\n0,1,0\n1,2,0\n");
    }
}
