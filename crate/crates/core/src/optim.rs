//! Derivative-free minimization on a box.

/// Lower and upper bound per coordinate.
pub type Bounds = [(f64, f64)];

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values is below this fraction of the
    /// best value,
    pub f_tol: f64,
    /// or when every vertex is within this of the best one (sup norm).
    pub x_tol: f64,
    /// Initial edge length as a fraction of each coordinate's range.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], bounds: &Bounds) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Nelder–Mead with standard coefficients; every trial point is projected
/// onto the box before it is evaluated.
pub fn nelder_mead<F>(f: F, start: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let d = start.len();
    assert_eq!(bounds.len(), d, "one bound per coordinate");
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut x0 = start.to_vec();
    project(&mut x0, bounds);
    let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
    for k in 0..d {
        let (lo, hi) = bounds[k];
        let step = opts.initial_step * (hi - lo);
        let mut v = x0.clone();
        v[k] = if v[k] + step <= hi { v[k] + step } else { v[k] - step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * values[0].abs() || size <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (w - c)).collect();
            project(&mut p, bounds);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=d {
            let mut v: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(a, b)| b + 0.5 * (a - b))
                .collect();
            project(&mut v, bounds);
            values[i] = eval(&v);
            simplex[i] = v;
        }
    }
    let best = (0..=d).fold(0, |b, i| if values[i] < values[b] { i } else { b });
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}
