//! Derivative-free Nelder–Mead simplex minimization over a fixed-size chart.

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values is below `f_tol * (1 + |f_best|)`...
    pub f_tol: f64,
    /// ...and every vertex is within `x_tol` of the best one.
    pub x_tol: f64,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_evals: 400, f_tol: 1e-12, x_tol: 1e-8, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadResult<const N: usize> {
    pub x: [f64; N],
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0`. Non-finite objective values count as `+inf`.
pub fn nelder_mead<const N: usize, F>(mut f: F, x0: [f64; N], opts: &NelderMeadOptions) -> NelderMeadResult<N>
where
    F: FnMut(&[f64; N]) -> f64,
{
    let mut evals = 0usize;
    let mut eval = |x: &[f64; N], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0, f0));
    for i in 0..N {
        let mut x = x0;
        x[i] += opts.initial_step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, f_best) = simplex[0];
        let f_worst = simplex[N].1;

        let spread = (f_worst - f_best).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best.iter()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_best.is_finite() && spread <= opts.f_tol * (1.0 + f_best.abs()) && size <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = [0.0; N];
        for (x, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += x[i] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut p = [0.0; N];
            for i in 0..N {
                p[i] = centroid[i] + t * (simplex[N].0[i] - centroid[i]);
            }
            p
        };

        let xr = along(-REFLECT);
        let fr = eval(&xr, &mut evals);
        if fr < f_best {
            let xe = along(-REFLECT * EXPAND);
            let fe = eval(&xe, &mut evals);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = along(-REFLECT * CONTRACT);
            (xc, eval(&xc, &mut evals))
        } else {
            let xc = along(CONTRACT);
            (xc, eval(&xc, &mut evals))
        };
        if fc < fr.min(f_worst) {
            simplex[N] = (xc, fc);
            continue;
        }
        for v in simplex.iter_mut().skip(1) {
            let mut x = v.0;
            for i in 0..N {
                x[i] = best[i] + SHRINK * (x[i] - best[i]);
            }
            *v = (x, eval(&x, &mut evals));
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex[0];
    NelderMeadResult { x, f, evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64; 2]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_evals: 5000, initial_step: 0.5, ..Default::default() };
        let r = nelder_mead(rosen, [-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let bumpy = |x: &[f64; 2]| (x[0] * 3.0).sin() + (x[1] * 5.0).cos() + 0.01 * x[0] * x[0];
        let start = [0.3, -0.7];
        let r = nelder_mead(bumpy, start, &NelderMeadOptions::default());
        assert!(r.f <= bumpy(&start));
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let f = |x: &[f64; 1]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let r = nelder_mead(f, [0.5], &NelderMeadOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-4);
    }
}
