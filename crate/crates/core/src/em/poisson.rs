//! Hurdle-Poisson mean estimation.
//!
//! The hurdle-Poisson MLE solves `m / (1 - exp(-m)) = x_tilde`, where
//! `x_tilde` is the (weighted) mean of the positive counts. There is no
//! closed form, so small `x_tilde` are inverted by linear interpolation on a
//! log-spaced grid and large ones are passed through unchanged.

use std::sync::OnceLock;

use crate::error::ParamError;

/// Grid size.
pub const GRID_POINTS: usize = 3000;
/// Above this weighted mean `m = x_tilde` is used directly.
pub const X_TILDE_CUTOFF: f64 = 30.0;
/// Default lower end of the grid; `x_tilde(M_MIN) - 1 < 1e-8`.
pub const DEFAULT_M_MIN: f64 = 1e-8;

/// `m / (1 - exp(-m))`, the mean of a hurdle Poisson with parameter `m`.
pub fn hurdle_poisson_mean(m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else {
        m / -(-m).exp_m1()
    }
}

/// Interpolation table of `(m, x_tilde)` pairs.
#[derive(Debug, Clone)]
pub struct PoissonMleTable {
    m: Vec<f64>,
    x_tilde: Vec<f64>,
}

impl PoissonMleTable {
    /// Log-spaced grid of [`GRID_POINTS`] values of `m` from `m_min` to the cutoff.
    pub fn new(m_min: f64) -> Self {
        let lo = m_min.ln();
        let hi = X_TILDE_CUTOFF.ln();
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let m: Vec<f64> = (0..GRID_POINTS)
            .map(|j| if j == GRID_POINTS - 1 { X_TILDE_CUTOFF } else { (lo + step * j as f64).exp() })
            .collect();
        let x_tilde = m.iter().map(|&v| hurdle_poisson_mean(v)).collect();
        PoissonMleTable { m, x_tilde }
    }

    /// Table shared by every fit using the default lower bound.
    pub fn shared() -> &'static PoissonMleTable {
        static TABLE: OnceLock<PoissonMleTable> = OnceLock::new();
        TABLE.get_or_init(|| PoissonMleTable::new(DEFAULT_M_MIN))
    }

    pub fn m_min(&self) -> f64 {
        self.m[0]
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.m.iter().copied().zip(self.x_tilde.iter().copied())
    }

    /// Table inversion: pass-through above the cutoff, else linear interpolation.
    pub fn solve(&self, x_tilde: f64) -> Result<f64, ParamError> {
        if !x_tilde.is_finite() {
            return Err(ParamError::NonFinite { name: "x_tilde", value: x_tilde });
        }
        // Weighted sums of ones can land a rounding error below 1.
        if x_tilde < 1.0 - 1e-12 {
            return Err(ParamError::WeightedMeanBelowOne(x_tilde));
        }
        if x_tilde > X_TILDE_CUTOFF {
            return Ok(x_tilde);
        }
        if x_tilde <= self.x_tilde[0] {
            return Ok(self.m[0]);
        }
        let hi = self.x_tilde.partition_point(|&v| v < x_tilde).min(GRID_POINTS - 1);
        let lo = hi - 1;
        let t = (x_tilde - self.x_tilde[lo]) / (self.x_tilde[hi] - self.x_tilde[lo]);
        Ok(self.m[lo] + t * (self.m[hi] - self.m[lo]))
    }

    /// [`solve`](Self::solve) followed by Newton refinement of the exact equation,
    /// used inside EM where the interpolation error would otherwise let the
    /// M-step land off the maximizer.
    pub fn solve_refined(&self, x_tilde: f64) -> Result<f64, ParamError> {
        let mut m = self.solve(x_tilde)?;
        if x_tilde > X_TILDE_CUTOFF || m < 1e-3 {
            return Ok(m);
        }
        for _ in 0..4 {
            let q = -(-m).exp_m1();
            let g = m / q - x_tilde;
            let dg = (q - m * (-m).exp()) / (q * q);
            if dg <= 0.0 || !dg.is_finite() {
                break;
            }
            let next = m - g / dg;
            if !(next > 0.0) {
                break;
            }
            let done = (next - m).abs() <= 1e-15 * m;
            m = next;
            if done {
                break;
            }
        }
        Ok(m.max(self.m_min()))
    }
}

/// [`PoissonMleTable::solve`] as a free function.
pub fn solve_hurdle_poisson_m(x_tilde: f64, table: &PoissonMleTable) -> Result<f64, ParamError> {
    table.solve(x_tilde)
}
