//! Starting points for EM.

use rand::Rng;

use crate::counts::GeneCounts;
use crate::model::ZinbgtParams;
use crate::seeds;

use super::steps::{e_step_with_loglik, m_step_geometric, m_step_proportions, NbObjective, Responsibilities};
use super::{FitConfig, InitStrategy};

/// Median of the non-zero cells (mean of the two middle cells for an even count).
fn nonzero_median(counts: &GeneCounts) -> f64 {
    let nz = counts.nonzero();
    let n = counts.n_nonzero_cells();
    let nth = |rank: u64| -> f64 {
        let mut seen = 0;
        for &(x, k) in nz {
            seen += k;
            if rank < seen {
                return x as f64;
            }
        }
        unreachable!("rank within the non-zero cells")
    };
    if n % 2 == 1 {
        nth(n / 2)
    } else {
        0.5 * (nth(n / 2 - 1) + nth(n / 2))
    }
}

/// Sample variance (n - 1 denominator) of the non-zero cells.
fn nonzero_sample_variance(counts: &GeneCounts) -> Option<f64> {
    let nz = counts.nonzero();
    let n = counts.n_nonzero_cells();
    if n < 2 {
        return None;
    }
    let mean = nz.iter().map(|&(x, k)| x as f64 * k as f64).sum::<f64>() / n as f64;
    let ss: f64 = nz.iter().map(|&(x, k)| k as f64 * (x as f64 - mean).powi(2)).sum();
    Some(ss / (n - 1) as f64)
}

fn median_params(counts: &GeneCounts) -> ZinbgtParams {
    let p0 = counts.zero_fraction();
    let m = nonzero_median(counts);
    let d = nonzero_sample_variance(counts).map_or(1.0, |v| (v / m).max(1.0));
    let half = (1.0 - p0) / 2.0;
    ZinbgtParams { p0, p1: half, p2: half, m, d, mu_g: counts.max_value() as f64 }
}

fn allocation(counts: &GeneCounts, strategy: InitStrategy, seed: u64) -> Responsibilities {
    let nz = counts.nonzero();
    let nb = match strategy {
        InitStrategy::Even => vec![0.5; nz.len()],
        InitStrategy::Exponential => nz.iter().map(|&(x, _)| 10f64.powf(1.0 - x as f64)).collect(),
        InitStrategy::Random => {
            // One uniform per cell; the M-step only sees each value's average.
            let mut rng = seeds::rng_from_seed(seed);
            nz.iter()
                .map(|&(_, k)| (0..k).map(|_| rng.random::<f64>()).sum::<f64>() / k as f64)
                .collect()
        }
        InitStrategy::Median => unreachable!("median starts from parameters"),
    };
    Responsibilities::from_nb(nb)
}

/// Parameters implied by a responsibility allocation; used as the warm start
/// of the first `(m, d)` search.
fn params_from_allocation(counts: &GeneCounts, resp: &Responsibilities) -> ZinbgtParams {
    let (p0, p1, p2) = m_step_proportions(counts, resp);
    let objective = NbObjective::new(counts, Some(&resp.nb));
    let (m, d) = if objective.total_weight() > 0.0 {
        let mean = objective.weighted_mean();
        (mean, (objective.weighted_var() / mean).max(1.0))
    } else {
        (1.0, 1.0)
    };
    let mu_g = m_step_geometric(counts, resp).unwrap_or(0.0);
    ZinbgtParams { p0, p1, p2, m, d, mu_g }
}

/// Initial parameters and responsibilities for a strategy.
///
/// `Median` sets the parameters and derives responsibilities by one E-step;
/// the other strategies set responsibilities, and the returned parameters
/// are only their weighted moments. `counts` must have a non-zero value.
pub fn initialize(counts: &GeneCounts, strategy: InitStrategy, seed: u64) -> (ZinbgtParams, Responsibilities) {
    match strategy {
        InitStrategy::Median => {
            let theta = median_params(counts);
            let (resp, _) = e_step_with_loglik(counts, &theta).expect("median start gives every count positive mass");
            (theta, resp)
        }
        _ => {
            let resp = allocation(counts, strategy, seed);
            (params_from_allocation(counts, &resp), resp)
        }
    }
}

/// Start for an EM run, with `d` pinned to 1 for the Poisson variant.
/// Also returns the log-likelihood at the start when it is a parameter point.
pub(crate) fn initialize_for(
    counts: &GeneCounts,
    config: &FitConfig,
    poisson: bool,
) -> (ZinbgtParams, Responsibilities, Option<f64>) {
    match config.init_strategy {
        InitStrategy::Median => {
            let mut theta = median_params(counts);
            if poisson {
                theta.d = 1.0;
            }
            let (resp, ll) = e_step_with_loglik(counts, &theta).expect("median start gives every count positive mass");
            (theta, resp, Some(ll))
        }
        strategy => {
            let resp = allocation(counts, strategy, config.seed);
            let mut theta = params_from_allocation(counts, &resp);
            if poisson {
                theta.d = 1.0;
            }
            (theta, resp, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_example() {
        let g = GeneCounts::from_values("g", &[0, 0, 1, 2, 9]);
        let (theta, resp) = initialize(&g, InitStrategy::Median, 0);
        assert_eq!(theta.m, 2.0);
        assert_eq!(theta.mu_g, 9.0);
        assert!((theta.d - 9.5).abs() < 1e-12);
        assert_eq!(theta.p0, 0.4);
        assert!((theta.p1 - 0.3).abs() < 1e-15 && (theta.p2 - 0.3).abs() < 1e-15);
        assert_eq!(resp.len(), 3);
    }

    #[test]
    fn median_of_even_count_and_floor_on_d() {
        let g = GeneCounts::from_values("g", &[2, 2, 3, 3]);
        let (theta, _) = initialize(&g, InitStrategy::Median, 0);
        assert_eq!(theta.m, 2.5);
        assert_eq!(theta.d, 1.0);
    }

    #[test]
    fn even_and_exponential_allocations() {
        let g = GeneCounts::from_values("g", &[0, 1, 2, 2, 5]);
        let (_, r) = initialize(&g, InitStrategy::Even, 0);
        assert!(r.nb.iter().all(|&v| v == 0.5));
        let (_, r) = initialize(&g, InitStrategy::Exponential, 0);
        assert_eq!(r.nb[0], 1.0);
        assert!((r.nb[1] - 0.1).abs() < 1e-15);
        assert!((r.geom[1] - 0.9).abs() < 1e-15);
        assert!((r.nb[2] - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn random_allocation_is_seeded() {
        let g = GeneCounts::from_values("g", &[0, 1, 1, 1, 4, 7, 7]);
        let (_, a) = initialize(&g, InitStrategy::Random, 3);
        let (_, b) = initialize(&g, InitStrategy::Random, 3);
        let (_, c) = initialize(&g, InitStrategy::Random, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.nb.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
