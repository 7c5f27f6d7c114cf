//! E-step and M-step pieces. Everything works on the compacted counts:
//! a responsibility is stored once per distinct non-zero value and is
//! weighted by that value's multiplicity in every sum.

use crate::counts::GeneCounts;
use crate::model::{ln_geom, NbForm, ZinbgtParams, POISSON_CLAMP};
use crate::numeric::{ln_expm1, ln_factorial, log_add_exp, weighted_ln_rising_sorted};
use crate::optim::{nelder_mead, NelderMeadOptions};

use super::{BoundaryFlags, FitConfig};

/// Posterior membership of each distinct non-zero value.
///
/// Zeros belong to the constant-zero component outright and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    /// `gamma_1`, hurdle-NB membership, aligned with `GeneCounts::nonzero()`.
    pub nb: Vec<f64>,
    /// `gamma_2`, geometric membership.
    pub geom: Vec<f64>,
}

impl Responsibilities {
    /// Sets `gamma_1` to the given values and `gamma_2 = 1 - gamma_1`.
    pub fn from_nb(nb: Vec<f64>) -> Self {
        let geom = nb.iter().map(|g| 1.0 - g).collect();
        Responsibilities { nb, geom }
    }

    pub fn len(&self) -> usize {
        self.nb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nb.is_empty()
    }

    /// `(sum gamma_1, sum gamma_2)` over cells.
    pub fn totals(&self, counts: &GeneCounts) -> (f64, f64) {
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        for ((&(_, k), g1), g2) in counts.nonzero().iter().zip(&self.nb).zip(&self.geom) {
            t1 += k as f64 * g1;
            t2 += k as f64 * g2;
        }
        (t1, t2)
    }
}

/// An observed value that neither non-zero component can produce.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("count {value} has zero mass under both non-zero components")]
pub struct IncompatibleCount {
    pub value: u64,
}

/// Bayes responsibilities at `theta`, plus the observed-data log-likelihood there.
pub(crate) fn e_step_with_loglik(
    counts: &GeneCounts,
    theta: &ZinbgtParams,
) -> Result<(Responsibilities, f64), IncompatibleCount> {
    let nb_form = theta.nb_form();
    let ln_p1 = if theta.p1 > 0.0 { theta.p1.ln() } else { f64::NEG_INFINITY };
    let ln_p2 = if theta.p2 > 0.0 { theta.p2.ln() } else { f64::NEG_INFINITY };
    let nz = counts.nonzero();
    let mut nb = Vec::with_capacity(nz.len());
    let mut geom = Vec::with_capacity(nz.len());
    let z = counts.zero_count();
    let mut ll = if z > 0 { z as f64 * theta.p0.ln() } else { 0.0 };
    for &(x, k) in nz {
        let a = if ln_p1.is_finite() { ln_p1 + nb_form.ln_pmf(x) } else { f64::NEG_INFINITY };
        let b = if ln_p2.is_finite() { ln_p2 + ln_geom(x, theta.mu_g) } else { f64::NEG_INFINITY };
        let lse = log_add_exp(a, b);
        if lse == f64::NEG_INFINITY {
            return Err(IncompatibleCount { value: x });
        }
        nb.push((a - lse).exp());
        geom.push((b - lse).exp());
        ll += k as f64 * lse;
    }
    Ok((Responsibilities { nb, geom }, ll))
}

/// E-step: `gamma_k(x) = p_k f_k(x) / (p1 f1(x) + p2 f2(x))` at each distinct non-zero `x`.
pub fn e_step(counts: &GeneCounts, theta: &ZinbgtParams) -> Result<Responsibilities, IncompatibleCount> {
    e_step_with_loglik(counts, theta).map(|(r, _)| r)
}

/// Closed-form proportions `p_k = (1/n) sum gamma_k`; `p0` is the zero fraction.
pub fn m_step_proportions(counts: &GeneCounts, resp: &Responsibilities) -> (f64, f64, f64) {
    let n = counts.n_cells() as f64;
    let (t1, t2) = resp.totals(counts);
    (counts.zero_count() as f64 / n, t1 / n, t2 / n)
}

/// Weighted mean of `x - 1` under the geometric responsibilities.
///
/// `None` when the geometric component carries no weight.
pub fn m_step_geometric(counts: &GeneCounts, resp: &Responsibilities) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&(x, k), g) in counts.nonzero().iter().zip(&resp.geom) {
        let w = k as f64 * g;
        num += w * (x - 1) as f64;
        den += w;
    }
    (den > 0.0).then(|| (num / den).max(0.0))
}

/// Outcome of the numerical `(m, d)` update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbStep {
    pub m: f64,
    pub d: f64,
    pub boundary: BoundaryFlags,
    /// False when the optimizer exhausted its budget or could not improve on the start.
    pub optimizer_converged: bool,
}

/// The `(m, d)` part of the expected complete-data log-likelihood,
/// `sum w_i ln f1(x_i; m, d)` with `w_i = multiplicity * gamma_1`.
pub(crate) struct NbObjective {
    values: Vec<f64>,
    weights: Vec<f64>,
    total_w: f64,
    total_wx: f64,
    /// `sum w_i ln(x_i!)`
    const_term: f64,
}

impl NbObjective {
    pub(crate) fn new(counts: &GeneCounts, gamma_nb: Option<&[f64]>) -> Self {
        let nz = counts.nonzero();
        let mut values = Vec::with_capacity(nz.len());
        let mut weights = Vec::with_capacity(nz.len());
        let (mut total_w, mut total_wx, mut const_term) = (0.0, 0.0, 0.0);
        for (i, &(x, k)) in nz.iter().enumerate() {
            let w = k as f64 * gamma_nb.map_or(1.0, |g| g[i]);
            if w <= 0.0 {
                continue;
            }
            values.push(x as f64);
            weights.push(w);
            total_w += w;
            total_wx += w * x as f64;
            const_term += w * ln_factorial(x);
        }
        NbObjective { values, weights, total_w, total_wx, const_term }
    }

    pub(crate) fn total_weight(&self) -> f64 {
        self.total_w
    }

    /// Weighted mean of the counts under the weights.
    pub(crate) fn weighted_mean(&self) -> f64 {
        self.total_wx / self.total_w
    }

    pub(crate) fn weighted_var(&self) -> f64 {
        let mean = self.weighted_mean();
        let ss: f64 = self.values.iter().zip(&self.weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
        ss / self.total_w
    }

    /// Objective value for the NB branch selected by `(m, d - 1)`.
    pub(crate) fn value(&self, m: f64, dm1: f64) -> f64 {
        match NbForm::from_chart(m, dm1) {
            NbForm::ConstantOne => {
                if self.values.iter().all(|&x| x == 1.0) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            NbForm::Poisson { m } => self.total_wx * m.ln() - self.total_w * ln_expm1(m) - self.const_term,
            NbForm::NegBin { m, dm1 } => {
                let r = m / dm1;
                let ln_d = dm1.ln_1p();
                self.total_wx * (dm1.ln() - ln_d) - self.total_w * ln_expm1(r * ln_d) - self.const_term
                    + weighted_ln_rising_sorted(r, &self.values, &self.weights)
            }
        }
    }
}

/// Numerical `(m, d)` update: simplex search over `(ln m, ln(d - 1))` started at `current`.
///
/// Never returns a point with a lower weighted objective than `current`.
pub fn m_step_nb(counts: &GeneCounts, resp: &Responsibilities, current: (f64, f64), config: &FitConfig) -> NbStep {
    let objective = NbObjective::new(counts, Some(&resp.nb));
    nb_step_from_objective(&objective, current, config, NelderMeadOptions::default().initial_step)
}

/// `initial_step` sizes the starting simplex in log space; a small one saves
/// evaluations once the iterates have settled.
pub(crate) fn nb_step_from_objective(
    objective: &NbObjective,
    current: (f64, f64),
    config: &FitConfig,
    initial_step: f64,
) -> NbStep {
    let (m_cur, d_cur) = current;
    if objective.total_weight() <= 0.0 {
        return NbStep { m: m_cur, d: d_cur, boundary: BoundaryFlags::default(), optimizer_converged: false };
    }
    let f_cur = objective.value(m_cur, d_cur - 1.0);

    let ln_m_min = config.m_min.ln();
    let ln_dm1_min = POISSON_CLAMP.ln();
    let ln_dm1_max = (config.d_max - 1.0).ln();
    let clamp = |u: &[f64; 2]| -> (f64, f64) {
        let m = u[0].max(ln_m_min).exp();
        let lv = u[1].min(ln_dm1_max);
        // At or below the clamp the Poisson branch applies: use d = 1 exactly.
        let dm1 = if lv <= ln_dm1_min { 0.0 } else { lv.exp() };
        // Round-trip through d so the value scored is the value emitted.
        (m, (1.0 + dm1) - 1.0)
    };

    let start = [
        m_cur.max(config.m_min).ln(),
        if d_cur - 1.0 > POISSON_CLAMP { (d_cur - 1.0).ln().min(ln_dm1_max) } else { ln_dm1_min + 1.0 },
    ];
    let opts = NelderMeadOptions { max_evals: config.nb_max_evals, initial_step, ..NelderMeadOptions::default() };
    let res = nelder_mead(
        |u| {
            let (m, dm1) = clamp(u);
            -objective.value(m, dm1)
        },
        start,
        &opts,
    );
    let (m_new, dm1_new) = clamp(&res.x);
    let f_new = objective.value(m_new, dm1_new);

    let (m, d, improved) = if f_new >= f_cur || !f_cur.is_finite() {
        (m_new, 1.0 + dm1_new, true)
    } else {
        (m_cur, d_cur, false)
    };
    let mut boundary = BoundaryFlags::default();
    if m <= config.m_min * (1.0 + 1e-9) {
        boundary.insert(BoundaryFlags::M_MIN);
    }
    if d >= config.d_max * (1.0 - 1e-9) {
        boundary.insert(BoundaryFlags::D_MAX);
    }
    let optimizer_converged = res.converged && improved;
    if !optimizer_converged {
        boundary.insert(BoundaryFlags::OPTIMIZER);
    }
    NbStep { m, d, boundary, optimizer_converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pmf_hurdle_geom, pmf_hurdle_nb, sample, ZinbgtParams};

    fn counts(pairs: &[(u64, u64)]) -> GeneCounts {
        GeneCounts::from_pairs("g", pairs.iter().copied())
    }

    #[test]
    fn e_step_without_geometric_assigns_all_to_nb() {
        let g = counts(&[(0, 3), (1, 2), (4, 1), (9, 1)]);
        let theta = ZinbgtParams::new(3.0 / 7.0, 4.0 / 7.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        let r = e_step(&g, &theta).unwrap();
        assert!(r.nb.iter().all(|&v| v == 1.0));
        assert!(r.geom.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn e_step_symmetry_and_worked_value() {
        // m = mu_g = 1 with d = 2 makes both components the same geometric.
        let theta = ZinbgtParams::new(0.2, 0.4, 0.4, 1.0, 2.0, 1.0).unwrap();
        let r = e_step(&counts(&[(0, 1), (3, 1)]), &theta).unwrap();
        assert!((r.nb[0] - 0.5).abs() < 1e-12 && (r.geom[0] - 0.5).abs() < 1e-12);

        let third = 1.0 / 3.0;
        let theta = ZinbgtParams { p0: third, p1: third, p2: third, m: 1.0, d: 1.0, mu_g: 1.0 };
        let r = e_step(&counts(&[(0, 1), (1, 1)]), &theta).unwrap();
        let f1 = pmf_hurdle_nb(1, 1.0, 1.0).unwrap();
        let f2 = pmf_hurdle_geom(1, 1.0).unwrap();
        assert!((f1 - 0.581_98).abs() < 1e-5 && f2 == 0.5);
        assert!((r.nb[0] - f1 / (f1 + f2)).abs() < 1e-14);
        assert!((r.nb[0] - 0.537_89).abs() < 1e-5);
        assert!((r.nb[0] + r.geom[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn e_step_reports_incompatible_counts() {
        let theta = ZinbgtParams::zero_one(0.5);
        assert_eq!(e_step(&counts(&[(0, 1), (2, 1)]), &theta), Err(IncompatibleCount { value: 2 }));
    }

    #[test]
    fn proportion_examples() {
        let g = counts(&[(0, 50), (1, 50)]);
        let r = Responsibilities::from_nb(vec![1.0]);
        assert_eq!(m_step_proportions(&g, &r), (0.5, 0.5, 0.0));

        let g = counts(&[(0, 2), (1, 1), (5, 1)]);
        let r = Responsibilities::from_nb(vec![0.8, 0.2]);
        let (p0, p1, p2) = m_step_proportions(&g, &r);
        assert_eq!(p0, 0.5);
        assert!((p1 - 0.25).abs() < 1e-15 && (p2 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn geometric_examples() {
        let g = counts(&[(0, 4), (1, 1), (2, 1), (3, 1)]);
        let r = Responsibilities::from_nb(vec![0.0; 3]);
        assert!((m_step_geometric(&g, &r).unwrap() - 1.0).abs() < 1e-15);

        let r = Responsibilities::from_nb(vec![0.0, 1.0, 1.0]);
        assert_eq!(m_step_geometric(&g, &r), Some(0.0));

        let g = counts(&[(2, 1), (4, 1)]);
        let r = Responsibilities::from_nb(vec![0.5, 0.5]);
        assert!((m_step_geometric(&g, &r).unwrap() - 2.0).abs() < 1e-15);

        let r = Responsibilities::from_nb(vec![1.0, 1.0]);
        assert_eq!(m_step_geometric(&g, &r), None);
    }

    #[test]
    fn geometric_closed_form_is_the_grid_maximum() {
        let g = counts(&[(1, 1), (2, 1), (3, 1)]);
        let ll = |mu: f64| -> f64 { [1u64, 2, 3].iter().map(|&x| pmf_hurdle_geom(x, mu).unwrap().ln()).sum() };
        let best = (1..4000).map(|i| i as f64 * 1e-3).max_by(|a, b| ll(*a).total_cmp(&ll(*b))).unwrap();
        let r = Responsibilities::from_nb(vec![0.0; 3]);
        assert!((m_step_geometric(&g, &r).unwrap() - best).abs() < 2e-3);
    }

    #[test]
    fn nb_step_recovers_simulated_parameters() {
        let theta = ZinbgtParams::new(0.0, 1.0, 0.0, 5.0, 3.0, 0.0).unwrap();
        let g = GeneCounts::from_values("nb", &sample(&theta, 100_000, 11));
        let r = Responsibilities::from_nb(vec![1.0; g.nonzero().len()]);
        let step = m_step_nb(&g, &r, (2.0, 1.5), &FitConfig::default());
        assert!((step.m / 5.0 - 1.0).abs() < 0.05, "{step:?}");
        assert!((step.d / 3.0 - 1.0).abs() < 0.05, "{step:?}");
    }

    #[test]
    fn nb_step_on_geometric_data_lands_on_the_geometric_line() {
        let theta = ZinbgtParams::new(0.0, 0.0, 1.0, 0.0, 1.0, 6.0).unwrap();
        let g = GeneCounts::from_values("geo", &sample(&theta, 100_000, 12));
        let r = Responsibilities::from_nb(vec![1.0; g.nonzero().len()]);
        let step = m_step_nb(&g, &r, (3.0, 2.0), &FitConfig::default());
        assert!(((step.d - 1.0) / step.m - 1.0).abs() < 0.1, "{step:?}");
    }

    #[test]
    fn nb_step_single_value_goes_to_lower_bound() {
        let g = counts(&[(0, 5), (1, 20)]);
        let r = Responsibilities::from_nb(vec![1.0]);
        let cfg = FitConfig::default();
        let step = m_step_nb(&g, &r, (1.0, 1.0), &cfg);
        assert!(step.m < 1e-3, "{step:?}");
        let obj = NbObjective::new(&g, Some(&r.nb));
        assert!(obj.value(step.m, step.d - 1.0) >= obj.value(1.0, 0.0));
    }

    #[test]
    fn nb_step_never_worsens_the_start() {
        let g = counts(&[(1, 30), (2, 12), (3, 9), (7, 4), (20, 2)]);
        let r = Responsibilities::from_nb(vec![0.9, 0.8, 0.7, 0.3, 0.1]);
        let obj = NbObjective::new(&g, Some(&r.nb));
        let cfg = FitConfig::default();
        for &(m, d) in &[(1.0, 1.0), (0.5, 4.0), (30.0, 100.0), (2.0, 1.0 + 1e-9)] {
            let step = m_step_nb(&g, &r, (m, d), &cfg);
            assert!(obj.value(step.m, step.d - 1.0) >= obj.value(m, d - 1.0));
        }
    }
}
