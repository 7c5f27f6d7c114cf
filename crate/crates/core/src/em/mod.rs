//! Per-gene fitting: direct MLEs or EM for each submodel, then BIC selection.

mod init;
mod poisson;
mod steps;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::counts::{GeneCounts, TrivialClass};
use crate::model::{loglik, Bic, LogLik, SubmodelKind, ZinbgtParams, POISSON_CLAMP};
use crate::optim::NelderMeadOptions;

pub use init::initialize;
pub use poisson::{
    hurdle_poisson_mean, solve_hurdle_poisson_m, PoissonMleTable, DEFAULT_M_MIN, GRID_POINTS, X_TILDE_CUTOFF,
};
pub use steps::{
    e_step, m_step_geometric, m_step_nb, m_step_proportions, IncompatibleCount, NbStep, Responsibilities,
};

use steps::{e_step_with_loglik, nb_step_from_objective, NbObjective};

/// BIC differences within this are ties.
pub const BIC_TIE_TOL: f64 = 1e-9;

/// How EM responsibilities or parameters are first set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// `m` from the median, `mu_g` from the maximum of the non-zero counts.
    #[default]
    Median,
    /// Every non-zero value split evenly between the two components.
    Even,
    /// NB membership `10^(1 - x)`, so small values start in the NB component.
    Exponential,
    /// NB membership drawn uniformly per cell.
    Random,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 4] =
        [InitStrategy::Even, InitStrategy::Exponential, InitStrategy::Median, InitStrategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Median => "median",
            InitStrategy::Even => "even",
            InitStrategy::Exponential => "exponential",
            InitStrategy::Random => "random",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InitStrategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown init strategy {s:?}"))
    }
}

/// Fitting knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub init_strategy: InitStrategy,
    pub max_iter: u32,
    /// Stop when `|ll_t - ll_{t-1}| / |ll_{t-1}|` falls below this...
    pub loglik_rel_tol: f64,
    /// ...or when no parameter moves by more than this.
    pub param_abs_tol: f64,
    /// Seed for the random strategy. The pipeline derives one per gene.
    pub seed: u64,
    pub m_min: f64,
    pub d_max: f64,
    pub mu_g_max: f64,
    /// Objective evaluations allowed per `(m, d)` simplex search.
    pub nb_max_evals: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            init_strategy: InitStrategy::Median,
            max_iter: 500,
            loglik_rel_tol: 1e-8,
            param_abs_tol: 1e-6,
            seed: 0,
            m_min: DEFAULT_M_MIN,
            d_max: 1e6,
            mu_g_max: 1e9,
            nb_max_evals: 400,
        }
    }
}

impl FitConfig {
    fn table(&self) -> Cow<'static, PoissonMleTable> {
        if self.m_min == DEFAULT_M_MIN {
            Cow::Borrowed(PoissonMleTable::shared())
        } else {
            Cow::Owned(PoissonMleTable::new(self.m_min))
        }
    }
}

/// Parameters that ended on an optimization bound, plus optimizer trouble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BoundaryFlags(u8);

impl BoundaryFlags {
    pub const M_MIN: u8 = 1;
    pub const D_MAX: u8 = 2;
    pub const MU_G_MAX: u8 = 4;
    /// The `(m, d)` search hit its budget or kept the warm start.
    pub const OPTIMIZER: u8 = 8;

    const LABELS: [(u8, &'static str); 4] = [
        (Self::M_MIN, "m_min"),
        (Self::D_MAX, "d_max"),
        (Self::MU_G_MAX, "mu_g_max"),
        (Self::OPTIMIZER, "optimizer"),
    ];

    pub fn insert(&mut self, flag: u8) {
        self.0 |= flag;
    }

    pub fn contains(self, flag: u8) -> bool {
        self.0 & flag != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: BoundaryFlags) -> BoundaryFlags {
        BoundaryFlags(self.0 | other.0)
    }

    /// True for parameter bounds, ignoring the optimizer flag.
    pub fn at_parameter_bound(self) -> bool {
        self.0 & !Self::OPTIMIZER != 0
    }
}

impl fmt::Display for BoundaryFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (bit, label) in Self::LABELS {
            if self.contains(bit) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(label)?;
                first = false;
            }
        }
        Ok(())
    }
}

impl FromStr for BoundaryFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut flags = BoundaryFlags::default();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            let (bit, _) = Self::LABELS
                .iter()
                .find(|(_, l)| *l == part)
                .ok_or_else(|| format!("unknown boundary flag {part:?}"))?;
            flags.insert(*bit);
        }
        Ok(flags)
    }
}

/// One gene's fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: ZinbgtParams,
    pub submodel: SubmodelKind,
    pub loglik: LogLik,
    pub bic: Bic,
    pub n_iter: u32,
    pub converged: bool,
    pub boundary: BoundaryFlags,
    /// Every fitted submodel's BIC; empty for trivial genes and single-submodel fits.
    pub per_submodel_bic: BTreeMap<SubmodelKind, Bic>,
}

impl FitResult {
    fn direct(counts: &GeneCounts, kind: SubmodelKind, theta: ZinbgtParams, boundary: BoundaryFlags) -> Self {
        let ll = loglik(counts, &theta);
        FitResult {
            theta,
            submodel: kind,
            loglik: ll,
            bic: ll.bic(kind.n_free_params(), counts.n_cells()),
            n_iter: 0,
            converged: true,
            boundary,
            per_submodel_bic: BTreeMap::new(),
        }
    }
}

/// EM fit together with its log-likelihood trace.
#[derive(Debug, Clone)]
pub struct EmRun {
    pub result: FitResult,
    /// Observed-data log-likelihood after each iteration (preceded by the
    /// starting point's value when the strategy starts from parameters).
    pub loglik_trace: Vec<f64>,
}

fn zero_fraction(counts: &GeneCounts) -> f64 {
    counts.zero_count() as f64 / counts.n_cells() as f64
}

fn nonzero_mean(counts: &GeneCounts) -> f64 {
    let nz = counts.nonzero();
    let (s, k) = nz.iter().fold((0.0, 0u64), |(s, k), &(x, c)| (s + x as f64 * c as f64, k + c));
    s / k as f64
}

/// Fits one submodel by its direct MLE or by EM.
///
/// Meant for genes classified `General`; a `ConstantOneOnly` fit to counts
/// above one comes back with an impossible log-likelihood and infinite BIC.
pub fn fit_submodel(counts: &GeneCounts, kind: SubmodelKind, config: &FitConfig) -> FitResult {
    match kind {
        SubmodelKind::FullNbGeom | SubmodelKind::PoissonGeom => run_em(counts, kind, config).result,
        _ => fit_direct(counts, kind, config),
    }
}

fn fit_direct(counts: &GeneCounts, kind: SubmodelKind, config: &FitConfig) -> FitResult {
    let p0 = zero_fraction(counts);
    let p1 = 1.0 - p0;
    if counts.n_nonzero_cells() == 0 {
        return FitResult::direct(counts, kind, ZinbgtParams::all_zero(), BoundaryFlags::default());
    }
    match kind {
        SubmodelKind::ConstantOneOnly => {
            FitResult::direct(counts, kind, ZinbgtParams::zero_one(p0), BoundaryFlags::default())
        }
        SubmodelKind::PoissonOnly => {
            let m = poisson_mle(nonzero_mean(counts), config);
            let theta = ZinbgtParams { p0, p1, p2: 0.0, m, d: 1.0, mu_g: 0.0 };
            let mut flags = BoundaryFlags::default();
            if m <= config.m_min * (1.0 + 1e-9) {
                flags.insert(BoundaryFlags::M_MIN);
            }
            FitResult::direct(counts, kind, theta, flags)
        }
        SubmodelKind::GeomOnly => {
            let mu = (nonzero_mean(counts) - 1.0).clamp(0.0, config.mu_g_max);
            let d = 1.0 + mu;
            let theta = ZinbgtParams { p0, p1, p2: 0.0, m: d - 1.0, d, mu_g: 0.0 };
            let mut flags = BoundaryFlags::default();
            if mu >= config.mu_g_max {
                flags.insert(BoundaryFlags::MU_G_MAX);
            }
            FitResult::direct(counts, kind, theta, flags)
        }
        SubmodelKind::NbOnly => {
            let objective = NbObjective::new(counts, None);
            let start = best_nb_start(&objective, config);
            let step = nb_step_from_objective(&objective, start, config, NelderMeadOptions::default().initial_step);
            let theta = ZinbgtParams { p0, p1, p2: 0.0, m: step.m, d: step.d, mu_g: 0.0 };
            let mut res = FitResult::direct(counts, kind, theta, step.boundary);
            res.converged = step.optimizer_converged;
            res
        }
        SubmodelKind::FullNbGeom | SubmodelKind::PoissonGeom | SubmodelKind::AllZero => {
            unreachable!("{kind} is not fitted directly")
        }
    }
}

fn poisson_mle(x_tilde: f64, config: &FitConfig) -> f64 {
    config.table().solve_refined(x_tilde.max(1.0)).expect("positive counts have mean >= 1")
}

/// Starting point for the unit-weight NB search: the best of the moment
/// estimate, the hurdle-Poisson MLE and the geometric MLE. Including the
/// last two keeps the NB-only fit at least as good as its nested submodels.
fn best_nb_start(objective: &NbObjective, config: &FitConfig) -> (f64, f64) {
    let mean = objective.weighted_mean();
    let var = objective.weighted_var();
    let moment_d = (var / mean).clamp(1.0 + 1e-3, config.d_max);
    let pois_m = poisson_mle(mean, config);
    let geo = (mean - 1.0).max(config.m_min);
    let candidates = [(mean, moment_d), (pois_m, 1.0), (geo, 1.0 + geo)];
    candidates
        .into_iter()
        .max_by(|a, b| objective.value(a.0, a.1 - 1.0).total_cmp(&objective.value(b.0, b.1 - 1.0)))
        .expect("non-empty candidates")
}

/// EM for the two-component submodels, keeping the log-likelihood trace.
pub fn run_em(counts: &GeneCounts, kind: SubmodelKind, config: &FitConfig) -> EmRun {
    assert!(kind.has_geometric(), "EM is only used for submodels with two non-zero components");
    let poisson = kind == SubmodelKind::PoissonGeom;
    let n = counts.n_cells();

    let (mut theta, mut resp, start_ll) = init::initialize_for(counts, config, poisson);
    let mut trace = Vec::new();
    if let Some(ll) = start_ll {
        trace.push(ll);
    }
    let mut prev_ll = start_ll;
    let mut boundary = BoundaryFlags::default();
    let mut converged = false;
    let mut n_iter = 0;
    let mut nb_simplex = NB_SIMPLEX_MAX;
    // Iterates since the last extrapolation; three of them feed the next one.
    let mut chain: Vec<ZinbgtParams> = start_ll.map(|_| theta).into_iter().collect();

    while n_iter < config.max_iter {
        n_iter += 1;
        let Ok(step) = em_map(counts, &theta, &resp, config, poisson, &mut nb_simplex) else {
            return EmRun { result: failed(kind, theta, n_iter), loglik_trace: trace };
        };
        trace.push(step.loglik);

        let param_change = [
            step.theta.p1 - theta.p1,
            step.theta.p2 - theta.p2,
            step.theta.m - theta.m,
            step.theta.d - theta.d,
            step.theta.mu_g - theta.mu_g,
        ]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));

        theta = step.theta;
        resp = step.resp;
        boundary = step.boundary;

        if let Some(prev) = prev_ll {
            let rel = (step.loglik - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < config.loglik_rel_tol || param_change < config.param_abs_tol {
                converged = true;
                break;
            }
        }
        prev_ll = Some(step.loglik);

        chain.push(theta);
        if chain.len() == 3 {
            if let Some((jump, jump_resp, jump_ll)) = extrapolate(counts, &chain, step.loglik, config, poisson) {
                theta = jump;
                resp = jump_resp;
                trace.push(jump_ll);
                prev_ll = Some(jump_ll);
            }
            chain.clear();
            chain.push(theta);
        }
    }

    if poisson {
        theta.d = 1.0;
    }
    if theta.d - 1.0 <= POISSON_CLAMP {
        theta.d = 1.0;
    }
    let ll = loglik(counts, &theta);
    let result = FitResult {
        theta,
        submodel: kind,
        loglik: ll,
        bic: ll.bic(kind.n_free_params(), n),
        n_iter,
        converged,
        boundary,
        per_submodel_bic: BTreeMap::new(),
    };
    EmRun { result, loglik_trace: trace }
}

struct EmStep {
    theta: ZinbgtParams,
    resp: Responsibilities,
    loglik: f64,
    boundary: BoundaryFlags,
}

/// One M-step from `resp` followed by the E-step at the new parameters.
fn em_map(
    counts: &GeneCounts,
    theta: &ZinbgtParams,
    resp: &Responsibilities,
    config: &FitConfig,
    poisson: bool,
    nb_simplex: &mut f64,
) -> Result<EmStep, IncompatibleCount> {
    let (p0, p1, p2) = m_step_proportions(counts, resp);
    let mut flags = BoundaryFlags::default();

    let (m, d) = if p1 > 0.0 {
        let objective = NbObjective::new(counts, Some(&resp.nb));
        if poisson {
            let candidate = poisson_mle(objective.weighted_mean(), config);
            // Keep the current m if rounding in the solve would lower the objective.
            let m = if objective.value(candidate, 0.0) >= objective.value(theta.m, 0.0) {
                candidate
            } else {
                theta.m
            };
            if m <= config.m_min * (1.0 + 1e-9) {
                flags.insert(BoundaryFlags::M_MIN);
            }
            (m, 1.0)
        } else {
            let step = nb_step_from_objective(&objective, (theta.m, theta.d), config, *nb_simplex);
            *nb_simplex = next_simplex_size((theta.m, theta.d), &step);
            flags = flags.union(step.boundary);
            (step.m, step.d)
        }
    } else {
        (theta.m, theta.d)
    };

    let (p2, mu_g) = match m_step_geometric(counts, resp) {
        Some(mu) if p2 > 0.0 => {
            if mu >= config.mu_g_max {
                flags.insert(BoundaryFlags::MU_G_MAX);
            }
            (p2, mu.min(config.mu_g_max))
        }
        _ => (0.0, 0.0),
    };
    let p1 = if p2 == 0.0 { 1.0 - p0 } else { p1 };
    let next = ZinbgtParams { p0, p1, p2, m, d, mu_g };
    let (next_resp, ll) = e_step_with_loglik(counts, &next)?;
    Ok(EmStep { theta: next, resp: next_resp, loglik: ll, boundary: flags })
}

/// Unconstrained coordinates for extrapolation, or `None` on a boundary.
fn em_coords(theta: &ZinbgtParams, poisson: bool) -> Option<Vec<f64>> {
    let interior = theta.p1 > 0.0
        && theta.p2 > 0.0
        && theta.m > 0.0
        && theta.mu_g > 0.0
        && (poisson || theta.d - 1.0 > POISSON_CLAMP);
    if !interior {
        return None;
    }
    let mut u = vec![(theta.p1 / theta.p2).ln(), theta.m.ln(), theta.mu_g.ln()];
    if !poisson {
        u.push((theta.d - 1.0).ln());
    }
    Some(u)
}

fn from_em_coords(u: &[f64], p0: f64, poisson: bool, config: &FitConfig) -> Option<ZinbgtParams> {
    let rest = 1.0 - p0;
    let share = 1.0 / (1.0 + (-u[0]).exp());
    let p1 = rest * share;
    let p2 = rest - p1;
    let m = u[1].exp().max(config.m_min);
    let mu_g = u[2].exp().min(config.mu_g_max);
    let d = if poisson { 1.0 } else { 1.0 + u[3].exp().clamp(POISSON_CLAMP, config.d_max - 1.0) };
    let theta = ZinbgtParams { p0, p1, p2, m, d, mu_g };
    (p1 > 0.0 && p2 > 0.0 && theta.validate().is_ok()).then_some(theta)
}

/// Squared-extrapolation jump from three successive iterates. Returned only
/// when it does not lower the log-likelihood below `last_ll`.
fn extrapolate(
    counts: &GeneCounts,
    chain: &[ZinbgtParams],
    last_ll: f64,
    config: &FitConfig,
    poisson: bool,
) -> Option<(ZinbgtParams, Responsibilities, f64)> {
    // Iterates that all sit on the Poisson branch extrapolate with d held at one.
    let poisson = poisson || chain.iter().all(|t| t.d == 1.0);
    let u0 = em_coords(&chain[0], poisson)?;
    let u1 = em_coords(&chain[1], poisson)?;
    let u2 = em_coords(&chain[2], poisson)?;
    let r: Vec<f64> = u1.iter().zip(&u0).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = (0..u0.len()).map(|i| u2[i] - 2.0 * u1[i] + u0[i]).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (nr, nv) = (norm(&r), norm(&v));
    if !(nv > 0.0) {
        return None;
    }
    let mut alpha = (-nr / nv).max(-SQUAREM_MAX_STEP);
    for _ in 0..SQUAREM_BACKTRACKS {
        if alpha > -1.0 - 1e-9 {
            break;
        }
        let u: Vec<f64> = (0..u0.len()).map(|i| u0[i] - 2.0 * alpha * r[i] + alpha * alpha * v[i]).collect();
        if let Some(theta) = from_em_coords(&u, chain[2].p0, poisson, config) {
            if let Ok((resp, ll)) = e_step_with_loglik(counts, &theta) {
                if ll.is_finite() && ll >= last_ll {
                    return Some((theta, resp, ll));
                }
            }
        }
        alpha = 0.5 * (alpha - 1.0);
    }
    None
}

const SQUAREM_MAX_STEP: f64 = 100.0;
const SQUAREM_BACKTRACKS: usize = 4;

const NB_SIMPLEX_MAX: f64 = 0.1;
const NB_SIMPLEX_MIN: f64 = 1e-4;

/// A few times the last move in log space, so later simplexes start near the scale of the remaining change.
fn next_simplex_size(prev: (f64, f64), step: &NbStep) -> f64 {
    if !step.optimizer_converged || prev.1 <= 1.0 || step.d <= 1.0 || prev.0 <= 0.0 {
        return NB_SIMPLEX_MAX;
    }
    let dm = (step.m / prev.0).ln().abs();
    let dd = ((step.d - 1.0) / (prev.1 - 1.0)).ln().abs();
    (4.0 * dm.max(dd)).clamp(NB_SIMPLEX_MIN, NB_SIMPLEX_MAX)
}

fn failed(kind: SubmodelKind, theta: ZinbgtParams, n_iter: u32) -> FitResult {
    FitResult {
        theta,
        submodel: kind,
        loglik: LogLik::Impossible,
        bic: Bic::Infinite,
        n_iter,
        converged: false,
        boundary: BoundaryFlags::default(),
        per_submodel_bic: BTreeMap::new(),
    }
}

/// Fits a gene: closed-form shortcuts for trivial genes, otherwise every
/// submodel followed by minimum-BIC selection.
pub fn fit_gene(counts: &GeneCounts, config: &FitConfig) -> FitResult {
    match counts.classify_trivial() {
        TrivialClass::AllZero => FitResult {
            theta: ZinbgtParams::all_zero(),
            submodel: SubmodelKind::AllZero,
            loglik: LogLik::Finite(0.0),
            bic: Bic::Finite(0.0),
            n_iter: 0,
            converged: true,
            boundary: BoundaryFlags::default(),
            per_submodel_bic: BTreeMap::new(),
        },
        TrivialClass::ZeroOneOnly => {
            let p0 = zero_fraction(counts);
            FitResult::direct(counts, SubmodelKind::ConstantOneOnly, ZinbgtParams::zero_one(p0), BoundaryFlags::default())
        }
        TrivialClass::General => {
            let fits: Vec<FitResult> =
                SubmodelKind::FITTED.iter().map(|&kind| fit_submodel(counts, kind, config)).collect();
            let per_submodel_bic: BTreeMap<_, _> = fits.iter().map(|f| (f.submodel, f.bic)).collect();
            let mut best = select_min_bic(&fits).clone();
            best.per_submodel_bic = per_submodel_bic;
            best
        }
    }
}

/// Minimum BIC; ties within [`BIC_TIE_TOL`] go to fewer parameters, then to enumeration order.
pub fn select_min_bic(fits: &[FitResult]) -> &FitResult {
    let mut best = &fits[0];
    for cand in &fits[1..] {
        let (b, c) = (best.bic.value(), cand.bic.value());
        let tied = (c - b).abs() <= BIC_TIE_TOL || (b.is_infinite() && c.is_infinite());
        if tied {
            let fewer = cand.submodel.n_free_params() < best.submodel.n_free_params();
            let earlier = cand.submodel.n_free_params() == best.submodel.n_free_params() && cand.submodel < best.submodel;
            if fewer || earlier {
                best = cand;
            }
        } else if c < b {
            best = cand;
        }
    }
    best
}
