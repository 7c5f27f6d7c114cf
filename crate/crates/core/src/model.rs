//! The ZINBGT mixture: a constant-zero component, a hurdle negative-binomial
//! component and a hurdle geometric component.
//!
//! All mass functions are evaluated in log space and exponentiated only at
//! the public boundary.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::counts::GeneCounts;
use crate::error::ParamError;
use crate::numeric::{ln_expm1, ln_factorial, ln_rising, log_add_exp};
use crate::seeds;

/// `d - 1` at or below this is evaluated on the Poisson branch.
pub const POISSON_CLAMP: f64 = 1e-8;
/// Default tail mass left out of a truncated model pmf.
pub const DEFAULT_MASS_TOL: f64 = 1e-10;
/// Hard cap on the truncation point of a model pmf.
pub const MAX_SUPPORT: u64 = 1_000_000;

const SUM_TOL: f64 = 1e-12;

/// The six-parameter ZINBGT vector `(p0, p1, p2, m, d, mu_g)`.
///
/// `m` and `d` are the mean and variance/mean ratio of the non-hurdle
/// negative binomial; `mu_g` is the mean of the non-hurdle geometric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZinbgtParams {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub m: f64,
    pub d: f64,
    pub mu_g: f64,
}

impl ZinbgtParams {
    /// Checked constructor.
    pub fn new(p0: f64, p1: f64, p2: f64, m: f64, d: f64, mu_g: f64) -> Result<Self, ParamError> {
        let theta = ZinbgtParams { p0, p1, p2, m, d, mu_g };
        theta.validate()?;
        Ok(theta)
    }

    /// The all-zero point mass.
    pub fn all_zero() -> Self {
        ZinbgtParams { p0: 1.0, p1: 0.0, p2: 0.0, m: 0.0, d: 1.0, mu_g: 0.0 }
    }

    /// Zeros with probability `p0`, otherwise a constant one.
    pub fn zero_one(p0: f64) -> Self {
        ZinbgtParams { p0, p1: 1.0 - p0, p2: 0.0, m: 0.0, d: 1.0, mu_g: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let named = [
            ("p0", self.p0),
            ("p1", self.p1),
            ("p2", self.p2),
            ("m", self.m),
            ("d", self.d),
            ("mu_g", self.mu_g),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return Err(ParamError::NonFinite { name, value });
            }
        }
        for (name, value) in &named[..3] {
            if !(0.0..=1.0).contains(value) {
                return Err(ParamError::ProbabilityRange { name, value: *value });
            }
        }
        let sum = self.p0 + self.p1 + self.p2;
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ParamError::ProportionSum { sum });
        }
        check_nb_args(self.m, self.d)?;
        if self.mu_g < 0.0 {
            return Err(ParamError::NegativeGeomMean(self.mu_g));
        }
        Ok(())
    }

    /// NB shape `r = m / (d - 1)`; `None` on the Poisson and constant-one branches.
    pub fn nb_shape(&self) -> Option<f64> {
        match NbForm::new(self.m, self.d) {
            NbForm::NegBin { m, dm1 } => Some(m / dm1),
            _ => None,
        }
    }

    /// NB success probability `1 / d`.
    pub fn nb_success_prob(&self) -> f64 {
        1.0 / self.d
    }

    /// Geometric success probability `(1 + mu_g)^-1`.
    pub fn geom_success_prob(&self) -> f64 {
        1.0 / (1.0 + self.mu_g)
    }

    /// Expected count under the mixture.
    pub fn mean(&self) -> f64 {
        let nb_mean = match NbForm::new(self.m, self.d) {
            NbForm::ConstantOne => 1.0,
            NbForm::Poisson { m } => m / (-(-m).exp_m1()),
            NbForm::NegBin { m, dm1 } => {
                let r = m / dm1;
                // hurdle mean = m / (1 - P(0)), P(0) = d^-r
                m / (-(-r * dm1.ln_1p()).exp_m1())
            }
        };
        self.p1 * nb_mean + self.p2 * (1.0 + self.mu_g)
    }

    pub(crate) fn nb_form(&self) -> NbForm {
        NbForm::new(self.m, self.d)
    }

    /// Checks the exact parameter restrictions implied by `kind`.
    pub fn check_submodel(&self, kind: SubmodelKind) -> Result<(), ParamError> {
        let fail = |detail: &str| {
            Err(ParamError::Restriction { submodel: kind.name(), detail: detail.to_string() })
        };
        let no_geom = self.p2 == 0.0 && self.mu_g == 0.0;
        match kind {
            SubmodelKind::FullNbGeom => Ok(()),
            SubmodelKind::PoissonGeom if self.d != 1.0 => fail("d must equal 1"),
            SubmodelKind::PoissonGeom => Ok(()),
            SubmodelKind::NbOnly if !no_geom => fail("p2 and mu_g must equal 0"),
            SubmodelKind::NbOnly => Ok(()),
            SubmodelKind::PoissonOnly if !no_geom || self.d != 1.0 => {
                fail("p2 = mu_g = 0 and d = 1 required")
            }
            SubmodelKind::PoissonOnly => Ok(()),
            SubmodelKind::ConstantOneOnly if !no_geom || self.m != 0.0 || self.d != 1.0 => {
                fail("m = p2 = mu_g = 0 and d = 1 required")
            }
            SubmodelKind::ConstantOneOnly => Ok(()),
            SubmodelKind::GeomOnly if !no_geom || self.m != self.d - 1.0 => {
                fail("p2 = mu_g = 0 and m = d - 1 required")
            }
            SubmodelKind::GeomOnly => Ok(()),
            SubmodelKind::AllZero if *self != ZinbgtParams::all_zero() => fail("theta must be (1,0,0,0,1,0)"),
            SubmodelKind::AllZero => Ok(()),
        }
    }
}

/// The submodels of the mixture, plus the trivial all-zero case.
///
/// Declaration order is the fixed enumeration order used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubmodelKind {
    FullNbGeom,
    PoissonGeom,
    NbOnly,
    PoissonOnly,
    ConstantOneOnly,
    GeomOnly,
    AllZero,
}

impl SubmodelKind {
    /// The six variants that are fitted and compared by BIC.
    pub const FITTED: [SubmodelKind; 6] = [
        SubmodelKind::FullNbGeom,
        SubmodelKind::PoissonGeom,
        SubmodelKind::NbOnly,
        SubmodelKind::PoissonOnly,
        SubmodelKind::ConstantOneOnly,
        SubmodelKind::GeomOnly,
    ];

    /// Free parameters after the restrictions and the simplex constraint.
    pub fn n_free_params(self) -> u32 {
        match self {
            SubmodelKind::FullNbGeom => 5,
            SubmodelKind::PoissonGeom => 4,
            SubmodelKind::NbOnly => 3,
            SubmodelKind::PoissonOnly | SubmodelKind::GeomOnly => 2,
            SubmodelKind::ConstantOneOnly => 1,
            SubmodelKind::AllZero => 0,
        }
    }

    pub fn has_geometric(self) -> bool {
        matches!(self, SubmodelKind::FullNbGeom | SubmodelKind::PoissonGeom)
    }

    pub fn name(self) -> &'static str {
        match self {
            SubmodelKind::FullNbGeom => "FullNbGeom",
            SubmodelKind::PoissonGeom => "PoissonGeom",
            SubmodelKind::NbOnly => "NbOnly",
            SubmodelKind::PoissonOnly => "PoissonOnly",
            SubmodelKind::ConstantOneOnly => "ConstantOneOnly",
            SubmodelKind::GeomOnly => "GeomOnly",
            SubmodelKind::AllZero => "AllZero",
        }
    }
}

impl fmt::Display for SubmodelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubmodelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubmodelKind::FITTED
            .iter()
            .chain(std::iter::once(&SubmodelKind::AllZero))
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown submodel {s:?}"))
    }
}

/// Observed-data log-likelihood, with a dedicated value for "impossible".
///
/// `Impossible` orders below every finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLik {
    Finite(f64),
    Impossible,
}

impl LogLik {
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            LogLik::Finite(v)
        } else {
            LogLik::Impossible
        }
    }

    /// `-inf` for `Impossible`.
    pub fn value(self) -> f64 {
        match self {
            LogLik::Finite(v) => v,
            LogLik::Impossible => f64::NEG_INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LogLik::Finite(v) => Some(v),
            LogLik::Impossible => None,
        }
    }

    /// `k ln(n) - 2 loglik`.
    pub fn bic(self, n_params: u32, n_cells: u64) -> Bic {
        match self {
            LogLik::Finite(v) => Bic::Finite(n_params as f64 * (n_cells as f64).ln() - 2.0 * v),
            LogLik::Impossible => Bic::Infinite,
        }
    }
}

impl PartialOrd for LogLik {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

/// BIC value; `Infinite` marks a submodel that cannot describe the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bic {
    Finite(f64),
    Infinite,
}

impl Bic {
    /// `+inf` for `Infinite`.
    pub fn value(self) -> f64 {
        match self {
            Bic::Finite(v) => v,
            Bic::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Bic::Finite(v) => Some(v),
            Bic::Infinite => None,
        }
    }
}

impl PartialOrd for Bic {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

/// Which branch of the hurdle-NB mass function applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum NbForm {
    ConstantOne,
    Poisson { m: f64 },
    NegBin { m: f64, dm1: f64 },
}

impl NbForm {
    pub(crate) fn new(m: f64, d: f64) -> Self {
        Self::from_chart(m, d - 1.0)
    }

    /// From `m` and `d - 1` directly, avoiding the cancellation in `d - 1`.
    pub(crate) fn from_chart(m: f64, dm1: f64) -> Self {
        if m == 0.0 {
            NbForm::ConstantOne
        } else if dm1 <= POISSON_CLAMP {
            NbForm::Poisson { m }
        } else {
            NbForm::NegBin { m, dm1 }
        }
    }

    /// Log mass at `x`; `-inf` where the mass is zero.
    pub(crate) fn ln_pmf(self, x: u64) -> f64 {
        if x == 0 {
            return f64::NEG_INFINITY;
        }
        match self {
            NbForm::ConstantOne => {
                if x == 1 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            NbForm::Poisson { m } => x as f64 * m.ln() - ln_factorial(x) - ln_expm1(m),
            NbForm::NegBin { m, dm1 } => {
                let r = m / dm1;
                let ln_d = dm1.ln_1p();
                ln_rising(r, x) - ln_factorial(x) + x as f64 * (dm1.ln() - ln_d) - ln_expm1(r * ln_d)
            }
        }
    }

    /// Probability that the non-hurdle version is zero.
    fn zero_prob(self) -> f64 {
        match self {
            NbForm::ConstantOne => 1.0,
            NbForm::Poisson { m } => (-m).exp(),
            NbForm::NegBin { m, dm1 } => (-(m / dm1) * dm1.ln_1p()).exp(),
        }
    }

    /// `ln f(x + 1) - ln f(x)` for `x >= 1`.
    fn ln_step(self, x: u64) -> f64 {
        match self {
            NbForm::ConstantOne => f64::NEG_INFINITY,
            NbForm::Poisson { m } => m.ln() - (x as f64 + 1.0).ln(),
            NbForm::NegBin { m, dm1 } => {
                let r = m / dm1;
                ((x as f64 + r) / (x as f64 + 1.0)).ln() + dm1.ln() - dm1.ln_1p()
            }
        }
    }
}

/// Log mass of the hurdle geometric at `x`.
pub(crate) fn ln_geom(x: u64, mu_g: f64) -> f64 {
    if x == 0 {
        return f64::NEG_INFINITY;
    }
    if mu_g == 0.0 {
        return if x == 1 { 0.0 } else { f64::NEG_INFINITY };
    }
    (x - 1) as f64 * mu_g.ln() - x as f64 * mu_g.ln_1p()
}

fn check_nb_args(m: f64, d: f64) -> Result<(), ParamError> {
    if !m.is_finite() {
        return Err(ParamError::NonFinite { name: "m", value: m });
    }
    if !d.is_finite() {
        return Err(ParamError::NonFinite { name: "d", value: d });
    }
    if m < 0.0 {
        return Err(ParamError::NegativeMean(m));
    }
    if d < 1.0 {
        return Err(ParamError::Dispersion(d));
    }
    if m == 0.0 && d != 1.0 {
        return Err(ParamError::ConstantOneDispersion(d));
    }
    Ok(())
}

/// Hurdle negative-binomial mass at `x` with mean `m` and dispersion `d`.
///
/// `d = 1` is the hurdle Poisson and `m = 0` the constant one.
pub fn pmf_hurdle_nb(x: u64, m: f64, d: f64) -> Result<f64, ParamError> {
    check_nb_args(m, d)?;
    Ok(NbForm::new(m, d).ln_pmf(x).exp())
}

/// Hurdle geometric mass at `x`: `mu_g^(x-1) / (1 + mu_g)^x` for `x >= 1`.
pub fn pmf_hurdle_geom(x: u64, mu_g: f64) -> Result<f64, ParamError> {
    if !mu_g.is_finite() {
        return Err(ParamError::NonFinite { name: "mu_g", value: mu_g });
    }
    if mu_g < 0.0 {
        return Err(ParamError::NegativeGeomMean(mu_g));
    }
    Ok(ln_geom(x, mu_g).exp())
}

/// Log mass of the full mixture; assumes `theta` is valid.
pub(crate) fn ln_pmf_mixture(x: u64, theta: &ZinbgtParams, nb: NbForm) -> f64 {
    if x == 0 {
        return theta.p0.ln();
    }
    let a = if theta.p1 > 0.0 { theta.p1.ln() + nb.ln_pmf(x) } else { f64::NEG_INFINITY };
    let b = if theta.p2 > 0.0 { theta.p2.ln() + ln_geom(x, theta.mu_g) } else { f64::NEG_INFINITY };
    log_add_exp(a, b)
}

/// Mixture mass at `x`. At zero this is exactly `p0`.
pub fn pmf_zinbgt(x: u64, theta: &ZinbgtParams) -> Result<f64, ParamError> {
    theta.validate()?;
    if x == 0 {
        return Ok(theta.p0);
    }
    Ok(ln_pmf_mixture(x, theta, theta.nb_form()).exp())
}

/// Observed-data log-likelihood over the compacted counts.
///
/// Any observed value with zero model mass gives [`LogLik::Impossible`].
pub fn loglik(counts: &GeneCounts, theta: &ZinbgtParams) -> LogLik {
    let nb = theta.nb_form();
    let mut total = 0.0;
    for &(x, k) in counts.pairs() {
        let lp = ln_pmf_mixture(x, theta, nb);
        if lp == f64::NEG_INFINITY {
            return LogLik::Impossible;
        }
        total += k as f64 * lp;
    }
    LogLik::from_f64(total)
}

/// Where a model pmf was cut and how much tail mass was folded there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCut {
    pub at: u64,
    pub folded_mass: f64,
}

/// A finite pmf on non-negative integers with strictly increasing support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    support: Vec<u64>,
    mass: Vec<f64>,
    tail_cut: Option<TailCut>,
}

impl DiscretePmf {
    /// Normalizes the given non-negative weights. Support must be strictly increasing.
    pub fn from_weights(support: Vec<u64>, weights: Vec<f64>) -> Option<Self> {
        if support.len() != weights.len() || support.is_empty() {
            return None;
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return None;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Some(DiscretePmf { support, mass, tail_cut: None })
    }

    /// The empirical distribution of a gene's counts.
    pub fn empirical(counts: &GeneCounts) -> Self {
        let n = counts.n_cells() as f64;
        let support = counts.pairs().iter().map(|&(v, _)| v).collect();
        let mass = counts.pairs().iter().map(|&(_, k)| k as f64 / n).collect();
        DiscretePmf { support, mass, tail_cut: None }
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn tail_cut(&self) -> Option<TailCut> {
        self.tail_cut
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mass at `x`, zero off the support.
    pub fn mass_at(&self, x: u64) -> f64 {
        self.support.binary_search(&x).map_or(0.0, |i| self.mass[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.support.iter().copied().zip(self.mass.iter().copied())
    }
}

/// Successive masses `f(1), f(2), ...` of one hurdle component, in log space.
struct ComponentTail {
    nb: Option<NbForm>,
    geom_ln_ratio: Option<f64>,
}

/// Truncated model pmf on `[0..K]` with tail mass below `mass_tol` folded into `K`.
pub fn truncated_pmf(theta: &ZinbgtParams, mass_tol: f64) -> DiscretePmf {
    truncated_pmf_covering(theta, mass_tol, 0)
}

/// As [`truncated_pmf`], with `K` never below `min_max` (e.g. the observed maximum).
pub fn truncated_pmf_covering(theta: &ZinbgtParams, mass_tol: f64, min_max: u64) -> DiscretePmf {
    let nb = theta.nb_form();
    let parts = ComponentTail {
        nb: (theta.p1 > 0.0).then_some(nb),
        geom_ln_ratio: (theta.p2 > 0.0 && theta.mu_g > 0.0).then(|| -(1.0 / theta.mu_g).ln_1p()),
    };
    let geom_point = theta.p2 > 0.0 && theta.mu_g == 0.0;

    let mut support = vec![0u64];
    let mut mass = vec![theta.p0];
    let mut cum = theta.p0;
    let mut comp = 0.0; // Neumaier compensation

    let mut ln_nb = parts.nb.map(|f| f.ln_pmf(1));
    let mut ln_geo = parts.geom_ln_ratio.map(|_| ln_geom(1, theta.mu_g));
    let ln_p1 = theta.p1.ln();
    let ln_p2 = theta.p2.ln();

    let mut x = 0u64;
    while (1.0 - (cum + comp) >= mass_tol || x < min_max) && x < MAX_SUPPORT {
        x += 1;
        let mut w = 0.0;
        if let Some(l) = ln_nb {
            w += (ln_p1 + l).exp();
        }
        if let Some(l) = ln_geo {
            w += (ln_p2 + l).exp();
        }
        if geom_point && x == 1 {
            w += theta.p2;
        }
        let t = cum + w;
        if cum.abs() >= w.abs() {
            comp += (cum - t) + w;
        } else {
            comp += (w - t) + cum;
        }
        cum = t;
        support.push(x);
        mass.push(w);

        if let (Some(l), Some(f)) = (ln_nb.as_mut(), parts.nb) {
            *l += f.ln_step(x);
        }
        if let (Some(l), Some(r)) = (ln_geo.as_mut(), parts.geom_ln_ratio) {
            *l += r;
        }
    }

    let residual = 1.0 - (cum + comp);
    let last = mass.len() - 1;
    mass[last] = (mass[last] + residual).max(0.0);
    let tail_cut = Some(TailCut { at: x, folded_mass: residual });
    DiscretePmf { support, mass, tail_cut }
}

/// Precomputed sampler for one parameter vector.
#[derive(Debug, Clone)]
pub struct ZinbgtSampler {
    p0: f64,
    p01: f64,
    nb: NbSampler,
    geom: GeomSampler,
}

#[derive(Debug, Clone)]
enum NbSampler {
    One,
    /// Draw from the plain Poisson and reject zeros.
    RejectPoisson(Poisson<f64>),
    /// Gamma-Poisson draw with zeros rejected.
    RejectNegBin(Gamma<f64>),
    /// Inverse CDF over a cached cumulative table, extended sequentially past its end.
    Inverse(InverseTable),
}

#[derive(Debug, Clone)]
struct InverseTable {
    form: NbForm,
    cum: Vec<f64>,
    last_ln: f64,
}

#[derive(Debug, Clone, Copy)]
enum GeomSampler {
    One,
    /// `ln(mu / (1 + mu))`
    Inverse(f64),
}

/// Rejection is used while the plain distribution puts at most this much mass at zero.
const REJECT_MAX_ZERO_PROB: f64 = 0.5;
const INVERSE_TABLE_TAIL: f64 = 1e-12;
const INVERSE_TABLE_CAP: usize = 1 << 20;

impl ZinbgtSampler {
    pub fn new(theta: &ZinbgtParams) -> Self {
        let form = theta.nb_form();
        let nb = match form {
            NbForm::ConstantOne => NbSampler::One,
            _ if form.zero_prob() > REJECT_MAX_ZERO_PROB => NbSampler::Inverse(InverseTable::new(form)),
            NbForm::Poisson { m } => NbSampler::RejectPoisson(Poisson::new(m).expect("m > 0")),
            NbForm::NegBin { m, dm1 } => {
                NbSampler::RejectNegBin(Gamma::new(m / dm1, dm1).expect("shape and scale positive"))
            }
        };
        let geom = if theta.mu_g > 0.0 {
            GeomSampler::Inverse(-(1.0 / theta.mu_g).ln_1p())
        } else {
            GeomSampler::One
        };
        ZinbgtSampler { p0: theta.p0, p01: theta.p0 + theta.p1, nb, geom }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if u < self.p0 {
            0
        } else if u < self.p01 {
            self.draw_nb(rng)
        } else {
            self.draw_geom(rng)
        }
    }

    fn draw_nb<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.nb {
            NbSampler::One => 1,
            NbSampler::RejectPoisson(p) => loop {
                let x = p.sample(rng);
                if x >= 1.0 {
                    return x as u64;
                }
            },
            NbSampler::RejectNegBin(g) => loop {
                let lambda = g.sample(rng);
                if lambda <= 0.0 {
                    continue;
                }
                let x = Poisson::new(lambda).map_or(0.0, |p| p.sample(rng));
                if x >= 1.0 {
                    return x as u64;
                }
            },
            NbSampler::Inverse(t) => t.draw(rng),
        }
    }

    fn draw_geom<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.geom {
            GeomSampler::One => 1,
            GeomSampler::Inverse(ln_q) => {
                // U in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                let k = (u.ln() / ln_q).floor();
                if k >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    1 + k as u64
                }
            }
        }
    }
}

impl InverseTable {
    fn new(form: NbForm) -> Self {
        let mut cum = Vec::new();
        let mut acc = 0.0;
        let mut ln_f = form.ln_pmf(1);
        let mut x = 1u64;
        loop {
            acc += ln_f.exp();
            cum.push(acc);
            if 1.0 - acc < INVERSE_TABLE_TAIL || cum.len() >= INVERSE_TABLE_CAP {
                break;
            }
            ln_f += form.ln_step(x);
            x += 1;
        }
        let last_ln = ln_f;
        InverseTable { form, cum, last_ln }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let idx = self.cum.partition_point(|&c| c <= u);
        if idx < self.cum.len() {
            return idx as u64 + 1;
        }
        // Beyond the table: keep walking the exact pmf.
        let mut x = self.cum.len() as u64;
        let mut acc = *self.cum.last().expect("table is non-empty");
        let mut ln_f = self.last_ln;
        loop {
            ln_f += self.form.ln_step(x);
            x += 1;
            let f = ln_f.exp();
            acc += f;
            if acc > u || f == 0.0 {
                return x;
            }
        }
    }
}

/// `n` independent draws from `theta`, deterministic given `seed`.
pub fn sample(theta: &ZinbgtParams, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = seeds::rng_from_seed(seed);
    sample_with(theta, n, &mut rng)
}

/// `n` draws using the caller's generator.
pub fn sample_with<R: Rng + ?Sized>(theta: &ZinbgtParams, n: usize, rng: &mut R) -> Vec<u64> {
    let sampler = ZinbgtSampler::new(theta);
    (0..n).map(|_| sampler.draw(rng)).collect()
}
