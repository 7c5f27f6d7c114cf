//! Wasserstein distance between a gene's data and its fitted model, and the
//! bootstrap `p_B` built on it.
//!
//! Bootstrap samples are compared to the fitted parameters themselves; the
//! model is not refitted to each sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::counts::{GeneCounts, TrivialClass};
use crate::model::{truncated_pmf_covering, DiscretePmf, ZinbgtParams, ZinbgtSampler, DEFAULT_MASS_TOL};
use crate::seeds;

/// Map applied to the integer support before measuring distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    #[default]
    Log1p,
}

impl Transform {
    #[inline]
    pub fn apply(self, v: u64) -> f64 {
        match self {
            Transform::Identity => v as f64,
            Transform::Log1p => (v as f64).ln_1p(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Log1p => "log1p",
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Transform::Identity),
            "log1p" => Ok(Transform::Log1p),
            _ => Err(format!("unknown transform `{s}` (expected identity or log1p)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagConfig {
    /// Cost exponent; 1 and 2 are the supported values.
    pub alpha: f64,
    pub transform: Transform,
    pub n_boot: u32,
    /// Seed of the bootstrap stream. The pipeline derives one per gene.
    pub seed: u64,
    pub mass_tol: f64,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig { alpha: 1.0, transform: Transform::Log1p, n_boot: 100, seed: 0, mass_tol: DEFAULT_MASS_TOL }
    }
}

/// Why diagnostics were not computed for a gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    AllZero,
    ZeroOneOnly,
}

impl SkipReason {
    pub fn name(self) -> &'static str {
        match self {
            SkipReason::AllZero => "all_zero",
            SkipReason::ZeroOneOnly => "zero_one_only",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticResult {
    pub wasserstein: Option<f64>,
    pub p_b: Option<f64>,
    /// Number of bootstrap draws behind `p_b`; zero when it was not computed.
    pub n_boot: u32,
    pub skipped: Option<SkipReason>,
}

impl DiagnosticResult {
    pub fn skipped(reason: SkipReason) -> Self {
        DiagnosticResult { wasserstein: None, p_b: None, n_boot: 0, skipped: Some(reason) }
    }

    /// Bootstrap draws with `W_B >= W_D`.
    pub fn exceed_count(&self) -> Option<u32> {
        self.p_b.map(|p| (p * self.n_boot as f64).round() as u32)
    }
}

/// Transport cost between two sorted pmfs given as parallel slices.
/// Masses need not sum to exactly the same total; the shortfall is ignored.
fn transport(a_sup: &[u64], a_mass: &[f64], b_sup: &[u64], b_mass: &[f64], alpha: f64, t: Transform) -> f64 {
    if alpha == 1.0 {
        cdf_distance(a_sup, a_mass, b_sup, b_mass, t)
    } else {
        quantile_distance(a_sup, a_mass, b_sup, b_mass, alpha, t)
    }
}

/// `sum_j |F_a(v_j) - F_b(v_j)| (t(v_{j+1}) - t(v_j))` over the merged support.
fn cdf_distance(a_sup: &[u64], a_mass: &[f64], b_sup: &[u64], b_mass: &[f64], t: Transform) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < a_sup.len() || j < b_sup.len() {
        let v = match (a_sup.get(i), b_sup.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let tv = t.apply(v);
        if let Some(tp) = prev {
            total += (fa - fb).abs() * (tv - tp);
        }
        if a_sup.get(i) == Some(&v) {
            fa += a_mass[i];
            i += 1;
        }
        if b_sup.get(j) == Some(&v) {
            fb += b_mass[j];
            j += 1;
        }
        prev = Some(tv);
    }
    total
}

/// Monotone (quantile) coupling: walk both pmfs in order, moving mass greedily.
fn quantile_distance(a_sup: &[u64], a_mass: &[f64], b_sup: &[u64], b_mass: &[f64], alpha: f64, t: Transform) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a_mass.first().copied().unwrap_or(0.0), b_mass.first().copied().unwrap_or(0.0));
    let mut cost = 0.0;
    while i < a_sup.len() && j < b_sup.len() {
        let w = ra.min(rb);
        if w > 0.0 {
            cost += w * (t.apply(a_sup[i]) - t.apply(b_sup[j])).abs().powf(alpha);
        }
        ra -= w;
        rb -= w;
        // Step whichever side is exhausted; ties advance both.
        if ra <= rb {
            i += 1;
            ra = a_mass.get(i).copied().unwrap_or(0.0);
        }
        if rb <= 0.0 {
            j += 1;
            rb = b_mass.get(j).copied().unwrap_or(0.0);
        }
    }
    cost.powf(1.0 / alpha)
}

/// `W_alpha` between two pmfs after mapping the support through `transform`.
pub fn wasserstein_discrete(a: &DiscretePmf, b: &DiscretePmf, alpha: f64, transform: Transform) -> f64 {
    assert!(alpha >= 1.0, "cost exponent must be at least 1");
    transport(a.support(), a.mass(), b.support(), b.mass(), alpha, transform)
}

/// Distance between the empirical distribution of `counts` and the model,
/// truncated at `mass_tol` but never below the observed maximum.
pub fn gene_wasserstein(counts: &GeneCounts, theta: &ZinbgtParams, config: &DiagConfig) -> f64 {
    let model = truncated_pmf_covering(theta, config.mass_tol, counts.max_value());
    let data = DiscretePmf::empirical(counts);
    wasserstein_discrete(&data, &model, config.alpha, config.transform)
}

/// Reusable state for repeated distances against one model.
struct ModelRef {
    pmf: DiscretePmf,
    theta: ZinbgtParams,
    mass_tol: f64,
}

impl ModelRef {
    fn covering(&mut self, max: u64) -> &DiscretePmf {
        if self.pmf.support().last().is_some_and(|&k| k < max) {
            self.pmf = truncated_pmf_covering(&self.theta, self.mass_tol, max);
        }
        &self.pmf
    }
}

/// `W_D` and the bootstrap `p_B = c / k`, where `c` counts bootstrap samples
/// of `n_cells` draws from `theta` whose distance to `theta` is at least `W_D`.
/// Trivial genes are skipped.
pub fn p_b_value(counts: &GeneCounts, theta: &ZinbgtParams, config: &DiagConfig) -> DiagnosticResult {
    diagnose(counts, theta, config, true)
}

/// Diagnostics for one gene; `with_p_b = false` computes only `W_D`.
pub fn diagnose(counts: &GeneCounts, theta: &ZinbgtParams, config: &DiagConfig, with_p_b: bool) -> DiagnosticResult {
    match counts.classify_trivial() {
        TrivialClass::AllZero => return DiagnosticResult::skipped(SkipReason::AllZero),
        TrivialClass::ZeroOneOnly => return DiagnosticResult::skipped(SkipReason::ZeroOneOnly),
        TrivialClass::General => {}
    }
    assert!(config.n_boot >= 1 || !with_p_b, "n_boot must be at least 1");

    let mut model = ModelRef {
        pmf: truncated_pmf_covering(theta, config.mass_tol, counts.max_value()),
        theta: *theta,
        mass_tol: config.mass_tol,
    };
    let data = DiscretePmf::empirical(counts);
    let w_d = wasserstein_discrete(&data, &model.pmf, config.alpha, config.transform);
    if !with_p_b {
        return DiagnosticResult { wasserstein: Some(w_d), p_b: None, n_boot: 0, skipped: None };
    }

    let n = counts.n_cells();
    let sampler = ZinbgtSampler::new(theta);
    let mut rng = seeds::rng_from_seed(config.seed);
    let mut hist: Vec<u64> = Vec::new();
    let mut sup: Vec<u64> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    let mut exceed = 0u32;
    for _ in 0..config.n_boot {
        hist.iter_mut().for_each(|h| *h = 0);
        for _ in 0..n {
            let x = sampler.draw(&mut rng) as usize;
            if x >= hist.len() {
                hist.resize(x + 1, 0);
            }
            hist[x] += 1;
        }
        sup.clear();
        mass.clear();
        for (v, &k) in hist.iter().enumerate() {
            if k > 0 {
                sup.push(v as u64);
                mass.push(k as f64 / n as f64);
            }
        }
        let pmf = model.covering(*sup.last().expect("n_cells > 0"));
        let w_b = transport(&sup, &mass, pmf.support(), pmf.mass(), config.alpha, config.transform);
        if w_b >= w_d {
            exceed += 1;
        }
    }
    DiagnosticResult {
        wasserstein: Some(w_d),
        p_b: Some(exceed as f64 / config.n_boot as f64),
        n_boot: config.n_boot,
        skipped: None,
    }
}
