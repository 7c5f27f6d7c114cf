//! Synthetic datasets: genes drawn from given ZINBGT parameters, and genes
//! drawn from mixtures of two plain negative binomials (a family the model
//! cannot represent).

use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::GeneCounts;
use crate::error::{IngestError, SimError};
use crate::ingest::{default_gene_id, CellCounts};
use crate::model::{SubmodelKind, ZinbgtParams, ZinbgtSampler};
use crate::seeds::{self, StreamPurpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimKind {
    FromParamsTable,
    NbMixtureMisspec,
}

/// Hyperpriors of the two-NB mixture family. Exponentials are given by their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureHyper {
    /// `m1 ~ Exp(mean)`.
    pub m1_mean: f64,
    /// `m2 = m1 * (1 + Exp(mean))`.
    pub ratio_excess_mean: f64,
    /// `d1, d2 ~ 1 + Exp(mean)`.
    pub d_excess_mean: f64,
    /// `rho ~ Beta(a, b)`, the weight of the first component.
    pub rho_beta: (f64, f64),
}

impl Default for MixtureHyper {
    fn default() -> Self {
        MixtureHyper { m1_mean: 10.0, ratio_excess_mean: 10.0, d_excess_mean: 10.0, rho_beta: (2.0, 2.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: SimKind,
    pub n_cells: usize,
    pub n_genes: usize,
    pub seed: u64,
    /// One entry per gene for `FromParamsTable`; ignored otherwise.
    pub params_table: Vec<ZinbgtParams>,
    pub hyper: MixtureHyper,
}

impl SimSpec {
    pub fn from_params(params_table: Vec<ZinbgtParams>, n_cells: usize, seed: u64) -> Self {
        SimSpec {
            kind: SimKind::FromParamsTable,
            n_cells,
            n_genes: params_table.len(),
            seed,
            params_table,
            hyper: MixtureHyper::default(),
        }
    }

    pub fn nb_mixture(n_genes: usize, n_cells: usize, seed: u64) -> Self {
        SimSpec {
            kind: SimKind::NbMixtureMisspec,
            n_cells,
            n_genes,
            seed,
            params_table: Vec::new(),
            hyper: MixtureHyper::default(),
        }
    }

    fn check(&self, kind: SimKind) -> Result<(), SimError> {
        if self.kind != kind {
            return Err(SimError::Spec(format!("expected a {kind:?} spec, got {:?}", self.kind)));
        }
        if self.n_cells == 0 {
            return Err(SimError::Spec("n_cells must be at least 1".into()));
        }
        if kind == SimKind::FromParamsTable && self.n_genes != self.params_table.len() {
            return Err(SimError::Spec(format!(
                "n_genes = {} but the params table has {} entries",
                self.n_genes,
                self.params_table.len()
            )));
        }
        Ok(())
    }
}

/// True mixture parameters of one simulated gene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureDraw {
    pub rho: f64,
    pub m1: f64,
    pub m2: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Per-cell counts drawn from each gene's parameters.
pub fn simulate_zinbgt_cells(spec: &SimSpec) -> Result<CellCounts, SimError> {
    spec.check(SimKind::FromParamsTable)?;
    for (index, theta) in spec.params_table.iter().enumerate() {
        theta.validate().map_err(|source| SimError::InvalidParams { index, source })?;
    }
    let values = spec
        .params_table
        .par_iter()
        .enumerate()
        .map(|(j, theta)| {
            let mut rng = seeds::gene_rng(spec.seed, StreamPurpose::Simulation, j as u64);
            let sampler = ZinbgtSampler::new(theta);
            (0..spec.n_cells).map(|_| sampler.draw(&mut rng)).collect()
        })
        .collect();
    Ok(CellCounts { gene_ids: (0..spec.n_genes).map(default_gene_id).collect(), values })
}

pub fn simulate_zinbgt_dataset(spec: &SimSpec) -> Result<Vec<GeneCounts>, SimError> {
    Ok(simulate_zinbgt_cells(spec)?.compact())
}

/// A plain (non-hurdle) negative binomial draw with mean `m` and dispersion `d`;
/// Poisson at `d = 1`.
pub fn draw_plain_nb<R: Rng + ?Sized>(m: f64, d: f64, rng: &mut R) -> u64 {
    mixture_component(m, d).draw(rng)
}

fn draw_hyper<R: Rng + ?Sized>(h: &MixtureHyper, rng: &mut R) -> MixtureDraw {
    let exp = |mean: f64, rng: &mut R| Exp::new(1.0 / mean).expect("positive rate").sample(rng);
    let m1 = exp(h.m1_mean, rng);
    let m2 = m1 * (1.0 + exp(h.ratio_excess_mean, rng));
    let d1 = 1.0 + exp(h.d_excess_mean, rng);
    let d2 = 1.0 + exp(h.d_excess_mean, rng);
    let rho = Beta::new(h.rho_beta.0, h.rho_beta.1).expect("positive shapes").sample(rng);
    MixtureDraw { rho, m1, m2, d1, d2 }
}

fn mixture_gene<R: Rng + ?Sized>(draw: &MixtureDraw, n_cells: usize, rng: &mut R) -> Vec<u64> {
    let c1 = mixture_component(draw.m1, draw.d1);
    let c2 = mixture_component(draw.m2, draw.d2);
    (0..n_cells)
        .map(|_| {
            let c = if rng.random::<f64>() < draw.rho { &c1 } else { &c2 };
            c.draw(rng)
        })
        .collect()
}

enum PlainNb {
    Zero,
    Poisson(Poisson<f64>),
    GammaPoisson(Gamma<f64>),
}

fn mixture_component(m: f64, d: f64) -> PlainNb {
    if m <= 0.0 {
        PlainNb::Zero
    } else if d > 1.0 {
        PlainNb::GammaPoisson(Gamma::new(m / (d - 1.0), d - 1.0).expect("positive shape and scale"))
    } else {
        PlainNb::Poisson(Poisson::new(m).expect("positive rate"))
    }
}

impl PlainNb {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            PlainNb::Zero => 0,
            PlainNb::Poisson(p) => p.sample(rng) as u64,
            PlainNb::GammaPoisson(g) => {
                let lambda = g.sample(rng);
                if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
                } else {
                    0
                }
            }
        }
    }
}

/// Per-cell counts from the two-NB mixture family, with each gene's draws.
pub fn simulate_nb_mixture_cells(spec: &SimSpec) -> Result<(CellCounts, Vec<MixtureDraw>), SimError> {
    spec.check(SimKind::NbMixtureMisspec)?;
    let (values, draws): (Vec<Vec<u64>>, Vec<MixtureDraw>) = (0..spec.n_genes)
        .into_par_iter()
        .map(|j| {
            let mut hrng = seeds::gene_rng(spec.seed, StreamPurpose::Hyperdraw, j as u64);
            let draw = draw_hyper(&spec.hyper, &mut hrng);
            let mut rng = seeds::gene_rng(spec.seed, StreamPurpose::Simulation, j as u64);
            (mixture_gene(&draw, spec.n_cells, &mut rng), draw)
        })
        .unzip();
    Ok((CellCounts { gene_ids: (0..spec.n_genes).map(default_gene_id).collect(), values }, draws))
}

pub fn simulate_nb_mixture_dataset(spec: &SimSpec) -> Result<(Vec<GeneCounts>, Vec<MixtureDraw>), SimError> {
    let (cells, draws) = simulate_nb_mixture_cells(spec)?;
    Ok((cells.compact(), draws))
}

/// Bumped whenever [`default_params_table`] would produce different values.
pub const PARAMS_TABLE_VERSION: u32 = 1;

/// Genes per class in the default table; the geometric-only class is smaller.
pub const PARAMS_TABLE_LAYOUT: [(SubmodelKind, usize); 5] = [
    (SubmodelKind::FullNbGeom, 200),
    (SubmodelKind::PoissonGeom, 200),
    (SubmodelKind::NbOnly, 200),
    (SubmodelKind::PoissonOnly, 200),
    (SubmodelKind::GeomOnly, 9),
];

fn log_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Random parameters within one submodel class.
///
/// Ranges: `p0 ~ U(0, 0.9)`; the NB share of the non-zero mass `~ U(0.1, 0.9)`
/// when both components are present; `m ~ LogU(0.5, 50)` (`LogU(0.1, 30)`
/// for Poisson-only); `d - 1 ~ LogU(0.05, 20)`; `mu_g ~ LogU(2, 200)`
/// (`LogU(0.5, 50)` for geometric-only).
pub fn random_params<R: Rng + ?Sized>(kind: SubmodelKind, rng: &mut R) -> ZinbgtParams {
    let p0 = 0.9 * rng.random::<f64>();
    let rest = 1.0 - p0;
    let share = 0.1 + 0.8 * rng.random::<f64>();
    let m = log_uniform(0.5, 50.0, rng);
    let d = 1.0 + log_uniform(0.05, 20.0, rng);
    let mu_g = log_uniform(2.0, 200.0, rng);
    let theta = match kind {
        SubmodelKind::FullNbGeom => ZinbgtParams { p0, p1: rest * share, p2: rest - rest * share, m, d, mu_g },
        SubmodelKind::PoissonGeom => ZinbgtParams { p0, p1: rest * share, p2: rest - rest * share, m, d: 1.0, mu_g },
        SubmodelKind::NbOnly => ZinbgtParams { p0, p1: rest, p2: 0.0, m, d, mu_g: 0.0 },
        SubmodelKind::PoissonOnly => {
            ZinbgtParams { p0, p1: rest, p2: 0.0, m: log_uniform(0.1, 30.0, rng), d: 1.0, mu_g: 0.0 }
        }
        SubmodelKind::GeomOnly => {
            // Geometric written in the NB parametrization, m = d - 1.
            let d = 1.0 + log_uniform(0.5, 50.0, rng);
            ZinbgtParams { p0, p1: rest, p2: 0.0, m: d - 1.0, d, mu_g: 0.0 }
        }
        SubmodelKind::ConstantOneOnly => ZinbgtParams { p0, p1: rest, p2: 0.0, m: 0.0, d: 1.0, mu_g: 0.0 },
        SubmodelKind::AllZero => ZinbgtParams::all_zero(),
    };
    debug_assert!(theta.check_submodel(kind).is_ok(), "{kind}: {theta:?}");
    theta
}

/// The 809-gene table used for comparing initialization strategies.
pub fn default_params_table(seed: u64) -> Vec<(SubmodelKind, ZinbgtParams)> {
    let mut out = Vec::new();
    for (kind, n) in PARAMS_TABLE_LAYOUT {
        for _ in 0..n {
            let mut rng = seeds::gene_rng(seed, StreamPurpose::Hyperdraw, out.len() as u64);
            out.push((kind, random_params(kind, &mut rng)));
        }
    }
    out
}

/// `n` genes cycling through the five fitted, non-trivial submodel classes.
pub fn params_table(n: usize, seed: u64) -> Vec<(SubmodelKind, ZinbgtParams)> {
    (0..n)
        .map(|i| {
            let kind = PARAMS_TABLE_LAYOUT[i % PARAMS_TABLE_LAYOUT.len()].0;
            let mut rng = seeds::gene_rng(seed, StreamPurpose::Hyperdraw, i as u64);
            (kind, random_params(kind, &mut rng))
        })
        .collect()
}

fn tsv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, IngestError> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(IngestError::from)
}

/// Ground-truth table: `gene_id, submodel, p0, p1, p2, m, d, mu_g`.
/// `kinds` may be empty, in which case the submodel column is left blank.
pub fn write_truth_tsv(
    path: &Path,
    gene_ids: &[String],
    params: &[ZinbgtParams],
    kinds: &[SubmodelKind],
) -> Result<(), IngestError> {
    let mut w = tsv_writer(path)?;
    w.write_record(["gene_id", "submodel", "p0", "p1", "p2", "m", "d", "mu_g"])?;
    for (i, (id, t)) in gene_ids.iter().zip(params).enumerate() {
        let kind = kinds.get(i).map_or(String::new(), |k| k.name().to_string());
        w.write_record([
            id.clone(),
            kind,
            t.p0.to_string(),
            t.p1.to_string(),
            t.p2.to_string(),
            t.m.to_string(),
            t.d.to_string(),
            t.mu_g.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })
}

#[derive(Deserialize)]
struct TruthRecord {
    #[serde(default)]
    submodel: Option<String>,
    p0: f64,
    p1: f64,
    p2: f64,
    m: f64,
    d: f64,
    mu_g: f64,
}

/// Reads a table in the [`write_truth_tsv`] layout. The submodel column may be
/// blank or absent; kinds are returned only when every row names one.
pub fn read_truth_tsv(path: &Path) -> Result<(Vec<SubmodelKind>, Vec<ZinbgtParams>), IngestError> {
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_path(path)?;
    let mut kinds = Vec::new();
    let mut params = Vec::new();
    let mut all_named = true;
    for (i, rec) in r.deserialize::<TruthRecord>().enumerate() {
        let rec = rec?;
        match rec.submodel.as_deref().filter(|s| !s.is_empty()) {
            Some(name) => kinds.push(name.parse().map_err(|msg: String| IngestError::Malformed {
                line: i as u64 + 2,
                offset: 0,
                msg,
            })?),
            None => all_named = false,
        }
        params.push(ZinbgtParams { p0: rec.p0, p1: rec.p1, p2: rec.p2, m: rec.m, d: rec.d, mu_g: rec.mu_g });
    }
    if !all_named {
        kinds.clear();
    }
    Ok((kinds, params))
}

/// Mixture draws: `gene_id, rho, m1, m2, d1, d2`.
pub fn write_hyperdraw_tsv(path: &Path, gene_ids: &[String], draws: &[MixtureDraw]) -> Result<(), IngestError> {
    let mut w = tsv_writer(path)?;
    w.write_record(["gene_id", "rho", "m1", "m2", "d1", "d2"])?;
    for (id, h) in gene_ids.iter().zip(draws) {
        w.write_record([
            id.clone(),
            h.rho.to_string(),
            h.m1.to_string(),
            h.m2.to_string(),
            h.d1.to_string(),
            h.d2.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })
}
