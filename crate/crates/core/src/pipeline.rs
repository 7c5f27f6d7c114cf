//! Whole-dataset runs: fit every gene, optionally diagnose, and tabulate.
//!
//! Every per-gene random stream is derived from the global seed and the
//! gene's index, so results do not depend on the worker count.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::GeneCounts;
use crate::em::{fit_gene, FitConfig, FitResult};
use crate::error::IngestError;
use crate::seeds::{gene_seed, StreamPurpose};
use crate::wass::{diagnose, DiagConfig, DiagnosticResult};

/// How much diagnostic work to do per gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagTier {
    #[default]
    None,
    /// Distance only.
    Wass,
    /// Distance and bootstrap `p_B`.
    Full,
}

impl fmt::Display for DiagTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagTier::None => "none",
            DiagTier::Wass => "wass",
            DiagTier::Full => "full",
        })
    }
}

impl FromStr for DiagTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(DiagTier::None),
            "wass" => Ok(DiagTier::Wass),
            "full" => Ok(DiagTier::Full),
            _ => Err(format!("unknown diagnostics tier `{s}` (expected none, wass or full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fit: FitConfig,
    pub diag: DiagConfig,
    pub tier: DiagTier,
    /// Diagnose only genes whose maximum count exceeds this.
    pub min_max_count: u64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fit: FitConfig::default(),
            diag: DiagConfig::default(),
            tier: DiagTier::None,
            min_max_count: 0,
            seed: 0,
        }
    }
}

/// Skip reason recorded for genes filtered by `min_max_count`.
pub const BELOW_MIN_MAX_COUNT: &str = "below_min_max_count";

/// Fits every gene in parallel on the current rayon pool.
pub fn fit_all(genes: &[GeneCounts], config: &FitConfig, seed: u64) -> Vec<FitResult> {
    genes
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let cfg = FitConfig { seed: gene_seed(seed, StreamPurpose::RandomInit, i as u64), ..config.clone() };
            fit_gene(g, &cfg)
        })
        .collect()
}

/// Diagnostic outcome for one gene.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagOutcome {
    NotRequested,
    Filtered,
    Done(DiagnosticResult),
}

pub fn diagnose_all(genes: &[GeneCounts], fits: &[FitResult], config: &PipelineConfig) -> Vec<DiagOutcome> {
    assert_eq!(genes.len(), fits.len());
    if config.tier == DiagTier::None {
        return vec![DiagOutcome::NotRequested; genes.len()];
    }
    genes
        .par_iter()
        .zip(fits.par_iter())
        .enumerate()
        .map(|(i, (g, f))| {
            let trivial = g.max_value() <= 1;
            if !trivial && g.max_value() <= config.min_max_count {
                return DiagOutcome::Filtered;
            }
            let cfg = DiagConfig { seed: gene_seed(config.seed, StreamPurpose::Bootstrap, i as u64), ..config.diag };
            DiagOutcome::Done(diagnose(g, &f.theta, &cfg, config.tier == DiagTier::Full))
        })
        .collect()
}

/// Wall-clock seconds spent in each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub fit_s: f64,
    pub diagnostics_s: f64,
}

/// Fit then diagnose.
pub fn run(genes: &[GeneCounts], config: &PipelineConfig) -> (Vec<ResultRow>, PhaseTimings) {
    let t0 = Instant::now();
    let fits = fit_all(genes, &config.fit, config.seed);
    let fit_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let diags = diagnose_all(genes, &fits, config);
    let diagnostics_s = t1.elapsed().as_secs_f64();
    let rows = genes.iter().zip(&fits).zip(&diags).map(|((g, f), d)| ResultRow::new(g, f, d)).collect();
    (rows, PhaseTimings { fit_s, diagnostics_s })
}

/// Runs `f` on a dedicated pool with `threads` workers (0 = available parallelism).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(f)
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub gene_id: String,
    pub n_cells: u64,
    pub n_unique: u64,
    pub max_count: u64,
    pub submodel: String,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub m: f64,
    pub d: f64,
    pub mu_g: f64,
    pub loglik: f64,
    pub bic: f64,
    pub n_iter: u32,
    pub converged: bool,
    pub boundary_flags: String,
    pub wasserstein: Option<f64>,
    pub p_b: Option<f64>,
    pub diag_skipped_reason: Option<String>,
}

pub const RESULT_COLUMNS: [&str; 19] = [
    "gene_id",
    "n_cells",
    "n_unique",
    "max_count",
    "submodel",
    "p0",
    "p1",
    "p2",
    "m",
    "d",
    "mu_g",
    "loglik",
    "bic",
    "n_iter",
    "converged",
    "boundary_flags",
    "wasserstein",
    "p_b",
    "diag_skipped_reason",
];

impl ResultRow {
    pub fn new(g: &GeneCounts, f: &FitResult, d: &DiagOutcome) -> Self {
        let (wasserstein, p_b, reason) = match d {
            DiagOutcome::NotRequested => (None, None, None),
            DiagOutcome::Filtered => (None, None, Some(BELOW_MIN_MAX_COUNT.to_string())),
            DiagOutcome::Done(r) => (r.wasserstein, r.p_b, r.skipped.map(|s| s.name().to_string())),
        };
        let t = &f.theta;
        ResultRow {
            gene_id: g.gene_id().to_string(),
            n_cells: g.n_cells(),
            n_unique: g.n_unique() as u64,
            max_count: g.max_value(),
            submodel: f.submodel.name().to_string(),
            p0: t.p0,
            p1: t.p1,
            p2: t.p2,
            m: t.m,
            d: t.d,
            mu_g: t.mu_g,
            loglik: f.loglik.value(),
            bic: f.bic.value(),
            n_iter: f.n_iter,
            converged: f.converged,
            boundary_flags: f.boundary.to_string(),
            wasserstein,
            p_b,
            diag_skipped_reason: reason,
        }
    }

    pub fn theta(&self) -> crate::model::ZinbgtParams {
        crate::model::ZinbgtParams { p0: self.p0, p1: self.p1, p2: self.p2, m: self.m, d: self.d, mu_g: self.mu_g }
    }
}

fn io_err(path: &Path, e: impl Into<std::io::Error>) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source: e.into() }
}

/// Tab-separated results with a header line; empty cells for absent values.
pub fn write_results_tsv<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_tsv_file(path: &Path, rows: &[ResultRow]) -> Result<(), IngestError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_results_tsv(std::io::BufWriter::new(f), rows).map_err(IngestError::from)
}

pub fn write_results_json_file(path: &Path, rows: &[ResultRow]) -> Result<(), IngestError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, rows).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn read_results_tsv(path: &Path) -> Result<Vec<ResultRow>, IngestError> {
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_COLUMNS {
        return Err(IngestError::Header { line: 1, msg: format!("unexpected results columns {header:?}") });
    }
    r.deserialize().map(|row| row.map_err(IngestError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genes() -> Vec<GeneCounts> {
        vec![
            GeneCounts::from_pairs("zero", [(0, 40)]),
            GeneCounts::from_pairs("binary", [(0, 30), (1, 10)]),
            GeneCounts::from_values("busy", &crate::model::sample(
                &crate::model::ZinbgtParams::new(0.3, 0.5, 0.2, 4.0, 2.0, 30.0).unwrap(),
                400,
                3,
            )),
        ]
    }

    #[test]
    fn trivial_rows_have_empty_diagnostics() {
        let cfg = PipelineConfig { tier: DiagTier::Full, diag: DiagConfig { n_boot: 10, ..Default::default() }, ..Default::default() };
        let (rows, _) = run(&genes(), &cfg);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].submodel, "AllZero");
        assert_eq!(rows[0].diag_skipped_reason.as_deref(), Some("all_zero"));
        assert_eq!(rows[1].diag_skipped_reason.as_deref(), Some("zero_one_only"));
        assert!(rows[0].wasserstein.is_none() && rows[1].p_b.is_none());
        assert!(rows[2].wasserstein.is_some() && rows[2].p_b.is_some());

        let mut buf = Vec::new();
        write_results_tsv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join("\t"));
        assert!(text.lines().nth(1).unwrap().ends_with("\t\t\tall_zero"));
    }

    #[test]
    fn tsv_round_trip() {
        let cfg = PipelineConfig { tier: DiagTier::Wass, min_max_count: 1000, ..Default::default() };
        let (rows, _) = run(&genes(), &cfg);
        assert_eq!(rows[2].diag_skipped_reason.as_deref(), Some(BELOW_MIN_MAX_COUNT));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.tsv");
        write_results_tsv_file(&p, &rows).unwrap();
        assert_eq!(read_results_tsv(&p).unwrap(), rows);
    }

    #[test]
    fn diagnostics_do_not_touch_fits() {
        let g = genes();
        let (a, _) = run(&g, &PipelineConfig::default());
        let (b, _) = run(&g, &PipelineConfig { tier: DiagTier::Full, ..Default::default() });
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.theta(), y.theta());
            assert_eq!(x.loglik.to_bits(), y.loglik.to_bits());
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let g = genes();
        let cfg = PipelineConfig {
            tier: DiagTier::Full,
            fit: FitConfig { init_strategy: crate::em::InitStrategy::Random, ..Default::default() },
            diag: DiagConfig { n_boot: 10, ..Default::default() },
            ..Default::default()
        };
        let one = with_threads(1, || run(&g, &cfg).0);
        let three = with_threads(3, || run(&g, &cfg).0);
        assert_eq!(one, three);
    }
}
