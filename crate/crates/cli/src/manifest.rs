use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use zinbgt::pipeline::PipelineConfig;
use zinbgt::simgen::{SimKind, SimSpec, PARAMS_TABLE_VERSION};
use zinbgt::{CountMatrixSource, DiagConfig, FitConfig};

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timings {
    pub ingest_s: f64,
    pub fit_s: f64,
    pub diagnostics_s: f64,
    pub write_s: f64,
}

/// Everything needed to rerun a command, plus how long it took.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<CountMatrixSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    /// `None` when diagnostics were disabled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSection>,
    pub workers: usize,
    pub seed: u64,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

#[derive(Debug, Serialize)]
pub struct DiagSection {
    pub tier: String,
    pub config: DiagConfig,
    pub min_max_count: u64,
}

#[derive(Debug, Serialize)]
pub struct SimSection {
    pub kind: SimKind,
    pub n_genes: usize,
    pub n_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_table_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyper: Option<zinbgt::simgen::MixtureHyper>,
}

impl RunManifest {
    pub fn fit(
        input: CountMatrixSource,
        config: &PipelineConfig,
        workers: usize,
        outputs: Vec<PathBuf>,
        timings: Timings,
    ) -> Self {
        let diagnostics = (config.tier != zinbgt::DiagTier::None).then(|| DiagSection {
            tier: config.tier.to_string(),
            config: config.diag,
            min_max_count: config.min_max_count,
        });
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: "fit",
            input: Some(input),
            fit: Some(config.fit.clone()),
            diagnostics,
            simulation: None,
            workers,
            seed: config.seed,
            outputs,
            timings: Some(timings),
        }
    }

    pub fn simulate(spec: &SimSpec, workers: usize, outputs: Vec<PathBuf>) -> Self {
        let table = spec.kind == SimKind::FromParamsTable;
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: "simulate",
            input: None,
            fit: None,
            diagnostics: None,
            simulation: Some(SimSection {
                kind: spec.kind,
                n_genes: spec.n_genes,
                n_cells: spec.n_cells,
                params_table_version: table.then_some(PARAMS_TABLE_VERSION),
                hyper: (!table).then_some(spec.hyper),
            }),
            workers,
            seed: spec.seed,
            outputs,
            timings: None,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
