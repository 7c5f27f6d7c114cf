//! `zinbgt`: fit, simulate and export plot data from the command line.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use zinbgt::ingest::{self, CellCounts, CountMatrixSource, Orientation};
use zinbgt::pipeline::{self, DiagTier, PipelineConfig};
use zinbgt::plotdata::{self, ExportOptions};
use zinbgt::simgen::{self, SimSpec};
use zinbgt::{DiagConfig, FitConfig, IngestError, InitStrategy, Transform};

use manifest::{RunManifest, Timings};

#[derive(Parser)]
#[command(name = "zinbgt", version, about = "Per-gene ZINBGT fitting for count matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every gene of a count matrix and write the results table.
    Fit(FitArgs),
    /// Write a synthetic count matrix with its ground truth.
    Simulate(SimulateArgs),
    /// Turn a results table into plot-data files.
    ExportPlots(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Mtx,
    Csv,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenesAs {
    Rows,
    Cols,
}

impl From<GenesAs> for Orientation {
    fn from(g: GenesAs) -> Self {
        match g {
            GenesAs::Rows => Orientation::GenesAsRows,
            GenesAs::Cols => Orientation::GenesAsColumns,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Count matrix to read.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "mtx")]
    format: FormatArg,
    /// Whether genes are the rows or the columns of the matrix.
    #[arg(long = "genes-as", value_enum, default_value = "rows")]
    genes_as: GenesAs,
    /// Delimited input has no header row.
    #[arg(long)]
    no_header: bool,
    /// Delimited input has no row-name column.
    #[arg(long)]
    no_rownames: bool,
}

impl InputArgs {
    fn source(&self) -> CountMatrixSource {
        let orientation = self.genes_as.into();
        match self.format {
            FormatArg::Mtx => CountMatrixSource::matrix_market(&self.input, orientation),
            FormatArg::Csv | FormatArg::Tsv => {
                let delim = if matches!(self.format, FormatArg::Csv) { b',' } else { b'\t' };
                CountMatrixSource::delimited(&self.input, orientation, delim)
                    .with_header(!self.no_header)
                    .with_rownames(!self.no_rownames)
            }
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// none: fits only; wass: add the Wasserstein distance; full: add p_B too.
    #[arg(long, default_value = "none")]
    diagnostics: DiagTier,
    /// Cost exponent of the Wasserstein distance.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    alpha: u8,
    #[arg(long, default_value = "log1p")]
    transform: Transform,
    /// Bootstrap samples per gene for p_B.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    boot: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "median")]
    init: InitStrategy,
    /// Only diagnose genes whose maximum count exceeds this.
    #[arg(long, default_value_t = 0)]
    min_max_count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKindArg {
    /// Draws from per-gene ZINBGT parameters.
    ParamsTable,
    /// Mixtures of two plain negative binomials.
    NbMixture,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: SimKindArg,
    /// Parameter table (TSV with p0, p1, p2, m, d, mu_g columns); defaults to
    /// the built-in 809-gene table.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Number of genes. For params-table without --params, omitting it uses
    /// the built-in 809-gene table; otherwise random parameters are drawn.
    /// Defaults to 1000 for nb-mixture.
    #[arg(long)]
    genes: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    cells: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mtx")]
    format: FormatArg,
    #[arg(long = "genes-as", value_enum, default_value = "rows")]
    genes_as: GenesAs,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Results table written by `fit`.
    #[arg(long)]
    results: PathBuf,
    /// Genes to export empirical-vs-model pmf tables for (needs --input).
    #[arg(long, value_delimiter = ',')]
    genes: Vec<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mtx")]
    format: FormatArg,
    #[arg(long = "genes-as", value_enum, default_value = "rows")]
    genes_as: GenesAs,
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    no_rownames: bool,
    #[arg(long, default_value_t = 20)]
    ternary_bins: usize,
    #[arg(long, default_value_t = 30)]
    hist_bins: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_INPUT: u8 = 2;
const EXIT_IO: u8 = 3;

fn input_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_INPUT, error: error.into() }
}

fn io_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_IO, error: error.into() }
}

/// Reading problems: missing or unreadable files are I/O, content is input.
fn read_err(e: IngestError) -> Failure {
    match e {
        IngestError::Io { .. } => io_err(e),
        IngestError::Csv(ref c) if c.is_io_error() => io_err(e),
        other => input_err(other),
    }
}

fn create_out_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(io_err)
}

fn run_fit(args: FitArgs) -> Result<(), Failure> {
    let source = args.input.source();
    let config = PipelineConfig {
        fit: FitConfig { init_strategy: args.init, ..Default::default() },
        diag: DiagConfig { alpha: args.alpha as f64, transform: args.transform, n_boot: args.boot, ..Default::default() },
        tier: args.diagnostics,
        min_max_count: args.min_max_count,
        seed: args.seed,
    };
    create_out_dir(&args.out)?;

    let t = Instant::now();
    let genes = ingest::load_matrix(&source).map_err(read_err)?;
    let ingest_s = t.elapsed().as_secs_f64();
    log::info!("read {} genes from {}", genes.len(), source.path.display());

    let threads = resolve_threads(args.threads);
    let (rows, phases) = pipeline::with_threads(threads, || pipeline::run(&genes, &config));

    let t = Instant::now();
    let tsv = args.out.join("results.tsv");
    let json = args.out.join("results.json");
    pipeline::write_results_tsv_file(&tsv, &rows).map_err(io_err)?;
    pipeline::write_results_json_file(&json, &rows).map_err(io_err)?;
    let write_s = t.elapsed().as_secs_f64();

    let manifest = RunManifest::fit(
        source,
        &config,
        threads,
        vec![tsv, json],
        Timings { ingest_s, fit_s: phases.fit_s, diagnostics_s: phases.diagnostics_s, write_s },
    );
    manifest.write(&args.out.join("manifest.json")).map_err(io_err)
}

fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, usize::from)
    }
}

fn write_counts(dir: &Path, counts: &CellCounts, format: FormatArg, orientation: Orientation) -> Result<PathBuf, Failure> {
    let (path, res) = match format {
        FormatArg::Mtx => {
            let p = dir.join("counts.mtx");
            let r = ingest::write_matrix_market(&p, counts, orientation);
            (p, r)
        }
        FormatArg::Csv => {
            let p = dir.join("counts.csv");
            let r = ingest::write_delimited(&p, counts, orientation, b',');
            (p, r)
        }
        FormatArg::Tsv => {
            let p = dir.join("counts.tsv");
            let r = ingest::write_delimited(&p, counts, orientation, b'\t');
            (p, r)
        }
    };
    res.map_err(io_err)?;
    Ok(path)
}

fn run_simulate(args: SimulateArgs) -> Result<(), Failure> {
    create_out_dir(&args.out)?;
    let threads = resolve_threads(args.threads);
    let orientation: Orientation = args.genes_as.into();
    let mut outputs = Vec::new();
    let spec = match args.kind {
        SimKindArg::ParamsTable => {
            let (kinds, table) = match &args.params {
                Some(p) => simgen::read_truth_tsv(p).map_err(read_err)?,
                None => match args.genes {
                    None => simgen::default_params_table(args.seed).into_iter().unzip(),
                    Some(n) => simgen::params_table(n, args.seed).into_iter().unzip(),
                },
            };
            let spec = SimSpec::from_params(table, args.cells, args.seed);
            let counts = pipeline::with_threads(threads, || simgen::simulate_zinbgt_cells(&spec)).map_err(input_err)?;
            outputs.push(write_counts(&args.out, &counts, args.format, orientation)?);
            let truth = args.out.join("truth.tsv");
            simgen::write_truth_tsv(&truth, &counts.gene_ids, &spec.params_table, &kinds).map_err(io_err)?;
            outputs.push(truth);
            spec
        }
        SimKindArg::NbMixture => {
            let spec = SimSpec::nb_mixture(args.genes.unwrap_or(1000), args.cells, args.seed);
            let (counts, draws) =
                pipeline::with_threads(threads, || simgen::simulate_nb_mixture_cells(&spec)).map_err(input_err)?;
            outputs.push(write_counts(&args.out, &counts, args.format, orientation)?);
            let hyper = args.out.join("hyperdraws.tsv");
            simgen::write_hyperdraw_tsv(&hyper, &counts.gene_ids, &draws).map_err(io_err)?;
            outputs.push(hyper);
            spec
        }
    };
    RunManifest::simulate(&spec, threads, outputs).write(&args.out.join("manifest.json")).map_err(io_err)
}

fn run_export(args: ExportArgs) -> Result<(), Failure> {
    let rows = pipeline::read_results_tsv(&args.results).map_err(read_err)?;
    if args.ternary_bins == 0 || args.hist_bins == 0 {
        return Err(input_err(anyhow::anyhow!("bin counts must be positive")));
    }
    let genes = if args.genes.is_empty() {
        Vec::new()
    } else {
        let Some(input) = &args.input else {
            return Err(input_err(anyhow::anyhow!("--genes needs --input to read the counts")));
        };
        let src = InputArgs {
            input: input.clone(),
            format: args.format,
            genes_as: args.genes_as,
            no_header: args.no_header,
            no_rownames: args.no_rownames,
        }
        .source();
        ingest::load_matrix(&src).map_err(read_err)?
    };

    let mut selected = Vec::new();
    let mut unknown = Vec::new();
    for id in &args.genes {
        let row = rows.iter().find(|r| &r.gene_id == id);
        let counts = genes.iter().find(|g| g.gene_id() == id);
        match (counts, row) {
            (Some(c), Some(r)) => selected.push((c, r)),
            _ => unknown.push(id.as_str()),
        }
    }
    if !unknown.is_empty() {
        return Err(input_err(anyhow::anyhow!("unknown gene ids: {}", unknown.join(", "))));
    }

    create_out_dir(&args.out)?;
    let opts = ExportOptions { ternary_bins: args.ternary_bins, hist_bins: args.hist_bins, ..Default::default() };
    plotdata::export_all(&args.out, &rows, &selected, &opts).map_err(io_err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::ExportPlots(a) => run_export(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
