//! Per-gene ZINBGT fitting for count matrices.
//!
//! Each gene's counts are modelled as a mixture of a point mass at zero, a
//! hurdle negative binomial and a hurdle geometric. Every submodel is fitted
//! (directly or by EM), the minimum-BIC one is kept, and the fit can be
//! scored by a Wasserstein distance to the data and a bootstrap `p_B`.

pub mod counts;
pub mod em;
pub mod error;
pub mod ingest;
pub mod model;
mod numeric;
pub mod optim;
pub mod pipeline;
pub mod plotdata;
pub mod seeds;
pub mod simgen;
pub mod wass;

pub use counts::{classify_trivial, GeneCounts, TrivialClass};
pub use em::{fit_gene, fit_submodel, BoundaryFlags, FitConfig, FitResult, InitStrategy};
pub use error::{IngestError, ParamError, SimError};
pub use model::{
    loglik, pmf_hurdle_geom, pmf_hurdle_nb, pmf_zinbgt, sample, truncated_pmf, Bic, DiscretePmf, LogLik,
    SubmodelKind, ZinbgtParams,
};
pub use wass::{gene_wasserstein, p_b_value, wasserstein_discrete, DiagConfig, DiagnosticResult, SkipReason, Transform};
pub use ingest::{load_matrix, CellCounts, CountMatrixSource, MatrixFormat, Orientation};
pub use simgen::{simulate_nb_mixture_dataset, simulate_zinbgt_dataset, MixtureDraw, SimKind, SimSpec};
pub use pipeline::{DiagTier, PipelineConfig, ResultRow};
