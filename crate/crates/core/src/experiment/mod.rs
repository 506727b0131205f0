//! Reproducible experiment runs: config files, run directories, and the
//! train / enhance / aggregate / ablate pipelines behind the CLI.

mod ablate;
mod committee;
mod config;
mod enhance;
mod run;

pub use ablate::{run_ablation, AblationRow, AblationTable, Toggle};
pub use committee::{read_committee_manifest, run_aggregate, AggregateOutcome, MemberSelect, MemberSpec};
pub use config::{
    AggregateSection, DataConfig, EnhanceSection, ExperimentConfig, ModelSection, TrainSection,
};
pub use enhance::{run_enhance, EnhanceOutcome, TeacherSource};
pub use run::{
    load_data, run_coverage, run_train, sha256_hex, Data, RunDir, RunSummary,
};

use std::path::Path;

use crate::aggregate::AggregateError;
use crate::corpus::CorpusError;
use crate::labelfix::LabelFixError;
use crate::matrix::MatrixError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::ontology::OntologyError;
use crate::sampler::SamplerError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run directory {0} is locked by another process")]
    Locked(String),
    #[error("{0}")]
    Run(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    LabelFix(#[from] LabelFixError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. }
            | Self::Corpus(CorpusError::InvalidSpec(_))
            | Self::Model(ModelError::Config(_))
            | Self::Sampler(SamplerError::Config(_)) => 2,
            Self::Model(ModelError::Divergence { .. } | ModelError::NonFinite(_))
            | Self::Metrics(MetricsError::NonFinite) => 3,
            Self::Aggregate(AggregateError::Model(ModelError::Divergence { .. } | ModelError::NonFinite(_))) => 3,
            _ => 1,
        }
    }
}
