//! Stage orchestration behind the command-line driver.

mod config;
mod manifest;
mod planted;
mod shapes;
mod stages;

pub use config::{Overrides, PipelineConfig};
pub use manifest::{file_hash, orphans, read_manifest, Artifacts, InputHash, RunManifest};
pub use planted::{planted_corpus, user_emotion, PlantedLayout};
pub use shapes::{chatglm_shape, dry_run, qwen_shape, DryRunReport, ShapeCheck};
pub use stages::{
    assemble_training_data, cmd_ablate, cmd_build_graph, cmd_evaluate, cmd_report, cmd_simulate, cmd_train, load_run_corpus, make_backends,
    AblationRow, AblationSummary, Backends, GraphSummary, SimulateSummary, TrainSummary,
};

use crate::agents::{BroadcastError, LedgerError};
use crate::classifier::TrainError;
use crate::corpus::CorpusError;
use crate::encoding::EncodingError;
use crate::gateway::GatewayError;
use crate::graph::GraphError;
use crate::matrix_io::MatrixIoError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl PipelineError {
    /// 1 usage, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Backend(_) => 3,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Data(e.to_string())
            }
        })*
    };
}

data_error!(CorpusError, LedgerError, GraphError, MatrixIoError, std::io::Error);

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        PipelineError::Backend(e.to_string())
    }
}

impl From<EncodingError> for PipelineError {
    fn from(e: EncodingError) -> Self {
        match e {
            EncodingError::Gateway(g) => g.into(),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<BroadcastError> for PipelineError {
    fn from(e: BroadcastError) -> Self {
        match e {
            BroadcastError::Backend { .. } => PipelineError::Backend(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for PipelineError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Encoding(inner) => inner.into(),
            other => PipelineError::Data(other.to_string()),
        }
    }
}
