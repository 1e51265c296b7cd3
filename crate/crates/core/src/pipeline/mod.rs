//! Batch orchestration: configuration, staged execution, run manifest and
//! synthetic fixtures.

mod config;
mod manifest;
mod run;
mod synth;

use thiserror::Error;

pub use config::{default_epsilons, default_thresholds, RunConfig, Stage};
pub use manifest::{DroppedWeight, RunManifest, StageRecord};
pub use run::{run, RunOptions};
pub use synth::{synth, Gradient, SynthOutput, SynthSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: {input}: {message}")]
    Stage {
        stage: Stage,
        input: String,
        message: String,
    },
    #[error("output: {0}")]
    Output(String),
    #[error("synth: {0}")]
    Synth(String),
}

impl PipelineError {
    pub(crate) fn stage(stage: Stage, input: impl Into<String>, message: impl ToString) -> Self {
        PipelineError::Stage {
            stage,
            input: input.into(),
            message: message.to_string(),
        }
    }
}
