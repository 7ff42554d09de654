//! Episode execution, trace persistence, metrics and plot-data export.

mod metrics;
mod render;
mod runner;
mod trace;

pub use metrics::{evaluate, MetricsReport};
pub use render::{render_csv, RenderRow};
pub use runner::{
    run_episode, run_episode_with, run_trials, trial_path, EpisodeOutcome, RunConfig,
};
pub use trace::{
    read_trace, AgentSummary, CycleRecord, EpisodeTrace, ExitStatus, StepRecord, TraceHeader,
    TraceRecord, TraceSummary, TraceWriter, TRACE_SCHEMA,
};

use thiserror::Error;

use crate::behavior::BehaviorError;
use crate::decision::BackendError;
use crate::world::{ScenarioError, WorldError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace record {index}: {message}")]
    Corrupt { index: usize, message: String },
    #[error("trace schema {found} does not match {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl HarnessError {
    /// Process exit status this error maps to.
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            HarnessError::Io(_) | HarnessError::Corrupt { .. } | HarnessError::World(_) => {
                ExitStatus::Io
            }
            HarnessError::Scenario(crate::world::ScenarioError::Io(_)) => ExitStatus::Io,
            _ => ExitStatus::Config,
        }
    }
}
