//! Interval forecasts for the trajectory optimizer and TTC-based intention
//! estimates for the interactive lane change.

mod intention;
mod interval;

pub(crate) use intention::ttc_serde;
pub use intention::{
    classify_intention, compute_ttc, intention_or_aggressive, IntentionLabel, MemoryBuffer,
    Observation, TtcRelation, TtcSample,
};
pub use interval::{
    predict_agent, predict_all, predict_intervals, ContainmentMonitor, ContainmentViolation,
    IntervalPrediction, PositionBox,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("no agent with id {0}")]
    UnknownAgent(u32),
    #[error("prediction horizon must be at least one step")]
    EmptyHorizon,
    #[error("need {need} TTC samples, have {have}")]
    NotEnoughHistory { have: usize, need: usize },
}
