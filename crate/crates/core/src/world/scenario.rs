use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{check_collision, Agent, Ego, LaneId, RoadGeometry, WorldState};
use crate::dynamics::{VehicleParams, VehicleState};

pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported scenario schema {0}, expected {SCENARIO_SCHEMA}")]
    Schema(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub lane_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    pub state: VehicleState,
    #[serde(default)]
    pub params: VehicleParams,
}

/// Interactive lane-change goal used by the state-machine protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeTask {
    pub target_lane: LaneId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub steps: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub road: RoadSpec,
    pub ego: EgoSpec,
    #[serde(default)]
    pub agents: Vec<Agent>,
    #[serde(default)]
    pub lane_change_task: Option<LaneChangeTask>,
}

fn default_dt() -> f64 {
    0.1
}

impl Scenario {
    /// Parses scenario text and returns it with the hex SHA-256 of the bytes.
    pub fn from_json(text: &str) -> Result<(Scenario, String), ScenarioError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let schema = raw.get("schema").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema(schema));
        }
        let scenario: Scenario = serde_json::from_value(raw)?;
        scenario.validate()?;
        Ok((scenario, content_hash(text.as_bytes())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Scenario, String), ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.road.lane_width.is_finite() && self.road.lane_width > self.ego.params.width) {
            return invalid("lane width must exceed the ego width".into());
        }
        self.ego
            .params
            .validate()
            .map_err(|e| ScenarioError::Invalid(format!("ego: {e}")))?;
        if !self.ego.state.is_finite() {
            return invalid("ego state must be finite".into());
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return invalid("duplicate agent id".into());
        }
        for a in &self.agents {
            a.params
                .validate()
                .map_err(|e| ScenarioError::Invalid(format!("agent {}: {e}", a.id)))?;
            a.policy
                .validate()
                .map_err(|e| ScenarioError::Invalid(format!("agent {}: {e}", a.id)))?;
            if !a.state.is_finite() || a.state.vx < 0.0 {
                return invalid(format!("agent {} has an invalid state", a.id));
            }
            if a.state.vy != 0.0 {
                return invalid(format!("agent {} must start without lateral speed", a.id));
            }
        }
        let world = self.world(None);
        if let Some(hit) = check_collision(&world) {
            return invalid(format!("ego overlaps agent {} at start", hit.agent_id));
        }
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                let ba =
                    super::Aabb::centered(a.state.x, a.state.y, a.params.length, a.params.width);
                let bb =
                    super::Aabb::centered(b.state.x, b.state.y, b.params.length, b.params.width);
                if ba.overlaps(&bb) {
                    return invalid(format!("agents {} and {} overlap at start", a.id, b.id));
                }
            }
        }
        Ok(())
    }

    /// Initial world; `seed` overrides the scenario seed when given.
    pub fn world(&self, seed: Option<u64>) -> WorldState {
        WorldState {
            step_index: 0,
            dt: self.dt,
            ego: Ego {
                state: self.ego.state,
                params: self.ego.params,
            },
            agents: self.agents.clone(),
            road: RoadGeometry::new(self.road.lane_width, self.ego.params.width),
            rng_seed: seed.unwrap_or(self.seed),
            fault: None,
        }
    }
}

pub(crate) fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
