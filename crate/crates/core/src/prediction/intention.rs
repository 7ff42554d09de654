use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::PredictionError;
use crate::dynamics::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TtcRelation {
    LeaderSameLane,
    LeaderTargetLane,
    FollowerTargetLane,
}

impl TtcRelation {
    pub fn is_follower(self) -> bool {
        matches!(self, TtcRelation::FollowerTargetLane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtcSample {
    pub step_index: u64,
    pub agent_id: u32,
    /// Seconds; `f64::INFINITY` when the pair is not closing.
    #[serde(with = "ttc_serde")]
    pub ttc: f64,
    pub relation: TtcRelation,
}

/// JSON has no infinity; non-closing pairs are written as `null`.
pub(crate) mod ttc_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntentionLabel {
    Cooperative,
    Aggressive,
}

impl IntentionLabel {
    pub fn word(self) -> &'static str {
        match self {
            IntentionLabel::Cooperative => "cooperative",
            IntentionLabel::Aggressive => "aggressive",
        }
    }
}

/// Time to collision along the road axis.
///
/// `gap_offset` is subtracted from the center distance (typically the
/// vehicle length, making it a bumper gap). Overlapping vehicles yield 0.
pub fn compute_ttc(
    ego: &VehicleState,
    other: &VehicleState,
    relation: TtcRelation,
    gap_offset: f64,
) -> f64 {
    let (gap, closing) = if relation.is_follower() {
        (ego.x - other.x - gap_offset, other.vx - ego.vx)
    } else {
        (other.x - ego.x - gap_offset, ego.vx - other.vx)
    };
    if gap < 0.0 {
        0.0
    } else if closing > 0.0 {
        gap / closing
    } else {
        f64::INFINITY
    }
}

/// Three-sample TTC rule: a strictly shrinking TTC that is already below
/// `threshold` marks the agent as aggressive.
pub fn classify_intention(
    history: &[TtcSample],
    threshold: f64,
) -> Result<IntentionLabel, PredictionError> {
    if history.len() < 3 {
        return Err(PredictionError::NotEnoughHistory {
            have: history.len(),
            need: 3,
        });
    }
    let w = &history[history.len() - 3..];
    let latest = w[2].ttc;
    if !latest.is_finite() {
        return Ok(IntentionLabel::Cooperative);
    }
    let shrinking = w[0].ttc > w[1].ttc && w[1].ttc > w[2].ttc;
    Ok(if shrinking && latest < threshold {
        IntentionLabel::Aggressive
    } else {
        IntentionLabel::Cooperative
    })
}

/// Classification with the safety-first default for short histories.
pub fn intention_or_aggressive(history: &[TtcSample], threshold: f64) -> IntentionLabel {
    classify_intention(history, threshold).unwrap_or(IntentionLabel::Aggressive)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step_index: u64,
    pub state: VehicleState,
    pub ttc: Option<TtcSample>,
}

/// Per-agent ring buffer of recent observations, one entry per decision cycle.
#[derive(Debug, Clone)]
pub struct MemoryBuffer {
    capacity: usize,
    agents: BTreeMap<u32, VecDeque<Observation>>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 3, "memory needs room for a three-sample window");
        Self {
            capacity,
            agents: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, agent_id: u32, obs: Observation) {
        let buf = self.agents.entry(agent_id).or_default();
        if let Some(last) = buf.back() {
            assert!(
                obs.step_index > last.step_index,
                "observations must be pushed in step order"
            );
        }
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back(obs);
    }

    pub fn observations(&self, agent_id: u32) -> impl Iterator<Item = &Observation> {
        self.agents.get(&agent_id).into_iter().flatten()
    }

    /// Trailing run of TTC samples for `agent_id` that share `relation`,
    /// oldest first. A change of relation or a missing sample ends the run.
    pub fn ttc_window(&self, agent_id: u32, relation: TtcRelation) -> Vec<TtcSample> {
        let mut run: Vec<TtcSample> = self
            .agents
            .get(&agent_id)
            .into_iter()
            .flat_map(|b| b.iter().rev())
            .map_while(|o| o.ttc.filter(|t| t.relation == relation))
            .take(3)
            .collect();
        run.reverse();
        run
    }

    pub fn forget_missing(&mut self, present: &[u32]) {
        self.agents.retain(|id, _| present.contains(id));
    }
}
