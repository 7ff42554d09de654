use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorState;
use crate::prediction::{compute_ttc, IntentionLabel, TtcRelation};
use crate::world::{lane_of, LaneId, WorldState};

/// First words of every scene message; marks the start of a decision cycle
/// in the conversation.
pub const SCENE_HEADER: &str = "Scene at step";

/// One surrounding vehicle as seen from the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFact {
    pub agent_id: u32,
    pub lane: LaneId,
    /// Longitudinal offset of the agent from the ego, m (positive ahead).
    pub dx: f64,
    /// Agent speed minus ego speed, m/s.
    pub dv: f64,
    #[serde(with = "crate::prediction::ttc_serde")]
    pub ttc: f64,
    pub position: String,
    pub relative_speed: String,
    pub intention: Option<IntentionLabel>,
}

/// Case-2 context the decision-maker needs beyond the raw scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeStatus {
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub state: BehaviorState,
    /// Decision cycles spent in `state` so far.
    pub dwell_cycles: u32,
    pub allowed: Vec<BehaviorState>,
    #[serde(with = "crate::prediction::ttc_serde")]
    pub leader_source_ttc: f64,
    #[serde(with = "crate::prediction::ttc_serde")]
    pub leader_target_ttc: f64,
    pub follower_id: Option<u32>,
    pub follower_ttc_history: Vec<Option<f64>>,
    pub follower_intention: Option<IntentionLabel>,
    pub ttc_threshold: f64,
    pub dwell_required: u32,
}

impl LaneChangeStatus {
    pub fn follower_ttc(&self) -> f64 {
        match self.follower_ttc_history.last() {
            Some(Some(t)) => *t,
            _ => f64::INFINITY,
        }
    }

    fn render(&self, out: &mut String) {
        let fmt_ttc = |t: f64| {
            if t.is_finite() {
                format!("{t:.1} s")
            } else {
                "no closing".to_string()
            }
        };
        let _ = writeln!(
            out,
            "Lane-change task: from the {} to the {}.",
            self.source_lane.phrase(),
            self.target_lane.phrase()
        );
        let _ = writeln!(
            out,
            "Current behavior state: {} (held for {} decision cycles).",
            self.state, self.dwell_cycles
        );
        let allowed: Vec<&str> = self.allowed.iter().map(|s| s.word()).collect();
        let _ = writeln!(out, "Allowed next states: {}.", allowed.join(", "));
        let _ = writeln!(
            out,
            "Leader in the source lane: {}.",
            fmt_ttc(self.leader_source_ttc)
        );
        let _ = writeln!(
            out,
            "Leader in the target lane: {}.",
            fmt_ttc(self.leader_target_ttc)
        );
        match self.follower_id {
            None => {
                let _ = writeln!(out, "Follower in the target lane: none.");
            }
            Some(id) => {
                let hist: Vec<String> = self
                    .follower_ttc_history
                    .iter()
                    .map(|t| t.map_or("inf".to_string(), |t| format!("{t:.1}")))
                    .collect();
                let label = self
                    .follower_intention
                    .map_or("unknown", IntentionLabel::word);
                let _ = writeln!(
                    out,
                    "Follower in the target lane: vehicle {id}, TTC history [{}] s, estimated intention {label}.",
                    hist.join(", ")
                );
            }
        }
        let _ = writeln!(
            out,
            "Safety threshold: TTC of at least {:.1} s. Finish requires {} decision cycles in Attempt.",
            self.ttc_threshold, self.dwell_required
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub step_index: u64,
    pub ego_lane: LaneId,
    pub ego_speed: f64,
    pub facts: Vec<SceneFact>,
    pub status: Option<LaneChangeStatus>,
    pub text: String,
}

impl SceneDescription {
    pub fn with_status(mut self, status: LaneChangeStatus) -> Self {
        self.status = Some(status);
        self.text = render(
            self.step_index,
            self.ego_lane,
            self.ego_speed,
            &self.facts,
            self.status.as_ref(),
        );
        self
    }
}

fn speed_phrase(dv: f64) -> &'static str {
    if dv > 0.5 {
        "driving faster than the ego"
    } else if dv < -0.5 {
        "driving slower than the ego"
    } else {
        "driving at about the same speed as the ego"
    }
}

fn render(
    step: u64,
    ego_lane: LaneId,
    ego_speed: f64,
    facts: &[SceneFact],
    status: Option<&LaneChangeStatus>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCENE_HEADER} {step}.");
    let _ = writeln!(
        out,
        "The ego is driving in the {} at {ego_speed:.1} m/s.",
        ego_lane.phrase()
    );
    if facts.is_empty() {
        let _ = writeln!(out, "All lanes are clear within the perception range.");
    }
    for f in facts {
        let ttc = if f.ttc.is_finite() {
            format!("time to collision approximately {:.1} seconds", f.ttc)
        } else {
            "no closing".to_string()
        };
        let gap = if f.dx >= 0.0 {
            format!("{:.1} m ahead", f.dx)
        } else {
            format!("{:.1} m behind", -f.dx)
        };
        let _ = write!(
            out,
            "- Vehicle {} is driving {}, {gap}, {} ({:.1} m/s), {ttc}",
            f.agent_id,
            f.position,
            f.relative_speed,
            ego_speed + f.dv
        );
        if let Some(label) = f.intention {
            let _ = write!(out, ", estimated intention {}", label.word());
        }
        out.push_str(".\n");
    }
    if let Some(s) = status {
        s.render(&mut out);
    }
    out
}

/// Text description of every agent within `perception_range` of the ego.
/// Facts are ordered by lane (left to right), then by distance.
pub fn describe_scene(
    w: &WorldState,
    intentions: &BTreeMap<u32, IntentionLabel>,
    perception_range: f64,
) -> SceneDescription {
    let ego = &w.ego.state;
    let ego_lane = w.ego_lane();
    let mut facts: Vec<SceneFact> = w
        .agents
        .iter()
        .filter(|a| (a.state.x - ego.x).abs() <= perception_range)
        .map(|a| {
            let lane = lane_of(a.state.y, &w.road);
            let dx = a.state.x - ego.x;
            let offset = 0.5 * (w.ego.params.length + a.params.length);
            let where_ = if lane == ego_lane {
                format!("in the {}", lane.phrase())
            } else {
                format!("on the {}", lane.phrase())
            };
            let (position, ttc) = if dx.abs() < offset {
                (format!("alongside the ego {where_}"), f64::INFINITY)
            } else if dx > 0.0 {
                (
                    format!("in front of the ego {where_}"),
                    compute_ttc(ego, &a.state, TtcRelation::LeaderSameLane, offset),
                )
            } else {
                (
                    format!("behind the ego {where_}"),
                    compute_ttc(ego, &a.state, TtcRelation::FollowerTargetLane, offset),
                )
            };
            let dv = a.state.vx - ego.vx;
            SceneFact {
                agent_id: a.id,
                lane,
                dx,
                dv,
                ttc,
                position,
                relative_speed: speed_phrase(dv).to_string(),
                intention: intentions.get(&a.id).copied(),
            }
        })
        .collect();
    facts.sort_by(|a, b| {
        a.lane
            .cmp(&b.lane)
            .then(a.dx.abs().total_cmp(&b.dx.abs()))
            .then(a.agent_id.cmp(&b.agent_id))
    });
    let text = render(w.step_index, ego_lane, ego.speed(), &facts, None);
    SceneDescription {
        step_index: w.step_index,
        ego_lane,
        ego_speed: ego.speed(),
        facts,
        status: None,
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;
    use crate::world::test_support::{agent, world_with};
    use crate::world::ScriptedPolicy;

    #[test]
    fn empty_road() {
        let w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), vec![]);
        let s = describe_scene(&w, &BTreeMap::new(), 150.0);
        assert!(s.facts.is_empty());
        assert!(s.text.contains("All lanes are clear"));
        assert!(s.text.starts_with(SCENE_HEADER));
    }

    #[test]
    fn slower_leader_phrases() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            vec![agent(1, 30.0, 6.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        let s = describe_scene(&w, &BTreeMap::new(), 150.0);
        assert!(s.text.contains("in front of the ego"), "{}", s.text);
        assert!(s.text.contains("slower than the ego"));
        assert!((s.facts[0].ttc - 2.5).abs() < 1e-9);
    }

    #[test]
    fn range_filter_and_ordering() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            vec![
                agent(1, 300.0, 6.0, 30.0, ScriptedPolicy::constant_speed()),
                agent(2, 40.0, 10.0, 30.0, ScriptedPolicy::constant_speed()),
                agent(3, -20.0, 2.0, 35.0, ScriptedPolicy::constant_speed()),
                agent(4, 10.0, 2.0, 30.0, ScriptedPolicy::constant_speed()),
            ],
        );
        let mut intent = BTreeMap::new();
        intent.insert(3, IntentionLabel::Aggressive);
        let s = describe_scene(&w, &intent, 150.0);
        let ids: Vec<u32> = s.facts.iter().map(|f| f.agent_id).collect();
        assert_eq!(ids, vec![4, 3, 2]);
        assert!(s.text.contains("behind the ego on the left lane"));
        assert!(s.text.contains("estimated intention aggressive"));
    }

    #[test]
    fn deterministic_text() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            vec![agent(1, 30.0, 6.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        assert_eq!(
            describe_scene(&w, &BTreeMap::new(), 150.0),
            describe_scene(&w, &BTreeMap::new(), 150.0)
        );
    }
}
