use std::time::Duration;

use super::{
    parse_decision, BackendError, Choice, Completion, Conversation, DecisionBackend, DecisionCase,
    LaneChangeStatus, Role, SceneDescription, SCENE_HEADER,
};
use crate::behavior::BehaviorState;
use crate::prediction::IntentionLabel;
use crate::world::LaneId;

/// Front-gap score assigned to a lane with nobody ahead, m.
pub const GAP_CAP: f64 = 100.0;

/// Deterministic stand-in for the language model.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    case: DecisionCase,
}

impl ScriptedBackend {
    pub fn new(case: DecisionCase) -> Self {
        Self { case }
    }
}

/// Choices already proposed in the current decision cycle.
fn tried(conv: &Conversation, case: DecisionCase) -> Vec<Choice> {
    let msgs = conv.messages();
    let start = msgs
        .iter()
        .rposition(|m| m.role == Role::User && m.content.starts_with(SCENE_HEADER))
        .unwrap_or(0);
    msgs[start..]
        .iter()
        .filter(|m| m.role == Role::Assistant)
        .filter_map(|m| parse_decision(&m.content, case).ok())
        .map(|d| d.choice)
        .collect()
}

fn lane_scores(scene: &SceneDescription) -> [f64; 3] {
    let mut score = [GAP_CAP; 3];
    for f in &scene.facts {
        // vehicles alongside count as a zero gap
        if f.position.starts_with("alongside") {
            score[f.lane.index()] = 0.0;
        } else if f.dx > 0.0 {
            let s = &mut score[f.lane.index()];
            *s = s.min(f.dx);
        }
    }
    score
}

fn pick_lane(scene: &SceneDescription, tried: &[Choice]) -> (LaneId, String) {
    let score = lane_scores(scene);
    let current = scene.ego_lane;
    let mut order: Vec<LaneId> = LaneId::ALL.to_vec();
    order.sort_by_key(|l| (l.distance(current), l.index()));
    let untried: Vec<LaneId> = order
        .iter()
        .copied()
        .filter(|l| !tried.contains(&Choice::Lane(*l)))
        .collect();
    let pool = if untried.is_empty() { order } else { untried };
    let mut best = pool[0];
    for &l in &pool[1..] {
        if score[l.index()] > score[best.index()] {
            best = l;
        }
    }
    let why = format!(
        "Free road ahead: left {:.0} m, middle {:.0} m, right {:.0} m; the {} offers the most room.",
        score[0],
        score[1],
        score[2],
        best.phrase()
    );
    (best, why)
}

fn pick_state(status: &LaneChangeStatus, tried: &[Choice]) -> (BehaviorState, String) {
    use BehaviorState::*;
    let theta = status.ttc_threshold;
    let follower_ok = match status.follower_id {
        None => true,
        Some(_) => status.follower_intention == Some(IntentionLabel::Cooperative),
    };
    let target_ttc = status.leader_target_ttc.min(status.follower_ttc());
    let attempt_ready = target_ttc.min(status.leader_source_ttc) >= theta && follower_ok;
    let finish_ready =
        status.dwell_cycles >= status.dwell_required && target_ttc >= theta && follower_ok;
    let (priorities, why): (&[BehaviorState], &str) = match status.state {
        Stay if attempt_ready => (
            &[Attempt, Stay],
            "The gap in the target lane looks safe, so probe it.",
        ),
        Stay => (&[Stay], "The target lane is not safe yet, keep the lane."),
        Attempt if finish_ready => (
            &[Finish, Attempt, Abort],
            "The follower has yielded, complete the change.",
        ),
        Attempt if target_ttc < theta || !follower_ok => {
            (&[Abort, Attempt], "The follower is not yielding, go back.")
        }
        Attempt => (
            &[Attempt, Abort],
            "Keep signaling while the follower reacts.",
        ),
        Abort => (&[Stay], "Back in the original lane."),
        Finish => (&[Finish], "The lane change is complete."),
    };
    let pick = priorities
        .iter()
        .copied()
        .find(|s| !tried.contains(&Choice::State(*s)))
        .unwrap_or(priorities[0]);
    (pick, why.to_string())
}

impl DecisionBackend for ScriptedBackend {
    fn complete(
        &mut self,
        conv: &Conversation,
        scene: &SceneDescription,
    ) -> Result<Completion, BackendError> {
        let tried = tried(conv, self.case);
        let (token, why) = match (self.case, &scene.status) {
            (DecisionCase::Case1, _) => {
                let (l, why) = pick_lane(scene, &tried);
                (l.label(), why)
            }
            (DecisionCase::Case2, Some(status)) => {
                let (s, why) = pick_state(status, &tried);
                (s.word(), why)
            }
            (DecisionCase::Case2, None) => ("Stay", "No lane-change task is active.".to_string()),
        };
        Ok(Completion {
            text: format!("{why}\nDECISION: {token}"),
            latency: Duration::ZERO,
        })
    }
}
