use serde::{Deserialize, Serialize};

use super::{BehaviorState, StateMachineGraph};
use crate::prediction::IntentionLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckResult {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckResult {
    fn from_bool(ok: bool) -> Self {
        if ok {
            CheckResult::Pass
        } else {
            CheckResult::Fail
        }
    }

    pub fn failed(self) -> bool {
        self == CheckResult::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectConfig {
    /// Minimum TTC to the relevant vehicles, s.
    pub ttc_threshold: f64,
    /// Decision cycles in Attempt before Finish is accepted.
    pub dwell_required: u32,
}

impl Default for ReflectConfig {
    fn default() -> Self {
        Self {
            ttc_threshold: 3.0,
            dwell_required: 2,
        }
    }
}

/// Outcome of the three behavior-level checks on one proposed transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionVerdict {
    pub from: BehaviorState,
    pub to: BehaviorState,
    pub state_check: CheckResult,
    /// True when the edge exists but the Attempt dwell is not yet long enough.
    pub dwell_short: bool,
    pub safety_check: CheckResult,
    #[serde(with = "crate::prediction::ttc_serde")]
    pub min_ttc: f64,
    pub ttc_threshold: f64,
    pub prediction_check: CheckResult,
    pub intention: Option<IntentionLabel>,
    pub overall: bool,
}

impl TransitionVerdict {
    /// Corrective feedback naming every failed check.
    pub fn feedback(&self, graph: &StateMachineGraph) -> String {
        let mut parts = Vec::new();
        if self.state_check.failed() {
            if self.dwell_short {
                parts.push(
                    "State check failed: Finish needs more decision cycles in Attempt so the follower's reaction can be observed."
                        .to_string(),
                );
            } else {
                let allowed: Vec<&str> = graph
                    .successors(self.from)
                    .iter()
                    .map(|s| s.word())
                    .collect();
                parts.push(format!(
                    "State check failed: the transition {} -> {} is not in the state machine. Allowed next states from {}: {}.",
                    self.from,
                    self.to,
                    self.from,
                    allowed.join(", ")
                ));
            }
        }
        if self.safety_check.failed() {
            parts.push(format!(
                "Safety check failed: the minimum time to collision is {:.1} s, below the {:.1} s threshold.",
                self.min_ttc, self.ttc_threshold
            ));
        }
        if self.prediction_check.failed() {
            let label = self.intention.map_or("unknown", IntentionLabel::word);
            parts.push(format!(
                "Prediction check failed: the follower in the target lane is estimated {label}, so finishing the lane change is unsafe."
            ));
        }
        if parts.is_empty() {
            format!("All checks passed for {} -> {}.", self.from, self.to)
        } else {
            parts.push("Please reevaluate and propose another state.".into());
            parts.join(" ")
        }
    }
}

/// Runs the state, safety and prediction checks on `current -> proposed`.
///
/// `intention` is the follower's label, or `None` when there is no
/// follower in the target lane. `dwell` counts decision cycles already
/// spent in `current`.
pub fn reflect(
    proposed: BehaviorState,
    current: BehaviorState,
    graph: &StateMachineGraph,
    min_ttc: f64,
    intention: Option<IntentionLabel>,
    dwell: u32,
    cfg: &ReflectConfig,
) -> TransitionVerdict {
    let edge_ok = graph.allows(current, proposed);
    let dwell_short = edge_ok
        && current == BehaviorState::Attempt
        && proposed == BehaviorState::Finish
        && dwell < cfg.dwell_required;
    let state_check = CheckResult::from_bool(edge_ok && !dwell_short);
    let safety_check = CheckResult::from_bool(min_ttc >= cfg.ttc_threshold);
    let prediction_check = if proposed == BehaviorState::Finish {
        CheckResult::from_bool(intention.is_none_or(|l| l == IntentionLabel::Cooperative))
    } else {
        CheckResult::NotApplicable
    };
    let overall = !state_check.failed() && !safety_check.failed() && !prediction_check.failed();
    TransitionVerdict {
        from: current,
        to: proposed,
        state_check,
        dwell_short,
        safety_check,
        min_ttc,
        ttc_threshold: cfg.ttc_threshold,
        prediction_check,
        intention,
        overall,
    }
}
