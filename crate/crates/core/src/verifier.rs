//! Approves a proposed behavior iff the trajectory problem it induces is
//! feasible, and phrases the outcome as feedback for the decision-maker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::BehaviorState;
use crate::decision::{Choice, Decision};
use crate::dynamics::ControlInput;
use crate::planner::{
    solve_lane_conditioned, ConstraintKind, InitStrategy, LateralTarget, MpcConfig, MpcProblem,
    PlanError, PlanResult,
};
use crate::prediction::IntervalPrediction;
use crate::world::{LaneId, RoadGeometry, WorldState};

/// Version of the feedback wording below.
pub const FEEDBACK_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("state decision {0} needs an active lane-change task")]
    NoLaneTask(BehaviorState),
    #[error("lanes {0} and {1} are not adjacent")]
    NotAdjacent(LaneId, LaneId),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    /// Planning horizon in control steps.
    pub horizon: usize,
    pub mpc: MpcConfig,
    /// Half-width of the lateral band around the boundary while attempting, m.
    pub attempt_half_band: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            mpc: MpcConfig::default(),
            attempt_half_band: 1.0,
        }
    }
}

/// Source and target lane of the interactive lane change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneTask {
    pub source: LaneId,
    pub target: LaneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackFields {
    pub outcome: Outcome,
    pub proposal: Choice,
    pub constraint: Option<ConstraintKind>,
    pub step: Option<usize>,
    pub magnitude: Option<f64>,
    pub agent_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub text: String,
    pub structured: FeedbackFields,
}

impl FeedbackMessage {
    fn from_plan(proposal: Choice, plan: &PlanResult) -> Self {
        if plan.is_feasible() {
            return Self {
                text: format!(
                    "Verification passed: the verifier is happy with the proposed {proposal}."
                ),
                structured: FeedbackFields {
                    outcome: Outcome::Approved,
                    proposal,
                    constraint: None,
                    step: None,
                    magnitude: None,
                    agent_id: None,
                },
            };
        }
        let worst = plan.diagnostics.worst;
        let reason = match worst {
            Some(v) => {
                let against = v
                    .agent_id
                    .map(|id| format!(" against vehicle {id}"))
                    .unwrap_or_default();
                format!(
                    "the {} constraint{against} is violated by {:.2} m at step {} of the horizon",
                    v.kind.describe(),
                    v.magnitude,
                    v.step
                )
            }
            None => "no safe trajectory was found".to_string(),
        };
        Self {
            text: format!(
                "Verification failed for the proposed {proposal}: {reason}. \
                 Please reevaluate the scenario and propose a different behavior."
            ),
            structured: FeedbackFields {
                outcome: Outcome::Rejected,
                proposal,
                constraint: worst.map(|v| v.kind),
                step: worst.map(|v| v.step),
                magnitude: worst.map(|v| v.magnitude),
                agent_id: worst.and_then(|v| v.agent_id),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub proposed: Decision,
    pub plan: PlanResult,
    pub feedback: FeedbackMessage,
}

impl Verdict {
    pub fn approved(&self) -> bool {
        self.outcome == Outcome::Approved
    }
}

/// Lane label and lateral target implied by a decision.
pub fn setpoint(
    choice: Choice,
    road: &RoadGeometry,
    task: Option<LaneTask>,
    half_band: f64,
) -> Result<(LaneId, LateralTarget), VerifyError> {
    match choice {
        Choice::Lane(l) => Ok((l, LateralTarget::lane(road, l))),
        Choice::State(s) => {
            let t = task.ok_or(VerifyError::NoLaneTask(s))?;
            Ok(match s {
                BehaviorState::Stay | BehaviorState::Abort => {
                    (t.source, LateralTarget::lane(road, t.source))
                }
                BehaviorState::Finish => (t.target, LateralTarget::lane(road, t.target)),
                BehaviorState::Attempt => {
                    if t.source.distance(t.target) != 1 {
                        return Err(VerifyError::NotAdjacent(t.source, t.target));
                    }
                    (
                        t.target,
                        LateralTarget::straddle(road, t.source, t.target, half_band),
                    )
                }
            })
        }
    }
}

/// Trajectory problem induced by `choice` from the current snapshot.
pub fn problem_for(
    choice: Choice,
    w: &WorldState,
    predictions: &[IntervalPrediction],
    cfg: &VerifierConfig,
    task: Option<LaneTask>,
) -> Result<MpcProblem, VerifyError> {
    let (lane, target) = setpoint(choice, &w.road, task, cfg.attempt_half_band)?;
    let mut p = MpcProblem::for_lane(
        w.ego.state,
        lane,
        cfg.horizon,
        w.dt,
        predictions.to_vec(),
        w.road,
        w.ego.params,
        cfg.mpc,
    );
    p.target = target;
    Ok(p)
}

/// Verifies an already-built problem on behalf of `d`.
pub fn verify_problem(d: &Decision, p: &MpcProblem) -> Result<Verdict, VerifyError> {
    let plan = solve_lane_conditioned(p)?;
    let feedback = FeedbackMessage::from_plan(d.choice, &plan);
    let outcome = if plan.is_feasible() {
        Outcome::Approved
    } else {
        Outcome::Rejected
    };
    Ok(Verdict {
        outcome,
        proposed: d.clone(),
        plan,
        feedback,
    })
}

pub fn verify(
    d: &Decision,
    w: &WorldState,
    predictions: &[IntervalPrediction],
    cfg: &VerifierConfig,
    task: Option<LaneTask>,
) -> Result<Verdict, VerifyError> {
    verify_problem(d, &problem_for(d.choice, w, predictions, cfg, task)?)
}

/// Like [`verify`], seeding the solver with `warm` (typically the previous
/// plan shifted by one step). The zero-control start is still tried when
/// the warm start leads nowhere, so a rejection means the same as in `verify`.
pub fn verify_warm(
    d: &Decision,
    w: &WorldState,
    predictions: &[IntervalPrediction],
    cfg: &VerifierConfig,
    task: Option<LaneTask>,
    warm: &[ControlInput],
) -> Result<Verdict, VerifyError> {
    let mut p = problem_for(d.choice, w, predictions, cfg, task)?;
    if warm.len() == p.k {
        p.warm_start = Some(warm.to_vec());
        p.cfg.init_strategy = InitStrategy::WarmStart;
    }
    verify_problem(d, &p)
}

/// Lanes not yet rejected, current lane first, then nearest; equally
/// near lanes go left before right.
pub fn remaining_options(rejected: &[LaneId], current: LaneId) -> Vec<LaneId> {
    let mut out: Vec<LaneId> = LaneId::ALL
        .into_iter()
        .filter(|l| !rejected.contains(l))
        .collect();
    out.sort_by_key(|l| (l.distance(current), l.index()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;
    use crate::planner::{grid_oracle, PlanStatus};
    use crate::prediction::predict_all;
    use crate::world::test_support::{agent, world_with};
    use crate::world::ScriptedPolicy;

    fn preds(w: &WorldState, k: usize) -> Vec<IntervalPrediction> {
        predict_all(w, k, 0.2, f64::INFINITY)
    }

    #[test]
    fn empty_road_keep_lane_is_approved() {
        let w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), vec![]);
        let v = verify(
            &Decision::lane(LaneId::Middle),
            &w,
            &[],
            &VerifierConfig::default(),
            None,
        )
        .unwrap();
        assert!(v.approved());
        assert!(v
            .feedback
            .text
            .contains("the verifier is happy with the proposed"));
        assert_eq!(v.plan.status, PlanStatus::Feasible);
    }

    #[test]
    fn blocked_lane_rejection_names_agent() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            vec![agent(7, 2.0, 2.0, 30.0, ScriptedPolicy::constant_speed())],
        );
        let cfg = VerifierConfig::default();
        let v = verify(
            &Decision::lane(LaneId::Left),
            &w,
            &preds(&w, cfg.horizon),
            &cfg,
            None,
        )
        .unwrap();
        assert!(!v.approved());
        let s = &v.feedback.structured;
        assert_eq!(s.constraint, Some(ConstraintKind::Safety));
        assert_eq!(s.agent_id, Some(7));
        assert!(v
            .feedback
            .text
            .contains("safety constraint against vehicle 7"));
        assert!(v.feedback.text.contains("reevaluate"));
        let worst = v.plan.diagnostics.worst.unwrap();
        assert_eq!(s.step, Some(worst.step));
        assert_eq!(s.magnitude, Some(worst.magnitude));
    }

    #[test]
    fn keep_lane_objective_matches_oracle() {
        let w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), vec![]);
        let cfg = VerifierConfig {
            horizon: 4,
            ..Default::default()
        };
        let d = Decision::lane(LaneId::Middle);
        let v = verify(&d, &w, &[], &cfg, None).unwrap();
        let p = problem_for(d.choice, &w, &[], &cfg, None).unwrap();
        let oracle = grid_oracle(&p, &[-5.0, -2.5, 0.0, 1.5, 3.0], &[-0.1, 0.0, 0.1]).unwrap();
        assert!(
            (v.plan.objective() - oracle.plan.objective()).abs()
                <= 1e-3 * oracle.plan.objective().abs()
        );
    }

    #[test]
    fn state_decisions_need_a_task() {
        let w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), vec![]);
        let cfg = VerifierConfig::default();
        assert_eq!(
            verify(
                &Decision::state(BehaviorState::Attempt),
                &w,
                &[],
                &cfg,
                None
            )
            .unwrap_err(),
            VerifyError::NoLaneTask(BehaviorState::Attempt)
        );
        let task = LaneTask {
            source: LaneId::Right,
            target: LaneId::Left,
        };
        assert!(matches!(
            verify(
                &Decision::state(BehaviorState::Attempt),
                &w,
                &[],
                &cfg,
                Some(task)
            ),
            Err(VerifyError::NotAdjacent(..))
        ));
    }

    #[test]
    fn attempt_targets_the_boundary() {
        let road = RoadGeometry::new(4.0, 2.0);
        let task = LaneTask {
            source: LaneId::Middle,
            target: LaneId::Left,
        };
        let (_, t) = setpoint(
            Choice::State(BehaviorState::Attempt),
            &road,
            Some(task),
            1.0,
        )
        .unwrap();
        assert_eq!(t.center, 4.0);
        assert!(t.lanes.contains(LaneId::Left) && t.lanes.contains(LaneId::Middle));
    }

    #[test]
    fn option_order() {
        use LaneId::*;
        assert_eq!(remaining_options(&[Left], Middle), vec![Middle, Right]);
        assert_eq!(remaining_options(&[Left, Middle, Right], Middle), vec![]);
        assert_eq!(remaining_options(&[], Middle), vec![Middle, Left, Right]);
        assert_eq!(remaining_options(&[], Left), vec![Left, Middle, Right]);
    }
}
