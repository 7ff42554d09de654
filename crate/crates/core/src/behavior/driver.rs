use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::reflect::{reflect, ReflectConfig, TransitionVerdict};
use super::{BehaviorState, StateMachineGraph};
use crate::decision::{
    build_system_prompt, describe_scene, format_reminder, parse_decision, Choice, Conversation,
    Decision, DecisionBackend, DecisionCase, LaneChangeStatus, PromptConfig, SceneDescription,
};
use crate::dynamics::ControlInput;
use crate::planner::{failsafe_control, failsafe_leader, FailsafeConfig, PlanStatus, Violation};
use crate::prediction::{
    classify_intention, compute_ttc, intention_or_aggressive, predict_all, IntervalPrediction,
    MemoryBuffer, Observation, TtcRelation, TtcSample,
};
use crate::verifier::{
    remaining_options, verify_warm, LaneTask, Outcome, Verdict, VerifierConfig, VerifyError,
};
use crate::world::{lanes_of_interval, Agent, LaneId, WorldState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("the lane-change protocol needs a lane task")]
    MissingTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSource {
    Planner,
    Failsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleTrigger {
    /// Regular cycle every `n_llm` control steps.
    Scheduled,
    /// Started early because the per-step re-solve became infeasible.
    Replan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    /// Control steps per decision cycle.
    pub n_llm: u32,
    pub verifier: VerifierConfig,
    pub failsafe: FailsafeConfig,
    pub reflect: ReflectConfig,
    /// TTC below which a shrinking history marks a vehicle aggressive, s.
    pub aggressive_ttc: f64,
    pub perception_range: f64,
    /// Lateral margin added to interval predictions, m.
    pub eps_y: f64,
    /// Extra proposals allowed after a failed one in the lane-change protocol.
    pub case2_retries: u32,
    /// Distance from the source-lane center at which an abort counts as done, m.
    pub recenter_tolerance: f64,
    pub memory_capacity: usize,
    /// Conversation messages kept besides the system prompt.
    pub history_messages: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            n_llm: 5,
            verifier: VerifierConfig::default(),
            failsafe: FailsafeConfig::default(),
            reflect: ReflectConfig::default(),
            aggressive_ttc: 6.0,
            perception_range: 150.0,
            eps_y: 0.2,
            case2_retries: 2,
            recenter_tolerance: 0.3,
            memory_capacity: 8,
            history_messages: 24,
        }
    }
}

impl BehaviorConfig {
    pub fn prompt(&self) -> PromptConfig {
        PromptConfig {
            ttc_threshold: self.reflect.ttc_threshold,
            aggressive_ttc: self.aggressive_ttc,
            dwell_required: self.reflect.dwell_required,
        }
    }
}

/// Compact record of a verifier verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub outcome: Outcome,
    pub proposal: Choice,
    pub status: PlanStatus,
    pub objective: f64,
    pub max_violation: f64,
    pub worst: Option<Violation>,
    pub iterations: usize,
    pub feedback: String,
}

impl From<&Verdict> for VerdictSummary {
    fn from(v: &Verdict) -> Self {
        let d = &v.plan.diagnostics;
        Self {
            outcome: v.outcome,
            proposal: v.proposed.choice,
            status: v.plan.status,
            objective: d.objective,
            max_violation: d.max_violation,
            worst: d.worst,
            iterations: d.iterations,
            feedback: v.feedback.text.clone(),
        }
    }
}

/// One request to the decision-maker and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalLog {
    pub raw: String,
    pub latency_s: f64,
    pub parsed: Option<Decision>,
    pub parse_error: Option<String>,
    pub transition: Option<TransitionVerdict>,
    pub verdict: Option<VerdictSummary>,
    /// Message appended to the conversation in response.
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCycleLog {
    pub cycle_index: u64,
    pub step_index: u64,
    pub trigger: CycleTrigger,
    pub scene_text: String,
    pub proposals: Vec<ProposalLog>,
    /// The decision that was executed, if any proposal was approved.
    pub decision: Option<Decision>,
    pub retries: u32,
    pub source: ActionSource,
    pub transport_error: Option<String>,
    pub state_before: Option<BehaviorState>,
    pub state_after: Option<BehaviorState>,
    /// State transitions executed during the cycle, in order.
    pub executed_transitions: Vec<(BehaviorState, BehaviorState)>,
    /// True when the driver changed or held its state without consulting the backend.
    pub auto_transition: bool,
    /// Step at which a per-step re-solve went infeasible and ended this cycle.
    pub aborted_at_step: Option<u64>,
}

/// What the driver wants applied on this control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub control: ControlInput,
    pub source: ActionSource,
    /// Choice currently being executed by the planner.
    pub choice: Option<Choice>,
    pub state: Option<BehaviorState>,
    /// Index into the cycle logs when a cycle started on this step.
    pub cycle_started: Option<usize>,
    pub replanned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Plan(Choice),
    Failsafe,
}

/// Per-episode decision loop: owns the conversation, memory and behavior
/// state, and turns each world snapshot into one verified control.
pub struct Driver {
    case: DecisionCase,
    cfg: BehaviorConfig,
    backend: Box<dyn DecisionBackend>,
    conv: Conversation,
    graph: StateMachineGraph,
    memory: MemoryBuffer,
    last_memory_step: Option<u64>,
    task: Option<LaneTask>,
    state: BehaviorState,
    dwell: u32,
    mode: Mode,
    plan: Vec<ControlInput>,
    /// Last executed plan shifted by one step, used to seed the next solve.
    warm: Vec<ControlInput>,
    steps_left: u32,
    logs: Vec<DecisionCycleLog>,
    last_predictions: Vec<IntervalPrediction>,
}

impl Driver {
    pub fn new(
        case: DecisionCase,
        backend: Box<dyn DecisionBackend>,
        cfg: BehaviorConfig,
        task: Option<LaneTask>,
    ) -> Result<Self, BehaviorError> {
        if case == DecisionCase::Case2 && task.is_none() {
            return Err(BehaviorError::MissingTask);
        }
        let graph = StateMachineGraph::lane_change();
        let conv = Conversation::new(build_system_prompt(case, &graph, &cfg.prompt()));
        Ok(Self {
            case,
            cfg,
            backend,
            conv,
            graph,
            memory: MemoryBuffer::new(cfg.memory_capacity.max(3)),
            last_memory_step: None,
            task,
            state: BehaviorState::Stay,
            dwell: 0,
            mode: Mode::Failsafe,
            plan: Vec::new(),
            warm: Vec::new(),
            steps_left: 0,
            logs: Vec::new(),
            last_predictions: Vec::new(),
        })
    }

    pub fn case(&self) -> DecisionCase {
        self.case
    }

    pub fn state(&self) -> Option<BehaviorState> {
        (self.case == DecisionCase::Case2).then_some(self.state)
    }

    pub fn logs(&self) -> &[DecisionCycleLog] {
        &self.logs
    }

    pub fn conversation(&self) -> &Conversation {
        &self.conv
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    /// Predictions the most recent `act` call planned against.
    pub fn last_predictions(&self) -> &[IntervalPrediction] {
        &self.last_predictions
    }

    /// Interval predictions used for planning from snapshot `w`.
    pub fn predictions(&self, w: &WorldState) -> Vec<IntervalPrediction> {
        predict_all(
            w,
            self.cfg.verifier.horizon,
            self.cfg.eps_y,
            self.cfg.perception_range,
        )
    }

    /// Decides the control for the current step.
    pub fn act(&mut self, w: &WorldState) -> Result<StepDecision, BehaviorError> {
        let preds = self.predictions(w);
        let mut cycle_started = None;
        let mut replanned = false;
        if self.steps_left == 0 {
            cycle_started = Some(self.run_cycle(w, &preds, CycleTrigger::Scheduled)?);
        } else if let Mode::Plan(choice) = self.mode {
            let v = self.check(
                &Decision {
                    choice,
                    rationale: String::new(),
                },
                w,
                &preds,
            )?;
            if v.approved() {
                self.plan = v.plan.controls;
            } else {
                log::debug!(
                    "step {}: re-solve for {choice} infeasible, starting a new cycle",
                    w.step_index
                );
                if let Some(last) = self.logs.last_mut() {
                    last.aborted_at_step = Some(w.step_index);
                }
                replanned = true;
                cycle_started = Some(self.run_cycle(w, &preds, CycleTrigger::Replan)?);
            }
        }
        self.steps_left = self.steps_left.saturating_sub(1);
        let (control, source, choice) = match self.mode {
            Mode::Plan(choice) => (self.plan[0], ActionSource::Planner, Some(choice)),
            Mode::Failsafe => (self.failsafe(w), ActionSource::Failsafe, None),
        };
        self.warm = match self.plan.split_first() {
            Some((_, rest)) if source == ActionSource::Planner => rest
                .iter()
                .copied()
                .chain(self.plan.last().copied())
                .collect(),
            _ => Vec::new(),
        };
        self.last_predictions = preds;
        Ok(StepDecision {
            control,
            source,
            choice,
            state: self.state(),
            cycle_started,
            replanned,
        })
    }

    fn check(
        &self,
        d: &Decision,
        w: &WorldState,
        preds: &[IntervalPrediction],
    ) -> Result<Verdict, VerifyError> {
        verify_warm(d, w, preds, &self.cfg.verifier, self.task, &self.warm)
    }

    fn failsafe(&self, w: &WorldState) -> ControlInput {
        let lane = match (self.case, self.task) {
            (DecisionCase::Case2, Some(t)) if self.state == BehaviorState::Finish => t.target,
            (DecisionCase::Case2, Some(t)) => t.source,
            _ => w.ego_lane(),
        };
        let leader = failsafe_leader(w, lane);
        failsafe_control(
            &w.ego.state,
            &w.ego.params,
            leader.as_ref().map(|(s, p)| (s, p)),
            w.road.lane_center(lane),
            &self.cfg.failsafe,
        )
    }

    fn run_cycle(
        &mut self,
        w: &WorldState,
        preds: &[IntervalPrediction],
        trigger: CycleTrigger,
    ) -> Result<usize, BehaviorError> {
        self.conv.truncate_history(self.cfg.history_messages);
        let mut log = DecisionCycleLog {
            cycle_index: self.logs.len() as u64,
            step_index: w.step_index,
            trigger,
            scene_text: String::new(),
            proposals: Vec::new(),
            decision: None,
            retries: 0,
            source: ActionSource::Failsafe,
            transport_error: None,
            state_before: self.state(),
            state_after: None,
            executed_transitions: Vec::new(),
            auto_transition: false,
            aborted_at_step: None,
        };
        self.mode = Mode::Failsafe;
        self.plan.clear();
        match self.case {
            DecisionCase::Case1 => self.case1_cycle(w, preds, &mut log)?,
            DecisionCase::Case2 => self.case2_cycle(w, preds, &mut log)?,
        }
        log.retries = (log.proposals.len() as u32).saturating_sub(1);
        log.source = match self.mode {
            Mode::Plan(_) => ActionSource::Planner,
            Mode::Failsafe => ActionSource::Failsafe,
        };
        log.state_after = self.state();
        self.steps_left = self.cfg.n_llm.max(1);
        self.logs.push(log);
        Ok(self.logs.len() - 1)
    }

    /// Sends the conversation to the backend. `None` means the transport
    /// failed and the cycle must fall back to the failsafe.
    fn request(
        &mut self,
        scene: &SceneDescription,
        log: &mut DecisionCycleLog,
    ) -> Option<ProposalLog> {
        match self.backend.complete(&self.conv, scene) {
            Ok(c) => {
                self.conv.push_assistant(c.text.clone());
                Some(ProposalLog {
                    raw: c.text,
                    latency_s: c.latency.as_secs_f64(),
                    parsed: None,
                    parse_error: None,
                    transition: None,
                    verdict: None,
                    feedback: None,
                })
            }
            Err(e) => {
                log::warn!("decision backend failed: {e}; engaging failsafe");
                log.transport_error = Some(e.to_string());
                None
            }
        }
    }

    fn feedback(&mut self, entry: &mut ProposalLog, text: String) {
        self.conv.push_user(text.clone());
        entry.feedback = Some(text);
    }

    fn case1_cycle(
        &mut self,
        w: &WorldState,
        preds: &[IntervalPrediction],
        log: &mut DecisionCycleLog,
    ) -> Result<(), BehaviorError> {
        let scene = describe_scene(w, &BTreeMap::new(), self.cfg.perception_range);
        log.scene_text = scene.text.clone();
        self.conv.push_user(scene.text.clone());
        let current = w.ego_lane();
        let mut rejected: Vec<LaneId> = Vec::new();
        for _ in 0..LaneId::ALL.len() {
            let Some(mut entry) = self.request(&scene, log) else {
                return Ok(());
            };
            let decision = match parse_decision(&entry.raw, DecisionCase::Case1) {
                Ok(d) => d,
                Err(e) => {
                    entry.parse_error = Some(e.to_string());
                    self.feedback(
                        &mut entry,
                        format_reminder(DecisionCase::Case1, &e.to_string()),
                    );
                    log.proposals.push(entry);
                    continue;
                }
            };
            entry.parsed = Some(decision.clone());
            let Choice::Lane(lane) = decision.choice else {
                unreachable!("lane protocol parses lanes")
            };
            if rejected.contains(&lane) {
                let text = format!(
                    "The {lane} was already rejected in this cycle. {}",
                    options_text(&rejected, current)
                );
                self.feedback(&mut entry, text);
                log.proposals.push(entry);
                continue;
            }
            let v = self.check(&decision, w, preds)?;
            entry.verdict = Some(VerdictSummary::from(&v));
            if v.approved() {
                self.feedback(&mut entry, v.feedback.text.clone());
                log.proposals.push(entry);
                self.mode = Mode::Plan(decision.choice);
                self.plan = v.plan.controls;
                log.decision = Some(decision);
                return Ok(());
            }
            rejected.push(lane);
            let text = format!("{} {}", v.feedback.text, options_text(&rejected, current));
            self.feedback(&mut entry, text);
            log.proposals.push(entry);
            if remaining_options(&rejected, current).is_empty() {
                break;
            }
        }
        Ok(())
    }

    fn observe(&mut self, w: &WorldState, task: LaneTask) -> Context {
        let ctx = Context::new(w, task, self.cfg.perception_range);
        if self.last_memory_step.is_none_or(|s| w.step_index > s) {
            let present: Vec<u32> = w.agents.iter().map(|a| a.id).collect();
            self.memory.forget_missing(&present);
            for a in w
                .agents
                .iter()
                .filter(|a| (a.state.x - w.ego.state.x).abs() <= self.cfg.perception_range)
            {
                let ttc = ctx.relation_of(a.id).map(|(relation, ttc)| TtcSample {
                    step_index: w.step_index,
                    agent_id: a.id,
                    ttc,
                    relation,
                });
                self.memory.push(
                    a.id,
                    Observation {
                        step_index: w.step_index,
                        state: a.state,
                        ttc,
                    },
                );
            }
            self.last_memory_step = Some(w.step_index);
        }
        ctx
    }

    fn follower_window(&self, ctx: &Context) -> Vec<TtcSample> {
        ctx.follower
            .map(|(id, _)| self.memory.ttc_window(id, TtcRelation::FollowerTargetLane))
            .unwrap_or_default()
    }

    fn status(&self, ctx: &Context, task: LaneTask) -> LaneChangeStatus {
        let window = self.follower_window(ctx);
        LaneChangeStatus {
            source_lane: task.source,
            target_lane: task.target,
            state: self.state,
            dwell_cycles: self.dwell,
            allowed: self.graph.successors(self.state),
            leader_source_ttc: ctx.leader_source.map_or(f64::INFINITY, |(_, t)| t),
            leader_target_ttc: ctx.leader_target.map_or(f64::INFINITY, |(_, t)| t),
            follower_id: ctx.follower.map(|(id, _)| id),
            follower_ttc_history: window
                .iter()
                .map(|s| s.ttc.is_finite().then_some(s.ttc))
                .collect(),
            follower_intention: classify_intention(&window, self.cfg.aggressive_ttc).ok(),
            ttc_threshold: self.cfg.reflect.ttc_threshold,
            dwell_required: self.cfg.reflect.dwell_required,
        }
    }

    fn transition(&mut self, to: BehaviorState, log: &mut DecisionCycleLog) {
        log.executed_transitions.push((self.state, to));
        if to == self.state {
            self.dwell += 1;
        } else {
            self.state = to;
            self.dwell = 1;
        }
    }

    /// Keeps executing the current state with a verified plan, or the
    /// failsafe when none exists, without consulting the backend.
    fn hold(
        &mut self,
        w: &WorldState,
        preds: &[IntervalPrediction],
        log: &mut DecisionCycleLog,
    ) -> Result<(), BehaviorError> {
        let d = Decision::state(self.state);
        let v = self.check(&d, w, preds)?;
        log.scene_text = describe_scene(w, &BTreeMap::new(), self.cfg.perception_range).text;
        log.auto_transition = true;
        if v.approved() {
            self.mode = Mode::Plan(d.choice);
            self.plan = v.plan.controls;
            log.decision = Some(d);
        }
        self.dwell += 1;
        Ok(())
    }

    fn case2_cycle(
        &mut self,
        w: &WorldState,
        preds: &[IntervalPrediction],
        log: &mut DecisionCycleLog,
    ) -> Result<(), BehaviorError> {
        let task = self.task.ok_or(BehaviorError::MissingTask)?;
        let ctx = self.observe(w, task);

        let centered =
            |lane| (w.ego.state.y - w.road.lane_center(lane)).abs() <= self.cfg.recenter_tolerance;
        match self.state {
            BehaviorState::Abort if centered(task.source) => {
                log.executed_transitions
                    .push((BehaviorState::Abort, BehaviorState::Stay));
                log.auto_transition = true;
                self.state = BehaviorState::Stay;
                self.dwell = 0;
            }
            // returning to the source lane, or the change is complete: hold without asking
            BehaviorState::Abort => return self.hold(w, preds, log),
            BehaviorState::Finish if centered(task.target) => return self.hold(w, preds, log),
            _ => {}
        }

        let status = self.status(&ctx, task);
        let mut intentions = BTreeMap::new();
        if let (Some(id), Some(label)) = (status.follower_id, status.follower_intention) {
            intentions.insert(id, label);
        }
        let scene = describe_scene(w, &intentions, self.cfg.perception_range).with_status(status);
        log.scene_text = scene.text.clone();
        self.conv.push_user(scene.text.clone());

        let follower_label = ctx
            .follower
            .map(|_| intention_or_aggressive(&self.follower_window(&ctx), self.cfg.aggressive_ttc));
        let mut last_safety_failed = false;
        for _ in 0..=self.cfg.case2_retries {
            let Some(mut entry) = self.request(&scene, log) else {
                break;
            };
            let decision = match parse_decision(&entry.raw, DecisionCase::Case2) {
                Ok(d) => d,
                Err(e) => {
                    entry.parse_error = Some(e.to_string());
                    self.feedback(
                        &mut entry,
                        format_reminder(DecisionCase::Case2, &e.to_string()),
                    );
                    log.proposals.push(entry);
                    continue;
                }
            };
            entry.parsed = Some(decision.clone());
            let Choice::State(proposed) = decision.choice else {
                unreachable!("state protocol parses states")
            };
            let tv = reflect(
                proposed,
                self.state,
                &self.graph,
                ctx.min_ttc_for(proposed),
                follower_label,
                self.dwell,
                &self.cfg.reflect,
            );
            last_safety_failed = tv.safety_check.failed();
            let passed = tv.overall;
            let text = tv.feedback(&self.graph);
            entry.transition = Some(tv);
            if !passed {
                self.feedback(&mut entry, text);
                log.proposals.push(entry);
                continue;
            }
            let v = self.check(&decision, w, preds)?;
            entry.verdict = Some(VerdictSummary::from(&v));
            self.feedback(&mut entry, v.feedback.text.clone());
            log.proposals.push(entry);
            if v.approved() {
                self.transition(proposed, log);
                self.mode = Mode::Plan(decision.choice);
                self.plan = v.plan.controls;
                log.decision = Some(decision);
                return Ok(());
            }
        }
        // budget exhausted or transport failure: failsafe for this cycle
        if self.state == BehaviorState::Attempt && last_safety_failed {
            self.transition(BehaviorState::Abort, log);
        } else {
            self.dwell += 1;
        }
        Ok(())
    }
}

fn options_text(rejected: &[LaneId], current: LaneId) -> String {
    let left: Vec<&str> = remaining_options(rejected, current)
        .iter()
        .map(|l| l.label())
        .collect();
    if left.is_empty() {
        "No options remain; the ego will keep its lane and brake.".into()
    } else {
        format!("Remaining options: {}.", left.join(", "))
    }
}

/// Vehicles that matter for the lane change, with their current TTC.
struct Context {
    leader_source: Option<(u32, f64)>,
    leader_target: Option<(u32, f64)>,
    follower: Option<(u32, f64)>,
}

impl Context {
    fn new(w: &WorldState, task: LaneTask, range: f64) -> Self {
        let ego = &w.ego;
        let in_lane = |a: &Agent, lane: LaneId| {
            lanes_of_interval(a.state.y, a.state.y, a.params.width / 2.0, &w.road).contains(lane)
        };
        let near = |a: &&Agent| (a.state.x - ego.state.x).abs() <= range;
        let offset = |a: &Agent| 0.5 * (ego.params.length + a.params.length);
        let pick = |lane: LaneId, ahead: bool, relation: TtcRelation| {
            w.agents
                .iter()
                .filter(near)
                .filter(|a| in_lane(a, lane) && (a.state.x > ego.state.x) == ahead)
                .min_by(|a, b| {
                    (a.state.x - ego.state.x)
                        .abs()
                        .total_cmp(&(b.state.x - ego.state.x).abs())
                })
                .map(|a| (a.id, compute_ttc(&ego.state, &a.state, relation, offset(a))))
        };
        Self {
            leader_source: pick(task.source, true, TtcRelation::LeaderSameLane),
            leader_target: pick(task.target, true, TtcRelation::LeaderTargetLane),
            follower: pick(task.target, false, TtcRelation::FollowerTargetLane),
        }
    }

    fn relation_of(&self, id: u32) -> Option<(TtcRelation, f64)> {
        [
            (self.follower, TtcRelation::FollowerTargetLane),
            (self.leader_target, TtcRelation::LeaderTargetLane),
            (self.leader_source, TtcRelation::LeaderSameLane),
        ]
        .into_iter()
        .find_map(|(who, rel)| who.filter(|(a, _)| *a == id).map(|(_, t)| (rel, t)))
    }

    /// Minimum TTC over the vehicles relevant to `proposed`.
    fn min_ttc_for(&self, proposed: BehaviorState) -> f64 {
        let ttc = |v: Option<(u32, f64)>| v.map_or(f64::INFINITY, |(_, t)| t);
        let (src, tgt, fol) = (
            ttc(self.leader_source),
            ttc(self.leader_target),
            ttc(self.follower),
        );
        match proposed {
            BehaviorState::Stay | BehaviorState::Abort => src,
            BehaviorState::Attempt => src.min(tgt).min(fol),
            BehaviorState::Finish => tgt.min(fol),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::ScriptedBackend;
    use crate::dynamics::VehicleState;
    use crate::world::test_support::{agent, world_with};
    use crate::world::{world_step, ScriptedPolicy};

    fn driver(case: DecisionCase, task: Option<LaneTask>) -> Driver {
        Driver::new(
            case,
            Box::new(ScriptedBackend::new(case)),
            BehaviorConfig::default(),
            task,
        )
        .unwrap()
    }

    #[test]
    fn empty_road_first_cycle_approved() {
        let w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), vec![]);
        let mut d = driver(DecisionCase::Case1, None);
        let mut w = w;
        for i in 0..5 {
            let out = d.act(&w).unwrap();
            assert_eq!(out.source, ActionSource::Planner);
            assert_eq!(out.cycle_started.is_some(), i == 0);
            w = world_step(&w, &out.control).unwrap();
        }
        assert_eq!(d.logs().len(), 1);
        let log = &d.logs()[0];
        assert_eq!(log.retries, 0);
        assert_eq!(log.source, ActionSource::Planner);
        assert_eq!(
            log.decision.as_ref().unwrap().choice,
            Choice::Lane(LaneId::Middle)
        );
    }

    #[test]
    fn blocked_everywhere_falls_back() {
        let blockers = vec![
            agent(1, 8.0, 2.0, 10.0, ScriptedPolicy::constant_speed()),
            agent(2, 8.0, 6.0, 10.0, ScriptedPolicy::constant_speed()),
            agent(3, 8.0, 10.0, 10.0, ScriptedPolicy::constant_speed()),
        ];
        let w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), blockers);
        let mut d = driver(DecisionCase::Case1, None);
        let out = d.act(&w).unwrap();
        assert_eq!(out.source, ActionSource::Failsafe);
        assert_eq!(out.control.accel, -5.0);
        let log = &d.logs()[0];
        assert_eq!(log.retries, 2);
        assert!(log.decision.is_none());
    }

    #[test]
    fn case2_needs_task() {
        let b = Box::new(ScriptedBackend::new(DecisionCase::Case2));
        assert!(matches!(
            Driver::new(DecisionCase::Case2, b, BehaviorConfig::default(), None),
            Err(BehaviorError::MissingTask)
        ));
    }

    #[test]
    fn case2_empty_road_walks_to_finish() {
        let task = LaneTask {
            source: LaneId::Middle,
            target: LaneId::Left,
        };
        let mut w = world_with(VehicleState::new(0.0, 6.0, 30.0, 0.0), vec![]);
        let mut d = driver(DecisionCase::Case2, Some(task));
        let mut seen = vec![];
        for _ in 0..80 {
            let out = d.act(&w).unwrap();
            if seen.last() != out.state.as_ref() {
                seen.push(out.state.unwrap());
            }
            w = world_step(&w, &out.control).unwrap();
        }
        assert_eq!(seen, vec![BehaviorState::Attempt, BehaviorState::Finish]);
        assert!((w.ego.state.y - 2.0).abs() < 0.2, "y={}", w.ego.state.y);
        for log in d.logs() {
            for &(a, b) in &log.executed_transitions {
                assert!(StateMachineGraph::default().allows(a, b));
            }
        }
    }
}
