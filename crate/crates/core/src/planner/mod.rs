//! Lane-conditioned receding-horizon trajectory optimization.
//!
//! [`solve_lane_conditioned`] is the production solver: sequential
//! linearization of the bicycle model with a conic subproblem per round.
//! [`solve_naive_minlp`] enumerates the integer lane choice on top of it and
//! [`grid_oracle`] is the brute-force reference used by the tests.
//! [`failsafe_control`] is the fallback when no lane is verifiable.

mod constraints;
mod failsafe;
mod oracle;
mod scp;

pub use constraints::{evaluate, Evaluation};
pub use failsafe::{failsafe_control, failsafe_leader, FailsafeConfig};
pub use oracle::{grid_oracle, OracleOutcome};
pub use scp::solve_lane_conditioned;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlInput, VehicleParams, VehicleState};
use crate::prediction::IntervalPrediction;
use crate::world::{LaneId, LaneSet, RoadGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("grid oracle limited to k <= 4 and 5x5 grids, got k={k}, grid {accel}x{steer}")]
    OracleTooLarge {
        k: usize,
        accel: usize,
        steer: usize,
    },
}

/// How the separation constraint against an uncertain agent is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SafetyForm {
    /// Entirely behind `x_lo - L` or entirely ahead of `x_hi + L`.
    #[default]
    Disjunctive,
    /// `|x - x_lo| >= L` and `|x - x_hi| >= L`; admits positions inside a
    /// wide interval. Kept for comparison only.
    EndpointDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Start every solve from the all-zero control sequence.
    #[default]
    ZeroControl,
    /// Try the caller's warm start first, then the zero sequence.
    WarmStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Minimum longitudinal center separation, m.
    pub l_safe: f64,
    /// Largest constraint violation still reported as feasible, m.
    pub eps_feas: f64,
    /// First step bound by the terminal-lane constraint; `None` means `ceil(k/2)`.
    pub k_commit: Option<usize>,
    pub w_smooth: f64,
    pub w_lat: f64,
    pub max_iters: usize,
    pub init_strategy: InitStrategy,
    pub safety_form: SafetyForm,
    /// L1 penalty on constraint slack inside the subproblems.
    pub slack_penalty: f64,
    /// Cap on disjunction branch assignments tried per solve.
    pub max_branch_sets: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            l_safe: 5.0,
            eps_feas: 1e-3,
            k_commit: None,
            w_smooth: 1.0,
            w_lat: 0.05,
            max_iters: 30,
            init_strategy: InitStrategy::ZeroControl,
            safety_form: SafetyForm::Disjunctive,
            slack_penalty: 100.0,
            max_branch_sets: 8,
        }
    }
}

/// Lateral goal of a plan: the tracking setpoint, the band the ego must be
/// inside from the commit step on, and the lanes whose traffic always counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralTarget {
    pub center: f64,
    pub band: (f64, f64),
    #[serde(with = "lane_set_serde")]
    pub lanes: LaneSet,
}

impl LateralTarget {
    pub fn lane(road: &RoadGeometry, lane: LaneId) -> Self {
        let (lo, hi) = road.lane_bounds(lane);
        Self {
            center: road.lane_center(lane),
            band: (lo.max(road.y_inf), hi.min(road.y_sup)),
            lanes: LaneSet::single(lane),
        }
    }

    /// Straddle the boundary between `from` and `to` within `half_band`.
    pub fn straddle(road: &RoadGeometry, from: LaneId, to: LaneId, half_band: f64) -> Self {
        let y = road.boundary_between(from, to);
        let mut lanes = LaneSet::single(from);
        lanes.insert(to);
        Self {
            center: y,
            band: (y - half_band, y + half_band),
            lanes,
        }
    }
}

mod lane_set_serde {
    use super::{LaneId, LaneSet};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &LaneSet, s: S) -> Result<S::Ok, S::Error> {
        v.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LaneSet, D::Error> {
        Ok(Vec::<LaneId>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub s0: VehicleState,
    pub k: usize,
    pub dt: f64,
    pub target_lane: LaneId,
    pub target: LateralTarget,
    pub predictions: Vec<IntervalPrediction>,
    pub road: RoadGeometry,
    pub params: VehicleParams,
    pub cfg: MpcConfig,
    pub warm_start: Option<Vec<ControlInput>>,
}

impl MpcProblem {
    /// Problem that commits the ego to `lane`.
    #[allow(clippy::too_many_arguments)]
    pub fn for_lane(
        s0: VehicleState,
        lane: LaneId,
        k: usize,
        dt: f64,
        predictions: Vec<IntervalPrediction>,
        road: RoadGeometry,
        params: VehicleParams,
        cfg: MpcConfig,
    ) -> Self {
        Self {
            s0,
            k,
            dt,
            target_lane: lane,
            target: LateralTarget::lane(&road, lane),
            predictions,
            road,
            params,
            cfg,
            warm_start: None,
        }
    }

    pub fn with_target_lane(&self, lane: LaneId) -> Self {
        Self {
            target_lane: lane,
            target: LateralTarget::lane(&self.road, lane),
            warm_start: None,
            ..self.clone()
        }
    }

    pub fn k_commit(&self) -> usize {
        self.cfg.k_commit.unwrap_or(self.k.div_ceil(2))
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::Malformed(m));
        if self.k < 2 {
            return bad(format!("horizon k={} must be at least 2", self.k));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt={} must be positive", self.dt));
        }
        if !self.s0.is_finite() {
            return bad("initial state must be finite".into());
        }
        let kc = self.k_commit();
        if kc < 1 || kc > self.k {
            return bad(format!("k_commit={kc} outside 1..={}", self.k));
        }
        if let Some(p) = self.predictions.iter().find(|p| p.k() != self.k) {
            return bad(format!(
                "prediction for agent {} covers {} steps, horizon is {}",
                p.agent_id,
                p.k(),
                self.k
            ));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != self.k {
                return bad(format!(
                    "warm start has {} controls, horizon is {}",
                    w.len(),
                    self.k
                ));
            }
        }
        if !(self.cfg.l_safe > 0.0 && self.cfg.eps_feas > 0.0) {
            return bad("l_safe and eps_feas must be positive".into());
        }
        if self.target.band.0 > self.target.band.1 {
            return bad("empty lateral band".into());
        }
        self.params
            .validate()
            .map_err(|e| PlanError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    RoadBoundary,
    LaneCommitment,
    Safety,
    ControlBound,
}

impl ConstraintKind {
    pub fn describe(self) -> &'static str {
        match self {
            ConstraintKind::RoadBoundary => "road boundary",
            ConstraintKind::LaneCommitment => "lane commitment",
            ConstraintKind::Safety => "safety",
            ConstraintKind::ControlBound => "control bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    /// 1-based horizon step (0 for control bounds on the first input).
    pub step: usize,
    pub magnitude: f64,
    pub agent_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub worst: Option<Violation>,
    pub max_violation: f64,
    pub iterations: usize,
    pub branch_sets: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    /// Empty unless feasible.
    pub controls: Vec<ControlInput>,
    /// Re-simulated trajectory of the returned (or best attempted) controls.
    pub trajectory: Vec<VehicleState>,
    pub diagnostics: Diagnostics,
}

impl PlanResult {
    /// Re-simulates `controls` through the vehicle model and grades them
    /// against the exact constraint set. This is the only constructor that
    /// can yield a feasible plan.
    pub fn certify(
        p: &MpcProblem,
        controls: Vec<ControlInput>,
        iterations: usize,
        branch_sets: usize,
    ) -> PlanResult {
        let ev = evaluate(p, &controls);
        let feasible = ev.max_violation <= p.cfg.eps_feas;
        PlanResult {
            status: if feasible {
                PlanStatus::Feasible
            } else {
                PlanStatus::Infeasible
            },
            controls: if feasible { controls } else { Vec::new() },
            trajectory: ev.trajectory,
            diagnostics: Diagnostics {
                worst: ev.worst,
                max_violation: ev.max_violation,
                iterations,
                branch_sets,
                objective: ev.objective,
            },
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == PlanStatus::Feasible
    }

    pub fn objective(&self) -> f64 {
        self.diagnostics.objective
    }
}

/// Integer lane choice realized by enumerating the three lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct MinlpResult {
    pub best: Option<(LaneId, PlanResult)>,
    pub per_lane: BTreeMap<LaneId, PlanResult>,
}

/// Solves the lane-free problem as a minimum over lane-conditioned solves.
/// Feasible lanes are compared by objective; exact ties go to the ego's
/// current lane, then to lane order.
pub fn solve_naive_minlp(p: &MpcProblem) -> Result<MinlpResult, PlanError> {
    p.validate()?;
    let results: Vec<(LaneId, Result<PlanResult, PlanError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = LaneId::ALL
            .iter()
            .map(|&lane| {
                let sub = p.with_target_lane(lane);
                (lane, scope.spawn(move || solve_lane_conditioned(&sub)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(lane, h)| (lane, h.join().expect("lane solve panicked")))
            .collect()
    });
    let mut per_lane = BTreeMap::new();
    for (lane, r) in results {
        per_lane.insert(lane, r?);
    }
    let current = crate::world::lane_of(p.s0.y, &p.road);
    let mut best: Option<(LaneId, &PlanResult)> = None;
    for (&lane, plan) in per_lane.iter().filter(|(_, r)| r.is_feasible()) {
        best = match best {
            None => Some((lane, plan)),
            Some((bl, bp)) => {
                let better = plan.objective() < bp.objective()
                    || (plan.objective() == bp.objective() && lane == current && bl != current);
                if better {
                    Some((lane, plan))
                } else {
                    Some((bl, bp))
                }
            }
        };
    }
    let best = best.map(|(l, r)| (l, r.clone()));
    Ok(MinlpResult { best, per_lane })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::prediction::PositionBox;

    pub fn road() -> RoadGeometry {
        RoadGeometry::new(4.0, 2.0)
    }

    pub fn problem(
        s0: VehicleState,
        lane: LaneId,
        k: usize,
        predictions: Vec<IntervalPrediction>,
    ) -> MpcProblem {
        MpcProblem::for_lane(
            s0,
            lane,
            k,
            0.1,
            predictions,
            road(),
            VehicleParams::default(),
            MpcConfig::default(),
        )
    }

    /// Constant box for all steps.
    pub fn static_box(agent_id: u32, k: usize, x: (f64, f64), y: (f64, f64)) -> IntervalPrediction {
        IntervalPrediction {
            agent_id,
            half_width: 1.0,
            horizon: vec![
                PositionBox {
                    x_lo: x.0,
                    x_hi: x.1,
                    y_lo: y.0,
                    y_hi: y.1
                };
                k
            ],
        }
    }

    /// Agent moving at constant speed with an acceleration envelope.
    pub fn moving_box(
        agent_id: u32,
        k: usize,
        x0: f64,
        y: f64,
        v: f64,
        env: (f64, f64),
    ) -> IntervalPrediction {
        let horizon = (1..=k)
            .map(|i| {
                let t = i as f64 * 0.1;
                PositionBox {
                    x_lo: x0 + v * t + 0.5 * env.0 * t * t,
                    x_hi: x0 + v * t + 0.5 * env.1 * t * t,
                    y_lo: y - 0.2,
                    y_hi: y + 0.2,
                }
            })
            .collect();
        IntervalPrediction {
            agent_id,
            half_width: 1.0,
            horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn malformed_problems_are_usage_errors() {
        let s0 = VehicleState::new(0.0, 6.0, 30.0, 0.0);
        let p = problem(
            s0,
            LaneId::Middle,
            8,
            vec![static_box(1, 5, (50.0, 55.0), (5.8, 6.2))],
        );
        assert!(matches!(
            solve_lane_conditioned(&p),
            Err(PlanError::Malformed(_))
        ));
        let p = problem(s0, LaneId::Middle, 1, vec![]);
        assert!(matches!(
            solve_lane_conditioned(&p),
            Err(PlanError::Malformed(_))
        ));
    }

    #[test]
    fn minlp_prefers_current_lane_on_empty_road() {
        let s0 = VehicleState::new(0.0, 6.0, 30.0, 0.0);
        let p = problem(s0, LaneId::Middle, 20, vec![]);
        let r = solve_naive_minlp(&p).unwrap();
        assert!(
            r.per_lane.values().all(|plan| plan.is_feasible()),
            "{:?}",
            r.per_lane
        );
        let (lane, best) = r.best.unwrap();
        assert_eq!(lane, LaneId::Middle);
        for plan in r.per_lane.values() {
            assert!(best.objective() <= plan.objective());
        }
    }

    #[test]
    fn minlp_leaves_blocked_lane() {
        let s0 = VehicleState::new(0.0, 6.0, 30.0, 0.0);
        // slow leader in the middle lane, close enough that staying is infeasible
        let p = problem(
            s0,
            LaneId::Middle,
            20,
            vec![moving_box(1, 20, 12.0, 6.0, 10.0, (-2.0, 1.0))],
        );
        let r = solve_naive_minlp(&p).unwrap();
        assert!(!r.per_lane[&LaneId::Middle].is_feasible());
        let (lane, _) = r.best.expect("an adjacent lane is free");
        assert_ne!(lane, LaneId::Middle);
    }

    #[test]
    fn minlp_all_blocked() {
        let s0 = VehicleState::new(0.0, 6.0, 30.0, 0.0);
        let preds = vec![
            static_box(1, 20, (-5.0, 60.0), (1.8, 2.2)),
            static_box(2, 20, (-5.0, 60.0), (5.8, 6.2)),
            static_box(3, 20, (-5.0, 60.0), (9.8, 10.2)),
        ];
        let r = solve_naive_minlp(&problem(s0, LaneId::Middle, 20, preds)).unwrap();
        assert!(r.best.is_none());
        assert!(r.per_lane.values().all(|p| !p.is_feasible()));
    }
}
