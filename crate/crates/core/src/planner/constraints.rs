use crate::dynamics::{step_unchecked, ControlInput, VehicleState};
use crate::world::{lanes_of_interval, LaneSet};

use super::{ConstraintKind, MpcProblem, SafetyForm, Violation};

/// Exact grading of a control sequence: re-simulated trajectory, objective
/// and the worst violated constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub trajectory: Vec<VehicleState>,
    pub objective: f64,
    pub max_violation: f64,
    pub total_violation: f64,
    pub worst: Option<Violation>,
}

/// Lanes the ego footprint covers at lateral position `y`, plus the
/// target's always-relevant lanes.
pub(crate) fn relevant_lanes(p: &MpcProblem, y: f64) -> LaneSet {
    lanes_of_interval(y, y, p.params.width / 2.0, &p.road).union(p.target.lanes)
}

/// Separation shortfall of ego position `x` against an agent box.
pub(crate) fn separation_violation(form: SafetyForm, x: f64, x_lo: f64, x_hi: f64, l: f64) -> f64 {
    match form {
        SafetyForm::Disjunctive => {
            let behind = (x - (x_lo - l)).max(0.0);
            let ahead = ((x_hi + l) - x).max(0.0);
            behind.min(ahead)
        }
        SafetyForm::EndpointDistance => (l - (x - x_lo).abs()).max(l - (x - x_hi).abs()).max(0.0),
    }
}

pub(crate) fn objective(
    p: &MpcProblem,
    controls: &[ControlInput],
    trajectory: &[VehicleState],
) -> f64 {
    let last = trajectory.last().copied().unwrap_or(p.s0);
    let smooth: f64 = controls
        .windows(2)
        .map(|w| (w[1].accel - w[0].accel).hypot(w[1].steer - w[0].steer))
        .sum();
    -last.x + p.cfg.w_smooth * smooth + p.cfg.w_lat * (last.y - p.target.center).powi(2)
}

/// Grades `controls` against the full constraint set. Safety uses the
/// disjunction as stated (no branch is fixed here).
pub fn evaluate(p: &MpcProblem, controls: &[ControlInput]) -> Evaluation {
    let mut worst: Option<Violation> = None;
    let mut total = 0.0;
    let mut note = |v: Violation| {
        if v.magnitude > 0.0 {
            total += v.magnitude;
            if worst.is_none_or(|w| v.magnitude > w.magnitude) {
                worst = Some(v);
            }
        }
    };

    let mut trajectory = Vec::with_capacity(controls.len());
    let mut s = p.s0;
    for (j, u) in controls.iter().enumerate() {
        let over = (p.params.accel_min - u.accel)
            .max(u.accel - p.params.accel_max)
            .max(p.params.steer_min - u.steer)
            .max(u.steer - p.params.steer_max)
            .max(0.0);
        let over = if over.is_nan() { f64::INFINITY } else { over };
        note(Violation {
            kind: ConstraintKind::ControlBound,
            step: j,
            magnitude: over,
            agent_id: None,
        });
        s = step_unchecked(&s, &p.params.clamp(*u), p.dt, &p.params);
        trajectory.push(s);
    }

    let k_commit = p.k_commit();
    for (idx, s) in trajectory.iter().enumerate() {
        let i = idx + 1;
        let road = (p.road.y_inf - s.y).max(s.y - p.road.y_sup).max(0.0);
        note(Violation {
            kind: ConstraintKind::RoadBoundary,
            step: i,
            magnitude: road,
            agent_id: None,
        });
        if i >= k_commit {
            let (lo, hi) = p.target.band;
            let lane = (lo - s.y).max(s.y - hi).max(0.0);
            note(Violation {
                kind: ConstraintKind::LaneCommitment,
                step: i,
                magnitude: lane,
                agent_id: None,
            });
        }
        let lanes = relevant_lanes(p, s.y);
        for pred in &p.predictions {
            let Some(b) = pred.horizon.get(idx) else {
                continue;
            };
            if !lanes_of_interval(b.y_lo, b.y_hi, pred.half_width, &p.road).intersects(lanes) {
                continue;
            }
            let m = separation_violation(p.cfg.safety_form, s.x, b.x_lo, b.x_hi, p.cfg.l_safe);
            note(Violation {
                kind: ConstraintKind::Safety,
                step: i,
                magnitude: m,
                agent_id: Some(pred.agent_id),
            });
        }
    }

    let obj = objective(p, controls, &trajectory);
    Evaluation {
        trajectory,
        objective: obj,
        max_violation: worst.map_or(0.0, |w| w.magnitude),
        total_violation: total,
        worst,
    }
}
