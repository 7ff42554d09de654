use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::PredictionError;
use crate::world::{lane_of, Agent, RoadGeometry, WorldState};

/// Position box for one lookahead step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionBox {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl PositionBox {
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x_lo - tol && x <= self.x_hi + tol && y >= self.y_lo - tol && y <= self.y_hi + tol
    }

    pub fn x_width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn y_width(&self) -> f64 {
        self.y_hi - self.y_lo
    }
}

/// Boxes for lookahead steps `1..=k`; `horizon[i - 1]` bounds the agent
/// position `i` steps from now.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPrediction {
    pub agent_id: u32,
    /// Agent half-width, carried along so lane membership can be computed
    /// from the box alone.
    pub half_width: f64,
    pub horizon: Vec<PositionBox>,
}

impl IntervalPrediction {
    pub fn k(&self) -> usize {
        self.horizon.len()
    }

    pub fn at(&self, step: usize) -> &PositionBox {
        &self.horizon[step - 1]
    }
}

/// Distance travelled in `t` seconds from speed `v` under constant `a`,
/// with speed kept inside `[0, v_max]`.
fn displacement(v: f64, a: f64, t: f64, v_max: f64) -> f64 {
    if a < 0.0 && v + a * t < 0.0 {
        v * v / (-2.0 * a)
    } else if a > 0.0 && v + a * t > v_max {
        let t_cap = ((v_max - v) / a).max(0.0);
        v * t_cap + 0.5 * a * t_cap * t_cap + v_max * (t - t_cap)
    } else {
        v * t + 0.5 * a * t * t
    }
}

/// Interval forecast of one agent from its declared acceleration envelope.
///
/// Agents advance position with the pre-update speed, so the continuous
/// bounds used here are outer bounds of the discrete motion.
pub fn predict_agent(
    agent: &Agent,
    road: &RoadGeometry,
    k: usize,
    dt: f64,
    eps_y: f64,
) -> IntervalPrediction {
    let [a_lo, a_hi] = agent.policy.envelope;
    let s = &agent.state;
    let v_max = agent.params.v_max;
    let (y_lo, y_hi) = if agent.is_lane_changing() {
        let source = road.lane_center(lane_of(s.y, road));
        let target = agent
            .lane_change
            .map_or(source, |p| road.lane_center(p.target_lane));
        (
            s.y.min(source).min(target) - eps_y,
            s.y.max(source).max(target) + eps_y,
        )
    } else {
        (s.y - eps_y, s.y + eps_y)
    };
    let horizon = (1..=k)
        .map(|i| {
            let t = i as f64 * dt;
            PositionBox {
                x_lo: s.x + displacement(s.vx, a_lo, t, v_max),
                x_hi: s.x + displacement(s.vx, a_hi, t, v_max),
                y_lo,
                y_hi,
            }
        })
        .collect();
    IntervalPrediction {
        agent_id: agent.id,
        half_width: agent.params.width / 2.0,
        horizon,
    }
}

/// Interval forecast for agent `agent_id` over `k` steps of length `dt`.
pub fn predict_intervals(
    w: &WorldState,
    agent_id: u32,
    k: usize,
    dt: f64,
    eps_y: f64,
) -> Result<IntervalPrediction, PredictionError> {
    if k == 0 {
        return Err(PredictionError::EmptyHorizon);
    }
    let agent = w
        .agent(agent_id)
        .ok_or(PredictionError::UnknownAgent(agent_id))?;
    Ok(predict_agent(agent, &w.road, k, dt, eps_y))
}

/// Predictions for every agent within `range` metres of the ego.
pub fn predict_all(w: &WorldState, k: usize, eps_y: f64, range: f64) -> Vec<IntervalPrediction> {
    w.agents
        .iter()
        .filter(|a| (a.state.x - w.ego.state.x).abs() <= range)
        .map(|a| predict_intervals(w, a.id, k, w.dt, eps_y).expect("agent taken from world"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentViolation {
    pub agent_id: u32,
    pub issued_step: u64,
    pub lookahead: usize,
    pub position: (f64, f64),
    pub predicted: PositionBox,
}

/// Replays earlier forecasts against realized positions.
#[derive(Debug, Default)]
pub struct ContainmentMonitor {
    issued: VecDeque<(u64, Vec<IntervalPrediction>)>,
    checks: u64,
}

const CONTAINMENT_TOL: f64 = 1e-6;

impl ContainmentMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: u64, predictions: Vec<IntervalPrediction>) {
        self.issued.push_back((step, predictions));
    }

    /// Number of (agent, lookahead) pairs verified so far.
    pub fn checks(&self) -> u64 {
        self.checks
    }

    /// Checks every outstanding forecast that covers `w.step_index`.
    pub fn check(&mut self, w: &WorldState) -> Result<(), ContainmentViolation> {
        let now = w.step_index;
        self.issued.retain(|(issued, preds)| {
            let ahead = now.saturating_sub(*issued) as usize;
            preds.iter().any(|p| ahead <= p.k())
        });
        for (issued, preds) in &self.issued {
            if now <= *issued {
                continue;
            }
            let lookahead = (now - issued) as usize;
            for p in preds.iter().filter(|p| lookahead <= p.k()) {
                let Some(agent) = w.agent(p.agent_id) else {
                    continue;
                };
                let b = p.at(lookahead);
                self.checks += 1;
                if !b.contains(agent.state.x, agent.state.y, CONTAINMENT_TOL) {
                    return Err(ContainmentViolation {
                        agent_id: p.agent_id,
                        issued_step: *issued,
                        lookahead,
                        position: (agent.state.x, agent.state.y),
                        predicted: *b,
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlInput, VehicleState};
    use crate::world::test_support::{agent, world_with};
    use crate::world::{world_step, ContainmentFault, ScriptedPolicy};

    #[test]
    fn zero_envelope_is_degenerate() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 50.0, 2.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        let p = predict_intervals(&w, 1, 5, 0.1, 0.2).unwrap();
        for i in 1..=5 {
            let b = p.at(i);
            let expected = 50.0 + 2.0 * i as f64;
            assert!((b.x_lo - expected).abs() < 1e-12 && (b.x_hi - expected).abs() < 1e-12);
            assert_eq!(b.x_width(), 0.0);
        }
    }

    #[test]
    fn envelope_bounds() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(
                1,
                50.0,
                2.0,
                20.0,
                ScriptedPolicy::constant_speed().with_envelope(-2.0, 2.0),
            )],
        );
        let p = predict_intervals(&w, 1, 5, 0.1, 0.2).unwrap();
        assert!((p.at(5).x_lo - 59.75).abs() < 1e-12);
        assert!((p.at(5).x_hi - 60.25).abs() < 1e-12);
        assert!((p.at(5).y_lo - 1.8).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_stops_at_zero_speed() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(
                1,
                50.0,
                2.0,
                1.0,
                ScriptedPolicy::constant_speed().with_envelope(-5.0, 0.0),
            )],
        );
        let p = predict_intervals(&w, 1, 30, 0.1, 0.2).unwrap();
        assert!((p.at(30).x_lo - 50.1).abs() < 1e-12);
    }

    #[test]
    fn unknown_agent_and_empty_horizon() {
        let w = world_with(VehicleState::new(0.0, 6.0, 20.0, 0.0), vec![]);
        assert!(matches!(
            predict_intervals(&w, 4, 5, 0.1, 0.2),
            Err(PredictionError::UnknownAgent(4))
        ));
        let w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 50.0, 2.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        assert!(matches!(
            predict_intervals(&w, 1, 0, 0.1, 0.2),
            Err(PredictionError::EmptyHorizon)
        ));
    }

    #[test]
    fn widths_never_shrink() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(
                1,
                50.0,
                2.0,
                39.0,
                ScriptedPolicy::constant_speed().with_envelope(-3.0, 2.0),
            )],
        );
        let p = predict_intervals(&w, 1, 40, 0.1, 0.2).unwrap();
        for pair in p.horizon.windows(2) {
            assert!(pair[1].x_width() >= pair[0].x_width() - 1e-12);
            assert!(pair[1].y_width() >= pair[0].y_width() - 1e-12);
        }
    }

    #[test]
    fn monitor_catches_injected_fault() {
        let mut w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(
                1,
                50.0,
                2.0,
                20.0,
                ScriptedPolicy::constant_speed().with_envelope(-1.0, 1.0),
            )],
        );
        w.fault = Some(ContainmentFault {
            agent_id: 1,
            from_step: 3,
            accel: 3.0,
        });
        let mut monitor = ContainmentMonitor::new();
        let mut violated = None;
        for _ in 0..20 {
            monitor.record(w.step_index, predict_all(&w, 10, 0.2, 150.0));
            w = world_step(&w, &ControlInput::ZERO).unwrap();
            if let Err(v) = monitor.check(&w) {
                violated = Some(v);
                break;
            }
        }
        let v = violated.expect("fault must break containment");
        assert_eq!(v.agent_id, 1);
    }
}
