//! Three-lane one-way highway: geometry, scripted traffic, stepping and
//! collision detection.

mod agent;
mod road;
mod scenario;

pub use agent::{Agent, LaneChangePlan, PolicyMode, ReactiveParams, ScriptedPolicy};
pub use road::{lane_of, lanes_of_interval, LaneId, LaneSet, RoadGeometry, N_LANES};
pub use scenario::{EgoSpec, LaneChangeTask, RoadSpec, Scenario, ScenarioError, SCENARIO_SCHEMA};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, ControlInput, DynamicsError, VehicleParams, VehicleState};
use agent::{advance_agent, policy_accel, VehicleView};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("ego dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error(
        "agent {agent_id} applied accel {accel} outside its envelope {envelope:?} at step {step}"
    )]
    EnvelopeViolation {
        agent_id: u32,
        accel: f64,
        envelope: [f64; 2],
        step: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ego {
    pub state: VehicleState,
    pub params: VehicleParams,
}

/// Test hook that makes one agent exceed its declared envelope, which breaks
/// the prediction containment assumption on purpose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainmentFault {
    pub agent_id: u32,
    pub from_step: u64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub step_index: u64,
    pub dt: f64,
    pub ego: Ego,
    pub agents: Vec<Agent>,
    pub road: RoadGeometry,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<ContainmentFault>,
}

/// Axis-aligned footprint `[x_lo, x_hi] × [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Aabb {
    pub fn centered(x: f64, y: f64, length: f64, width: f64) -> Self {
        Self {
            x_lo: x - length / 2.0,
            x_hi: x + length / 2.0,
            y_lo: y - width / 2.0,
            y_hi: y + width / 2.0,
        }
    }

    /// Positive-area intersection; touching edges do not count.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        self.x_lo < other.x_hi
            && other.x_lo < self.x_hi
            && self.y_lo < other.y_hi
            && other.y_lo < self.y_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub ego_box: Aabb,
    pub agent_id: u32,
    pub step_index: u64,
}

impl WorldState {
    pub fn agent(&self, id: u32) -> Option<&Agent> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn ego_lane(&self) -> LaneId {
        lane_of(self.ego.state.y, &self.road)
    }

    pub fn ego_box(&self) -> Aabb {
        let e = &self.ego;
        Aabb::centered(e.state.x, e.state.y, e.params.length, e.params.width)
    }

    /// Lanes covered by the ego's lateral footprint.
    pub fn ego_footprint_lanes(&self) -> LaneSet {
        let y = self.ego.state.y;
        lanes_of_interval(y, y, self.ego.params.width / 2.0, &self.road)
    }

    fn views(&self) -> Vec<VehicleView> {
        let mut out = Vec::with_capacity(self.agents.len() + 1);
        out.push(VehicleView {
            id: None,
            x: self.ego.state.x,
            y: self.ego.state.y,
            vx: self.ego.state.vx,
            length: self.ego.params.length,
            width: self.ego.params.width,
        });
        out.extend(self.agents.iter().map(|a| VehicleView {
            id: Some(a.id),
            x: a.state.x,
            y: a.state.y,
            vx: a.state.vx,
            length: a.params.length,
            width: a.params.width,
        }));
        out
    }

    /// Acceleration each agent will apply on the next step, in agent order.
    pub fn agent_accels(&self) -> Vec<f64> {
        let views = self.views();
        self.agents
            .iter()
            .map(|a| match self.fault {
                Some(f) if f.agent_id == a.id && self.step_index >= f.from_step => f.accel,
                _ => policy_accel(a, &views, &self.road, self.step_index, self.rng_seed),
            })
            .collect()
    }
}

/// Advances the whole world by one control period.
pub fn world_step(w: &WorldState, ego_u: &ControlInput) -> Result<WorldState, WorldError> {
    let ego_state = dynamics::step(&w.ego.state, ego_u, w.dt, &w.ego.params)?;
    let accels = w.agent_accels();
    let mut agents = Vec::with_capacity(w.agents.len());
    for (agent, accel) in w.agents.iter().zip(accels) {
        let faulted =
            matches!(w.fault, Some(f) if f.agent_id == agent.id && w.step_index >= f.from_step);
        let [lo, hi] = agent.policy.envelope;
        if !faulted && !(lo..=hi).contains(&accel) {
            return Err(WorldError::EnvelopeViolation {
                agent_id: agent.id,
                accel,
                envelope: agent.policy.envelope,
                step: w.step_index,
            });
        }
        let mut next = agent.clone();
        next.state = advance_agent(agent, accel, w.step_index, w.dt, &w.road);
        agents.push(next);
    }
    Ok(WorldState {
        step_index: w.step_index + 1,
        dt: w.dt,
        ego: Ego {
            state: ego_state,
            params: w.ego.params,
        },
        agents,
        road: w.road,
        rng_seed: w.rng_seed,
        fault: w.fault,
    })
}

/// First agent (in list order) whose footprint overlaps the ego's.
pub fn check_collision(w: &WorldState) -> Option<CollisionReport> {
    let ego_box = w.ego_box();
    w.agents
        .iter()
        .find(|a| {
            ego_box.overlaps(&Aabb::centered(
                a.state.x,
                a.state.y,
                a.params.length,
                a.params.width,
            ))
        })
        .map(|a| CollisionReport {
            ego_box,
            agent_id: a.id,
            step_index: w.step_index,
        })
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn empty_world_moves_only_ego_x() {
        let w = world_with(VehicleState::new(0.0, 6.0, 20.0, 0.0), vec![]);
        let next = world_step(&w, &ControlInput::ZERO).unwrap();
        assert_eq!(next.step_index, 1);
        assert!((next.ego.state.x - 2.0).abs() < 1e-12);
        assert_eq!(next.ego.state.y, 6.0);
        assert_eq!(next.ego.state.vx, 20.0);
    }

    #[test]
    fn constant_speed_agent_advances() {
        let w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 50.0, 2.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        let next = world_step(&w, &ControlInput::ZERO).unwrap();
        assert!((next.agents[0].state.x - 52.0).abs() < 1e-12);
    }

    #[test]
    fn cooperative_follower_brakes_when_ego_cuts_in() {
        // ego straddles the left/middle boundary ahead of a left-lane follower
        let w = world_with(
            VehicleState::new(20.0, 4.0, 25.0, 0.0),
            vec![agent(
                1,
                0.0,
                2.0,
                25.0,
                ScriptedPolicy::reactive(true, [-2.0, 1.5]),
            )],
        );
        let accels = w.agent_accels();
        assert!(accels[0] <= 0.0);
        let next = world_step(&w, &ControlInput::ZERO).unwrap();
        assert!(next.agents[0].state.vx <= 25.0);
    }

    #[test]
    fn collision_geometry() {
        let far = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 100.0, 6.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        assert!(check_collision(&far).is_none());
        let hit = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(3, 4.9, 6.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        let report = check_collision(&hit).unwrap();
        assert_eq!(report.agent_id, 3);
        let touch = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 5.0, 6.0, 20.0, ScriptedPolicy::constant_speed())],
        );
        assert!(check_collision(&touch).is_none());
    }

    #[test]
    fn envelope_violation_is_reported() {
        let mut policy = ScriptedPolicy::constant_speed();
        policy.schedule = vec![(0, 1.0)];
        policy.mode = PolicyMode::PiecewiseAccel;
        policy.envelope = [-1.0, 2.0];
        let mut w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 50.0, 2.0, 20.0, policy)],
        );
        assert!(world_step(&w, &ControlInput::ZERO).is_ok());
        // Schedules are clamped to the envelope, so only a fault can escape it,
        // and faults are exempt from the envelope check by construction.
        w.fault = Some(ContainmentFault {
            agent_id: 1,
            from_step: 0,
            accel: 4.0,
        });
        let next = world_step(&w, &ControlInput::ZERO).unwrap();
        assert!((next.agents[0].state.vx - 20.4).abs() < 1e-12);
    }

    #[test]
    fn stepping_is_deterministic() {
        let mut policy = ScriptedPolicy::constant_speed().with_envelope(-2.0, 2.0);
        policy.jitter = 1.0;
        let mut w = world_with(
            VehicleState::new(0.0, 6.0, 20.0, 0.0),
            vec![agent(1, 50.0, 2.0, 20.0, policy)],
        );
        w.rng_seed = 9;
        let run = |mut w: WorldState| {
            for _ in 0..50 {
                w = world_step(&w, &ControlInput::new(0.5, 0.0)).unwrap();
            }
            w
        };
        assert_eq!(run(w.clone()), run(w));
    }
}
