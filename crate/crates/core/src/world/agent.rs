use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::road::{lane_of, LaneId, RoadGeometry};
use crate::dynamics::{VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyMode {
    ConstantSpeed,
    PiecewiseAccel,
    FollowerReactive,
}

/// Tuning of the reactive follower. Cooperative agents open a gap for a
/// vehicle that noses into their lane ahead of them; aggressive agents close it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactiveParams {
    pub reaction_range: f64,
    pub yield_decel: f64,
    pub close_accel: f64,
    /// Time headway a cooperative agent tries to restore, s.
    pub yield_headway: f64,
    /// Bumper gap an aggressive agent closes down to, m.
    pub close_gap: f64,
    /// A vehicle ahead counts as entering the lane once its footprint is
    /// closer than this to the lane bounds, m.
    pub lateral_margin: f64,
    /// Speed tracked when nobody ahead needs a reaction; without it the
    /// piecewise schedule applies, m/s.
    pub cruise_speed: Option<f64>,
}

impl Default for ReactiveParams {
    fn default() -> Self {
        Self {
            reaction_range: 60.0,
            yield_decel: 2.0,
            close_accel: 1.5,
            yield_headway: 1.5,
            close_gap: 6.0,
            lateral_margin: 1.0,
            cruise_speed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub mode: PolicyMode,
    /// `(start_step, accel)` pairs, sorted by start step.
    #[serde(default)]
    pub schedule: Vec<(u64, f64)>,
    /// Declared acceleration envelope `[a_lo, a_hi]`; every realized
    /// acceleration lies inside it.
    pub envelope: [f64; 2],
    #[serde(default)]
    pub cooperative: bool,
    /// Uniform seeded perturbation added to the nominal acceleration before
    /// clamping into the envelope.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub reactive: ReactiveParams,
}

impl ScriptedPolicy {
    pub fn constant_speed() -> Self {
        Self {
            mode: PolicyMode::ConstantSpeed,
            schedule: Vec::new(),
            envelope: [0.0, 0.0],
            cooperative: false,
            jitter: 0.0,
            reactive: ReactiveParams::default(),
        }
    }

    pub fn with_envelope(mut self, lo: f64, hi: f64) -> Self {
        self.envelope = [lo, hi];
        self
    }

    pub fn piecewise(schedule: Vec<(u64, f64)>, envelope: [f64; 2]) -> Self {
        Self {
            mode: PolicyMode::PiecewiseAccel,
            schedule,
            envelope,
            ..Self::constant_speed()
        }
    }

    pub fn reactive(cooperative: bool, envelope: [f64; 2]) -> Self {
        Self {
            mode: PolicyMode::FollowerReactive,
            cooperative,
            envelope,
            ..Self::constant_speed()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.envelope;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(format!("bad envelope {:?}", self.envelope));
        }
        if !(lo <= 0.0 && 0.0 <= hi) {
            return Err(format!("envelope {:?} must contain zero", self.envelope));
        }
        if let Some((step, a)) = self.schedule.iter().find(|(_, a)| *a < lo || *a > hi) {
            return Err(format!(
                "scheduled accel {a} at step {step} outside envelope {:?}",
                self.envelope
            ));
        }
        if self.schedule.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err("schedule must be sorted by start step".into());
        }
        if self.mode == PolicyMode::FollowerReactive {
            let r = &self.reactive;
            if -r.yield_decel < lo || r.close_accel > hi {
                return Err(format!(
                    "reactive magnitudes exceed envelope {:?}",
                    self.envelope
                ));
            }
        }
        if self.jitter.is_nan() || self.jitter < 0.0 {
            return Err("jitter must be non-negative".into());
        }
        Ok(())
    }

    fn scheduled_accel(&self, step: u64) -> f64 {
        self.schedule
            .iter()
            .take_while(|(start, _)| *start <= step)
            .last()
            .map_or(0.0, |(_, a)| *a)
    }
}

/// Lateral maneuver declared up front so predictors can cover it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangePlan {
    pub start_step: u64,
    pub target_lane: LaneId,
    /// m/s
    pub lateral_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u32,
    pub state: VehicleState,
    #[serde(default)]
    pub params: VehicleParams,
    pub policy: ScriptedPolicy,
    #[serde(default)]
    pub lane_change: Option<LaneChangePlan>,
}

impl Agent {
    pub fn is_lane_changing(&self) -> bool {
        self.lane_change.is_some()
    }
}

/// Footprint of any vehicle on the road, used by reactive policies.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VehicleView {
    pub id: Option<u32>,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub length: f64,
    pub width: f64,
}

fn jitter_rng(seed: u64, step: u64, agent: u32) -> ChaCha8Rng {
    let mixed = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (agent as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Proportional gain of cruise-speed tracking, 1/s.
const CRUISE_GAIN: f64 = 0.5;

/// Acceleration the agent applies this step, before any fault injection.
pub(crate) fn policy_accel(
    agent: &Agent,
    others: &[VehicleView],
    road: &RoadGeometry,
    step: u64,
    seed: u64,
) -> f64 {
    let p = &agent.policy;
    let nominal = match p.mode {
        PolicyMode::ConstantSpeed => 0.0,
        PolicyMode::PiecewiseAccel => p.scheduled_accel(step),
        PolicyMode::FollowerReactive => {
            reactive_accel(agent, others, road).unwrap_or_else(|| match p.reactive.cruise_speed {
                Some(v) => CRUISE_GAIN * (v - agent.state.vx),
                None => p.scheduled_accel(step),
            })
        }
    };
    let perturbed = if p.jitter > 0.0 {
        nominal + jitter_rng(seed, step, agent.id).gen_range(-p.jitter..=p.jitter)
    } else {
        nominal
    };
    perturbed.clamp(p.envelope[0], p.envelope[1])
}

fn reactive_accel(agent: &Agent, others: &[VehicleView], road: &RoadGeometry) -> Option<f64> {
    let r = &agent.policy.reactive;
    let me = &agent.state;
    let lane = lane_of(me.y, road);
    let (lane_lo, lane_hi) = road.lane_bounds(lane);
    let ahead = others
        .iter()
        .filter(|o| o.id != Some(agent.id))
        .filter(|o| o.x > me.x && o.x - me.x <= r.reaction_range)
        .filter(|o| {
            o.y + o.width / 2.0 > lane_lo - r.lateral_margin
                && o.y - o.width / 2.0 < lane_hi + r.lateral_margin
        })
        .min_by(|a, b| a.x.total_cmp(&b.x))?;
    let gap = ahead.x - me.x - (ahead.length + agent.params.length) / 2.0;
    let accel = if agent.policy.cooperative {
        let wanted = r.yield_headway * me.vx + 5.0;
        if gap < wanted && me.vx > ahead.vx - 1.0 {
            -r.yield_decel
        } else {
            0.0
        }
    } else {
        // close in, but never faster than a yield-rate stop short of close_gap allows
        let closing = me.vx - ahead.vx;
        let stopping = if closing > 0.0 {
            closing * closing / (2.0 * r.yield_decel)
        } else {
            0.0
        };
        if gap < r.close_gap || gap - r.close_gap < stopping {
            -r.yield_decel
        } else if gap > r.close_gap + 4.0
            && gap - r.close_gap > 2.0 * stopping + closing.max(0.0)
            && me.vx < agent.params.v_max
        {
            r.close_accel
        } else {
            (CRUISE_GAIN * (ahead.vx - me.vx)).clamp(-r.yield_decel, r.close_accel)
        }
    };
    Some(accel)
}

/// Point-mass longitudinal update plus the scripted lateral maneuver.
pub(crate) fn advance_agent(
    agent: &Agent,
    accel: f64,
    step: u64,
    dt: f64,
    road: &RoadGeometry,
) -> VehicleState {
    let s = &agent.state;
    let x = s.x + s.vx * dt;
    let vx = (s.vx + accel * dt).clamp(0.0, agent.params.v_max);
    let (y, vy) = match agent.lane_change {
        Some(plan) if step >= plan.start_step => {
            let target = road.lane_center(plan.target_lane);
            let max_move = plan.lateral_speed * dt;
            let delta = target - s.y;
            if delta.abs() <= max_move {
                (target, 0.0)
            } else {
                (
                    s.y + max_move.copysign(delta),
                    plan.lateral_speed.copysign(delta),
                )
            }
        }
        _ => (s.y, 0.0),
    };
    VehicleState { x, y, vx, vy }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn road() -> RoadGeometry {
        RoadGeometry::new(4.0, 2.0)
    }

    fn follower(cooperative: bool) -> Agent {
        Agent {
            id: 7,
            state: VehicleState::new(0.0, 2.0, 25.0, 0.0),
            params: VehicleParams::default(),
            policy: ScriptedPolicy::reactive(cooperative, [-2.0, 1.5]),
            lane_change: None,
        }
    }

    fn intruder(y: f64) -> VehicleView {
        VehicleView {
            id: None,
            x: 20.0,
            y,
            vx: 25.0,
            length: 5.0,
            width: 2.0,
        }
    }

    #[test]
    fn schedule_lookup() {
        let p = ScriptedPolicy::piecewise(vec![(10, 1.0), (20, -1.0)], [-2.0, 2.0]);
        assert_eq!(p.scheduled_accel(0), 0.0);
        assert_eq!(p.scheduled_accel(10), 1.0);
        assert_eq!(p.scheduled_accel(25), -1.0);
        assert!(p.validate().is_ok());
        let bad = ScriptedPolicy::piecewise(vec![(0, 3.0)], [-2.0, 2.0]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cooperative_yields_to_intruder() {
        let a = follower(true);
        assert_eq!(policy_accel(&a, &[intruder(6.0)], &road(), 0, 0), 0.0);
        assert!(policy_accel(&a, &[intruder(4.0)], &road(), 0, 0) < 0.0);
    }

    #[test]
    fn aggressive_closes_gap() {
        let a = follower(false);
        assert_eq!(policy_accel(&a, &[intruder(4.0)], &road(), 0, 0), 1.5);
    }

    #[test]
    fn jitter_stays_in_envelope_and_is_seeded() {
        let mut a = follower(true);
        a.policy = ScriptedPolicy::constant_speed().with_envelope(-1.0, 1.0);
        a.policy.jitter = 5.0;
        for step in 0..200 {
            let acc = policy_accel(&a, &[], &road(), step, 42);
            assert!((-1.0..=1.0).contains(&acc));
            assert_eq!(acc, policy_accel(&a, &[], &road(), step, 42));
        }
    }

    #[test]
    fn lane_change_moves_at_declared_rate() {
        let mut a = follower(true);
        a.lane_change = Some(LaneChangePlan {
            start_step: 1,
            target_lane: LaneId::Middle,
            lateral_speed: 1.0,
        });
        let s = advance_agent(&a, 0.0, 0, 0.1, &road());
        assert_eq!(s.y, 2.0);
        let s = advance_agent(&a, 0.0, 1, 0.1, &road());
        assert!((s.y - 2.1).abs() < 1e-12);
        assert_eq!(s.vy, 1.0);
    }
}
