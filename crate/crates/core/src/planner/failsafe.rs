use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, VehicleParams, VehicleState};
use crate::prediction::{compute_ttc, TtcRelation};
use crate::world::{LaneId, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailsafeConfig {
    /// Bumper gap below which the ego brakes as hard as it can, m.
    pub d_min: f64,
    /// TTC below which the ego brakes as hard as it can, s.
    pub ttc_threshold: f64,
    /// Proportional gain from speed error to acceleration, 1/s.
    pub speed_gain: f64,
    /// Deceleration assumed when shaping the approach to `d_min`, m/s².
    pub comfort_decel: f64,
    /// Natural frequency of the lane-centering law, rad/s.
    pub lateral_omega: f64,
    pub lateral_zeta: f64,
    /// Reaction allowance in the stopping-distance check, s.
    pub reaction_time: f64,
    /// Gap that must remain if both vehicles brake at the ego's limit, m.
    pub stop_margin: f64,
}

impl Default for FailsafeConfig {
    fn default() -> Self {
        Self {
            d_min: 10.0,
            ttc_threshold: 2.0,
            speed_gain: 1.0,
            comfort_decel: 2.5,
            lateral_omega: 1.5,
            lateral_zeta: 0.9,
            reaction_time: 0.2,
            stop_margin: 2.0,
        }
    }
}

/// Keep-lane-and-brake controller.
///
/// Longitudinally it brakes at `accel_min` when the leader is closer than
/// `d_min`, when the TTC drops under the threshold, or when braking at the
/// ego's limit would leave less than `stop_margin` should the leader brake
/// just as hard. Otherwise it tracks the
/// speed from which a `comfort_decel` stop would settle at `d_min` behind
/// the leader. It never accelerates. Laterally it is a damped second-order
/// pull toward `lane_center_y`.
pub fn failsafe_control(
    ego: &VehicleState,
    params: &VehicleParams,
    leader: Option<(&VehicleState, &VehicleParams)>,
    lane_center_y: f64,
    cfg: &FailsafeConfig,
) -> ControlInput {
    let accel = match leader {
        None => 0.0,
        Some((l, lp)) => {
            let offset = 0.5 * (params.length + lp.length);
            let gap = l.x - ego.x - offset;
            let ttc = compute_ttc(ego, l, TtcRelation::LeaderSameLane, offset);
            let v_e = ego.speed();
            let v_l = l.vx.max(0.0);
            let brake = -params.accel_min;
            let stopping = v_e * cfg.reaction_time + (v_e * v_e - v_l * v_l) / (2.0 * brake);
            if gap < cfg.d_min || ttc < cfg.ttc_threshold || gap - stopping < cfg.stop_margin {
                params.accel_min
            } else {
                let v_safe = (v_l * v_l + 2.0 * cfg.comfort_decel * (gap - cfg.d_min))
                    .max(0.0)
                    .sqrt();
                (cfg.speed_gain * (v_safe - v_e)).clamp(params.accel_min, 0.0)
            }
        }
    };
    let err = ego.y - lane_center_y;
    let w = cfg.lateral_omega;
    let v = ego.speed().max(1.0);
    let steer = -(w * w * err + 2.0 * cfg.lateral_zeta * w * ego.vy)
        * (params.l_front + params.l_rear)
        / (v * v);
    ControlInput::new(accel, steer.clamp(params.steer_min, params.steer_max))
}

/// Nearest agent ahead of the ego that overlaps `lane` or the ego's own
/// lateral footprint.
pub fn failsafe_leader(w: &WorldState, lane: LaneId) -> Option<(VehicleState, VehicleParams)> {
    let (lo, hi) = w.road.lane_bounds(lane);
    let half = w.ego.params.width / 2.0;
    let lo = lo.min(w.ego.state.y - half);
    let hi = hi.max(w.ego.state.y + half);
    w.agents
        .iter()
        .filter(|a| a.state.x > w.ego.state.x)
        .filter(|a| {
            let h = a.params.width / 2.0;
            a.state.y + h > lo && a.state.y - h < hi
        })
        .min_by(|a, b| a.state.x.total_cmp(&b.state.x))
        .map(|a| (a.state, a.params))
}
