//! Plans a short horizon behind a slower leader with the sequential convex
//! solver, then compares the result against a brute-force control grid.

use safedrive::dynamics::{VehicleParams, VehicleState};
use safedrive::planner::{evaluate, grid_oracle, solve_lane_conditioned, MpcConfig, MpcProblem};
use safedrive::prediction::predict_agent;
use safedrive::world::{Agent, LaneId, RoadGeometry, ScriptedPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let road = RoadGeometry::new(4.0, 2.0);
    let lane = LaneId::Middle;
    let leader = Agent {
        id: 1,
        state: VehicleState::new(18.0, road.lane_center(lane), 20.0, 0.0),
        params: VehicleParams::default(),
        policy: ScriptedPolicy::constant_speed().with_envelope(-1.0, 1.0),
        lane_change: None,
    };
    let ego = VehicleState::new(0.0, road.lane_center(lane) + 0.3, 28.0, 0.0);

    for k in [3, 20] {
        let p = MpcProblem::for_lane(
            ego,
            lane,
            k,
            0.1,
            vec![predict_agent(&leader, &road, k, 0.1, 0.2)],
            road,
            VehicleParams::default(),
            MpcConfig::default(),
        );
        let plan = solve_lane_conditioned(&p)?;
        let check = evaluate(&p, &plan.controls);
        println!(
            "k={k:>2}: {:?}, objective {:.3}, worst violation {:.1e}, first control a={:.2} steer={:.3}",
            plan.status,
            plan.objective(),
            check.max_violation,
            plan.controls.first().map_or(0.0, |u| u.accel),
            plan.controls.first().map_or(0.0, |u| u.steer),
        );
        if k <= 3 {
            let oracle = grid_oracle(&p, &[-5.0, -2.5, 0.0, 1.5, 3.0], &[-0.2, 0.0, 0.2])?;
            println!(
                "       grid oracle objective {:.3}",
                oracle.plan.objective()
            );
        }
    }
    Ok(())
}
