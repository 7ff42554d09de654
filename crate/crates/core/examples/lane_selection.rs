//! Solves one lane-conditioned problem per lane and picks the cheapest
//! feasible one: with a slow vehicle ahead the ego moves over.

use safedrive::dynamics::{VehicleParams, VehicleState};
use safedrive::planner::{solve_naive_minlp, MpcConfig, MpcProblem};
use safedrive::prediction::predict_agent;
use safedrive::world::{Agent, LaneId, RoadGeometry, ScriptedPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let road = RoadGeometry::new(4.0, 2.0);
    let k = 20;
    let slow = Agent {
        id: 1,
        state: VehicleState::new(35.0, road.lane_center(LaneId::Middle), 15.0, 0.0),
        params: VehicleParams::default(),
        policy: ScriptedPolicy::constant_speed().with_envelope(-0.5, 0.5),
        lane_change: None,
    };
    let p = MpcProblem::for_lane(
        VehicleState::new(0.0, road.lane_center(LaneId::Middle), 30.0, 0.0),
        LaneId::Middle,
        k,
        0.1,
        vec![predict_agent(&slow, &road, k, 0.1, 0.2)],
        road,
        VehicleParams::default(),
        MpcConfig::default(),
    );
    let result = solve_naive_minlp(&p)?;
    for (lane, plan) in &result.per_lane {
        if plan.is_feasible() {
            println!("{lane:?}: objective {:.2}", plan.objective());
        } else {
            println!("{lane:?}: infeasible");
        }
    }
    match &result.best {
        Some((lane, _)) => println!("chosen lane: {lane:?}"),
        None => println!("no feasible lane; the failsafe would take over"),
    }
    Ok(())
}
