//! Builds interval forecasts for a constant-speed vehicle and a lane changer,
//! then replays the world to show every realized position stays in its box.

use safedrive::dynamics::{ControlInput, VehicleParams, VehicleState};
use safedrive::prediction::{predict_all, ContainmentMonitor};
use safedrive::world::{
    world_step, Agent, Ego, LaneChangePlan, LaneId, RoadGeometry, ScriptedPolicy, WorldState,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let road = RoadGeometry::new(4.0, 2.0);
    let cruiser = Agent {
        id: 1,
        state: VehicleState::new(30.0, road.lane_center(LaneId::Middle), 24.0, 0.0),
        params: VehicleParams::default(),
        policy: ScriptedPolicy::constant_speed().with_envelope(-1.0, 1.0),
        lane_change: None,
    };
    let changer = Agent {
        id: 2,
        state: VehicleState::new(-15.0, road.lane_center(LaneId::Right), 26.0, 0.0),
        params: VehicleParams::default(),
        policy: ScriptedPolicy::constant_speed().with_envelope(-1.0, 1.0),
        lane_change: Some(LaneChangePlan {
            start_step: 5,
            target_lane: LaneId::Middle,
            lateral_speed: 1.0,
        }),
    };
    let mut world = WorldState {
        step_index: 0,
        dt: 0.1,
        ego: Ego {
            state: VehicleState::new(0.0, road.lane_center(LaneId::Left), 25.0, 0.0),
            params: VehicleParams::default(),
        },
        agents: vec![cruiser, changer],
        road,
        rng_seed: 0,
        fault: None,
    };

    let k = 20;
    let predictions = predict_all(&world, k, 0.2, 100.0);
    for p in &predictions {
        let last = p.at(k - 1);
        println!(
            "agent {}: after {k} steps x in [{:.1}, {:.1}], y in [{:.2}, {:.2}]",
            p.agent_id, last.x_lo, last.x_hi, last.y_lo, last.y_hi
        );
    }

    let mut monitor = ContainmentMonitor::new();
    monitor.record(world.step_index, predictions);
    for _ in 0..k {
        world = world_step(&world, &ControlInput::new(0.0, 0.0))?;
        monitor
            .check(&world)
            .map_err(|v| format!("containment broken: {v:?}"))?;
    }
    println!("{} containment checks passed", monitor.checks());
    Ok(())
}
