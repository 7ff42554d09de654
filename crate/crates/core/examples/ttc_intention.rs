//! Computes time-to-collision against a follower in the target lane over a
//! few decision cycles and classifies its intention from the history.

use safedrive::dynamics::VehicleState;
use safedrive::prediction::{classify_intention, compute_ttc, TtcRelation, TtcSample};

fn history(follower_speed_gain: f64) -> Vec<TtcSample> {
    let ego = |t: f64| VehicleState::new(25.0 * t, 4.0, 25.0, 0.0);
    let follower = |t: f64| {
        let v = 26.0 + follower_speed_gain * t;
        VehicleState::new(
            -25.0 + 26.0 * t + 0.5 * follower_speed_gain * t * t,
            2.0,
            v,
            0.0,
        )
    };
    (0..3)
        .map(|i| {
            let t = i as f64 * 0.5;
            TtcSample {
                step_index: i * 5,
                agent_id: 7,
                ttc: compute_ttc(&ego(t), &follower(t), TtcRelation::FollowerTargetLane, 5.0),
                relation: TtcRelation::FollowerTargetLane,
            }
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, gain) in [("yielding follower", -2.0), ("closing follower", 3.0)] {
        let h = history(gain);
        let ttcs: Vec<String> = h.iter().map(|s| format!("{:.1}", s.ttc)).collect();
        println!(
            "{name}: TTC [{}] s -> {}",
            ttcs.join(", "),
            classify_intention(&h, 6.0)?.word()
        );
    }
    Ok(())
}
