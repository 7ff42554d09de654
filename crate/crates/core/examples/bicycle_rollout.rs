//! Rolls the kinematic bicycle model through a short accelerate-then-steer
//! sequence and prints the resulting states.

use safedrive::dynamics::{rollout, ControlInput, VehicleParams, VehicleState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = VehicleParams::default();
    let start = VehicleState::new(0.0, 6.0, 20.0, 0.0);
    let controls: Vec<ControlInput> = (0..30)
        .map(|i| {
            if i < 10 {
                ControlInput::new(2.0, 0.0)
            } else if i < 20 {
                ControlInput::new(0.0, 0.02)
            } else {
                ControlInput::new(0.0, -0.02)
            }
        })
        .collect();
    let states = rollout(&start, &controls, 0.1, &params)?;
    println!(
        "{:>4} {:>8} {:>7} {:>7} {:>7}",
        "step", "x", "y", "speed", "heading"
    );
    for (i, s) in states.iter().enumerate().step_by(5) {
        println!(
            "{:>4} {:>8.2} {:>7.3} {:>7.2} {:>7.4}",
            i + 1,
            s.x,
            s.y,
            s.speed(),
            s.heading()
        );
    }
    Ok(())
}
