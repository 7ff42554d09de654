//! Closes in on a leader that brakes to a stop, driven only by the failsafe
//! controller, and reports the smallest bumper gap.

use safedrive::dynamics::{step, VehicleParams, VehicleState};
use safedrive::planner::{failsafe_control, FailsafeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = VehicleParams::default();
    let cfg = FailsafeConfig::default();
    let mut ego = VehicleState::new(0.0, 6.0, 32.0, 0.0);
    let (mut lead_x, mut lead_v) = (45.0, 25.0);
    let mut min_gap = f64::INFINITY;
    for i in 0..150 {
        let leader = VehicleState::new(lead_x, 6.0, lead_v, 0.0);
        let u = failsafe_control(&ego, &p, Some((&leader, &p)), 6.0, &cfg);
        ego = step(&ego, &u, 0.1, &p)?;
        lead_x += lead_v * 0.1;
        lead_v = (lead_v - 4.0 * 0.1).max(0.0);
        let gap = lead_x - ego.x - p.length;
        min_gap = min_gap.min(gap);
        if i % 15 == 0 {
            println!(
                "t={:>4.1}s ego {:>5.1} m/s leader {:>5.1} m/s gap {:>5.1} m accel {:>5.2}",
                i as f64 * 0.1,
                ego.vx,
                lead_v,
                gap,
                u.accel
            );
        }
    }
    println!("smallest gap {min_gap:.2} m");
    Ok(())
}
