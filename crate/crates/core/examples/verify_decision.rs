//! Checks each lane proposal for the all-lanes-blocked scenario with the
//! verifier and prints the feedback that would go back to the decision maker.

use std::path::Path;

use safedrive::decision::Decision;
use safedrive::prediction::predict_all;
use safedrive::verifier::{verify, VerifierConfig};
use safedrive::world::{LaneId, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/all_lanes_blocked.json");
    let (scenario, _) = Scenario::load(path)?;
    let world = scenario.world(None);
    let cfg = VerifierConfig::default();
    let predictions = predict_all(&world, cfg.horizon, 0.2, 100.0);
    for lane in LaneId::ALL {
        let verdict = verify(&Decision::lane(lane), &world, &predictions, &cfg, None)?;
        println!("{lane:?}: {}", verdict.feedback.text);
    }
    Ok(())
}
