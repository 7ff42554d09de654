//! Runs one closed-loop episode with the scripted backend and prints the
//! metrics table. Pass a scenario name to pick another bundled fixture.

use std::path::Path;

use safedrive::harness::{run_episode, RunConfig};
use safedrive::world::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "dense_leader".into());
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"));
    let (scenario, hash) = Scenario::load(path)?;
    let cfg = RunConfig {
        timing: true,
        ..RunConfig::default()
    };
    let out = run_episode(&scenario, &hash, &cfg, std::io::sink())?;
    println!("{name}: {:?}", out.status);
    for c in out
        .trace
        .cycles
        .iter()
        .filter(|c| c.decision.is_some())
        .take(5)
    {
        println!(
            "  cycle {} at step {}: {:?}",
            c.cycle_index,
            c.step_index,
            c.decision.as_ref().map(|d| d.choice)
        );
    }
    print!("{}", out.report);
    Ok(())
}
