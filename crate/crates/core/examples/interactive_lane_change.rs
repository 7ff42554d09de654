//! Runs the state-machine lane change against a cooperative and an
//! aggressive follower and prints the behavior states each episode went
//! through.

use std::path::Path;

use safedrive::behavior::BehaviorState;
use safedrive::decision::DecisionCase;
use safedrive::harness::{run_episode, RunConfig};
use safedrive::world::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["lane_change_cooperative", "lane_change_aggressive"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("scenarios")
            .join(format!("{name}.json"));
        let (scenario, hash) = Scenario::load(path)?;
        let cfg = RunConfig {
            case: DecisionCase::Case2,
            ..RunConfig::default()
        };
        let out = run_episode(&scenario, &hash, &cfg, std::io::sink())?;

        let mut states: Vec<BehaviorState> = Vec::new();
        for c in &out.trace.cycles {
            for s in c
                .state_before
                .into_iter()
                .chain(c.executed_transitions.iter().map(|t| t.1))
            {
                if states.last() != Some(&s) {
                    states.push(s);
                }
            }
        }
        let path: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        let last = out.trace.steps.last().expect("episode has steps");
        println!(
            "{name}: {} (final lane {:?}, {:?})",
            path.join(" -> "),
            last.lane,
            out.status
        );
    }
    Ok(())
}
