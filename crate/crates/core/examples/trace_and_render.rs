//! Writes a trace to a temporary file, reads it back, recomputes the
//! metrics and prints the first rows of the plot-ready CSV.

use std::path::Path;

use safedrive::harness::{evaluate, read_trace, render_csv, run_episode, RunConfig};
use safedrive::world::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (scenario, hash) = Scenario::load(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/all_lanes_blocked.json"),
    )?;
    let trace_path = std::env::temp_dir().join("safedrive_example_trace.ndjson");
    let cfg = RunConfig {
        steps: Some(60),
        ..RunConfig::default()
    };
    let out = run_episode(&scenario, &hash, &cfg, std::fs::File::create(&trace_path)?)?;

    let trace = read_trace(&trace_path)?;
    assert_eq!(evaluate(std::slice::from_ref(&trace))?, out.report);
    println!(
        "{} records read back from {}",
        trace.steps.len() + trace.cycles.len() + 2,
        trace_path.display()
    );

    let mut csv = Vec::new();
    render_csv(&trace, &mut csv)?;
    for line in String::from_utf8(csv)?.lines().take(12) {
        println!("{line}");
    }
    std::fs::remove_file(&trace_path)?;
    Ok(())
}
