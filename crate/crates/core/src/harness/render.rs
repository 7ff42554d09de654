use std::io::Write;

use serde::Serialize;

use super::trace::EpisodeTrace;
use super::HarnessError;
use crate::behavior::ActionSource;

/// One row of the plot-ready time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderRow {
    pub step: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub speed: f64,
    pub lane: &'static str,
    pub behavior_state: String,
    pub source: &'static str,
    /// Semicolon-separated markers: cycle starts, replans, collisions.
    pub event: String,
}

pub fn rows(trace: &EpisodeTrace) -> Vec<RenderRow> {
    let collision_step = trace
        .summary
        .as_ref()
        .and_then(|s| s.collision.as_ref())
        .map(|c| c.step_index);
    trace
        .steps
        .iter()
        .map(|s| {
            let mut events = Vec::new();
            if let Some(c) = s.cycle {
                events.push(format!("cycle{c}"));
            }
            if s.replanned {
                events.push("replan".to_string());
            }
            if collision_step == Some(s.step + 1) {
                events.push("collision".to_string());
            }
            RenderRow {
                step: s.step,
                t: s.t,
                x: s.ego.x,
                y: s.ego.y,
                vx: s.ego.vx,
                vy: s.ego.vy,
                speed: s.ego.speed(),
                lane: s.lane.label(),
                behavior_state: s.behavior_state.map(|b| b.to_string()).unwrap_or_default(),
                source: match s.source {
                    ActionSource::Planner => "planner",
                    ActionSource::Failsafe => "failsafe",
                },
                event: events.join(";"),
            }
        })
        .collect()
}

/// Writes the ego time series of `trace` as CSV.
pub fn render_csv<W: Write>(trace: &EpisodeTrace, out: W) -> Result<usize, HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let rows = rows(trace);
    for r in &rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(rows.len())
}
