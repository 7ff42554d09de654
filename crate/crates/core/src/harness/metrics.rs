use std::fmt;

use serde::{Deserialize, Serialize};

use super::trace::{EpisodeTrace, ExitStatus, TRACE_SCHEMA};
use super::HarnessError;
use crate::behavior::ActionSource;

/// Safety, performance and latency figures aggregated over one or more traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub steps: u64,
    pub collisions: u64,
    pub containment_violations: u64,
    pub mean_speed: f64,
    pub std_speed: f64,
    /// Fraction of steps driven by a verified plan.
    pub planner_feasible_rate: f64,
    pub failsafe_steps: u64,
    pub decision_cycles: u64,
    pub decision_requests: u64,
    pub retries: u64,
    /// Per-step compute excluding backend waits, s. Only for timed traces.
    pub step_latency: Option<(f64, f64)>,
    /// Per-request backend latency, s.
    pub request_latency: Option<(f64, f64)>,
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Aggregates metrics over traces that share the current schema.
pub fn evaluate(traces: &[EpisodeTrace]) -> Result<MetricsReport, HarnessError> {
    for t in traces {
        if t.header.schema != TRACE_SCHEMA {
            return Err(HarnessError::Schema {
                found: t.header.schema,
                expected: TRACE_SCHEMA,
            });
        }
    }
    let steps: Vec<_> = traces.iter().flat_map(|t| &t.steps).collect();
    let cycles: Vec<_> = traces.iter().flat_map(|t| &t.cycles).collect();
    let speeds: Vec<f64> = steps.iter().map(|s| s.ego.speed()).collect();
    let (mean_speed, std_speed) = mean_std(&speeds).unwrap_or((0.0, 0.0));
    let failsafe_steps = steps
        .iter()
        .filter(|s| s.source == ActionSource::Failsafe)
        .count() as u64;
    let status_count = |st: ExitStatus| {
        traces
            .iter()
            .filter(|t| t.summary.as_ref().is_some_and(|s| s.status == st))
            .count() as u64
    };
    let compute: Vec<f64> = steps.iter().filter_map(|s| s.compute_s).collect();
    let requests: Vec<f64> = cycles
        .iter()
        .flat_map(|c| &c.proposals)
        .map(|p| p.latency_s)
        .collect();
    let n_steps = steps.len() as u64;
    Ok(MetricsReport {
        episodes: traces.len(),
        steps: n_steps,
        collisions: status_count(ExitStatus::Collision),
        containment_violations: status_count(ExitStatus::Containment),
        mean_speed,
        std_speed,
        planner_feasible_rate: if n_steps == 0 {
            0.0
        } else {
            (n_steps - failsafe_steps) as f64 / n_steps as f64
        },
        failsafe_steps,
        decision_cycles: cycles.len() as u64,
        decision_requests: requests.len() as u64,
        retries: cycles.iter().map(|c| c.retries as u64).sum(),
        step_latency: mean_std(&compute),
        request_latency: mean_std(&requests).filter(|_| !compute.is_empty()),
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes            {}", self.episodes)?;
        writeln!(f, "control steps       {}", self.steps)?;
        writeln!(f, "Safety")?;
        writeln!(f, "  collisions        {}", self.collisions)?;
        writeln!(f, "  containment       {}", self.containment_violations)?;
        writeln!(f, "  failsafe steps    {}", self.failsafe_steps)?;
        writeln!(f, "  planner rate      {:.3}", self.planner_feasible_rate)?;
        writeln!(f, "Performance")?;
        writeln!(
            f,
            "  speed             {:.1} (±{:.1}) m/s",
            self.mean_speed, self.std_speed
        )?;
        writeln!(f, "Decisions")?;
        writeln!(f, "  cycles            {}", self.decision_cycles)?;
        writeln!(f, "  requests          {}", self.decision_requests)?;
        writeln!(f, "  retries           {}", self.retries)?;
        writeln!(f, "Latency")?;
        match self.step_latency {
            Some((m, s)) => writeln!(f, "  per step          {m:.4} (±{s:.4}) s")?,
            None => writeln!(f, "  per step          not recorded (run with --timing)")?,
        }
        if let Some((m, s)) = self.request_latency {
            writeln!(f, "  per request       {m:.4} (±{s:.4}) s")?;
        }
        Ok(())
    }
}
