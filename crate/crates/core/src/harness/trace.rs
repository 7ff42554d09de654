use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunConfig};
use crate::behavior::{ActionSource, BehaviorState, DecisionCycleLog};
use crate::decision::{Choice, DecisionCase};
use crate::dynamics::{ControlInput, VehicleState};
use crate::prediction::ContainmentViolation;
use crate::world::{CollisionReport, LaneId, WorldState};

pub const TRACE_SCHEMA: u32 = 1;

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExitStatus {
    Ok,
    Io,
    Config,
    Collision,
    Containment,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::Io => 1,
            ExitStatus::Config => 2,
            ExitStatus::Collision => 3,
            ExitStatus::Containment => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub scenario_name: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub case: DecisionCase,
    pub steps: u64,
    pub prompt_version: u32,
    pub feedback_version: u32,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// World snapshot at the start of a step and the control applied during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub t: f64,
    pub ego: VehicleState,
    pub lane: LaneId,
    pub agents: Vec<AgentSummary>,
    pub control: ControlInput,
    pub source: ActionSource,
    pub choice: Option<Choice>,
    pub behavior_state: Option<BehaviorState>,
    /// Index of the decision cycle started on this step.
    pub cycle: Option<u64>,
    pub replanned: bool,
    /// Wall time of the step's decision and planning work, excluding
    /// backend calls; present only in timed runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_s: Option<f64>,
    /// Wall time spent waiting for the backend during this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_s: Option<f64>,
}

impl StepRecord {
    pub fn snapshot(w: &WorldState) -> (VehicleState, LaneId, Vec<AgentSummary>) {
        let agents = w
            .agents
            .iter()
            .map(|a| AgentSummary {
                id: a.id,
                x: a.state.x,
                y: a.state.y,
                vx: a.state.vx,
                vy: a.state.vy,
            })
            .collect();
        (w.ego.state, w.ego_lane(), agents)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub log: DecisionCycleLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps_completed: u64,
    pub status: ExitStatus,
    pub exit_code: i32,
    pub collision: Option<CollisionReport>,
    pub containment: Option<ContainmentViolation>,
    pub containment_checks: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(StepRecord),
    Cycle(CycleRecord),
    Summary(TraceSummary),
}

/// Appends trace records as one JSON object per line.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        if let Some(dir) = path.as_ref().parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.out, record).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, HarnessError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// A fully parsed trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub cycles: Vec<DecisionCycleLog>,
    pub summary: Option<TraceSummary>,
}

impl EpisodeTrace {
    pub fn from_records(records: Vec<TraceRecord>) -> Result<Self, HarnessError> {
        let mut it = records.into_iter().enumerate();
        let header = match it.next() {
            Some((_, TraceRecord::Header(h))) => h,
            _ => {
                return Err(HarnessError::Corrupt {
                    index: 0,
                    message: "first record must be the header".into(),
                })
            }
        };
        if header.schema != TRACE_SCHEMA {
            return Err(HarnessError::Schema {
                found: header.schema,
                expected: TRACE_SCHEMA,
            });
        }
        let mut trace = EpisodeTrace {
            header,
            steps: Vec::new(),
            cycles: Vec::new(),
            summary: None,
        };
        for (index, rec) in it {
            if trace.summary.is_some() {
                return Err(HarnessError::Corrupt {
                    index,
                    message: "record after summary".into(),
                });
            }
            match rec {
                TraceRecord::Header(_) => {
                    return Err(HarnessError::Corrupt {
                        index,
                        message: "duplicate header".into(),
                    })
                }
                TraceRecord::Step(s) => {
                    if s.step != trace.steps.len() as u64 {
                        return Err(HarnessError::Corrupt {
                            index,
                            message: format!(
                                "step {} out of sequence, expected {}",
                                s.step,
                                trace.steps.len()
                            ),
                        });
                    }
                    trace.steps.push(s);
                }
                TraceRecord::Cycle(c) => trace.cycles.push(c.log),
                TraceRecord::Summary(s) => trace.summary = Some(s),
            }
        }
        Ok(trace)
    }
}

/// Parses a line-delimited trace; errors carry the offending record index.
pub fn read_trace(path: impl AsRef<Path>) -> Result<EpisodeTrace, HarnessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| HarnessError::Corrupt {
            index,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    EpisodeTrace::from_records(records)
}
