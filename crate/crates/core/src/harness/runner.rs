use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricsReport};
use super::trace::{
    CycleRecord, EpisodeTrace, ExitStatus, StepRecord, TraceHeader, TraceRecord, TraceSummary,
    TraceWriter, TRACE_SCHEMA,
};
use super::HarnessError;
use crate::behavior::{BehaviorConfig, Driver};
use crate::decision::{make_backend, BackendConfig, DecisionBackend, DecisionCase, PROMPT_VERSION};
use crate::prediction::ContainmentMonitor;
use crate::verifier::{LaneTask, FEEDBACK_VERSION};
use crate::world::{check_collision, world_step, ContainmentFault, Scenario, WorldState};

/// Everything besides the scenario that determines an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub case: DecisionCase,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Overrides the scenario step count.
    pub steps: Option<u64>,
    pub behavior: BehaviorConfig,
    pub backend: BackendConfig,
    /// Record wall-clock timings in step records. Off by default so traces
    /// stay byte-reproducible.
    pub timing: bool,
    /// Test hook: make the first agent leave its acceleration envelope.
    pub inject_containment_fault: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: DecisionCase::Case1,
            seed: None,
            steps: None,
            behavior: BehaviorConfig::default(),
            backend: BackendConfig::default(),
            timing: false,
            inject_containment_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub status: ExitStatus,
    pub trace: EpisodeTrace,
    pub report: MetricsReport,
}

/// Step at which an injected containment fault starts.
const FAULT_STEP: u64 = 10;
/// Acceleration beyond the envelope applied by an injected fault, m/s².
const FAULT_EXCESS: f64 = 3.0;

fn lane_task(
    scenario: &Scenario,
    w: &WorldState,
    case: DecisionCase,
) -> Result<Option<LaneTask>, HarnessError> {
    match (case, scenario.lane_change_task) {
        (DecisionCase::Case1, _) => Ok(None),
        (DecisionCase::Case2, Some(t)) => {
            let source = w.ego_lane();
            if source.distance(t.target_lane) != 1 {
                return Err(HarnessError::Config(format!(
                    "lane-change target {} is not adjacent to the ego lane {source}",
                    t.target_lane
                )));
            }
            Ok(Some(LaneTask {
                source,
                target: t.target_lane,
            }))
        }
        (DecisionCase::Case2, None) => Err(HarnessError::Config(format!(
            "scenario {} has no lane-change task for case 2",
            scenario.name
        ))),
    }
}

/// Runs one closed-loop episode with the backend described in `cfg`.
pub fn run_episode<W: Write>(
    scenario: &Scenario,
    scenario_hash: &str,
    cfg: &RunConfig,
    out: W,
) -> Result<EpisodeOutcome, HarnessError> {
    let backend = make_backend(&cfg.backend, cfg.case)?;
    run_episode_with(scenario, scenario_hash, cfg, backend, out)
}

/// Runs one episode against an explicit backend.
pub fn run_episode_with<W: Write>(
    scenario: &Scenario,
    scenario_hash: &str,
    cfg: &RunConfig,
    backend: Box<dyn DecisionBackend>,
    out: W,
) -> Result<EpisodeOutcome, HarnessError> {
    let mut world = scenario.world(cfg.seed);
    if cfg.inject_containment_fault {
        let a = scenario.agents.first().ok_or_else(|| {
            HarnessError::Config("containment fault needs at least one agent".into())
        })?;
        world.fault = Some(ContainmentFault {
            agent_id: a.id,
            from_step: FAULT_STEP,
            accel: a.policy.envelope[1] + FAULT_EXCESS,
        });
    }
    let task = lane_task(scenario, &world, cfg.case)?;
    let mut driver = Driver::new(cfg.case, backend, cfg.behavior, task)?;
    let steps = cfg.steps.unwrap_or(scenario.steps);
    let header = TraceHeader {
        schema: TRACE_SCHEMA,
        scenario_name: scenario.name.clone(),
        scenario_sha256: scenario_hash.to_string(),
        seed: world.rng_seed,
        case: cfg.case,
        steps,
        prompt_version: PROMPT_VERSION,
        feedback_version: FEEDBACK_VERSION,
        config: cfg.clone(),
    };

    let mut records = vec![TraceRecord::Header(header)];
    let mut writer = TraceWriter::new(out);
    writer.write(&records[0])?;
    let mut emit = |rec: TraceRecord, records: &mut Vec<TraceRecord>| -> Result<(), HarnessError> {
        writer.write(&rec)?;
        records.push(rec);
        Ok(())
    };

    let mut monitor = ContainmentMonitor::new();
    let mut flushed_cycles = 0;
    let mut summary = TraceSummary {
        steps_completed: 0,
        status: ExitStatus::Ok,
        exit_code: 0,
        collision: None,
        containment: None,
        containment_checks: 0,
        error: None,
    };

    for step in 0..steps {
        let started = Instant::now();
        let cycles_before = driver.logs().len();
        let decision = match driver.act(&world) {
            Ok(d) => d,
            Err(e) => {
                summary.status = ExitStatus::Config;
                summary.error = Some(e.to_string());
                break;
            }
        };
        let elapsed = started.elapsed();
        let backend: Duration = driver.logs()[cycles_before..]
            .iter()
            .flat_map(|c| &c.proposals)
            .map(|p| Duration::from_secs_f64(p.latency_s))
            .sum();

        // cycles before the newest one can no longer change
        let settled = if decision.cycle_started.is_some() {
            driver.logs().len() - 1
        } else {
            flushed_cycles
        };
        for log in &driver.logs()[flushed_cycles..settled] {
            emit(
                TraceRecord::Cycle(CycleRecord { log: log.clone() }),
                &mut records,
            )?;
        }
        flushed_cycles = settled;

        monitor.record(step, driver.last_predictions().to_vec());
        let (ego, lane, agents) = StepRecord::snapshot(&world);
        let record = StepRecord {
            step,
            t: step as f64 * world.dt,
            ego,
            lane,
            agents,
            control: decision.control,
            source: decision.source,
            choice: decision.choice,
            behavior_state: decision.state,
            cycle: decision.cycle_started.map(|i| i as u64),
            replanned: decision.replanned,
            compute_s: cfg
                .timing
                .then(|| elapsed.saturating_sub(backend).as_secs_f64()),
            backend_s: cfg.timing.then_some(backend.as_secs_f64()),
        };
        emit(TraceRecord::Step(record), &mut records)?;

        world = match world_step(&world, &decision.control) {
            Ok(w) => w,
            Err(e) => {
                summary.status = ExitStatus::Io;
                summary.error = Some(e.to_string());
                summary.steps_completed = step + 1;
                break;
            }
        };
        summary.steps_completed = step + 1;
        if let Some(hit) = check_collision(&world) {
            log::error!(
                "collision with agent {} at step {}",
                hit.agent_id,
                hit.step_index
            );
            summary.status = ExitStatus::Collision;
            summary.error = Some(format!("collision with agent {}", hit.agent_id));
            summary.collision = Some(hit);
            break;
        }
        if let Err(v) = monitor.check(&world) {
            log::error!(
                "agent {} left its predicted interval at step {}",
                v.agent_id,
                world.step_index
            );
            summary.status = ExitStatus::Containment;
            summary.error = Some(format!("agent {} left its predicted interval", v.agent_id));
            summary.containment = Some(v);
            break;
        }
    }
    for log in &driver.logs()[flushed_cycles..] {
        emit(
            TraceRecord::Cycle(CycleRecord { log: log.clone() }),
            &mut records,
        )?;
    }
    summary.containment_checks = monitor.checks();
    summary.exit_code = summary.status.code();
    let status = summary.status;
    emit(TraceRecord::Summary(summary), &mut records)?;
    writer.finish()?;

    let trace = EpisodeTrace::from_records(records)?;
    let report = evaluate(std::slice::from_ref(&trace))?;
    Ok(EpisodeOutcome {
        status,
        trace,
        report,
    })
}

/// Output path of trial `i` when several trials share one base path.
pub fn trial_path(base: &Path, i: u32) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("jsonl");
    base.with_file_name(format!("{stem}-trial{i}.{ext}"))
}

/// Runs `trials` independent episodes concurrently, trial `i` with seed
/// `base + i`, each writing its own trace. One trial writes to `out` itself.
pub fn run_trials(
    scenario: &Scenario,
    scenario_hash: &str,
    cfg: &RunConfig,
    trials: u32,
    out: &Path,
) -> Vec<(PathBuf, Result<EpisodeOutcome, HarnessError>)> {
    let base_seed = cfg.seed.unwrap_or(scenario.seed);
    let jobs: Vec<(PathBuf, RunConfig)> = (0..trials.max(1))
        .map(|i| {
            let path = if trials <= 1 {
                out.to_path_buf()
            } else {
                trial_path(out, i)
            };
            (
                path,
                RunConfig {
                    seed: Some(base_seed + i as u64),
                    ..cfg.clone()
                },
            )
        })
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(path, cfg)| {
                s.spawn(move || {
                    let result = super::trace::TraceWriter::create(&path)
                        .and_then(|w| w.finish())
                        .and_then(|file| run_episode(scenario, scenario_hash, &cfg, file));
                    (path, result)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect()
    })
}
