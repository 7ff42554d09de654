use super::constraints::evaluate;
use super::{MpcProblem, PlanError, PlanResult};
use crate::dynamics::ControlInput;

const MAX_K: usize = 4;
const MAX_GRID: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub plan: PlanResult,
    /// Number of control sequences rolled out.
    pub rollouts: usize,
}

/// Exhaustive search over every control sequence drawn from
/// `accel_grid × steer_grid`. Returns the best feasible sequence by exact
/// objective, or an infeasible result carrying the least-violating one.
pub fn grid_oracle(
    p: &MpcProblem,
    accel_grid: &[f64],
    steer_grid: &[f64],
) -> Result<OracleOutcome, PlanError> {
    if p.k > MAX_K || accel_grid.len() > MAX_GRID || steer_grid.len() > MAX_GRID {
        return Err(PlanError::OracleTooLarge {
            k: p.k,
            accel: accel_grid.len(),
            steer: steer_grid.len(),
        });
    }
    p.validate()?;
    if accel_grid.is_empty() || steer_grid.is_empty() {
        return Err(PlanError::Malformed("empty control grid".into()));
    }
    let choices: Vec<ControlInput> = accel_grid
        .iter()
        .flat_map(|&a| steer_grid.iter().map(move |&d| ControlInput::new(a, d)))
        .collect();
    let radix = choices.len();
    let total = radix.pow(p.k as u32);

    let mut digits = vec![0usize; p.k];
    let mut best_feasible: Option<(f64, Vec<ControlInput>)> = None;
    let mut least_bad: Option<(f64, Vec<ControlInput>)> = None;
    for _ in 0..total {
        let seq: Vec<ControlInput> = digits.iter().map(|&d| choices[d]).collect();
        let ev = evaluate(p, &seq);
        if ev.max_violation <= p.cfg.eps_feas {
            if best_feasible
                .as_ref()
                .is_none_or(|(o, _)| ev.objective < *o)
            {
                best_feasible = Some((ev.objective, seq));
            }
        } else if least_bad
            .as_ref()
            .is_none_or(|(v, _)| ev.max_violation < *v)
        {
            least_bad = Some((ev.max_violation, seq));
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < radix {
                break;
            }
            *d = 0;
        }
    }
    let seq = best_feasible
        .or(least_bad)
        .map(|(_, s)| s)
        .unwrap_or_default();
    Ok(OracleOutcome {
        plan: PlanResult::certify(p, seq, 0, 0),
        rollouts: total,
    })
}
