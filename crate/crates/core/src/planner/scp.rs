use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::Matrix4x2;

use super::constraints::{evaluate, objective, relevant_lanes, separation_violation};
use super::{MpcProblem, PlanError, PlanResult, SafetyForm};
use crate::dynamics::{jacobians_unchecked, step_unchecked, ControlInput, VehicleState};
use crate::world::{lanes_of_interval, LaneSet};

/// Branch of the separation disjunction held fixed for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Behind,
    Ahead,
    /// Between the inflated bounds; only meaningful for the literal form.
    Inside,
}

const TRUST_ACCEL: f64 = 2.0;
const TRUST_STEER: f64 = 0.1;
const PROX_WEIGHT: f64 = 1e-3;
/// Merit improvement below which an iteration counts as converged; the merit
/// is dominated by final position, so this is roughly metres.
const MIN_GAIN: f64 = 1e-3;

/// Lane-conditioned trajectory optimization by sequential linearization.
///
/// Every round linearizes the bicycle model around the current rollout and
/// solves a second-order cone program in the control increments, with the
/// separation disjunction fixed per agent and constraint slack penalized.
/// Candidate branch assignments are tried in order of distance from the
/// initialization; the best certified plan wins.
pub fn solve_lane_conditioned(p: &MpcProblem) -> Result<PlanResult, PlanError> {
    p.validate()?;
    let mut inits = Vec::new();
    if let (super::InitStrategy::WarmStart, Some(w)) = (p.cfg.init_strategy, &p.warm_start) {
        inits.push((
            true,
            w.iter().map(|u| p.params.clamp(*u)).collect::<Vec<_>>(),
        ));
    }
    inits.push((false, vec![ControlInput::ZERO; p.k]));

    let mut iterations = 0;
    let mut branch_sets = 0;
    let mut best_feasible: Option<(f64, Vec<ControlInput>)> = None;
    let mut best_attempt: Option<(f64, Vec<ControlInput>)> = None;

    for (warm, init) in inits {
        for sides in branch_assignments(p, &init) {
            if branch_sets >= p.cfg.max_branch_sets.max(1) && best_feasible.is_some() {
                break;
            }
            // a warm start already sits in the right basin; accept its first certified plan
            if warm && best_feasible.is_some() {
                break;
            }
            branch_sets += 1;
            let (u, iters) = run_scp(p, &sides, init.clone());
            iterations += iters;
            let ev = evaluate(p, &u);
            if ev.max_violation <= p.cfg.eps_feas {
                if best_feasible
                    .as_ref()
                    .is_none_or(|(obj, _)| ev.objective < *obj)
                {
                    best_feasible = Some((ev.objective, u));
                }
            } else if best_attempt
                .as_ref()
                .is_none_or(|(viol, _)| ev.max_violation < *viol)
            {
                best_attempt = Some((ev.max_violation, u));
            }
        }
        if best_feasible.is_some() {
            break;
        }
    }

    let controls = match (best_feasible, best_attempt) {
        (Some((_, u)), _) | (None, Some((_, u))) => u,
        (None, None) => vec![ControlInput::ZERO; p.k],
    };
    Ok(PlanResult::certify(p, controls, iterations, branch_sets))
}

fn rollout(p: &MpcProblem, u: &[ControlInput]) -> Vec<VehicleState> {
    let mut out = Vec::with_capacity(u.len());
    let mut s = p.s0;
    for c in u {
        s = step_unchecked(&s, c, p.dt, &p.params);
        out.push(s);
    }
    out
}

/// Straight-line longitudinal reach under full braking / full throttle.
fn reach(p: &MpcProblem) -> Vec<(f64, f64)> {
    let brake = rollout(p, &vec![ControlInput::new(p.params.accel_min, 0.0); p.k]);
    let push = rollout(p, &vec![ControlInput::new(p.params.accel_max, 0.0); p.k]);
    brake.iter().zip(&push).map(|(b, f)| (b.x, f.x)).collect()
}

/// Lanes the ego may sweep through on its way to the target band.
fn sweep_lanes(p: &MpcProblem) -> LaneSet {
    let lo = p.s0.y.min(p.target.band.0);
    let hi = p.s0.y.max(p.target.band.1);
    lanes_of_interval(lo, hi, p.params.width / 2.0, &p.road).union(p.target.lanes)
}

fn branch_assignments(p: &MpcProblem, init: &[ControlInput]) -> Vec<Vec<Side>> {
    let traj = rollout(p, init);
    let reach = reach(p);
    let sweep = sweep_lanes(p);
    let l = p.cfg.l_safe;
    let mut base = Vec::with_capacity(p.predictions.len());
    let mut contested: Vec<(f64, usize)> = Vec::new();
    for (j, pred) in p.predictions.iter().enumerate() {
        let b1 = pred.at(1);
        let x1 = traj[0].x;
        let side = match p.cfg.safety_form {
            SafetyForm::EndpointDistance if x1 > b1.x_lo + l && x1 < b1.x_hi - l => Side::Inside,
            _ if x1 < 0.5 * (b1.x_lo + b1.x_hi) => Side::Behind,
            _ => Side::Ahead,
        };
        base.push(side);

        let lanes = pred.horizon.iter().fold(LaneSet::EMPTY, |acc, b| {
            acc.union(lanes_of_interval(b.y_lo, b.y_hi, pred.half_width, &p.road))
        });
        if !lanes.intersects(sweep) {
            continue;
        }
        let always_relevant = lanes.intersects(p.target.lanes);
        let near = pred
            .horizon
            .iter()
            .zip(&reach)
            .any(|(b, (lo, hi))| *hi >= b.x_lo - l - 1.0 && *lo <= b.x_hi + l + 1.0);
        if !near {
            continue;
        }
        let ahead_possible = !always_relevant
            || pred
                .horizon
                .iter()
                .zip(&reach)
                .all(|(b, (_, hi))| *hi >= b.x_hi + l);
        if ahead_possible || side == Side::Ahead {
            contested.push((((b1.x_lo + b1.x_hi) * 0.5 - x1).abs(), j));
        }
    }
    contested.sort_by(|a, b| a.0.total_cmp(&b.0));
    let contested: Vec<usize> = contested.into_iter().map(|(_, j)| j).take(8).collect();

    // Assignments ordered by number of flips from the initialization.
    let mut masks: Vec<u32> = (0..(1u32 << contested.len())).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
        .into_iter()
        .take(p.cfg.max_branch_sets.max(1))
        .map(|mask| {
            let mut sides = base.clone();
            for (bit, &j) in contested.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    sides[j] = match sides[j] {
                        Side::Behind => Side::Ahead,
                        Side::Ahead | Side::Inside => Side::Behind,
                    };
                }
            }
            sides
        })
        .collect()
}

/// Violation sum with the disjunction fixed to `sides`.
fn branch_violation(p: &MpcProblem, sides: &[Side], traj: &[VehicleState]) -> f64 {
    let l = p.cfg.l_safe;
    let k_commit = p.k_commit();
    let mut total = 0.0;
    for (idx, s) in traj.iter().enumerate() {
        let i = idx + 1;
        total += (p.road.y_inf - s.y).max(s.y - p.road.y_sup).max(0.0);
        if i >= k_commit {
            total += (p.target.band.0 - s.y).max(s.y - p.target.band.1).max(0.0);
        }
        let lanes = relevant_lanes(p, s.y);
        for (pred, side) in p.predictions.iter().zip(sides) {
            let b = &pred.horizon[idx];
            if !lanes_of_interval(b.y_lo, b.y_hi, pred.half_width, &p.road).intersects(lanes) {
                continue;
            }
            total += match side {
                Side::Behind => (s.x - (b.x_lo - l)).max(0.0),
                Side::Ahead => ((b.x_hi + l) - s.x).max(0.0),
                Side::Inside => {
                    separation_violation(SafetyForm::EndpointDistance, s.x, b.x_lo, b.x_hi, l)
                }
            };
        }
    }
    total
}

fn merit(p: &MpcProblem, sides: &[Side], u: &[ControlInput]) -> f64 {
    let traj = rollout(p, u);
    objective(p, u, &traj) + p.cfg.slack_penalty * branch_violation(p, sides, &traj)
}

struct Linearization {
    traj: Vec<VehicleState>,
    /// `sens[i][j] = ∂s_{i+1} / ∂u_j` for `j <= i`.
    sens: Vec<Vec<Matrix4x2<f64>>>,
}

fn linearize(p: &MpcProblem, u: &[ControlInput]) -> Linearization {
    let mut traj = Vec::with_capacity(p.k);
    let mut sens: Vec<Vec<Matrix4x2<f64>>> = Vec::with_capacity(p.k);
    let mut s = p.s0;
    for (i, c) in u.iter().enumerate() {
        let (a, b) = jacobians_unchecked(&s, c, p.dt, &p.params);
        let mut row = Vec::with_capacity(i + 1);
        if i > 0 {
            row.extend(sens[i - 1].iter().map(|g| a * g));
        }
        row.push(b);
        sens.push(row);
        s = step_unchecked(&s, c, p.dt, &p.params);
        traj.push(s);
    }
    Linearization { traj, sens }
}

/// Sparse row builder for `A z <= b` style constraints.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.b.len();
        for (j, v) in coeffs {
            if v != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.b.push(rhs);
    }

    fn len(&self) -> usize {
        self.b.len()
    }
}

/// Coefficients of state component `c` at horizon step `i` (1-based) in
/// the control increments, scaled by `scale`.
fn state_row(
    lin: &Linearization,
    i: usize,
    c: usize,
    scale: f64,
) -> impl Iterator<Item = (usize, f64)> + '_ {
    lin.sens[i - 1]
        .iter()
        .enumerate()
        .flat_map(move |(j, g)| [(2 * j, scale * g[(c, 0)]), (2 * j + 1, scale * g[(c, 1)])])
}

fn solve_subproblem(
    p: &MpcProblem,
    sides: &[Side],
    u: &[ControlInput],
    lin: &Linearization,
    trust: (f64, f64),
) -> Option<Vec<f64>> {
    let k = p.k;
    let n_du = 2 * k;
    let n_t = k - 1;
    let l = p.cfg.l_safe;

    // Slack-carrying rows: (coefficients over du, rhs). Each gets its own slack.
    let mut soft: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let k_commit = p.k_commit();
    let margin = 1e-3_f64.min(0.25 * (p.target.band.1 - p.target.band.0));
    for i in 1..=k {
        let s = &lin.traj[i - 1];
        soft.push((state_row(lin, i, 1, 1.0).collect(), p.road.y_sup - s.y));
        soft.push((state_row(lin, i, 1, -1.0).collect(), s.y - p.road.y_inf));
        if i >= k_commit {
            soft.push((
                state_row(lin, i, 1, 1.0).collect(),
                p.target.band.1 - margin - s.y,
            ));
            soft.push((
                state_row(lin, i, 1, -1.0).collect(),
                s.y - (p.target.band.0 + margin),
            ));
        }
        let lanes = relevant_lanes(p, s.y);
        for (pred, side) in p.predictions.iter().zip(sides) {
            let b = &pred.horizon[i - 1];
            if !lanes_of_interval(b.y_lo, b.y_hi, pred.half_width, &p.road).intersects(lanes) {
                continue;
            }
            match side {
                Side::Behind => soft.push((state_row(lin, i, 0, 1.0).collect(), b.x_lo - l - s.x)),
                Side::Ahead => {
                    soft.push((state_row(lin, i, 0, -1.0).collect(), s.x - (b.x_hi + l)))
                }
                Side::Inside => {
                    soft.push((state_row(lin, i, 0, -1.0).collect(), s.x - (b.x_lo + l)));
                    soft.push((state_row(lin, i, 0, 1.0).collect(), b.x_hi - l - s.x));
                }
            }
        }
    }
    let n_s = soft.len();
    let n = n_du + n_t + n_s;
    let t_col = |i: usize| n_du + i;
    let s_col = |r: usize| n_du + n_t + r;

    let mut rows = Rows::default();
    for (j, c) in u.iter().enumerate() {
        let pa = &p.params;
        rows.push(
            [(2 * j, 1.0)],
            (pa.accel_max - c.accel).min(trust.0).max(0.0),
        );
        rows.push(
            [(2 * j, -1.0)],
            (c.accel - pa.accel_min).min(trust.0).max(0.0),
        );
        rows.push(
            [(2 * j + 1, 1.0)],
            (pa.steer_max - c.steer).min(trust.1).max(0.0),
        );
        rows.push(
            [(2 * j + 1, -1.0)],
            (c.steer - pa.steer_min).min(trust.1).max(0.0),
        );
    }
    for r in 0..n_s {
        rows.push([(s_col(r), -1.0)], 0.0);
    }
    for (r, (coeffs, rhs)) in soft.into_iter().enumerate() {
        rows.push(coeffs.into_iter().chain([(s_col(r), -1.0)]), rhs);
    }
    let n_nonneg = rows.len();
    for i in 0..n_t {
        rows.push([(t_col(i), -1.0)], 0.0);
        rows.push(
            [(2 * (i + 1), -1.0), (2 * i, 1.0)],
            u[i + 1].accel - u[i].accel,
        );
        rows.push(
            [(2 * (i + 1) + 1, -1.0), (2 * i + 1, 1.0)],
            u[i + 1].steer - u[i].steer,
        );
    }
    let mut cones = vec![SupportedConeT::NonnegativeConeT(n_nonneg)];
    cones.extend((0..n_t).map(|_| SupportedConeT::SecondOrderConeT(3)));
    let m = rows.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);

    // Objective: -x_k + w_smooth Σ t + μ Σ slack + w_lat (y_k - c)² + prox.
    let mut q = vec![0.0; n];
    let last = &lin.traj[k - 1];
    for (j, v) in state_row(lin, k, 0, -1.0) {
        q[j] += v;
    }
    let g: Vec<(usize, f64)> = state_row(lin, k, 1, 1.0).collect();
    let w_lat = p.cfg.w_lat;
    for &(j, v) in &g {
        q[j] += 2.0 * w_lat * (last.y - p.target.center) * v;
    }
    for i in 0..n_t {
        q[t_col(i)] = p.cfg.w_smooth;
    }
    for r in 0..n_s {
        q[s_col(r)] = p.cfg.slack_penalty;
    }
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for &(r, vr) in &g {
        for &(c, vc) in &g {
            if r <= c {
                pi.push(r);
                pj.push(c);
                pv.push(2.0 * w_lat * vr * vc);
            }
        }
    }
    for j in 0..n_du {
        pi.push(j);
        pj.push(j);
        pv.push(PROX_WEIGHT);
    }
    let pmat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(100)
        .tol_gap_abs(1e-6)
        .tol_gap_rel(1e-6)
        .tol_feas(1e-7)
        .build()
        .ok()?;
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &rows.b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            Some(solver.solution.x[..n_du].to_vec())
        }
        _ => None,
    }
}

fn run_scp(p: &MpcProblem, sides: &[Side], init: Vec<ControlInput>) -> (Vec<ControlInput>, usize) {
    let mut u: Vec<ControlInput> = init.into_iter().map(|c| p.params.clamp(c)).collect();
    let mut current = merit(p, sides, &u);
    let mut trust = (TRUST_ACCEL, TRUST_STEER);
    let mut iters = 0;
    while iters < p.cfg.max_iters {
        iters += 1;
        let lin = linearize(p, &u);
        let Some(du) = solve_subproblem(p, sides, &u, &lin, trust) else {
            trust = (trust.0 * 0.25, trust.1 * 0.25);
            if trust.0 < 1e-4 {
                break;
            }
            continue;
        };
        let cand: Vec<ControlInput> = u
            .iter()
            .enumerate()
            .map(|(j, c)| {
                p.params.clamp(ControlInput::new(
                    c.accel + du[2 * j],
                    c.steer + du[2 * j + 1],
                ))
            })
            .collect();
        // measured after clamping: a step pushed back onto the bounds is no step
        let (step_a, step_s) = cand
            .iter()
            .zip(&u)
            .fold((0.0_f64, 0.0_f64), |(a, s), (c, o)| {
                (
                    a.max((c.accel - o.accel).abs()),
                    s.max((c.steer - o.steer).abs()),
                )
            });
        if step_a < 1e-6 && step_s < 1e-7 {
            break;
        }
        let next = merit(p, sides, &cand);
        if (next - current).abs() <= 1e-9 {
            // flat direction, e.g. speed already saturated
            break;
        }
        if next < current - 1e-9 {
            let gain = current - next;
            u = cand;
            current = next;
            if step_a > 0.9 * trust.0 || step_s > 0.9 * trust.1 {
                trust = ((trust.0 * 2.0).min(8.0), (trust.1 * 2.0).min(0.6));
            }
            if gain < MIN_GAIN {
                break;
            }
        } else {
            trust = (trust.0 * 0.25, trust.1 * 0.25);
            if trust.0 < 1e-4 {
                break;
            }
        }
    }
    (u, iters)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{ConstraintKind, PlanStatus};
    use super::*;
    use crate::world::LaneId;

    #[test]
    fn empty_road_accelerates_and_centers() {
        let p = problem(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            LaneId::Middle,
            8,
            vec![],
        );
        let r = solve_lane_conditioned(&p).unwrap();
        assert_eq!(r.status, PlanStatus::Feasible);
        let last = r.trajectory.last().unwrap();
        assert!((last.y - 6.0).abs() < 0.1);
        // full throttle for 0.8 s from 30 m/s
        let best_x = 30.0 * 0.8 + 3.0 * 0.01 * (0..8).sum::<i32>() as f64;
        assert!(last.x >= best_x * 0.99, "x={} expected ~{best_x}", last.x);
    }

    #[test]
    fn off_center_start_moves_toward_center() {
        let p = problem(
            VehicleState::new(0.0, 6.8, 30.0, 0.0),
            LaneId::Middle,
            20,
            vec![],
        );
        let r = solve_lane_conditioned(&p).unwrap();
        assert!(r.is_feasible());
        assert!(
            (r.trajectory.last().unwrap().y - 6.0).abs() < 0.4,
            "{:?}",
            r.trajectory.last()
        );
    }

    #[test]
    fn fully_blocked_lane_is_infeasible() {
        let preds = vec![static_box(5, 8, (-5.0, 60.0), (5.8, 6.2))];
        let p = problem(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            LaneId::Middle,
            8,
            preds,
        );
        let r = solve_lane_conditioned(&p).unwrap();
        assert_eq!(r.status, PlanStatus::Infeasible);
        assert!(r.controls.is_empty());
        let worst = r.diagnostics.worst.unwrap();
        assert_eq!(worst.kind, ConstraintKind::Safety);
        assert_eq!(worst.agent_id, Some(5));
    }

    #[test]
    fn follows_slow_leader() {
        let preds = vec![moving_box(2, 20, 20.0, 6.0, 20.0, (-2.0, 1.0))];
        let p = problem(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            LaneId::Middle,
            20,
            preds,
        );
        let r = solve_lane_conditioned(&p).unwrap();
        assert!(r.is_feasible(), "{:?}", r.diagnostics);
        assert!(r.controls.iter().any(|u| u.accel < 0.0));
    }

    #[test]
    fn changes_lane_when_asked() {
        let p = problem(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            LaneId::Left,
            20,
            vec![],
        );
        let r = solve_lane_conditioned(&p).unwrap();
        assert!(r.is_feasible(), "{:?}", r.diagnostics);
        assert!(r.trajectory.last().unwrap().y < 4.0);
    }

    #[test]
    fn solver_is_deterministic() {
        let preds = vec![
            moving_box(2, 20, 40.0, 6.0, 20.0, (-2.0, 1.0)),
            moving_box(3, 20, -20.0, 2.0, 35.0, (-2.0, 1.5)),
        ];
        let p = problem(
            VehicleState::new(0.0, 6.0, 30.0, 0.0),
            LaneId::Left,
            20,
            preds,
        );
        assert_eq!(
            solve_lane_conditioned(&p).unwrap(),
            solve_lane_conditioned(&p).unwrap()
        );
    }
}
