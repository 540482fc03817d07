//! Exact average-reward solution: relative value iteration, policy
//! extraction, Q-factors and structural verification.
//!
//! Each sweep applies the Bellman max-operator and subtracts the value at a
//! fixed reference state, which keeps the iterates bounded; the iteration
//! stops when the span seminorm (max − min) of successive differences falls
//! below `span_tol`. The subtracted term converges to the optimal average
//! reward.
//!
//! With `pruned = true` the per-state argmax is restricted using the
//! monotone-policy structure: sweeping holding times in increasing order, the
//! power candidates for sensor `i` start at the optimizer found at the
//! τ-predecessor. The restriction never changes the computed maxima, so
//! values, policy and the average reward are bit-identical to the
//! unrestricted sweep; it only shrinks the searched action sets.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{ActionVec, MdpModel};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub span_tol: f64,
    pub max_sweeps: usize,
    pub pruned: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            span_tol: 1e-9,
            max_sweeps: 20_000,
            pruned: true,
        }
    }
}

/// Relative values and the average-reward estimate. `values[phi_f] = 0` by
/// construction.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub j_star: f64,
    pub phi_f: usize,
}

/// One action rank per state, into the state's feasible list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    ranks: Vec<u32>,
}

impl PolicyTable {
    pub fn from_ranks(ranks: Vec<u32>) -> Self {
        Self { ranks }
    }

    pub fn rank(&self, state_idx: usize) -> usize {
        self.ranks[state_idx] as usize
    }

    pub fn action<'m>(&self, model: &'m MdpModel, state_idx: usize) -> &'m ActionVec {
        &model.feasible_actions_of_index(state_idx)[self.rank(state_idx)]
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

/// Q-factors of the converged solution, pair-indexed.
#[derive(Debug, Clone)]
pub struct QTableExact {
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRecord {
    pub sweep: usize,
    pub span: f64,
    pub j_estimate: f64,
}

pub fn rvi_solve(
    model: &MdpModel,
    phi_f: usize,
    opts: &SolverOptions,
) -> Result<(ValueTable, PolicyTable, Vec<SweepRecord>)> {
    if phi_f >= model.state_count() {
        return Err(Error::Validation(format!(
            "reference state {phi_f} out of range (state count {})",
            model.state_count()
        )));
    }
    if !(opts.span_tol > 0.0) {
        return Err(Error::Validation("span_tol must be positive".into()));
    }
    let n = model.state_count();
    let mut prev = vec![0.0_f64; n];
    let mut next = vec![0.0_f64; n];
    let mut argmax = vec![0u32; n];
    let mut diagnostics = Vec::new();
    let mut span = f64::INFINITY;

    for sweep in 0..opts.max_sweeps {
        if opts.pruned {
            sweep_pruned(model, &prev, &mut next, &mut argmax);
        } else {
            sweep_full(model, &prev, &mut next, &mut argmax);
        }
        let j_estimate = next[phi_f];
        next.par_iter_mut().for_each(|x| *x -= j_estimate);
        let (lo, hi) = next
            .par_iter()
            .zip(prev.par_iter())
            .map(|(a, b)| {
                let d = a - b;
                (d, d)
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |(lo1, hi1), (lo2, hi2)| (lo1.min(lo2), hi1.max(hi2)),
            );
        span = hi - lo;
        diagnostics.push(SweepRecord {
            sweep,
            span,
            j_estimate,
        });
        std::mem::swap(&mut prev, &mut next);
        if span < opts.span_tol {
            let vt = ValueTable {
                values: prev,
                j_star: j_estimate,
                phi_f,
            };
            let pt = extract_policy(model, &vt);
            return Ok((vt, pt, diagnostics));
        }
    }
    Err(Error::SolverNonConvergence {
        max_sweeps: opts.max_sweeps,
        span,
    })
}

fn sweep_full(model: &MdpModel, prev: &[f64], next: &mut [f64], argmax: &mut [u32]) {
    let num_digits = model.num_digits();
    next.par_iter_mut()
        .zip(argmax.par_iter_mut())
        .enumerate()
        .for_each_init(
            || vec![0usize; num_digits],
            |digits, (idx, (out, arg))| {
                model.decode_into(idx, digits);
                let actions = model.actions_for_battery(digits[0] as u32);
                let pair_base = model.pair_index(idx, 0);
                let mut best = f64::NEG_INFINITY;
                let mut best_rank = 0u32;
                for (rank, action) in actions.iter().enumerate() {
                    let q = model.reward_by_pair(pair_base + rank)
                        + model.expected_next_value(digits, action, prev);
                    if q > best {
                        best = q;
                        best_rank = rank as u32;
                    }
                }
                *out = best;
                *arg = best_rank;
            },
        );
}

/// One sweep with the argmax restricted by the monotone-policy structure.
/// States are visited in ascending index order, which places every
/// τ-predecessor before its successor since the τ digits are the
/// least-significant ones.
fn sweep_pruned(model: &MdpModel, prev: &[f64], next: &mut [f64], argmax: &mut [u32]) {
    let n_sensors = model.sensor_count();
    let mut digits = vec![0usize; model.num_digits()];
    let mut bounds = vec![0u32; n_sensors];
    for idx in 0..model.state_count() {
        model.decode_into(idx, &mut digits);
        let actions = model.actions_for_battery(digits[0] as u32);
        for i in 0..n_sensors {
            bounds[i] = if digits[4 + 3 * i] > 0 {
                let pred = idx - model.tau_stride(i);
                actions[argmax[pred] as usize].powers()[i]
            } else {
                0
            };
        }
        let pair_base = model.pair_index(idx, 0);
        let mut best = f64::NEG_INFINITY;
        let mut best_rank = 0u32;
        for (rank, action) in actions.iter().enumerate() {
            if action
                .powers()
                .iter()
                .zip(&bounds)
                .any(|(p, lb)| p < lb)
            {
                continue;
            }
            let q = model.reward_by_pair(pair_base + rank)
                + model.expected_next_value(&digits, action, prev);
            if q > best {
                best = q;
                best_rank = rank as u32;
            }
        }
        if best == f64::NEG_INFINITY {
            // The per-sensor bounds can be jointly infeasible under a tight
            // battery; fall back to the unrestricted argmax.
            for (rank, action) in actions.iter().enumerate() {
                let q = model.reward_by_pair(pair_base + rank)
                    + model.expected_next_value(&digits, action, prev);
                if q > best {
                    best = q;
                    best_rank = rank as u32;
                }
            }
        }
        next[idx] = best;
        argmax[idx] = best_rank;
    }
}

/// Greedy policy of a value table: per state the argmax of
/// `r(s,a) + Σ P(s'|s,a) v(s')` over the full feasible set, ties broken by
/// the lexicographically smallest action.
pub fn extract_policy(model: &MdpModel, vt: &ValueTable) -> PolicyTable {
    let num_digits = model.num_digits();
    let ranks: Vec<u32> = (0..model.state_count())
        .into_par_iter()
        .map_init(
            || vec![0usize; num_digits],
            |digits, idx| {
                model.decode_into(idx, digits);
                let actions = model.actions_for_battery(digits[0] as u32);
                let pair_base = model.pair_index(idx, 0);
                let mut best = f64::NEG_INFINITY;
                let mut best_rank = 0u32;
                for (rank, action) in actions.iter().enumerate() {
                    let q = model.reward_by_pair(pair_base + rank)
                        + model.expected_next_value(digits, action, &vt.values);
                    if q > best {
                        best = q;
                        best_rank = rank as u32;
                    }
                }
                best_rank
            },
        )
        .collect();
    PolicyTable { ranks }
}

/// Q-factors `Q(s,a) = r(s,a) + Σ P(s'|s,a) v(s') − j_star`.
pub fn q_from_v(model: &MdpModel, vt: &ValueTable) -> QTableExact {
    let num_digits = model.num_digits();
    let q: Vec<f64> = (0..model.pair_count())
        .into_par_iter()
        .map_init(
            || vec![0usize; num_digits],
            |digits, pair| {
                let (state, rank) = model.pair_to_state_action(pair);
                model.decode_into(state, digits);
                let action = &model.actions_for_battery(digits[0] as u32)[rank];
                model.reward_by_pair(pair)
                    + model.expected_next_value(digits, action, &vt.values)
                    - vt.j_star
            },
        )
        .collect();
    QTableExact { q }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    MonotoneV,
    MonotoneQ,
    SuperadditiveQ,
    MonotonePolicy,
}

#[derive(Debug, Clone)]
pub struct StructureViolation {
    pub kind: ViolationKind,
    pub state: usize,
    pub sensor: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Result of the exhaustive structure check over all τ-adjacent state pairs.
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub monotone_v: bool,
    pub monotone_q: bool,
    pub superadditive_q: bool,
    pub monotone_policy: bool,
    pub counterexamples: Vec<StructureViolation>,
    pub total_violations: usize,
}

impl StructureReport {
    pub fn all_hold(&self) -> bool {
        self.monotone_v && self.monotone_q && self.superadditive_q && self.monotone_policy
    }
}

const MAX_RECORDED_VIOLATIONS: usize = 32;

/// Exhaustively checks, over every pair of states differing by one in a
/// single τ coordinate: value monotonicity, Q monotonicity (all feasible
/// actions), superadditivity over power-adjacent action pairs, and per-sensor
/// policy monotonicity.
pub fn verify_structure(
    model: &MdpModel,
    vt: &ValueTable,
    pt: &PolicyTable,
    qt: &QTableExact,
    tol: f64,
) -> StructureReport {
    let n_sensors = model.sensor_count();
    let b_levels = model.config().battery.b_max as usize + 1;
    // Power-adjacent feasible action pairs (lo, hi ranks) per battery level
    // and sensor.
    let mut adjacent: Vec<Vec<Vec<(usize, usize)>>> = Vec::with_capacity(b_levels);
    for b in 0..b_levels {
        let actions = model.actions_for_battery(b as u32);
        let per_sensor: Vec<Vec<(usize, usize)>> = (0..n_sensors)
            .map(|i| {
                let mut pairs = Vec::new();
                for (lo_rank, action) in actions.iter().enumerate() {
                    let mut raised = action.clone();
                    raised.0[i] += 1;
                    if let Some(hi_rank) = model.action_rank(b as u32, &raised) {
                        pairs.push((lo_rank, hi_rank));
                    }
                }
                pairs
            })
            .collect();
        adjacent.push(per_sensor);
    }

    let mut report = StructureReport {
        monotone_v: true,
        monotone_q: true,
        superadditive_q: true,
        monotone_policy: true,
        counterexamples: Vec::new(),
        total_violations: 0,
    };
    let mut digits = vec![0usize; model.num_digits()];
    for idx in 0..model.state_count() {
        model.decode_into(idx, &mut digits);
        let b = digits[0];
        for i in 0..n_sensors {
            if digits[4 + 3 * i] >= model.tau_limit() {
                continue;
            }
            let upper = idx + model.tau_stride(i);
            if vt.values[idx] > vt.values[upper] + tol {
                record(&mut report, ViolationKind::MonotoneV, idx, i, vt.values[idx], vt.values[upper]);
            }
            let lo_base = model.pair_index(idx, 0);
            let hi_base = model.pair_index(upper, 0);
            for rank in 0..model.actions_for_battery(b as u32).len() {
                if qt.q[lo_base + rank] > qt.q[hi_base + rank] + tol {
                    record(
                        &mut report,
                        ViolationKind::MonotoneQ,
                        idx,
                        i,
                        qt.q[lo_base + rank],
                        qt.q[hi_base + rank],
                    );
                }
            }
            for &(lo_rank, hi_rank) in &adjacent[b][i] {
                let upper_diff = qt.q[hi_base + hi_rank] - qt.q[hi_base + lo_rank];
                let lower_diff = qt.q[lo_base + hi_rank] - qt.q[lo_base + lo_rank];
                if upper_diff + tol < lower_diff {
                    record(
                        &mut report,
                        ViolationKind::SuperadditiveQ,
                        idx,
                        i,
                        upper_diff,
                        lower_diff,
                    );
                }
            }
            let actions = model.actions_for_battery(b as u32);
            let p_lo = actions[pt.rank(idx)].powers()[i];
            let p_hi = actions[pt.rank(upper)].powers()[i];
            if p_hi < p_lo {
                record(
                    &mut report,
                    ViolationKind::MonotonePolicy,
                    idx,
                    i,
                    f64::from(p_lo),
                    f64::from(p_hi),
                );
            }
        }
    }
    report
}

fn record(
    report: &mut StructureReport,
    kind: ViolationKind,
    state: usize,
    sensor: usize,
    lhs: f64,
    rhs: f64,
) {
    match kind {
        ViolationKind::MonotoneV => report.monotone_v = false,
        ViolationKind::MonotoneQ => report.monotone_q = false,
        ViolationKind::SuperadditiveQ => report.superadditive_q = false,
        ViolationKind::MonotonePolicy => report.monotone_policy = false,
    }
    report.total_violations += 1;
    if report.counterexamples.len() < MAX_RECORDED_VIOLATIONS {
        report.counterexamples.push(StructureViolation {
            kind,
            state,
            sensor,
            lhs,
            rhs,
        });
    }
}

/// Largest Bellman residual `|j_star + v(s) − max_a[r + Σ P v]|` of a
/// solution; converges to zero with the span tolerance.
pub fn bellman_residual(model: &MdpModel, vt: &ValueTable) -> f64 {
    let num_digits = model.num_digits();
    (0..model.state_count())
        .into_par_iter()
        .map_init(
            || vec![0usize; num_digits],
            |digits, idx| {
                model.decode_into(idx, digits);
                let actions = model.actions_for_battery(digits[0] as u32);
                let pair_base = model.pair_index(idx, 0);
                let mut best = f64::NEG_INFINITY;
                for (rank, action) in actions.iter().enumerate() {
                    let q = model.reward_by_pair(pair_base + rank)
                        + model.expected_next_value(digits, action, &vt.values);
                    best = best.max(q);
                }
                (vt.j_star + vt.values[idx] - best).abs()
            },
        )
        .reduce(|| 0.0, f64::max)
}
