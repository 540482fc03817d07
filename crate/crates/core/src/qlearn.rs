//! Model-free average-reward Q-learning with ε-greedy exploration.
//!
//! Two update rules are provided. The standard rule moves one state-action
//! entry toward `r + max_a' Q(s',a') − Q(φ_f,a_f)`; subtracting the fixed
//! reference entry keeps the iterates bounded, and the reference entry itself
//! converges to the optimal average reward.
//!
//! The structural rule additionally maintains Lagrange multipliers on the
//! known inequalities between Q entries — monotonicity in each holding time
//! and superadditivity in (holding time, power) — as a primal-dual scheme:
//! the visited entry receives the TD increment plus the transposed-constraint
//! correction, and the multipliers descend along the constraint values. The
//! constraints come from the state-space shape only; channel statistics stay
//! hidden from the learner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::MdpModel;
use crate::rvi::PolicyTable;
use crate::sim::{env_step, EnvState};

/// Tabular Q over (state, feasible-action) pairs.
#[derive(Debug, Clone)]
pub struct QTable {
    pub q: Vec<f64>,
}

impl QTable {
    pub fn new(model: &MdpModel, init: f64) -> Self {
        Self {
            q: vec![init; model.pair_count()],
        }
    }

    /// Greedy value and rank at a state; first maximum wins, which is the
    /// lexicographically smallest maximizing action.
    pub fn greedy(&self, model: &MdpModel, state_idx: usize) -> (f64, usize) {
        let base = model.pair_index(state_idx, 0);
        let count = model.feasible_actions_of_index(state_idx).len();
        let mut best = f64::NEG_INFINITY;
        let mut best_rank = 0;
        for rank in 0..count {
            let v = self.q[base + rank];
            if v > best {
                best = v;
                best_rank = rank;
            }
        }
        (best, best_rank)
    }
}

/// ε-greedy action selection, deterministic given the two uniform draws:
/// `u` decides exploration, `u2` picks the uniform feasible action.
pub fn epsilon_greedy(
    model: &MdpModel,
    q: &QTable,
    state_idx: usize,
    eps: f64,
    u: f64,
    u2: f64,
) -> usize {
    let count = model.feasible_actions_of_index(state_idx).len();
    if u < eps {
        ((u2 * count as f64) as usize).min(count - 1)
    } else {
        q.greedy(model, state_idx).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnMode {
    Standard,
    Structural,
}

/// Learner parameters. The step size at step `k` (0-based) is
/// `c / (⌈(k+1)/B⌉ + k0)`, a standard diminishing family; `B` stretches the
/// schedule.
#[derive(Debug, Clone)]
pub struct LearnConfig {
    pub epsilon: f64,
    pub step_c: f64,
    pub step_k0: f64,
    pub step_b: u64,
    pub horizon: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub q_init: f64,
    /// Project the multipliers onto ν ≥ 0 after each dual step. Disabling
    /// reproduces the literal unprojected recursion.
    pub dual_projection: bool,
    /// Update every dual row each step instead of the sparse default.
    pub full_dual: bool,
    /// Round-robin batch size of non-incident rows updated per step in
    /// sparse dual mode.
    pub dual_batch: usize,
    /// Reference state; defaults to the model's canonical reference. The
    /// reference action is always the all-zeros action (rank 0).
    pub phi_f: Option<usize>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            step_c: 1.0,
            step_k0: 100.0,
            step_b: 1,
            horizon: 1_000_000,
            eval_every: 10_000,
            seed: 0,
            q_init: 0.0,
            dual_projection: true,
            full_dual: false,
            dual_batch: 256,
            phi_f: None,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Validation("epsilon must be in [0, 1]".into()));
        }
        if !(self.step_c > 0.0) || !(self.step_k0 >= 0.0) || self.step_b == 0 {
            return Err(Error::Validation(
                "step schedule needs c > 0, k0 >= 0, B >= 1".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::Validation("eval_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, k: u64) -> f64 {
        self.step_c / ((k / self.step_b + 1) as f64 + self.step_k0)
    }

    pub fn reference_pair(&self, model: &MdpModel) -> usize {
        let phi_f = self.phi_f.unwrap_or_else(|| model.phi_f_default());
        model.pair_index(phi_f, 0)
    }
}

/// One interaction record.
#[derive(Debug, Clone, Copy)]
pub struct Observation {
    pub state: usize,
    pub rank: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// The standard one-entry update. Returns the applied increment.
pub fn standard_update(
    model: &MdpModel,
    q: &mut QTable,
    obs: &Observation,
    cfg: &LearnConfig,
    k: u64,
) -> Result<f64> {
    let pair = model.pair_index(obs.state, obs.rank);
    let reference = q.q[cfg.reference_pair(model)];
    let (next_max, _) = q.greedy(model, obs.next_state);
    let td = obs.reward + next_max - q.q[pair] - reference;
    let delta = cfg.step_size(k) * td;
    q.q[pair] += delta;
    if !q.q[pair].is_finite() {
        return Err(Error::LearnerDivergence {
            step: k,
            detail: format!("Q pair {pair} became non-finite"),
        });
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Monotone,
    Superadditive,
}

/// Sparse difference constraints `row · Q ≥ 0` over the stacked Q vector,
/// with one dual multiplier per row.
pub struct ConstraintSet {
    term_pairs: Vec<u32>,
    term_coefs: Vec<f64>,
    row_offsets: Vec<u32>,
    kinds: Vec<RowKind>,
    pub nu: Vec<f64>,
    /// Per Q pair: the (row, coefficient) entries touching it.
    incident_offsets: Vec<u32>,
    incident: Vec<(u32, f64)>,
    rr_cursor: usize,
}

impl ConstraintSet {
    pub fn empty(model: &MdpModel) -> Self {
        Self {
            term_pairs: Vec::new(),
            term_coefs: Vec::new(),
            row_offsets: vec![0],
            kinds: Vec::new(),
            nu: Vec::new(),
            incident_offsets: vec![0; model.pair_count() + 1],
            incident: Vec::new(),
            rr_cursor: 0,
        }
    }

    pub fn row_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, row: usize) -> RowKind {
        self.kinds[row]
    }

    pub fn row_terms(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[row] as usize;
        let hi = self.row_offsets[row + 1] as usize;
        (lo..hi).map(move |t| (self.term_pairs[t] as usize, self.term_coefs[t]))
    }

    pub fn row_dot(&self, row: usize, q: &[f64]) -> f64 {
        self.row_terms(row).map(|(pair, c)| c * q[pair]).sum()
    }

    /// Rows violated below `-tol`.
    pub fn violation_count(&self, q: &[f64], tol: f64) -> usize {
        (0..self.row_count())
            .into_par_iter()
            .filter(|&row| self.row_dot(row, q) < -tol)
            .count()
    }

    /// Most negative row value (0 when every row is satisfied).
    pub fn worst_violation(&self, q: &[f64]) -> f64 {
        (0..self.row_count())
            .into_par_iter()
            .map(|row| self.row_dot(row, q))
            .reduce(|| 0.0, f64::min)
    }

    fn incident_of(&self, pair: usize) -> &[(u32, f64)] {
        let lo = self.incident_offsets[pair] as usize;
        let hi = self.incident_offsets[pair + 1] as usize;
        &self.incident[lo..hi]
    }

    /// `[Tᵀ ν]` component at a Q pair.
    pub fn correction(&self, pair: usize) -> f64 {
        self.incident_of(pair)
            .iter()
            .map(|&(row, coef)| coef * self.nu[row as usize])
            .sum()
    }
}

/// Generates the full constraint set from the state-space shape: for every
/// sensor and every pair of states adjacent in that sensor's holding time,
/// one monotone row per feasible action and one superadditive row per
/// power-adjacent feasible action pair.
pub fn build_constraints(model: &MdpModel) -> ConstraintSet {
    let n_sensors = model.sensor_count();
    let b_levels = model.config().battery.b_max as usize + 1;
    let adjacent: Vec<Vec<Vec<(usize, usize)>>> = (0..b_levels)
        .map(|b| {
            let actions = model.actions_for_battery(b as u32);
            (0..n_sensors)
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
                .collect()
        })
        .collect();

    let mut term_pairs = Vec::new();
    let mut term_coefs = Vec::new();
    let mut row_offsets = vec![0u32];
    let mut kinds = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut digits = vec![0usize; model.num_digits()];
    let mut push_row = |kind: RowKind,
                        terms: &[(usize, f64)],
                        term_pairs: &mut Vec<u32>,
                        term_coefs: &mut Vec<f64>,
                        row_offsets: &mut Vec<u32>,
                        kinds: &mut Vec<RowKind>,
                        seen: &mut std::collections::HashSet<Vec<(u32, i8)>>| {
        let mut key: Vec<(u32, i8)> = terms
            .iter()
            .map(|&(p, c)| (p as u32, c as i8))
            .collect();
        key.sort_unstable();
        if !seen.insert(key) {
            return;
        }
        for &(p, c) in terms {
            term_pairs.push(p as u32);
            term_coefs.push(c);
        }
        row_offsets.push(term_pairs.len() as u32);
        kinds.push(kind);
    };

    for idx in 0..model.state_count() {
        model.decode_into(idx, &mut digits);
        let b = digits[0];
        let lo_base = model.pair_index(idx, 0);
        for i in 0..n_sensors {
            if digits[4 + 3 * i] >= model.tau_limit() {
                continue;
            }
            let upper = idx + model.tau_stride(i);
            let hi_base = model.pair_index(upper, 0);
            for rank in 0..model.actions_for_battery(b as u32).len() {
                push_row(
                    RowKind::Monotone,
                    &[(hi_base + rank, 1.0), (lo_base + rank, -1.0)],
                    &mut term_pairs,
                    &mut term_coefs,
                    &mut row_offsets,
                    &mut kinds,
                    &mut seen,
                );
            }
            for &(lo_rank, hi_rank) in &adjacent[b][i] {
                push_row(
                    RowKind::Superadditive,
                    &[
                        (hi_base + hi_rank, 1.0),
                        (hi_base + lo_rank, -1.0),
                        (lo_base + hi_rank, -1.0),
                        (lo_base + lo_rank, 1.0),
                    ],
                    &mut term_pairs,
                    &mut term_coefs,
                    &mut row_offsets,
                    &mut kinds,
                    &mut seen,
                );
            }
        }
    }

    // Incidence lists, bucketed by pair.
    let pair_count = model.pair_count();
    let mut counts = vec![0u32; pair_count + 1];
    for &p in &term_pairs {
        counts[p as usize + 1] += 1;
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let incident_offsets = counts.clone();
    let mut incident = vec![(0u32, 0.0f64); term_pairs.len()];
    let mut cursor = incident_offsets.clone();
    for row in 0..kinds.len() {
        let lo = row_offsets[row] as usize;
        let hi = row_offsets[row + 1] as usize;
        for t in lo..hi {
            let p = term_pairs[t] as usize;
            incident[cursor[p] as usize] = (row as u32, term_coefs[t]);
            cursor[p] += 1;
        }
    }

    let nu = vec![0.0; kinds.len()];
    ConstraintSet {
        term_pairs,
        term_coefs,
        row_offsets,
        kinds,
        nu,
        incident_offsets,
        incident,
        rr_cursor: 0,
    }
}

/// Primal-dual update: the visited entry receives the TD increment plus the
/// `[Tᵀν]` correction; the multipliers of the rows incident to the visited
/// pair, plus a round-robin batch of the rest (or all rows in full mode),
/// take a dual step on the pre-update Q and are projected onto ν ≥ 0 unless
/// projection is disabled.
pub fn structural_update(
    model: &MdpModel,
    q: &mut QTable,
    cs: &mut ConstraintSet,
    obs: &Observation,
    cfg: &LearnConfig,
    k: u64,
) -> Result<f64> {
    let pair = model.pair_index(obs.state, obs.rank);
    let zeta = cfg.step_size(k);
    let rows = cs.row_count();

    // Dual values are computed on the pre-update Q (simultaneous update).
    let mut touched: Vec<(u32, f64)> = Vec::new();
    if rows > 0 {
        if cfg.full_dual {
            touched.reserve(rows);
            for row in 0..rows {
                touched.push((row as u32, cs.row_dot(row, &q.q)));
            }
        } else {
            let mut incident_rows: Vec<u32> =
                cs.incident_of(pair).iter().map(|&(row, _)| row).collect();
            incident_rows.sort_unstable();
            incident_rows.dedup();
            for &row in &incident_rows {
                touched.push((row, cs.row_dot(row as usize, &q.q)));
            }
            let batch = cfg.dual_batch.min(rows);
            for _ in 0..batch {
                let row = cs.rr_cursor % rows;
                cs.rr_cursor = (cs.rr_cursor + 1) % rows;
                if incident_rows.binary_search(&(row as u32)).is_err() {
                    touched.push((row as u32, cs.row_dot(row, &q.q)));
                }
            }
        }
    }

    let reference = q.q[cfg.reference_pair(model)];
    let (next_max, _) = q.greedy(model, obs.next_state);
    let td = obs.reward + next_max - q.q[pair] - reference;
    let correction = cs.correction(pair);
    let delta = zeta * (td + correction);
    q.q[pair] += delta;
    if !q.q[pair].is_finite() {
        return Err(Error::LearnerDivergence {
            step: k,
            detail: format!("Q pair {pair} became non-finite"),
        });
    }

    for (row, tq) in touched {
        let nu = &mut cs.nu[row as usize];
        *nu -= zeta * tq;
        if cfg.dual_projection {
            *nu = nu.max(0.0);
        }
        if !nu.is_finite() {
            return Err(Error::LearnerDivergence {
                step: k,
                detail: format!("dual multiplier {row} became non-finite"),
            });
        }
    }
    Ok(delta)
}

/// One curve record, written every `eval_every` steps.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub step: u64,
    pub running_avg_reward: f64,
    pub bellman_residual: f64,
    pub violation_count: usize,
}

pub struct TrainResult {
    pub q: QTable,
    pub policy: PolicyTable,
    pub curve: Vec<CurvePoint>,
    pub state_visits: Vec<u64>,
}

/// Runs `cfg.horizon` steps of ε-greedy interaction in `env`, updating with
/// the selected rule. Structural mode requires a constraint set; standard
/// mode uses one, when given, only for the violation diagnostic.
///
/// Curve records carry the running average of the observed one-stage rewards,
/// the Bellman residual of the current Q against the exact kernel (a
/// diagnostic only — the learner itself never reads the kernel), and the
/// constraint-violation count.
pub fn train(
    model: &MdpModel,
    env: &mut EnvState,
    mode: LearnMode,
    cfg: &LearnConfig,
    mut constraints: Option<&mut ConstraintSet>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if mode == LearnMode::Structural && constraints.is_none() {
        return Err(Error::Validation(
            "structural mode requires a constraint set".into(),
        ));
    }
    let mut q = QTable::new(model, cfg.q_init);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::new();
    let mut reward_sum = 0.0;
    let mut state_visits = vec![0u64; model.state_count()];

    for k in 0..cfg.horizon {
        let state = env.state_index(model);
        state_visits[state] += 1;
        let u = rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let rank = epsilon_greedy(model, &q, state, cfg.epsilon, u, u2);
        let action = &model.feasible_actions_of_index(state)[rank].clone();
        let out = env_step(model, env, action)?;
        let next_state = env.state_index(model);
        let obs = Observation {
            state,
            rank,
            reward: out.expected_reward,
            next_state,
        };
        match mode {
            LearnMode::Standard => {
                standard_update(model, &mut q, &obs, cfg, k)?;
            }
            LearnMode::Structural => {
                structural_update(
                    model,
                    &mut q,
                    constraints.as_deref_mut().unwrap(),
                    &obs,
                    cfg,
                    k,
                )?;
            }
        }
        reward_sum += obs.reward;
        if (k + 1) % cfg.eval_every == 0 {
            let violation_count = constraints
                .as_deref()
                .map(|cs| cs.violation_count(&q.q, 1e-9))
                .unwrap_or(0);
            curve.push(CurvePoint {
                step: k + 1,
                running_avg_reward: reward_sum / (k + 1) as f64,
                bellman_residual: bellman_residual_q(model, &q, cfg.reference_pair(model)),
                violation_count,
            });
        }
    }

    let policy = greedy_policy_from_q(model, &q);
    Ok(TrainResult {
        q,
        policy,
        curve,
        state_visits,
    })
}

/// Greedy policy of a Q table, lexicographic tie-break.
pub fn greedy_policy_from_q(model: &MdpModel, q: &QTable) -> PolicyTable {
    let ranks: Vec<u32> = (0..model.state_count())
        .into_par_iter()
        .map(|idx| q.greedy(model, idx).1 as u32)
        .collect();
    PolicyTable::from_ranks(ranks)
}

/// Largest fixed-point residual of the Q recursion against the exact kernel:
/// `max |r(s,a) + Σ P max_a' Q(s',a') − Q(s,a) − Q(reference)|`.
pub fn bellman_residual_q(model: &MdpModel, q: &QTable, reference_pair: usize) -> f64 {
    let max_v: Vec<f64> = (0..model.state_count())
        .into_par_iter()
        .map(|idx| q.greedy(model, idx).0)
        .collect();
    let reference = q.q[reference_pair];
    let num_digits = model.num_digits();
    (0..model.state_count())
        .into_par_iter()
        .map_init(
            || vec![0usize; num_digits],
            |digits, idx| {
                model.decode_into(idx, digits);
                let actions = model.actions_for_battery(digits[0] as u32);
                let base = model.pair_index(idx, 0);
                let mut worst = 0.0_f64;
                for (rank, action) in actions.iter().enumerate() {
                    let resid = model.reward_by_pair(base + rank)
                        + model.expected_next_value(digits, action, &max_v)
                        - q.q[base + rank]
                        - reference;
                    worst = worst.max(resid.abs());
                }
                worst
            },
        )
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rvi::{q_from_v, rvi_solve, SolverOptions};
    use crate::sim::env_reset;
    use crate::testutil;
    use approx::assert_abs_diff_eq;

    #[test]
    fn epsilon_greedy_modes() {
        let model = testutil::toy_n1_model();
        let mut q = QTable::new(&model, 0.0);
        // Battery-1 state with two actions; make rank 1 the greedy one.
        let idx = model.phi_f_default();
        assert_eq!(model.feasible_actions_of_index(idx).len(), 2);
        q.q[model.pair_index(idx, 1)] = 5.0;
        assert_eq!(epsilon_greedy(&model, &q, idx, 0.0, 0.99, 0.99), 1);
        // Forced exploration picks uniformly via u2.
        assert_eq!(epsilon_greedy(&model, &q, idx, 1.0, 0.0, 0.0), 0);
        assert_eq!(epsilon_greedy(&model, &q, idx, 1.0, 0.0, 0.9), 1);
    }

    #[test]
    fn exploration_frequencies_are_uniform() {
        use rand::{Rng, SeedableRng};
        let model = testutil::sec6_model(2);
        let q = QTable::new(&model, 0.0);
        let mut state = model.decode(model.phi_f_default());
        state.b = 1;
        let idx = model.encode(&state).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts = [0u64; 3];
        for _ in 0..draws {
            let rank =
                epsilon_greedy(&model, &q, idx, 1.0, rng.random::<f64>(), rng.random::<f64>());
            counts[rank] += 1;
        }
        let expect = draws as f64 / 3.0;
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn standard_update_arithmetic() {
        let model = testutil::toy_n1_model();
        let mut q = QTable::new(&model, 0.0);
        let idx = model.phi_f_default();
        let obs = Observation {
            state: idx,
            rank: 0,
            reward: 5.0,
            next_state: idx,
        };
        // Step size exactly 0.1: c / (1 + k0) with c = 1, k0 = 9.
        let cfg = LearnConfig {
            step_c: 1.0,
            step_k0: 9.0,
            ..LearnConfig::default()
        };
        standard_update(&model, &mut q, &obs, &cfg, 0).unwrap();
        let pair = model.pair_index(idx, 0);
        assert_abs_diff_eq!(q.q[pair], 0.5, epsilon = 1e-15);
        // Zero step size leaves the table unchanged.
        let frozen = LearnConfig {
            step_c: 1e-300,
            ..LearnConfig::default()
        };
        let before = q.q.clone();
        standard_update(&model, &mut q, &obs, &frozen, 0).unwrap();
        for (a, b) in q.q.iter().zip(&before) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_q_is_a_fixed_point_of_the_expected_update() {
        // Shift the exact Q so the reference pair equals J*; the expected
        // increment over the exact kernel then vanishes everywhere.
        let model = testutil::sec6_small_model();
        let opts = SolverOptions {
            span_tol: 1e-12,
            ..SolverOptions::default()
        };
        let (vt, _, _) = rvi_solve(&model, model.phi_f_default(), &opts).unwrap();
        let qt = q_from_v(&model, &vt);
        let cfg = LearnConfig::default();
        let ref_pair = cfg.reference_pair(&model);
        let shift = vt.j_star - qt.q[ref_pair];
        let shifted = QTable {
            q: qt.q.iter().map(|x| x + shift).collect(),
        };
        let residual = bellman_residual_q(&model, &shifted, ref_pair);
        assert!(residual < 1e-8, "expected-update residual {residual}");
    }

    #[test]
    fn constraint_shape_matches_worked_toy() {
        // N=2, single channel and energy states, L=1: the full-battery slice
        // has 4 feasible actions, 16 monotone rows and 8 superadditive rows.
        let model = testutil::paper_toy_model();
        let cs = build_constraints(&model);
        let full_b = model.config().battery.b_max;
        let mut monotone = 0;
        let mut superadd = 0;
        for row in 0..cs.row_count() {
            let in_full_slice = cs
                .row_terms(row)
                .all(|(pair, _)| model.battery_of(model.pair_to_state_action(pair).0) == full_b);
            if !in_full_slice {
                continue;
            }
            match cs.kind(row) {
                RowKind::Monotone => monotone += 1,
                RowKind::Superadditive => superadd += 1,
            }
        }
        assert_eq!(monotone, 16);
        assert_eq!(superadd, 8);
        // Difference rows always have zero coefficient sum.
        for row in 0..cs.row_count() {
            let sum: f64 = cs.row_terms(row).map(|(_, c)| c).sum();
            assert_eq!(sum, 0.0);
        }
    }

    #[test]
    fn single_power_level_gives_only_monotone_rows() {
        let model = testutil::single_action_model();
        let cs = build_constraints(&model);
        assert!(cs.row_count() > 0);
        for row in 0..cs.row_count() {
            assert_eq!(cs.kind(row), RowKind::Monotone);
        }
    }

    #[test]
    fn constraints_sound_on_exact_q() {
        for model in [
            testutil::toy_n1_model(),
            testutil::toy_energy_model(),
            testutil::sec6_small_model(),
        ] {
            let (vt, _, _) =
                rvi_solve(&model, model.phi_f_default(), &SolverOptions::default()).unwrap();
            let qt = q_from_v(&model, &vt);
            let cs = build_constraints(&model);
            let worst = cs.worst_violation(&qt.q);
            assert!(worst >= -1e-6, "worst constraint value {worst}");
        }
    }

    #[test]
    fn structural_with_empty_set_reduces_to_standard() {
        let model = testutil::toy_energy_model();
        let cfg = LearnConfig {
            horizon: 20_000,
            eval_every: 5_000,
            seed: 11,
            ..LearnConfig::default()
        };
        let mut env_a = env_reset(&model, 99);
        let standard = train(&model, &mut env_a, LearnMode::Standard, &cfg, None).unwrap();
        let mut env_b = env_reset(&model, 99);
        let mut empty = ConstraintSet::empty(&model);
        let structural = train(
            &model,
            &mut env_b,
            LearnMode::Structural,
            &cfg,
            Some(&mut empty),
        )
        .unwrap();
        for (a, b) in standard.q.q.iter().zip(&structural.q.q) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn violated_row_pushes_entry_up() {
        let model = testutil::toy_energy_model();
        let mut cs = build_constraints(&model);
        // Find a monotone row and violate it by lowering the +1 entry.
        let row = (0..cs.row_count())
            .find(|&r| cs.kind(r) == RowKind::Monotone)
            .unwrap();
        let terms: Vec<(usize, f64)> = cs.row_terms(row).collect();
        let (up_pair, _) = *terms.iter().find(|(_, c)| *c > 0.0).unwrap();
        let mut q = QTable::new(&model, 0.0);
        q.q[up_pair] = -1.0;
        // One dual pass drives ν up for the violated row...
        cs.nu[row] = 0.5;
        let (state, rank) = model.pair_to_state_action(up_pair);
        let obs = Observation {
            state,
            rank,
            reward: 0.0,
            next_state: model.phi_f_default(),
        };
        let cfg = LearnConfig {
            step_c: 1.0,
            step_k0: 0.0,
            epsilon: 0.0,
            ..LearnConfig::default()
        };
        let before = q.q[up_pair];
        // ...and the correction term pushes the violated entry upward
        // relative to the plain TD increment.
        let mut q_plain = q.clone();
        standard_update(&model, &mut q_plain, &obs, &cfg, 0).unwrap();
        structural_update(&model, &mut q, &mut cs, &obs, &cfg, 0).unwrap();
        assert!(q.q[up_pair] > q_plain.q[up_pair]);
        assert!(q.q[up_pair] > before - 10.0);
    }

    #[test]
    fn dual_projection_keeps_nu_nonnegative() {
        let model = testutil::toy_energy_model();
        let mut cs = build_constraints(&model);
        let cfg = LearnConfig {
            horizon: 30_000,
            eval_every: 10_000,
            seed: 5,
            ..LearnConfig::default()
        };
        let mut env = env_reset(&model, 42);
        train(&model, &mut env, LearnMode::Structural, &cfg, Some(&mut cs)).unwrap();
        assert!(cs.nu.iter().all(|&v| v >= 0.0));
        assert!(cs.nu.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn zero_horizon_yields_zero_table() {
        let model = testutil::toy_n1_model();
        let cfg = LearnConfig {
            horizon: 0,
            ..LearnConfig::default()
        };
        let mut env = env_reset(&model, 1);
        let result = train(&model, &mut env, LearnMode::Standard, &cfg, None).unwrap();
        assert!(result.curve.is_empty());
        assert!(result.q.q.iter().all(|&x| x == 0.0));
        for idx in 0..model.state_count() {
            assert_eq!(result.policy.rank(idx), 0);
        }
    }

    #[test]
    fn both_modes_recover_the_exact_policy_on_toys() {
        let model = testutil::toy_n1_model();
        let (_, exact_policy, _) =
            rvi_solve(&model, model.phi_f_default(), &SolverOptions::default()).unwrap();
        for mode in [LearnMode::Standard, LearnMode::Structural] {
            let cfg = LearnConfig {
                epsilon: 0.2,
                horizon: 1_000_000,
                eval_every: 250_000,
                seed: 7,
                ..LearnConfig::default()
            };
            let mut env = env_reset(&model, 13);
            let mut cs = build_constraints(&model);
            let result = train(
                &model,
                &mut env,
                mode,
                &cfg,
                if mode == LearnMode::Structural {
                    Some(&mut cs)
                } else {
                    None
                },
            )
            .unwrap();
            for idx in 0..model.state_count() {
                if result.state_visits[idx] >= 100 {
                    assert_eq!(
                        result.policy.rank(idx),
                        exact_policy.rank(idx),
                        "mode {mode:?}, state {idx}"
                    );
                }
            }
            // The reference entry approximates the optimal average reward.
            let ref_pair = cfg.reference_pair(&model);
            let (vt, _, _) =
                rvi_solve(&model, model.phi_f_default(), &SolverOptions::default()).unwrap();
            assert!((result.q.q[ref_pair] - vt.j_star).abs() < 1.0);
        }
    }

    #[test]
    fn degenerate_single_state_training() {
        let model = testutil::scalar_forced_model(1.0);
        let cfg = LearnConfig {
            horizon: 50_000,
            eval_every: 10_000,
            seed: 2,
            epsilon: 0.5,
            ..LearnConfig::default()
        };
        let mut env = env_reset(&model, 3);
        let result = train(&model, &mut env, LearnMode::Standard, &cfg, None).unwrap();
        // With λ ≡ 1 the reward is constant: Q(s,a) → r − r = 0 at the
        // reference, and the running average equals r.
        let r = model.reward_by_pair(model.pair_index(model.phi_f_default(), 0));
        let last = result.curve.last().unwrap();
        assert_abs_diff_eq!(last.running_avg_reward, r, epsilon = 1e-9);
    }
}
