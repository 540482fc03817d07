//! Ground-truth environment: samples the true channel/energy dynamics,
//! tracks the untruncated holding times, and evaluates policies by Monte
//! Carlo rollout.
//!
//! The environment deliberately distinguishes the *true* holding time (which
//! may exceed the model's truncation bound) from the truncated view that
//! policies and learners observe. Realized error traces use the true holding
//! time, extending the trace tables on demand; observed one-stage rewards use
//! the truncated model table, which is exactly what a policy can compute.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionVec, MdpModel, MdpState};
use crate::rvi::PolicyTable;

/// Per-sensor trace table that grows past the model truncation on demand.
struct TraceExt {
    table: Vec<f64>,
    /// `h^{table.len()-1}(p_bar)`, materialized lazily on first extension.
    power: Option<DMatrix<f64>>,
}

impl TraceExt {
    fn get(&mut self, model: &MdpModel, sensor: usize, t: usize) -> f64 {
        while self.table.len() <= t {
            let sys = &model.config().systems[sensor];
            if self.power.is_none() {
                let mut m = model.steady(sensor).p_bar().clone();
                for _ in 0..self.table.len() - 1 {
                    m = sys.riccati_h(&m);
                }
                self.power = Some(m);
            }
            let power = self.power.as_mut().unwrap();
            *power = sys.riccati_h(power);
            self.table.push(power.trace());
        }
        self.table[t]
    }
}

/// Dynamic environment state: the current tuple, the untruncated holding
/// times, and the RNG stream.
pub struct EnvState {
    b: u32,
    e: usize,
    h: Vec<usize>,
    g: Vec<usize>,
    true_tau: Vec<u64>,
    pub(crate) rng: ChaCha8Rng,
    traces: Vec<TraceExt>,
    digits: Vec<usize>,
}

/// What one environment step produced.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// `r(φ, a)` of the truncated model at the pre-step state: the reward a
    /// learner can compute from its own information.
    pub expected_reward: f64,
    /// `Σᵢ Tr(h^{τ'ᵢ}(p_bar_i))` with the untruncated post-step holding
    /// times: the realized estimation-error trace.
    pub realized_trace: f64,
}

/// Summary of a rollout.
#[derive(Debug, Clone)]
pub struct RolloutReport {
    /// Time average of the realized trace (the headline metric).
    pub avg_reward: f64,
    /// Time average of the per-step expected reward; agrees with
    /// `avg_reward` up to Monte Carlo error.
    pub expected_avg: f64,
    pub horizon: u64,
    pub seed: u64,
    pub initial_state: MdpState,
}

/// Per-step record for the optional trace dump.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub k: u64,
    pub state: MdpState,
    pub action: ActionVec,
    pub gammas: Vec<bool>,
    pub realized_trace: f64,
}

/// Fresh environment: all holding times zero, battery full, chain states
/// drawn uniformly.
pub fn env_reset(model: &MdpModel, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.sensor_count();
    let num_e = model.config().energy_chain.len();
    let e = ((rng.random::<f64>() * num_e as f64) as usize).min(num_e - 1);
    let mut h = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let l = model.config().channel_chains[i].len();
        h.push(((rng.random::<f64>() * l as f64) as usize).min(l - 1));
        g.push(((rng.random::<f64>() * l as f64) as usize).min(l - 1));
    }
    let traces = (0..n)
        .map(|i| TraceExt {
            table: model.steady(i).trace_table().to_vec(),
            power: None,
        })
        .collect();
    EnvState {
        b: model.config().battery.b_max,
        e,
        h,
        g,
        true_tau: vec![0; n],
        rng,
        traces,
        digits: vec![0; model.num_digits()],
    }
}

impl EnvState {
    /// Truncated view of the current state: holding times clamped at the
    /// model's truncation bound.
    pub fn mdp_state(&self, model: &MdpModel) -> MdpState {
        let tau_limit = model.tau_limit();
        MdpState {
            b: self.b,
            e: self.e,
            links: (0..self.h.len())
                .map(|i| crate::mdp::LinkState {
                    h: self.h[i],
                    g: self.g[i],
                    tau: (self.true_tau[i] as usize).min(tau_limit),
                })
                .collect(),
        }
    }

    /// Index of the truncated view.
    pub fn state_index(&mut self, model: &MdpModel) -> usize {
        let tau_limit = model.tau_limit();
        self.digits[0] = self.b as usize;
        self.digits[1] = self.e;
        for i in 0..self.h.len() {
            self.digits[2 + 3 * i] = self.h[i];
            self.digits[3 + 3 * i] = self.g[i];
            self.digits[4 + 3 * i] = (self.true_tau[i] as usize).min(tau_limit);
        }
        model.encode_digits(&self.digits)
    }

    pub fn battery(&self) -> u32 {
        self.b
    }

    pub fn true_tau(&self) -> &[u64] {
        &self.true_tau
    }
}

/// Advances the environment by one step under `action`.
///
/// Sampling order is fixed: one packet draw per sensor, then per sensor the
/// two channel-chain draws, then the energy-chain draw. The battery advances
/// deterministically using the pre-step energy state.
pub fn env_step(model: &MdpModel, env: &mut EnvState, action: &ActionVec) -> Result<StepOutcome> {
    let total = action.total();
    if total > env.b {
        return Err(Error::InfeasibleAction(format!(
            "action {:?} needs {total} units, battery has {}",
            action.powers(),
            env.b
        )));
    }
    let n = model.sensor_count();
    if action.powers().len() != n {
        return Err(Error::InfeasibleAction(format!(
            "action has {} entries for {n} sensors",
            action.powers().len()
        )));
    }
    let state_idx = env.state_index(model);
    let rank = model
        .action_rank(env.b, action)
        .ok_or_else(|| Error::InfeasibleAction(format!("{:?}", action.powers())))?;
    let expected_reward = model.reward_by_pair(model.pair_index(state_idx, rank));

    for i in 0..n {
        let lam = model.lambda(i, env.h[i], env.g[i], action.powers()[i]);
        let arrived = env.rng.random::<f64>() < lam;
        env.true_tau[i] = if arrived { 0 } else { env.true_tau[i] + 1 };
    }
    for i in 0..n {
        let chain = &model.config().channel_chains[i];
        let uh = env.rng.random::<f64>();
        env.h[i] = chain.step(env.h[i], uh);
        let ug = env.rng.random::<f64>();
        env.g[i] = chain.step(env.g[i], ug);
    }
    let e_value = model.config().energy_chain.value(env.e);
    env.b = crate::link::battery_update(&model.config().battery, env.b, total, e_value)?;
    let ue = env.rng.random::<f64>();
    env.e = model.config().energy_chain.step(env.e, ue);
    let mut realized_trace = 0.0;
    for i in 0..n {
        realized_trace += env.traces[i].get(model, i, env.true_tau[i] as usize);
    }
    Ok(StepOutcome {
        expected_reward,
        realized_trace,
    })
}

/// Greedy baseline: maximum power to the sensor with the largest holding
/// time, then the next, until the battery runs out. Ties break toward the
/// lower sensor index.
pub fn greedy_policy(model: &MdpModel, state: &MdpState) -> ActionVec {
    let n = state.links.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(state.links[i].tau), i));
    let p_cap = model.config().battery.p_cap();
    let mut remaining = state.b;
    let mut powers = vec![0u32; n];
    for i in order {
        let p = p_cap.min(remaining);
        powers[i] = p;
        remaining -= p;
        if remaining == 0 {
            break;
        }
    }
    ActionVec(powers)
}

/// Uniform draw over the feasible action set; deterministic given `u`.
pub fn random_policy(model: &MdpModel, state: &MdpState, u: f64) -> ActionVec {
    let actions = model.feasible_actions(state);
    let pick = ((u * actions.len() as f64) as usize).min(actions.len() - 1);
    actions[pick].clone()
}

/// A policy a rollout can follow.
pub enum RolloutPolicy<'a> {
    Table(&'a PolicyTable),
    Greedy,
    Random,
    AllZeros,
}

impl RolloutPolicy<'_> {
    fn act(&self, model: &MdpModel, env: &mut EnvState) -> ActionVec {
        match self {
            RolloutPolicy::Table(pt) => {
                let idx = env.state_index(model);
                pt.action(model, idx).clone()
            }
            RolloutPolicy::Greedy => greedy_policy(model, &env.mdp_state(model)),
            RolloutPolicy::Random => {
                let u = env.rng.random::<f64>();
                random_policy(model, &env.mdp_state(model), u)
            }
            RolloutPolicy::AllZeros => ActionVec::zeros(model.sensor_count()),
        }
    }
}

/// Monte Carlo evaluation: `avg_reward` is the time average of the realized
/// trace over `horizon` steps. Bit-reproducible from `(policy, seed,
/// horizon)`.
pub fn rollout(
    model: &MdpModel,
    policy: &RolloutPolicy,
    horizon: u64,
    seed: u64,
) -> Result<RolloutReport> {
    rollout_inner(model, policy, horizon, seed, &mut |_| {})
}

/// Like [`rollout`] but also returns the full per-step trace.
pub fn rollout_traced(
    model: &MdpModel,
    policy: &RolloutPolicy,
    horizon: u64,
    seed: u64,
) -> Result<(RolloutReport, Vec<StepTrace>)> {
    let mut steps = Vec::with_capacity(horizon as usize);
    let report = rollout_inner(model, policy, horizon, seed, &mut |s| steps.push(s))?;
    Ok((report, steps))
}

fn rollout_inner(
    model: &MdpModel,
    policy: &RolloutPolicy,
    horizon: u64,
    seed: u64,
    on_step: &mut dyn FnMut(StepTrace),
) -> Result<RolloutReport> {
    let mut env = env_reset(model, seed);
    let initial_state = env.mdp_state(model);
    let mut sum_real = 0.0;
    let mut sum_exp = 0.0;
    for k in 0..horizon {
        let state = env.mdp_state(model);
        let action = policy.act(model, &mut env);
        let out = env_step(model, &mut env, &action)?;
        sum_real += out.realized_trace;
        sum_exp += out.expected_reward;
        on_step(StepTrace {
            k,
            state,
            action,
            gammas: env.true_tau.iter().map(|&t| t == 0).collect(),
            realized_trace: out.realized_trace,
        });
    }
    let denom = horizon.max(1) as f64;
    Ok(RolloutReport {
        avg_reward: sum_real / denom,
        expected_avg: sum_exp / denom,
        horizon,
        seed,
        initial_state,
    })
}
