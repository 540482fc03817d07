//! Exact truncated MDP: state enumeration, feasible actions, transition
//! kernel and one-stage reward.
//!
//! A state is `(b, E, (H⁽ⁱ⁾, G⁽ⁱ⁾, τ⁽ⁱ⁾) for each sensor i)`: battery level,
//! harvested-energy chain state, and per sensor the two channel-chain states
//! plus the holding time since the last received packet (capped at the
//! truncation bound `L`; capped states self-absorb on further losses). States
//! are indexed mixed-radix with digit order `[b, e, h₁, g₁, τ₁, …]`, so the
//! τ digits are the fastest-moving ones.
//!
//! An action assigns one integer power level per sensor, subject to the
//! per-channel cap and the total-battery constraint. The kernel factorizes
//! into the energy chain times independent per-sensor `(H', G', γ)` blocks,
//! with the battery level advancing deterministically given the current
//! energy state.

use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::kalman::{steady_state, LtiSystem, SteadyState};
use crate::link::{battery_update, BatteryModel, LinkModel};

/// Hard cap on the sensor count (the state space explodes far earlier).
pub const MAX_SENSORS: usize = 8;

/// Default state-count budget for [`MdpModel::build`].
pub const DEFAULT_STATE_BUDGET: u64 = 4_000_000;

/// Full problem description: one LTI system, channel chain and link model per
/// sensor, one shared energy chain, the battery, and the τ truncation bound.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub systems: Vec<LtiSystem>,
    pub channel_chains: Vec<MarkovChain>,
    pub energy_chain: MarkovChain,
    pub links: Vec<LinkModel>,
    pub battery: BatteryModel,
    pub tau_limit: usize,
}

impl ProblemConfig {
    /// Shared-channel-chain constructor (the common case).
    pub fn new(
        systems: Vec<LtiSystem>,
        channel_chain: MarkovChain,
        energy_chain: MarkovChain,
        links: Vec<LinkModel>,
        battery: BatteryModel,
        tau_limit: usize,
    ) -> Result<Self> {
        let n = systems.len();
        let cfg = Self {
            systems,
            channel_chains: vec![channel_chain; n],
            energy_chain,
            links,
            battery,
            tau_limit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sensor_count(&self) -> usize {
        self.systems.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.systems.len();
        if n == 0 {
            return Err(Error::Validation("at least one sensor is required".into()));
        }
        if n > MAX_SENSORS {
            return Err(Error::Validation(format!(
                "at most {MAX_SENSORS} sensors are supported, got {n}"
            )));
        }
        if self.tau_limit == 0 {
            return Err(Error::Validation("tau_limit must be >= 1".into()));
        }
        if self.channel_chains.len() != n {
            return Err(Error::Validation(format!(
                "{} channel chains for {n} sensors",
                self.channel_chains.len()
            )));
        }
        if self.links.len() != n {
            return Err(Error::Validation(format!(
                "{} link models for {n} sensors",
                self.links.len()
            )));
        }
        for chain in &self.channel_chains {
            chain.validate()?;
            if chain.values().iter().any(|v| *v < 0.0) {
                return Err(Error::Validation("channel gains must be >= 0".into()));
            }
        }
        self.energy_chain.validate()?;
        if self.energy_chain.values().iter().any(|v| *v < 0.0) {
            return Err(Error::Validation("harvested energy values must be >= 0".into()));
        }
        for link in &self.links {
            link.validate()?;
        }
        self.battery.validate()?;
        Ok(())
    }
}

/// Per-sensor component of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkState {
    pub h: usize,
    pub g: usize,
    pub tau: usize,
}

/// A decoded state tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpState {
    pub b: u32,
    pub e: usize,
    pub links: Vec<LinkState>,
}

/// One power level per sensor. The derived ordering is lexicographic, which
/// is the tie-break order used everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionVec(pub Vec<u32>);

impl ActionVec {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn powers(&self) -> &[u32] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub riccati_tol: f64,
    pub riccati_max_iter: usize,
    pub state_budget: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            riccati_tol: crate::kalman::DEFAULT_RICCATI_TOL,
            riccati_max_iter: crate::kalman::DEFAULT_RICCATI_MAX_ITER,
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }
}

/// Which power level enters the worst-case SINR of the boundedness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinrMinVariant {
    /// `min(⌊p_max⌋, b_max)` — the worst power actually reachable on one
    /// channel.
    PerChannelCap,
    /// `b_max`, even when the per-channel cap is smaller.
    LiteralBatteryMax,
}

#[derive(Debug, Clone, Copy)]
pub struct Assumption1Result {
    /// Smallest κ ≥ 0 satisfying the bound.
    pub kappa: f64,
    /// Whether κ < 1, i.e. the expected error stays bounded under any attack.
    pub holds: bool,
    /// The infimum over prior channel pairs of the expected worst-case
    /// arrival rate.
    pub worst_expected_arrival: f64,
}

/// Per-sensor successor blocks: for each `(h, g, τ, p)` key the nonzero
/// `(state-index contribution, probability)` outcomes of `(H', G', γ)`.
struct SensorSucc {
    offsets: Vec<u32>,
    entries: Vec<(usize, f64)>,
    key_stride: usize,
}

impl SensorSucc {
    fn slice(&self, key: usize) -> &[(usize, f64)] {
        let lo = self.offsets[key] as usize;
        let hi = self.offsets[key + 1] as usize;
        &self.entries[lo..hi]
    }
}

/// The enumerated model. Immutable after construction; all queries are pure.
pub struct MdpModel {
    config: ProblemConfig,
    steady: Vec<SteadyState>,
    state_count: usize,
    radices: Vec<usize>,
    strides: Vec<usize>,
    actions_by_b: Vec<Vec<ActionVec>>,
    pair_offsets: Vec<usize>,
    rewards: Vec<f64>,
    /// Arrival probability per sensor, keyed `(h·l + g)·nP + p`.
    lambdas: Vec<Vec<f64>>,
    sensor_succ: Vec<SensorSucc>,
    /// Nonzero energy transitions per current state: `(index contribution, prob)`.
    energy_succ: Vec<Vec<(usize, f64)>>,
    /// Next battery level keyed `(b·ℓ + e)·(max_spend+1) + Σp`.
    bprime: Vec<u32>,
    max_spend: u32,
}

impl MdpModel {
    pub fn build(config: ProblemConfig, opts: BuildOptions) -> Result<Self> {
        config.validate()?;
        let n = config.sensor_count();
        let num_b = config.battery.b_max as usize + 1;
        let num_e = config.energy_chain.len();
        let tau_states = config.tau_limit + 1;

        let mut radices = Vec::with_capacity(2 + 3 * n);
        radices.push(num_b);
        radices.push(num_e);
        for chain in &config.channel_chains {
            radices.push(chain.len());
            radices.push(chain.len());
            radices.push(tau_states);
        }
        let mut count: u128 = 1;
        for &r in &radices {
            count = count.saturating_mul(r as u128);
        }
        if count > opts.state_budget as u128 {
            return Err(Error::StateBudget {
                count,
                budget: opts.state_budget,
            });
        }
        let state_count = count as usize;
        let mut strides = vec![1usize; radices.len()];
        for i in (0..radices.len() - 1).rev() {
            strides[i] = strides[i + 1] * radices[i + 1];
        }

        let steady: Vec<SteadyState> = config
            .systems
            .iter()
            .map(|sys| {
                steady_state(
                    sys,
                    opts.riccati_tol,
                    opts.riccati_max_iter,
                    config.tau_limit + 1,
                )
            })
            .collect::<Result<_>>()?;

        let p_cap = config.battery.p_cap();
        let actions_by_b: Vec<Vec<ActionVec>> = (0..num_b as u32)
            .map(|b| enumerate_actions(n, p_cap, b))
            .collect();

        // Arrival probabilities per sensor over (h, g, p).
        let lambdas: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let chain = &config.channel_chains[i];
                let link = &config.links[i];
                let l = chain.len();
                let mut table = Vec::with_capacity(l * l * (p_cap as usize + 1));
                for h in 0..l {
                    for g in 0..l {
                        for p in 0..=p_cap {
                            table.push(link.arrival(chain.value(h), chain.value(g), p));
                        }
                    }
                }
                table
            })
            .collect();

        let sensor_succ = (0..n)
            .map(|i| {
                build_sensor_succ(
                    &config.channel_chains[i],
                    &lambdas[i],
                    config.tau_limit,
                    p_cap,
                    strides[2 + 3 * i],
                    strides[3 + 3 * i],
                    strides[4 + 3 * i],
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let energy_succ: Vec<Vec<(usize, f64)>> = (0..num_e)
            .map(|e| {
                config.energy_chain.row(e)
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(next, p)| (next * strides[1], *p))
                    .collect()
            })
            .collect();

        let max_spend = (config.battery.b_max).min(p_cap.saturating_mul(n as u32));
        let mut bprime = vec![u32::MAX; num_b * num_e * (max_spend as usize + 1)];
        for b in 0..num_b as u32 {
            for e in 0..num_e {
                for spend in 0..=max_spend.min(b) {
                    let next = battery_update(
                        &config.battery,
                        b,
                        spend,
                        config.energy_chain.value(e),
                    )?;
                    bprime[((b as usize * num_e) + e) * (max_spend as usize + 1)
                        + spend as usize] = next;
                }
            }
        }

        let mut model = Self {
            config,
            steady,
            state_count,
            radices,
            strides,
            actions_by_b,
            pair_offsets: Vec::new(),
            rewards: Vec::new(),
            lambdas,
            sensor_succ,
            energy_succ,
            bprime,
            max_spend,
        };
        model.build_pairs();
        Ok(model)
    }

    fn build_pairs(&mut self) {
        let mut offsets = Vec::with_capacity(self.state_count + 1);
        offsets.push(0usize);
        let mut total = 0usize;
        for idx in 0..self.state_count {
            let b = idx / self.strides[0];
            total += self.actions_by_b[b].len();
            offsets.push(total);
        }
        let mut rewards = vec![0.0; total];
        let mut digits = vec![0usize; self.radices.len()];
        for idx in 0..self.state_count {
            self.decode_into(idx, &mut digits);
            let b = digits[0];
            let base = offsets[idx];
            for (rank, action) in self.actions_by_b[b].iter().enumerate() {
                rewards[base + rank] = self.reward_from_digits(&digits, action);
            }
        }
        self.pair_offsets = offsets;
        self.rewards = rewards;
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    pub fn steady(&self, sensor: usize) -> &SteadyState {
        &self.steady[sensor]
    }

    pub fn sensor_count(&self) -> usize {
        self.config.sensor_count()
    }

    pub fn tau_limit(&self) -> usize {
        self.config.tau_limit
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn pair_count(&self) -> usize {
        *self.pair_offsets.last().unwrap()
    }

    /// Arrival probability of sensor `i` under channel states `(h, g)` and
    /// power `p`.
    pub fn lambda(&self, sensor: usize, h: usize, g: usize, p: u32) -> f64 {
        let l = self.config.channel_chains[sensor].len();
        let np = self.config.battery.p_cap() as usize + 1;
        self.lambdas[sensor][(h * l + g) * np + p as usize]
    }

    pub fn decode(&self, idx: usize) -> MdpState {
        let mut digits = vec![0usize; self.radices.len()];
        self.decode_into(idx, &mut digits);
        let links = (0..self.sensor_count())
            .map(|i| LinkState {
                h: digits[2 + 3 * i],
                g: digits[3 + 3 * i],
                tau: digits[4 + 3 * i],
            })
            .collect();
        MdpState {
            b: digits[0] as u32,
            e: digits[1],
            links,
        }
    }

    pub fn decode_into(&self, idx: usize, digits: &mut [usize]) {
        let mut rest = idx;
        for (d, &stride) in digits.iter_mut().zip(&self.strides) {
            *d = rest / stride;
            rest %= stride;
        }
    }

    pub fn encode(&self, state: &MdpState) -> Result<usize> {
        if state.links.len() != self.sensor_count() {
            return Err(Error::Validation(format!(
                "state has {} sensor components, expected {}",
                state.links.len(),
                self.sensor_count()
            )));
        }
        let mut digits = Vec::with_capacity(self.radices.len());
        digits.push(state.b as usize);
        digits.push(state.e);
        for link in &state.links {
            digits.push(link.h);
            digits.push(link.g);
            digits.push(link.tau);
        }
        for (i, (&d, &r)) in digits.iter().zip(&self.radices).enumerate() {
            if d >= r {
                return Err(Error::Validation(format!(
                    "state component {i} is {d}, out of range 0..{r}"
                )));
            }
        }
        Ok(digits.iter().zip(&self.strides).map(|(d, s)| d * s).sum())
    }

    pub fn num_digits(&self) -> usize {
        self.radices.len()
    }

    /// Index of a digit tuple in the layout `[b, e, h₁, g₁, τ₁, …]`.
    /// Digits must already be in range.
    pub fn encode_digits(&self, digits: &[usize]) -> usize {
        debug_assert!(digits
            .iter()
            .zip(&self.radices)
            .all(|(d, r)| d < r));
        digits.iter().zip(&self.strides).map(|(d, s)| d * s).sum()
    }

    pub fn battery_of(&self, idx: usize) -> u32 {
        (idx / self.strides[0]) as u32
    }

    pub fn tau_stride(&self, sensor: usize) -> usize {
        self.strides[4 + 3 * sensor]
    }

    /// Feasible actions for battery level `b`, in lexicographic order. The
    /// list is never empty: the all-zeros action is always present.
    pub fn actions_for_battery(&self, b: u32) -> &[ActionVec] {
        &self.actions_by_b[b as usize]
    }

    pub fn feasible_actions(&self, state: &MdpState) -> &[ActionVec] {
        self.actions_for_battery(state.b)
    }

    pub fn feasible_actions_of_index(&self, idx: usize) -> &[ActionVec] {
        self.actions_for_battery(self.battery_of(idx))
    }

    /// Rank of `action` in the feasible list for battery `b`.
    pub fn action_rank(&self, b: u32, action: &ActionVec) -> Option<usize> {
        self.actions_by_b[b as usize]
            .binary_search(action)
            .ok()
    }

    pub fn pair_index(&self, state_idx: usize, rank: usize) -> usize {
        self.pair_offsets[state_idx] + rank
    }

    pub fn pair_offsets(&self) -> &[usize] {
        &self.pair_offsets
    }

    /// Inverse of [`Self::pair_index`].
    pub fn pair_to_state_action(&self, pair: usize) -> (usize, usize) {
        let state = self.pair_offsets.partition_point(|&o| o <= pair) - 1;
        (state, pair - self.pair_offsets[state])
    }

    pub fn reward_by_pair(&self, pair: usize) -> f64 {
        self.rewards[pair]
    }

    /// One-stage reward `Σᵢ λᵢ·Tr(p_bar) + (1−λᵢ)·Tr(h^{τᵢ+1}(p_bar))`.
    pub fn reward(&self, state: &MdpState, action: &ActionVec) -> Result<f64> {
        let idx = self.encode(state)?;
        let rank = self.action_rank(state.b, action).ok_or_else(|| {
            Error::InfeasibleAction(format!("{action:?} not feasible at battery {}", state.b))
        })?;
        Ok(self.rewards[self.pair_index(idx, rank)])
    }

    fn reward_from_digits(&self, digits: &[usize], action: &ActionVec) -> f64 {
        let mut total = 0.0;
        for i in 0..self.sensor_count() {
            let (h, g, tau) = (digits[2 + 3 * i], digits[3 + 3 * i], digits[4 + 3 * i]);
            let lam = self.lambda(i, h, g, action.0[i]);
            let table = self.steady[i].trace_table();
            let loss_idx = (tau + 1).min(self.config.tau_limit + 1);
            total += lam * table[0] + (1.0 - lam) * table[loss_idx];
        }
        total
    }

    fn sensor_key(&self, sensor: usize, h: usize, g: usize, tau: usize, p: u32) -> usize {
        let l = self.config.channel_chains[sensor].len();
        (((h * l) + g) * (self.config.tau_limit + 1) + tau) * self.sensor_succ[sensor].key_stride
            + p as usize
    }

    fn next_battery(&self, b: usize, e: usize, spend: u32) -> usize {
        let num_e = self.config.energy_chain.len();
        self.bprime[((b * num_e) + e) * (self.max_spend as usize + 1) + spend as usize] as usize
    }

    /// Visits every successor of `(state, action)` with nonzero probability,
    /// as `(successor index, probability)`. Enumeration order is fixed:
    /// energy outcomes outermost, then sensor blocks in sensor order.
    pub fn for_each_successor<F: FnMut(usize, f64)>(
        &self,
        state_idx: usize,
        rank: usize,
        f: &mut F,
    ) {
        let mut digits = vec![0usize; self.radices.len()];
        self.decode_into(state_idx, &mut digits);
        let action = &self.actions_by_b[digits[0]][rank];
        let bnext = self.next_battery(digits[0], digits[1], action.total());
        let base = bnext * self.strides[0];
        let n = self.sensor_count();
        for &(e_contrib, e_prob) in &self.energy_succ[digits[1]] {
            self.successor_rec(0, n, &digits, action, base + e_contrib, e_prob, f);
        }
    }

    fn successor_rec<F: FnMut(usize, f64)>(
        &self,
        sensor: usize,
        n: usize,
        digits: &[usize],
        action: &ActionVec,
        idx_acc: usize,
        p_acc: f64,
        f: &mut F,
    ) {
        if sensor == n {
            f(idx_acc, p_acc);
            return;
        }
        let key = self.sensor_key(
            sensor,
            digits[2 + 3 * sensor],
            digits[3 + 3 * sensor],
            digits[4 + 3 * sensor],
            action.0[sensor],
        );
        for &(contrib, prob) in self.sensor_succ[sensor].slice(key) {
            self.successor_rec(sensor + 1, n, digits, action, idx_acc + contrib, p_acc * prob, f);
        }
    }

    /// `Σ_{s'} P(s'|s,a) · v[s']`, accumulated in the same order as
    /// [`Self::for_each_successor`] so both routes agree bit for bit.
    pub fn expected_next_value(&self, digits: &[usize], action: &ActionVec, v: &[f64]) -> f64 {
        let bnext = self.next_battery(digits[0], digits[1], action.total());
        let base = bnext * self.strides[0];
        let n = self.sensor_count();
        let mut acc = 0.0;
        for &(e_contrib, e_prob) in &self.energy_succ[digits[1]] {
            acc += self.ev_rec(0, n, digits, action, base + e_contrib, e_prob, v);
        }
        acc
    }

    fn ev_rec(
        &self,
        sensor: usize,
        n: usize,
        digits: &[usize],
        action: &ActionVec,
        idx_acc: usize,
        p_acc: f64,
        v: &[f64],
    ) -> f64 {
        if sensor == n {
            return p_acc * v[idx_acc];
        }
        let key = self.sensor_key(
            sensor,
            digits[2 + 3 * sensor],
            digits[3 + 3 * sensor],
            digits[4 + 3 * sensor],
            action.0[sensor],
        );
        let mut acc = 0.0;
        for &(contrib, prob) in self.sensor_succ[sensor].slice(key) {
            acc += self.ev_rec(sensor + 1, n, digits, action, idx_acc + contrib, p_acc * prob, v);
        }
        acc
    }

    /// Decoded successor list for `(state, action)`; probabilities sum to 1
    /// and zero-probability outcomes are omitted.
    pub fn transition_successors(
        &self,
        state: &MdpState,
        action: &ActionVec,
    ) -> Result<Vec<(MdpState, f64)>> {
        let idx = self.encode(state)?;
        let rank = self.action_rank(state.b, action).ok_or_else(|| {
            Error::InfeasibleAction(format!("{action:?} not feasible at battery {}", state.b))
        })?;
        let mut out = Vec::new();
        self.for_each_successor(idx, rank, &mut |succ, prob| {
            out.push((self.decode(succ), prob));
        });
        Ok(out)
    }

    /// Default reference state: full battery, first energy and channel
    /// states, all holding times zero.
    pub fn phi_f_default(&self) -> usize {
        (self.config.battery.b_max as usize) * self.strides[0]
    }

    /// Boundedness check: per sensor, the smallest κ such that the worst-case
    /// expected arrival rate stays above `1 − κ/‖A‖²`.
    pub fn check_assumption1(&self, variant: SinrMinVariant) -> Vec<Assumption1Result> {
        let b_max = self.config.battery.b_max;
        let p_worst = match variant {
            SinrMinVariant::PerChannelCap => self.config.battery.p_cap().min(b_max),
            SinrMinVariant::LiteralBatteryMax => b_max,
        };
        (0..self.sensor_count())
            .map(|i| {
                let chain = &self.config.channel_chains[i];
                let link = &self.config.links[i];
                let l = chain.len();
                let mut inf = f64::INFINITY;
                for hp in 0..l {
                    for gp in 0..l {
                        let mut expected = 0.0;
                        for hn in 0..l {
                            for gn in 0..l {
                                let sinr_min = chain.value(hn)
                                    / (link.jam_gain
                                        * f64::from(p_worst)
                                        * chain.value(gn)
                                        + link.sigma2);
                                expected += link.arrival_rate(sinr_min)
                                    * chain.prob(hp, hn)
                                    * chain.prob(gp, gn);
                            }
                        }
                        inf = inf.min(expected);
                    }
                }
                let norm2 = crate::kalman::spectral_norm(self.config.systems[i].a(), 1e-12).powi(2);
                let kappa = ((1.0 - inf) * norm2).max(0.0);
                // κ must be strictly below 1; refuse to certify values within
                // rounding noise of the boundary.
                Assumption1Result {
                    kappa,
                    holds: kappa < 1.0 - 1e-9,
                    worst_expected_arrival: inf,
                }
            })
            .collect()
    }
}

/// All power vectors with each entry in `0..=p_cap` and total at most
/// `budget`, in lexicographic order.
fn enumerate_actions(n: usize, p_cap: u32, budget: u32) -> Vec<ActionVec> {
    let mut out = Vec::new();
    let mut current = vec![0u32; n];
    loop {
        if current.iter().sum::<u32>() <= budget {
            out.push(ActionVec(current.clone()));
        }
        // Odometer increment, most significant digit first = lexicographic.
        let mut pos = n;
        while pos > 0 {
            pos -= 1;
            if current[pos] < p_cap {
                current[pos] += 1;
                for d in current.iter_mut().skip(pos + 1) {
                    *d = 0;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

fn build_sensor_succ(
    chain: &MarkovChain,
    lambdas: &[f64],
    tau_limit: usize,
    p_cap: u32,
    stride_h: usize,
    stride_g: usize,
    stride_tau: usize,
) -> Result<SensorSucc> {
    let l = chain.len();
    let np = p_cap as usize + 1;
    let keys = l * l * (tau_limit + 1) * np;
    let mut offsets = Vec::with_capacity(keys + 1);
    let mut entries = Vec::new();
    offsets.push(0u32);
    for h in 0..l {
        for g in 0..l {
            for tau in 0..=tau_limit {
                for p in 0..np {
                    let lam = lambdas[(h * l + g) * np + p];
                    let tau_loss = (tau + 1).min(tau_limit);
                    let mut total = 0.0;
                    for hn in 0..l {
                        for gn in 0..l {
                            let base = chain.prob(h, hn) * chain.prob(g, gn);
                            if base == 0.0 {
                                continue;
                            }
                            let contrib = hn * stride_h + gn * stride_g;
                            if lam > 0.0 {
                                entries.push((contrib, base * lam));
                                total += base * lam;
                            }
                            if lam < 1.0 {
                                entries.push((
                                    contrib + tau_loss * stride_tau,
                                    base * (1.0 - lam),
                                ));
                                total += base * (1.0 - lam);
                            }
                        }
                    }
                    if (total - 1.0).abs() > 1e-10 {
                        return Err(Error::Validation(format!(
                            "sensor successor block sums to {total}, expected 1"
                        )));
                    }
                    offsets.push(entries.len() as u32);
                }
            }
        }
    }
    Ok(SensorSucc {
        offsets,
        entries,
        key_stride: np,
    })
}
