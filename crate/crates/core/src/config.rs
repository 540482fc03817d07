//! Experiment configuration: a TOML file with `[problem]`, `[solver]`,
//! `[learn]`, `[eval]` and `[output]` sections. Unknown keys are rejected.
//! Three presets ship with the library; see the repository README for the
//! full schema.

use serde::{Deserialize, Serialize};

use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::kalman::LtiSystem;
use crate::link::{BatteryModel, LinkModel};
use crate::mdp::{BuildOptions, MdpModel, ProblemConfig};
use crate::qlearn::{LearnConfig, LearnMode};
use crate::rvi::SolverOptions;

/// Upper bounds on declared dimensions, to keep hostile or mistyped configs
/// from allocating absurd matrices before validation can see them.
const MAX_MATRIX_DIM: usize = 64;
const MAX_CHAIN_STATES: usize = 64;
const MAX_TAU_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub learn: LearnSpec,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub tau_limit: usize,
    pub systems: Vec<SystemSpec>,
    /// Shared channel chain for every sensor-estimator and attacker-estimator
    /// link; `channel_chains` overrides it with one chain per sensor.
    #[serde(default)]
    pub channel_chain: Option<MarkovChain>,
    #[serde(default)]
    pub channel_chains: Option<Vec<MarkovChain>>,
    pub energy_chain: MarkovChain,
    pub links: Vec<LinkModel>,
    pub battery: BatteryModel,
    #[serde(default = "default_state_budget")]
    pub state_budget: u64,
    #[serde(default = "default_riccati_tol")]
    pub riccati_tol: f64,
    #[serde(default = "default_riccati_max_iter")]
    pub riccati_max_iter: usize,
}

fn default_state_budget() -> u64 {
    crate::mdp::DEFAULT_STATE_BUDGET
}

fn default_riccati_tol() -> f64 {
    crate::kalman::DEFAULT_RICCATI_TOL
}

fn default_riccati_max_iter() -> usize {
    crate::kalman::DEFAULT_RICCATI_MAX_ITER
}

/// Row-major nested-list matrices of one process/sensor pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub span_tol: f64,
    pub max_sweeps: usize,
    pub pruned: bool,
    /// Optional reference-state override as the digit tuple
    /// `[b, e, h1, g1, tau1, …]`.
    #[serde(default)]
    pub phi_f: Option<Vec<usize>>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            span_tol: 1e-9,
            max_sweeps: 20_000,
            pruned: true,
            phi_f: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnSpec {
    pub mode: LearnModeSpec,
    pub epsilon: f64,
    pub step_c: f64,
    pub step_k0: f64,
    pub step_b: u64,
    pub horizon: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub q_init: f64,
    pub dual_projection: bool,
    pub full_dual: bool,
    pub dual_batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnModeSpec {
    Standard,
    Structural,
}

impl Default for LearnSpec {
    fn default() -> Self {
        let d = LearnConfig::default();
        Self {
            mode: LearnModeSpec::Structural,
            epsilon: d.epsilon,
            step_c: d.step_c,
            step_k0: d.step_k0,
            step_b: d.step_b,
            horizon: d.horizon,
            eval_every: d.eval_every,
            seed: d.seed,
            q_init: d.q_init,
            dual_projection: d.dual_projection,
            full_dual: d.full_dual,
            dual_batch: d.dual_batch,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub horizon: u64,
    pub seeds: Vec<u64>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            horizon: 2_000_000,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.check_shapes()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Cheap structural checks that do not require building the model.
    fn check_shapes(&self) -> Result<()> {
        let p = &self.problem;
        if p.tau_limit == 0 || p.tau_limit > MAX_TAU_LIMIT {
            return Err(Error::Validation(format!(
                "tau_limit must be in 1..={MAX_TAU_LIMIT}"
            )));
        }
        if p.systems.is_empty() {
            return Err(Error::Validation("problem.systems must be nonempty".into()));
        }
        for sys in &p.systems {
            for (name, m) in [("a", &sys.a), ("c", &sys.c), ("w", &sys.w), ("v", &sys.v)] {
                if m.is_empty() || m.len() > MAX_MATRIX_DIM {
                    return Err(Error::Validation(format!(
                        "system matrix {name} must have 1..={MAX_MATRIX_DIM} rows"
                    )));
                }
                let cols = m[0].len();
                if cols == 0 || cols > MAX_MATRIX_DIM {
                    return Err(Error::Validation(format!(
                        "system matrix {name} must have 1..={MAX_MATRIX_DIM} columns"
                    )));
                }
                if m.iter().any(|row| row.len() != cols) {
                    return Err(Error::Validation(format!(
                        "system matrix {name} has ragged rows"
                    )));
                }
            }
        }
        if p.channel_chain.is_none() && p.channel_chains.is_none() {
            return Err(Error::Validation(
                "one of problem.channel_chain or problem.channel_chains is required".into(),
            ));
        }
        for chain in p
            .channel_chain
            .iter()
            .chain(p.channel_chains.iter().flatten())
            .chain([&p.energy_chain])
        {
            if chain.len() > MAX_CHAIN_STATES {
                return Err(Error::Validation(format!(
                    "chains may have at most {MAX_CHAIN_STATES} states"
                )));
            }
            chain.validate()?;
        }
        Ok(())
    }

    /// Builds and validates the full problem description.
    pub fn build_problem(&self, allow_stable: bool) -> Result<ProblemConfig> {
        let p = &self.problem;
        let systems: Vec<LtiSystem> = p
            .systems
            .iter()
            .map(|s| {
                LtiSystem::new(
                    to_matrix(&s.a)?,
                    to_matrix(&s.c)?,
                    to_matrix(&s.w)?,
                    to_matrix(&s.v)?,
                    allow_stable,
                )
            })
            .collect::<Result<_>>()?;
        let n = systems.len();
        let channel_chains = match (&p.channel_chains, &p.channel_chain) {
            (Some(chains), _) => {
                if chains.len() != n {
                    return Err(Error::Validation(format!(
                        "channel_chains has {} entries for {n} sensors",
                        chains.len()
                    )));
                }
                chains.clone()
            }
            (None, Some(shared)) => vec![shared.clone(); n],
            (None, None) => unreachable!("checked in check_shapes"),
        };
        let cfg = ProblemConfig {
            systems,
            channel_chains,
            energy_chain: p.energy_chain.clone(),
            links: p.links.clone(),
            battery: p.battery.clone(),
            tau_limit: p.tau_limit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            riccati_tol: self.problem.riccati_tol,
            riccati_max_iter: self.problem.riccati_max_iter,
            state_budget: self.problem.state_budget,
        }
    }

    pub fn build_model(&self, allow_stable: bool) -> Result<MdpModel> {
        MdpModel::build(self.build_problem(allow_stable)?, self.build_options())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            span_tol: self.solver.span_tol,
            max_sweeps: self.solver.max_sweeps,
            pruned: self.solver.pruned,
        }
    }

    /// Reference state index: the configured digit tuple, or the model
    /// default.
    pub fn phi_f_index(&self, model: &MdpModel) -> Result<usize> {
        match &self.solver.phi_f {
            None => Ok(model.phi_f_default()),
            Some(digits) => {
                if digits.len() != model.num_digits() {
                    return Err(Error::Validation(format!(
                        "phi_f needs {} digits, got {}",
                        model.num_digits(),
                        digits.len()
                    )));
                }
                let state = {
                    let mut s = model.decode(0);
                    s.b = digits[0] as u32;
                    s.e = digits[1];
                    for (i, link) in s.links.iter_mut().enumerate() {
                        link.h = digits[2 + 3 * i];
                        link.g = digits[3 + 3 * i];
                        link.tau = digits[4 + 3 * i];
                    }
                    s
                };
                model.encode(&state)
            }
        }
    }

    pub fn learn_mode(&self) -> LearnMode {
        match self.learn.mode {
            LearnModeSpec::Standard => LearnMode::Standard,
            LearnModeSpec::Structural => LearnMode::Structural,
        }
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            epsilon: self.learn.epsilon,
            step_c: self.learn.step_c,
            step_k0: self.learn.step_k0,
            step_b: self.learn.step_b,
            horizon: self.learn.horizon,
            eval_every: self.learn.eval_every,
            seed: self.learn.seed,
            q_init: self.learn.q_init,
            dual_projection: self.learn.dual_projection,
            full_dual: self.learn.full_dual,
            dual_batch: self.learn.dual_batch,
            phi_f: None,
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(|r| r.len()).unwrap_or(0);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Validation("matrix must be rectangular and nonempty".into()));
    }
    Ok(nalgebra::DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Bundled experiment presets.
pub const PRESET_NAMES: &[&str] = &["paper_sec6", "paper_sec6_small", "toy_n1"];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_text(name)?;
    ExperimentConfig::from_toml_str(text)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "paper_sec6" => Ok(include_str!("../presets/paper_sec6.toml")),
        "paper_sec6_small" => Ok(include_str!("../presets/paper_sec6_small.toml")),
        "toy_n1" => Ok(include_str!("../presets/toy_n1.toml")),
        other => Err(Error::Validation(format!(
            "unknown preset {other:?}; available: {PRESET_NAMES:?}"
        ))),
    }
}
