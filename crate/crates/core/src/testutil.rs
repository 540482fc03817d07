//! Shared fixtures for unit tests: the simulation-setup systems and a few
//! deliberately degenerate models.

use nalgebra::DMatrix;

use crate::chain::MarkovChain;
use crate::kalman::LtiSystem;
use crate::link::{BatteryModel, LinkModel, Modulation};
use crate::mdp::{BuildOptions, MdpModel, ProblemConfig};
use crate::Result;

pub fn sec6_systems() -> Vec<LtiSystem> {
    vec![
        LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.2, 0.2, 0.3, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            DMatrix::from_element(1, 1, 1.0),
            false,
        )
        .unwrap(),
        LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.2, 0.15, 0.0, 1.1]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.5]),
            DMatrix::from_element(1, 1, 3.0),
            false,
        )
        .unwrap(),
    ]
}

pub fn sec6_channel_chain() -> MarkovChain {
    MarkovChain::new(vec![0.02, 0.09], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap()
}

pub fn sec6_energy_chain() -> MarkovChain {
    MarkovChain::new(
        vec![0.0, 1.0, 2.0],
        vec![
            vec![0.2, 0.3, 0.5],
            vec![0.3, 0.4, 0.3],
            vec![0.1, 0.2, 0.7],
        ],
    )
    .unwrap()
}

pub fn sec6_link() -> LinkModel {
    LinkModel {
        sigma2: 0.04,
        jam_gain: 5.0,
        modulation: Modulation::Qam { b: 0.5 },
    }
}

pub fn sec6_config(tau_limit: usize) -> ProblemConfig {
    ProblemConfig::new(
        sec6_systems(),
        sec6_channel_chain(),
        sec6_energy_chain(),
        vec![sec6_link(), sec6_link()],
        BatteryModel { b_max: 3, p_max: 1.0 },
        tau_limit,
    )
    .unwrap()
}

pub fn sec6_model(tau_limit: usize) -> MdpModel {
    MdpModel::build(sec6_config(tau_limit), BuildOptions::default()).unwrap()
}

pub fn sec6_model_result(tau_limit: usize, opts: BuildOptions) -> Result<MdpModel> {
    MdpModel::build(sec6_config(tau_limit), opts)
}

/// The fixed-channel small setup: both channels pinned to the low gain state,
/// τ capped at 5, everything else as in the full setup.
pub fn sec6_small_config() -> ProblemConfig {
    let chain = MarkovChain::new(vec![0.02], vec![vec![1.0]]).unwrap();
    ProblemConfig::new(
        sec6_systems(),
        chain,
        sec6_energy_chain(),
        vec![sec6_link(), sec6_link()],
        BatteryModel { b_max: 3, p_max: 1.0 },
        5,
    )
    .unwrap()
}

pub fn sec6_small_model() -> MdpModel {
    MdpModel::build(sec6_small_config(), BuildOptions::default()).unwrap()
}

fn scalar_system() -> LtiSystem {
    LtiSystem::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        false,
    )
    .unwrap()
}

fn constant_rate_link(rate: f64) -> LinkModel {
    LinkModel {
        sigma2: 1.0,
        jam_gain: 1.0,
        modulation: Modulation::Table {
            points: vec![(0.0, rate)],
        },
    }
}

fn single_state_chain(value: f64) -> MarkovChain {
    MarkovChain::new(vec![value], vec![vec![1.0]]).unwrap()
}

/// N=1, single channel and energy state, b_max=0, L=1: exactly two states.
pub fn tiny_two_state_model() -> MdpModel {
    let cfg = ProblemConfig::new(
        vec![scalar_system()],
        single_state_chain(1.0),
        single_state_chain(0.0),
        vec![constant_rate_link(0.5)],
        BatteryModel { b_max: 0, p_max: 1.0 },
        1,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// Section-VI geometry with the arrival rate forced to a constant.
pub fn forced_lambda_model(rate: f64) -> MdpModel {
    let cfg = ProblemConfig::new(
        sec6_systems(),
        sec6_channel_chain(),
        sec6_energy_chain(),
        vec![constant_rate_link(rate), constant_rate_link(rate)],
        BatteryModel { b_max: 3, p_max: 1.0 },
        2,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// Scalar system, single channel/energy states, λ forced to a constant.
pub fn scalar_forced_model(rate: f64) -> MdpModel {
    let cfg = ProblemConfig::new(
        vec![scalar_system()],
        single_state_chain(1.0),
        single_state_chain(1.0),
        vec![constant_rate_link(rate)],
        BatteryModel { b_max: 1, p_max: 1.0 },
        2,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// N=1, single channel state, two energy states; small enough to enumerate
/// the kernel by hand.
pub fn toy_energy_model() -> MdpModel {
    let energy = MarkovChain::new(vec![0.0, 1.0], vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
    let cfg = ProblemConfig::new(
        vec![scalar_system()],
        single_state_chain(0.04),
        energy,
        vec![LinkModel {
            sigma2: 0.04,
            jam_gain: 5.0,
            modulation: Modulation::Qam { b: 0.5 },
        }],
        BatteryModel { b_max: 2, p_max: 1.0 },
        3,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// Scalar system with a constant arrival rate of exactly 1 − 1/‖A‖², which
/// puts the boundedness check right at the κ = 1 boundary.
pub fn scalar_boundary_model() -> MdpModel {
    let a = 1.2_f64;
    let sys = LtiSystem::new(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        false,
    )
    .unwrap();
    let rate = 1.0 - 1.0 / (a * a);
    let cfg = ProblemConfig::new(
        vec![sys],
        single_state_chain(1.0),
        single_state_chain(1.0),
        vec![constant_rate_link(rate)],
        BatteryModel { b_max: 1, p_max: 1.0 },
        2,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// Two sensors, single channel/energy states, L=1, b_max=2: at full battery
/// every power vector is feasible, matching the worked constraint-matrix toy.
pub fn paper_toy_model() -> MdpModel {
    let sys = sec6_systems();
    let cfg = ProblemConfig::new(
        sys,
        single_state_chain(0.04),
        single_state_chain(2.0),
        vec![
            LinkModel {
                sigma2: 0.04,
                jam_gain: 5.0,
                modulation: Modulation::Qam { b: 0.5 },
            };
            2
        ],
        BatteryModel { b_max: 2, p_max: 1.0 },
        1,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// Single sensor with p_max = 0: the only action is no jamming.
pub fn single_action_model() -> MdpModel {
    let cfg = ProblemConfig::new(
        vec![scalar_system()],
        single_state_chain(1.0),
        single_state_chain(1.0),
        vec![constant_rate_link(0.7)],
        BatteryModel { b_max: 2, p_max: 0.0 },
        3,
    )
    .unwrap();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

/// The oracle-checkable single-sensor toy: 6 states, 8 deterministic
/// stationary policies.
pub fn toy_n1_model() -> MdpModel {
    let cfg = toy_n1_config();
    MdpModel::build(cfg, BuildOptions::default()).unwrap()
}

pub fn toy_n1_config() -> ProblemConfig {
    let sys = LtiSystem::new(
        DMatrix::from_element(1, 1, 1.2),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        false,
    )
    .unwrap();
    ProblemConfig::new(
        vec![sys],
        single_state_chain(0.04),
        single_state_chain(1.0),
        vec![LinkModel {
            sigma2: 0.04,
            jam_gain: 5.0,
            modulation: Modulation::Qam { b: 0.5 },
        }],
        BatteryModel { b_max: 1, p_max: 1.0 },
        2,
    )
    .unwrap()
}
