//! Planning and learning of jamming power allocation against remote state
//! estimation, for an attacker that harvests energy from its environment.
//!
//! The library models a fusion center estimating `N` linear processes through
//! lossy wireless links, and an attacker that splits a battery of harvested
//! energy units across the links to raise the estimation error covariance.
//! The decision problem is an average-reward MDP over battery level,
//! harvested-energy state, per-link channel gains, and per-link holding times.
//!
//! Main entry points:
//!
//! - [`kalman`]: LTI process definitions and steady-state Kalman filter
//!   covariance (fixed point of the Riccati map), plus the error-trace tables
//!   the reward is built from.
//! - [`chain`] / [`link`]: finite-state Markov models for channel gains and
//!   harvested energy, SINR, packet arrival rates and battery dynamics.
//! - [`mdp`]: exact enumeration of the truncated state space, feasible
//!   actions, transition kernel and one-stage reward.
//! - [`rvi`]: relative value iteration, policy extraction, Q-factors and
//!   verification of the monotone/superadditive policy structure.
//! - [`qlearn`]: model-free average-reward Q-learning, both the standard
//!   update and the structure-constrained primal-dual update.
//! - [`sim`]: ground-truth environment for rollouts and policy evaluation.
//! - [`config`]: TOML experiment configuration and bundled presets.

pub mod chain;
pub mod config;
pub mod error;
pub mod kalman;
pub mod link;
pub mod mdp;
pub mod qlearn;
pub mod rvi;
pub mod sim;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
