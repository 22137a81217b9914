//! Optimal and equilibrium matching policies for a two-sided market in which
//! supply waits at a per-period cost and unmatched demand leaves.
//!
//! Each period one supply agent and one demand agent arrive, each of type H
//! or L. A matching rule either pairs the demand agent with a waiting supply
//! agent or lets it leave. The crate provides:
//!
//! * [`analytic`]: closed-form thresholds and welfare,
//! * [`mdp`]: relative value iteration on the truncated MDP,
//! * [`chain`]: stationary laws of the threshold chain,
//! * [`equilibrium`]: the decentralized profile and a deviation checker,
//! * [`sim`]: seeded Monte Carlo,
//! * [`compare`]: backlog regime comparisons and sweeps,
//! * [`verify`]: cross-checks of all of the above on a random grid.

pub mod analytic;
pub mod chain;
pub mod compare;
pub mod equilibrium;
pub mod error;
pub mod mdp;
pub mod params;
pub mod sim;
pub mod state;
pub mod verify;

pub use analytic::{Mode, System, WelfareReport};
pub use chain::StationaryDistribution;
pub use equilibrium::EquilibriumProfile;
pub use error::{Assumption, Error, Result};
pub use params::{validate, MarketParams, PayoffMatrix, RawParams};
pub use sim::{SimConfig, SimResult};
pub use state::{Action, MatchRule, Quality, State, ThresholdPolicy};
