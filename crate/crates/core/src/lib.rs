//! Network SIRI contagion model on weighted digraphs.
//!
//! Agents move between susceptible, infected and recovered states; recovered
//! agents can be reinfected at rates that differ from first-infection rates.
//! The crate computes the four reproduction numbers and the behavioral regime
//! they imply, solves the endemic equilibrium, classifies points of the
//! infection-free set by the sign of the leading transverse eigenvalue,
//! integrates the mean-field equations and simulates the exact Markov chain.
//!
//! Agent indices are zero-based throughout the library API. Scenario files
//! and command-line reports use one-based agent labels.

pub mod cli;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod reproduction;
pub mod scc;
pub mod scenario;
pub mod spectral;
pub mod stochastic;

pub use dynamics::{
    integrate, rhs, simulate, IntegrationSettings, Outcome, SimOutcome, StateVector, Trajectory,
};
pub use equilibria::{classify_ife_point, ee_stability, sample_m0, solve_ee, EndemicEquilibrium};
pub use error::{Result, SiriError};
pub use model::{DiGraph, ImmunityCase, NetworkModel, RateParams};
pub use reproduction::{classify_regime, extreme_numbers, Regime, ReproductionSet};
pub use scenario::{ControlAction, Scenario};
pub use spectral::{grad_lambda, lambda_surface, leading_eig, spectral_radius, SpectralTriple};
