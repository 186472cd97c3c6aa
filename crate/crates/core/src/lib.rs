//! Centralized coordinator reductions for finite decentralized stochastic
//! control problems.
//!
//! A [`TeamModel`] holds a finite hidden state, agents with private noisy
//! measurements, and a joint-action dependent transition kernel and cost.
//! Under periodic sharing of measurements every `K` steps the team problem is
//! equivalent to an MDP whose state is the predictor of the hidden state given
//! the shared data and whose actions are blocks of per-agent prescriptions.
//!
//! - [`belief`]: predictor and filter updates, TV and Wasserstein distances.
//! - [`coordinator`]: prescription blocks, their enumeration, and the exact
//!   period kernel and reduced cost.
//! - [`quantizer`]: codebooks over the simplex and the finite surrogate MDP.
//! - [`solver`]: value iteration and tabular Q-learning.
//! - [`bounds`]: Dobrushin coefficients and the error and stability bounds.
//! - [`evalsim`]: Monte Carlo rollouts and predictor-stability experiments.
//! - [`cli`]: the config-driven batch driver behind the `teamcoord` binary.
//!
//! ```
//! use teamcoord::{bounds, TeamModel};
//!
//! let model = TeamModel::two_agent_example();
//! let cert = bounds::predictor_stability_certificate(&model);
//! assert!((cert.rate - 0.875).abs() < 1e-12);
//! ```

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod bounds;
pub mod cli;
pub mod coordinator;
pub mod error;
pub mod evalsim;
pub mod model;
pub mod quantizer;
pub mod solver;
pub mod transport;

pub use belief::{Belief, GroundMetric};
pub use coordinator::{JointPrescriptionBlock, MemorySpec, PrescriptionSpace};
pub use error::{Error, Result};
pub use model::{RawModel, TeamModel};
pub use quantizer::{Codebook, QuantizedMDP};
pub use solver::{CoordinatorPolicy, QTable};
