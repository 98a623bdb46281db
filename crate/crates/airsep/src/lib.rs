//! Desk-scale autonomous separation assurance.
//!
//! The crate bundles four pieces:
//!
//! - [`sim`]: a deterministic structured-airspace simulator — routes with
//!   crossings and merge points, aircraft spawned by inter-arrival interval,
//!   speed-command kinematics, loss-of-separation detection and episode
//!   scoring across four case studies (`A` for training, `B`/`C`/`D` for
//!   validation).
//! - [`net`] + [`ppo`]: a small tanh policy-value network with Bernoulli
//!   dropout on both hidden layers, exact manual gradients, and a clipped
//!   surrogate PPO trainer with truncated generalized advantage estimation.
//! - [`safety`]: the execution-time DODA safety module — MC-dropout action
//!   distributions, uniform state perturbation with clipping, majority-vote
//!   (`da1`) and minimum-entropy (`da2`) selection, and the combined
//!   m-states-by-n-passes pipeline. It wraps any trained checkpoint without
//!   further training.
//! - [`harness`]: seeded experiment orchestration — train on case A,
//!   evaluate every safety mode on the unseen cases with paired seeds, sweep
//!   traffic density, and write result tables.
//!
//! Each major capability has a runnable demo under `examples/`; the `airsep`
//! binary exposes the `train`, `eval`, `ablate` and `density` subcommands.

pub mod geom;
pub mod harness;
pub mod net;
pub mod ppo;
pub mod rng;
pub mod safety;
pub mod sim;

pub use net::{ActionDistribution, DropoutMask, ForwardOutput, LayerSizes, NetworkParams};
pub use safety::{DodaConfig, DodaMode, PassRule};
pub use sim::{Action, Airspace, CaseId, EpisodeResult, SimConfig, StateVector};
