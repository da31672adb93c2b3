//! Physics-based kinodynamic planning with KPIECE, extended with particle
//! evaluation of candidate motions and belief-biased tree exploration.
//!
//! The crate is organized bottom-up:
//!
//! * [`physics`]: deterministic and noisy planar rigid-body propagation.
//! * [`world`]: world state, validity checking and displacement evaluation.
//! * [`uncertainty`]: pose beliefs, noise sampling and GMM fitting by EM.
//! * [`kpiece`]: motion tree, projection grid, importance and selection rules.
//! * [`sampler`]: candidate sampling and particle-based belief estimation.
//! * [`planner`]: the planning loop in probabilistic and baseline modes.

pub mod error;
pub mod kpiece;
pub mod physics;
pub mod planner;
pub mod rng;
pub mod sampler;
pub mod uncertainty;
pub mod world;

pub use error::{Error, Result};
pub use rng::RngStream;
