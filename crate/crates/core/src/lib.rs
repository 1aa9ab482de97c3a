//! Exact and truncated forward, backward and EM algorithms for Markov
//! regime-switching models whose AR(1) regimes evolve independently of the
//! regime that is observed.

pub mod backward;
pub mod bench;
pub mod baselines;
pub mod config;
pub mod densities;
pub mod em;
pub mod error;
pub mod forward;
pub mod kv;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod pipeline;
pub mod simulate;
pub mod state_space;

pub use config::EmConfig;
pub use error::{MrsError, Result};
pub use model::{MrsModel, Orientation, Regime};
