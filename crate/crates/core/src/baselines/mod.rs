//! Reference algorithms: the dependent-regime Hamilton filter, Kim smoother
//! and EM, and the EM-like approximation for independent regimes.

mod dependent;
mod emlike;
mod hamilton;

pub use dependent::{dependent_ar_update, dependent_em, dependent_log_densities};
pub use emlike::{emlike_fit, emlike_forward, EmLikeState, B_TILDE_LIMIT};
pub use hamilton::{hamilton_forward, hamilton_with, kim_backward, HamiltonResult, KimResult};

use serde::{Deserialize, Serialize};

use crate::model::MrsModel;

/// Same parameters as [`MrsModel`], but every AR(1) regime conditions on the
/// immediately preceding observation whatever regime produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentMrsModel(pub MrsModel);
