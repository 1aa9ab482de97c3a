use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bic, quantile};
use crate::config::EmConfig;
use crate::em::{multistart, Algorithm, FitReport, UniformStartSampler};
use crate::error::{MrsError, Result};
use crate::model::{MrsModel, Orientation, Regime};

/// Spot-price models: an AR(1) base regime with a shifted spike regime, and
/// optionally a shifted log-normal drop regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Candidate {
    #[serde(rename = "M1-LN")]
    M1Ln,
    #[serde(rename = "M1-Gamma")]
    M1Gamma,
    #[serde(rename = "M2-LN")]
    M2Ln,
    #[serde(rename = "M2-Gamma")]
    M2Gamma,
}

impl Candidate {
    pub const ALL: [Candidate; 4] = [Candidate::M1Ln, Candidate::M1Gamma, Candidate::M2Ln, Candidate::M2Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Candidate::M1Ln => "M1-LN",
            Candidate::M1Gamma => "M1-Gamma",
            Candidate::M2Ln => "M2-LN",
            Candidate::M2Gamma => "M2-Gamma",
        }
    }

    fn has_drop(self) -> bool {
        matches!(self, Candidate::M2Ln | Candidate::M2Gamma)
    }

    fn gamma_spike(self) -> bool {
        matches!(self, Candidate::M1Gamma | Candidate::M2Gamma)
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Candidate {
    type Err = MrsError;

    fn from_str(s: &str) -> Result<Self> {
        Candidate::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MrsError::InvalidConfig(format!("unknown candidate model {s:?}")))
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

/// Data-driven starting point. Shifts are the first and third quartiles of
/// `x` and stay fixed during fitting.
pub fn candidate_start(candidate: Candidate, x: &[f64]) -> Result<MrsModel> {
    let q1 = quantile(x, 0.25);
    let q3 = quantile(x, 0.75);
    let up: Vec<f64> = x.iter().filter(|&&v| v > q3).map(|v| v - q3).collect();
    let down: Vec<f64> = x.iter().filter(|&&v| v < q1).map(|v| q1 - v).collect();
    if up.len() < 2 || (candidate.has_drop() && down.len() < 2) {
        return Err(MrsError::InvalidInput("too few observations beyond the quartiles".into()));
    }
    let (m, v) = mean_var(x);
    let phi = 0.5;
    let base = Regime::Ar1 {
        alpha: m * (1.0 - phi),
        phi,
        sigma2: (v * (1.0 - phi * phi)).max(1e-6),
    };
    let lognormal = |e: &[f64], shift: f64, orientation: Orientation| {
        let logs: Vec<f64> = e.iter().map(|v| v.ln()).collect();
        let (mu, s2) = mean_var(&logs);
        Regime::ShiftedLogNormal {
            mu,
            sigma2: s2.max(0.01),
            shift,
            orientation,
        }
    };
    let spike = if candidate.gamma_spike() {
        let (em, ev) = mean_var(&up);
        let ev = ev.max(1e-3 * em * em);
        Regime::ShiftedGamma {
            shape: em * em / ev,
            scale: ev / em,
            shift: q3,
            orientation: Orientation::Up,
        }
    } else {
        lognormal(&up, q3, Orientation::Up)
    };
    if candidate.has_drop() {
        let drop = lognormal(&down, q1, Orientation::Down);
        MrsModel::new(
            vec![base, spike, drop],
            vec![vec![0.9, 0.05, 0.05], vec![0.5, 0.45, 0.05], vec![0.5, 0.05, 0.45]],
            vec![1.0 / 3.0; 3],
        )
    } else {
        MrsModel::new(vec![base, spike], vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![0.5, 0.5])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateReport {
    pub candidate: Candidate,
    pub n_params: usize,
    pub bic: Option<f64>,
    pub fit: Option<FitReport>,
    pub error: Option<String>,
}

/// Fits each candidate (concurrently) and ranks successes by increasing BIC;
/// failures follow in input order.
pub fn fit_candidates(x: &[f64], candidates: &[Candidate], config: &EmConfig) -> Vec<CandidateReport> {
    let mut reports: Vec<CandidateReport> = candidates
        .par_iter()
        .map(|&c| {
            let fitted = candidate_start(c, x).and_then(|start| {
                let n_params = start.num_free_parameters(!config.freeze_initial);
                let sampler = UniformStartSampler {
                    template: start,
                    template_first: true,
                };
                multistart(x, &sampler, config, Algorithm::Em).map(|r| (n_params, r))
            });
            match fitted {
                Ok((n_params, r)) => CandidateReport {
                    candidate: c,
                    n_params,
                    bic: Some(bic(r.loglik, n_params, x.len())),
                    fit: Some(r),
                    error: None,
                },
                Err(e) => CandidateReport {
                    candidate: c,
                    n_params: 0,
                    bic: None,
                    fit: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    reports.sort_by(|a, b| match (a.bic, b.bic) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    reports
}
