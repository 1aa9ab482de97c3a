//! EM fitting for independent-regime models, and the multistart driver.

pub mod mstep;
mod multistart;

pub use multistart::{multistart, restart_seed, Algorithm, FixedStart, StartSampler, UniformStartSampler};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::backward::{backward_smooth, SmoothedResult};
use crate::config::EmConfig;
use crate::error::{MrsError, Result};
use crate::forward::{check_inputs, forward_on_lattice, ForwardResult};
use crate::model::{MrsModel, Regime};
use crate::state_space::Lattice;

use mstep::{ArStats, TransitionStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    LoglikIncreaseBelowTol,
    StepBelowTol,
    MaxIters,
    /// Parameters reached the boundary of the parameter space (only possible
    /// with guards disabled); the last valid parameters are returned.
    BoundaryGuard,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::LoglikIncreaseBelowTol => "loglik-increase-below-tol",
            Self::StepBelowTol => "step-below-tol",
            Self::MaxIters => "max-iters",
            Self::BoundaryGuard => "boundary-guard",
        };
        f.write_str(s)
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartResult {
    pub seed: u64,
    pub start: MrsModel,
    pub theta: Option<MrsModel>,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub termination_reason: Option<TerminationReason>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub theta_hat: MrsModel,
    pub loglik: f64,
    /// Loglik at the start and after every iteration.
    pub loglik_trajectory: Vec<f64>,
    pub iterations: usize,
    pub termination_reason: TerminationReason,
    pub per_restart: Vec<RestartResult>,
    pub best_restart: usize,
    /// True when `loglik` is an approximate objective rather than the exact
    /// likelihood (EM-like algorithm).
    pub approximate: bool,
    pub warnings: Vec<String>,
}

/// Expected complete-data statistics from one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmSufficientStats {
    /// Lag-binned moments per AR(1) regime.
    pub ar: Vec<ArStats>,
    /// `P(R_t = i | x)` per regime, indexed `[i][t]`.
    pub regime_weights: Vec<Vec<f64>>,
    pub transitions: TransitionStats,
}

impl EmSufficientStats {
    pub fn collect(model: &MrsModel, x: &[f64], fwd: &ForwardResult, sm: &SmoothedResult) -> Self {
        let k = model.num_ar();
        let m = model.num_regimes();
        let max_lag = fwd.lattice.max_finite_lag(x.len() - 1);
        let mut ar: Vec<ArStats> = (0..k)
            .map(|_| ArStats {
                bins: vec![Default::default(); max_lag + 1],
            })
            .collect();
        for (t, cm) in sm.counter_marginal.iter().enumerate() {
            for (i, weights) in cm.iter().enumerate() {
                for (slot, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        ar[i].add(x, t, (slot > 0).then_some(slot), w);
                    }
                }
            }
        }
        let regime_weights = (0..m)
            .map(|i| sm.regime_marginal.iter().map(|r| r[i]).collect())
            .collect();
        Self {
            ar,
            regime_weights,
            transitions: TransitionStats::from_smoothed(sm),
        }
    }
}

/// Numerical context shared by the M-step updates.
#[derive(Debug, Clone, Copy)]
pub struct MStepBounds {
    pub sigma2_floor: f64,
    /// Lower bound on transition probabilities (0 when guards are off).
    pub lower: f64,
    pub freeze_initial: bool,
}

impl MStepBounds {
    pub fn from_config(config: &EmConfig, x: &[f64]) -> Self {
        Self {
            sigma2_floor: config.resolved_sigma2_floor(x),
            lower: if config.guards { config.delta } else { 0.0 },
            freeze_initial: config.freeze_initial,
        }
    }
}

/// One full M-step. Regimes without posterior weight keep their parameters
/// and are named in the returned warnings.
pub fn m_step(model: &MrsModel, x: &[f64], stats: &EmSufficientStats, bounds: MStepBounds) -> Result<(MrsModel, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut regimes = model.regimes.clone();
    for (i, regime) in regimes.iter_mut().enumerate() {
        let w = &stats.regime_weights[i];
        let updated = match *regime {
            Regime::Ar1 { phi, .. } => mstep::m_step_ar1(&stats.ar[i], bounds.sigma2_floor, Some(phi))
                .map(|(alpha, phi, sigma2)| Regime::Ar1 { alpha, phi, sigma2 }),
            Regime::Normal { .. } => {
                mstep::m_step_normal(w, x, bounds.sigma2_floor).map(|(mu, sigma2)| Regime::Normal { mu, sigma2 })
            }
            Regime::ShiftedLogNormal { shift, orientation, .. } => {
                mstep::m_step_lognormal(w, x, shift, orientation, bounds.sigma2_floor)
                    .map(|(mu, sigma2)| Regime::ShiftedLogNormal { mu, sigma2, shift, orientation })
            }
            Regime::ShiftedGamma { shift, orientation, .. } => mstep::m_step_gamma(w, x, shift, orientation)
                .map(|(shape, scale)| Regime::ShiftedGamma { shape, scale, shift, orientation }),
        };
        match updated {
            Ok(r) => *regime = r,
            Err(MrsError::DegenerateRegime { .. }) => {
                warnings.push(format!("regime {} has no posterior weight; parameters frozen", i + 1));
            }
            Err(MrsError::SupportViolation { t, .. }) => {
                return Err(MrsError::SupportViolation { regime: i + 1, t })
            }
            Err(e) => return Err(e),
        }
    }
    let (transition, initial, frozen) =
        mstep::m_step_transitions(&stats.transitions, model, bounds.lower, bounds.freeze_initial);
    for i in frozen {
        warnings.push(format!("regime {} is never left in expectation; transition row frozen", i + 1));
    }
    Ok((
        MrsModel {
            regimes,
            transition,
            initial,
        },
        warnings,
    ))
}

/// Forward and backward passes on a prebuilt lattice.
pub fn e_step(model: &MrsModel, x: &[f64], lattice: Lattice) -> Result<(ForwardResult, SmoothedResult)> {
    let fwd = forward_on_lattice(model, x, lattice)?;
    let sm = backward_smooth(model, &fwd)?;
    Ok((fwd, sm))
}

fn is_degenerate(model: &MrsModel) -> bool {
    let bad_var = model.regimes.iter().any(|r| match *r {
        Regime::Ar1 { sigma2, .. } | Regime::Normal { sigma2, .. } | Regime::ShiftedLogNormal { sigma2, .. } => {
            !(sigma2 > 0.0 && sigma2.is_finite())
        }
        Regime::ShiftedGamma { shape, scale, .. } => !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()),
    });
    bad_var || !model.validate().is_empty()
}

/// EM from a single starting point.
pub fn em_fit(model0: &MrsModel, x: &[f64], config: &EmConfig) -> Result<FitReport> {
    check_inputs(model0, x, config.truncation)?;
    config.validate(model0.num_ar())?;
    let (k, m, last) = (model0.num_ar(), model0.num_regimes(), x.len() - 1);
    let mut lattice = Some(Lattice::build(k, m, last, config.truncation)?);
    let estep = |theta: &MrsModel| -> Result<(f64, EmSufficientStats)> {
        let lat = match lattice.take() {
            Some(l) => l,
            None => Lattice::build(k, m, last, config.truncation)?,
        };
        let (fwd, sm) = e_step(theta, x, lat)?;
        let stats = EmSufficientStats::collect(theta, x, &fwd, &sm);
        let ll = fwd.loglik;
        lattice = Some(fwd.lattice);
        Ok((ll, stats))
    };
    run_em(model0, x, config, estep, Stopping::StepOrIncrease)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stopping {
    StepOrIncrease,
    /// For objectives without an ascent guarantee.
    StepOnly,
}

/// Shared EM loop. `estep` returns the objective at `theta` and the
/// statistics for the next M-step.
pub(crate) fn run_em<E>(model0: &MrsModel, x: &[f64], config: &EmConfig, mut estep: E, stopping: Stopping) -> Result<FitReport>
where
    E: FnMut(&MrsModel) -> Result<(f64, EmSufficientStats)>,
{
    let bounds = MStepBounds::from_config(config, x);
    let mut theta = model0.clone();
    let (ll0, mut stats) = estep(&theta)?;
    if !ll0.is_finite() {
        return Err(MrsError::Inconsistent(format!("starting loglik is {ll0}")));
    }
    let mut trajectory = vec![ll0];
    let mut warnings: Vec<String> = Vec::new();
    let mut reason = TerminationReason::MaxIters;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let next = match m_step(&theta, x, &stats, bounds) {
            Ok((next, w)) => {
                for msg in w {
                    if !warnings.contains(&msg) {
                        warn!("{msg}");
                        warnings.push(msg);
                    }
                }
                next
            }
            Err(e) if !config.guards && e.is_numerical() => {
                debug!("M-step failed at the boundary: {e}");
                reason = TerminationReason::BoundaryGuard;
                break;
            }
            Err(e) => return Err(e),
        };
        if is_degenerate(&next) {
            if config.guards {
                return Err(MrsError::Inconsistent(format!(
                    "guarded M-step produced invalid parameters: {:?}",
                    next.validate()
                )));
            }
            reason = TerminationReason::BoundaryGuard;
            break;
        }
        let (ll, s) = match estep(&next) {
            Ok(r) if r.0.is_finite() => r,
            Ok(_) | Err(MrsError::ZeroLikelihood { .. }) if !config.guards => {
                reason = TerminationReason::BoundaryGuard;
                break;
            }
            Ok(r) => return Err(MrsError::Inconsistent(format!("loglik is {}", r.0))),
            Err(e) => return Err(e),
        };
        let step = theta.sup_distance(&next);
        let increase = ll - trajectory.last().copied().unwrap_or(f64::NEG_INFINITY);
        theta = next;
        stats = s;
        trajectory.push(ll);
        iterations += 1;
        if step < config.tol {
            reason = TerminationReason::StepBelowTol;
            break;
        }
        if stopping == Stopping::StepOrIncrease && increase < config.tol {
            reason = TerminationReason::LoglikIncreaseBelowTol;
            break;
        }
    }
    Ok(single_report(model0, theta, trajectory, iterations, reason, warnings, config.seed))
}

pub(crate) fn single_report(
    start: &MrsModel,
    theta: MrsModel,
    trajectory: Vec<f64>,
    iterations: usize,
    reason: TerminationReason,
    warnings: Vec<String>,
    seed: u64,
) -> FitReport {
    let loglik = *trajectory.last().expect("trajectory holds the starting loglik");
    FitReport {
        per_restart: vec![RestartResult {
            seed,
            start: start.clone(),
            theta: Some(theta.clone()),
            loglik: Some(loglik),
            iterations,
            termination_reason: Some(reason),
            error: None,
        }],
        theta_hat: theta,
        loglik,
        loglik_trajectory: trajectory,
        iterations,
        termination_reason: reason,
        best_restart: 0,
        approximate: false,
        warnings,
    }
}
