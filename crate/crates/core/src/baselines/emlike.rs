use crate::config::EmConfig;
use crate::densities;
use crate::em::mstep::{ArStats, LagBin, TransitionStats};
use crate::em::{run_em, EmSufficientStats, FitReport, Stopping};
use crate::error::{MrsError, Result};
use crate::model::{MrsModel, Regime};

use super::{hamilton_with, kim_backward, HamiltonResult};

/// Magnitude beyond which the lag approximation counts as diverged.
pub const B_TILDE_LIMIT: f64 = 1e12;

/// Filter output of the EM-like scheme together with its lag approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmLikeState {
    /// Approximate lagged value of each AR(1) regime, indexed `[i][t]`.
    pub b_tilde: Vec<Vec<f64>>,
    /// Filter in which AR(1) regime `i` regresses on `b_tilde[i][t - 1]`.
    /// Its `loglik` is an approximate objective.
    pub filter: HamiltonResult,
}

/// Approximate forward pass for an independent-regime model. Starts from
/// `b_tilde[i][0] = x_0` and updates
/// `b_tilde[i][t] = P(R_t = i | x_0..x_t) x_t + P(R_t != i | x_0..x_{t-1}) (alpha_i + phi_i b_tilde[i][t-1])`.
pub fn emlike_forward(model: &MrsModel, x: &[f64]) -> Result<EmLikeState> {
    crate::forward::check_inputs(model, x, None)?;
    let k = model.num_ar();
    let ar: Vec<(f64, f64, f64)> = model
        .regimes
        .iter()
        .filter_map(|r| match *r {
            Regime::Ar1 { alpha, phi, sigma2 } => Some((alpha, phi, sigma2)),
            _ => None,
        })
        .collect();
    let mut b_tilde = vec![Vec::with_capacity(x.len()); k];

    let update = |b_tilde: &mut Vec<Vec<f64>>, t: usize, filt: &[f64], pred: &[f64]| -> Result<()> {
        for (i, &(alpha, phi, _)) in ar.iter().enumerate() {
            let v = if t == 0 {
                x[0]
            } else {
                filt[i] * x[t] + (1.0 - pred[i]) * (alpha + phi * b_tilde[i][t - 1])
            };
            if !(v.abs() <= B_TILDE_LIMIT) {
                return Err(MrsError::Diverged { regime: i + 1, t, value: v });
            }
            b_tilde[i].push(v);
        }
        Ok(())
    };

    let filter = hamilton_with(model, x.len(), |t, filtered, prediction| {
        if t > 0 {
            update(&mut b_tilde, t - 1, &filtered[t - 1], &prediction[t - 1])?;
        }
        Ok(model
            .regimes
            .iter()
            .enumerate()
            .map(|(i, r)| match *r {
                Regime::Ar1 { alpha, phi, sigma2 } if t > 0 => {
                    densities::normal_log_pdf(x[t], alpha + phi * b_tilde[i][t - 1], sigma2)
                }
                _ => densities::stationary_log_density(x[t], r),
            })
            .collect())
    })?;
    let last = x.len() - 1;
    update(&mut b_tilde, last, &filter.filtered[last], &filter.prediction[last])?;
    Ok(EmLikeState { b_tilde, filter })
}

/// EM-like fit: the dependent-regime updates with each AR(1) regime's lagged
/// observation replaced by its approximation. No ascent guarantee, so it
/// stops on step size (or `max_iters`) only, and the reported loglik is
/// flagged approximate.
pub fn emlike_fit(model0: &MrsModel, x: &[f64], config: &EmConfig) -> Result<FitReport> {
    crate::forward::check_inputs(model0, x, None)?;
    config.validate(model0.num_ar())?;
    let estep = |theta: &MrsModel| -> Result<(f64, EmSufficientStats)> {
        let state = emlike_forward(theta, x)?;
        let kim = kim_backward(theta, &state.filter)?;
        let ar = state
            .b_tilde
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut bin = LagBin::default();
                for t in 1..x.len() {
                    bin.add(kim.smoothed[t][i], x[t], b[t - 1]);
                }
                ArStats {
                    bins: vec![LagBin::default(), bin],
                }
            })
            .collect();
        let regime_weights = (0..theta.num_regimes())
            .map(|i| kim.smoothed.iter().map(|s| s[i]).collect())
            .collect();
        let stats = EmSufficientStats {
            ar,
            regime_weights,
            transitions: TransitionStats::from_marginals(&kim.smoothed, &kim.pairwise),
        };
        Ok((state.filter.loglik, stats))
    };
    let mut report = run_em(model0, x, config, estep, Stopping::StepOnly)?;
    report.approximate = true;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{hamilton_forward, DependentMrsModel};

    #[test]
    fn certain_regime_tracks_observations() {
        let model = MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.1, phi: 0.8, sigma2: 1.0 },
                Regime::Normal { mu: 3.0, sigma2: 1.0 },
            ],
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let x = [0.4, -0.2, 1.1, 0.9, 0.3];
        let s = emlike_forward(&model, &x).unwrap();
        assert_eq!(s.b_tilde[0], x.to_vec());
        // Same densities as the dependent model on this path.
        let dep = hamilton_forward(&DependentMrsModel(model), &x).unwrap();
        assert!((dep.loglik - s.filter.loglik).abs() < 1e-12);
    }

    #[test]
    fn diverging_lag_is_reported() {
        let model = MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.9, sigma2: 1.0 },
                Regime::Normal { mu: 0.0, sigma2: 1.0 },
            ],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let x = [1e13, 0.0, 0.0];
        assert!(matches!(emlike_forward(&model, &x), Err(MrsError::Diverged { regime: 1, t: 0, .. })));
    }
}
