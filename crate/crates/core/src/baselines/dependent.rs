use crate::config::EmConfig;
use crate::densities;
use crate::em::mstep::{ArStats, LagBin, TransitionStats};
use crate::em::{run_em, EmSufficientStats, FitReport, Stopping};
use crate::error::Result;
use crate::model::{MrsModel, Regime};

use super::{hamilton_forward, kim_backward, DependentMrsModel};

/// Conditional log-densities at `t`: AR(1) regimes regress on `x_{t-1}`;
/// at `t = 0` they use their stationary law.
pub fn dependent_log_densities(model: &MrsModel, x: &[f64], t: usize) -> Vec<f64> {
    model
        .regimes
        .iter()
        .map(|r| match *r {
            Regime::Ar1 { alpha, phi, sigma2 } if t > 0 => densities::normal_log_pdf(x[t], alpha + phi * x[t - 1], sigma2),
            _ => densities::stationary_log_density(x[t], r),
        })
        .collect()
}

/// Closed-form weighted regression of `x_t` on `x_{t-1}` over `t >= 1`,
/// returning `(alpha, phi, sigma2)`.
pub fn dependent_ar_update(w: &[f64], x: &[f64]) -> (f64, f64, f64) {
    let mut b = LagBin::default();
    for t in 1..x.len() {
        b.add(w[t], x[t], x[t - 1]);
    }
    let (mx, my) = (b.sx / b.w, b.sy / b.w);
    let cxy = b.sxy / b.w - mx * my;
    let cyy = b.syy / b.w - my * my;
    let phi = cxy / cyy;
    let alpha = mx - phi * my;
    let sigma2 = (1..x.len())
        .map(|t| w[t] * (x[t] - alpha - phi * x[t - 1]).powi(2))
        .sum::<f64>()
        / b.w;
    (alpha, phi, sigma2)
}

/// EM for the dependent-regime model with Hamilton/Kim E-steps. The AR(1)
/// update maximizes the full expected loglik, including the stationary
/// density of `x_0`, so the loglik never decreases.
pub fn dependent_em(model0: &DependentMrsModel, x: &[f64], config: &EmConfig) -> Result<FitReport> {
    crate::forward::check_inputs(&model0.0, x, None)?;
    config.validate(model0.0.num_ar())?;
    let estep = |theta: &MrsModel| -> Result<(f64, EmSufficientStats)> {
        let model = DependentMrsModel(theta.clone());
        let fwd = hamilton_forward(&model, x)?;
        let kim = kim_backward(theta, &fwd)?;
        let ar = (0..theta.num_ar())
            .map(|i| {
                ArStats::from_weights(
                    x,
                    kim.smoothed
                        .iter()
                        .enumerate()
                        .map(|(t, s)| (t, (t > 0).then_some(1), s[i])),
                )
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
        Ok((fwd.loglik, stats))
    };
    run_em(&model0.0, x, config, estep, Stopping::StepOrIncrease)
}
