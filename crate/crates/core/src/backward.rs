//! Backward smoothing and pairwise regime posteriors.

use crate::error::{MrsError, Result};
use crate::forward::{lag_slot, ForwardResult};
use crate::model::MrsModel;

#[derive(Debug, Clone)]
pub struct SmoothedResult {
    /// `P(H_t = (n, i) | x_0..x_T)`, laid out like the forward vectors.
    pub gamma: Vec<Vec<f64>>,
    /// `P(R_t = i | x_0..x_T)`.
    pub regime_marginal: Vec<Vec<f64>>,
    /// `counter_marginal[t][i][slot] = P(R_t = i, N_{t,i} = lag | x_0..x_T)` for
    /// AR regime `i`. Slot 0 collects the stationary case (never visited, or a
    /// lag at or beyond the truncation cap); slot `m >= 1` is lag `m`.
    pub counter_marginal: Vec<Vec<Vec<f64>>>,
    /// `pairwise[t - 1][i][j] = P(R_{t-1} = i, R_t = j | x_0..x_T)` for `t >= 1`.
    pub pairwise: Vec<Vec<Vec<f64>>>,
}

/// Ratio `gamma / prediction`, zero where `gamma` is zero.
fn ratios(gamma: &[f64], pred: &[f64], t: usize) -> Result<Vec<f64>> {
    gamma
        .iter()
        .zip(pred)
        .map(|(&g, &p)| {
            if g == 0.0 {
                Ok(0.0)
            } else if p > 0.0 {
                Ok(g / p)
            } else {
                Err(MrsError::Inconsistent(format!(
                    "smoothed mass {g} on a state with zero prediction at t = {t}"
                )))
            }
        })
        .collect()
}

/// Backward recursion from the filter at `T`, producing smoothed states,
/// regime and counter marginals, and pairwise posteriors.
pub fn backward_smooth(model: &MrsModel, fwd: &ForwardResult) -> Result<SmoothedResult> {
    let m = model.num_regimes();
    let k = model.num_ar();
    let lat = &fwd.lattice;
    let len = fwd.len();
    let mut gamma = vec![Vec::new(); len];
    let mut pairwise = vec![vec![vec![0.0; m]; m]; len.saturating_sub(1)];
    gamma[len - 1] = fwd.filtered[len - 1].clone();

    for t in (0..len - 1).rev() {
        let r = ratios(&gamma[t + 1], &fwd.prediction[t + 1], t + 1)?;
        let filt = &fwd.filtered[t];
        let pw = &mut pairwise[t];
        let mut g = vec![0.0; filt.len()];
        for s in 0..lat.layer(t).len() {
            for i in 0..m {
                let f = filt[s * m + i];
                if f == 0.0 {
                    continue;
                }
                let base = lat.next_index(t, s, i) * m;
                let row = &model.transition[i];
                let mut acc = 0.0;
                for j in 0..m {
                    let term = f * row[j] * r[base + j];
                    pw[i][j] += term;
                    acc += term;
                }
                g[s * m + i] = acc;
            }
        }
        gamma[t] = g;
    }

    let mut regime_marginal = Vec::with_capacity(len);
    let mut counter_marginal = Vec::with_capacity(len);
    for (t, g) in gamma.iter().enumerate() {
        let mut rm = vec![0.0; m];
        let mut cm = vec![vec![0.0; lat.max_finite_lag(t) + 1]; k];
        for s in 0..lat.layer(t).len() {
            for j in 0..m {
                let v = g[s * m + j];
                rm[j] += v;
                if j < k {
                    cm[j][lag_slot(lat.lag(t, s, j))] += v;
                }
            }
        }
        regime_marginal.push(rm);
        counter_marginal.push(cm);
    }
    Ok(SmoothedResult {
        gamma,
        regime_marginal,
        counter_marginal,
        pairwise,
    })
}

/// Pairwise posteriors computed branch by branch: for an AR regime `i` the
/// transition `i -> j` happened exactly when `R_t = j` and `i`'s counter is 1;
/// for an i.i.d. regime the filter at `t - 1` is reweighted by the smoothed to
/// predicted ratio at `t`.
pub fn pairwise_smoothed(model: &MrsModel, fwd: &ForwardResult, smoothed: &SmoothedResult) -> Result<Vec<Vec<Vec<f64>>>> {
    let m = model.num_regimes();
    let k = model.num_ar();
    let lat = &fwd.lattice;
    let mut out = Vec::with_capacity(fwd.len().saturating_sub(1));
    for t in 1..fwd.len() {
        let mut pw = vec![vec![0.0; m]; m];
        let g = &smoothed.gamma[t];
        for s in 0..lat.layer(t).len() {
            for i in 0..k {
                if lat.lag(t, s, i) == 1 {
                    for j in 0..m {
                        pw[i][j] += g[s * m + j];
                    }
                }
            }
        }
        if k < m {
            let r = ratios(g, &fwd.prediction[t], t)?;
            let filt = &fwd.filtered[t - 1];
            for s in 0..lat.layer(t - 1).len() {
                for i in k..m {
                    let f = filt[s * m + i];
                    if f == 0.0 {
                        continue;
                    }
                    let base = lat.next_index(t - 1, s, i) * m;
                    for j in 0..m {
                        pw[i][j] += f * model.transition[i][j] * r[base + j];
                    }
                }
            }
        }
        out.push(pw);
    }
    Ok(out)
}

/// Forward pass followed by backward smoothing.
pub fn smooth(model: &MrsModel, x: &[f64], truncation: Option<usize>) -> Result<(ForwardResult, SmoothedResult)> {
    let fwd = crate::forward::forward_normalized(model, x, truncation)?;
    let sm = backward_smooth(model, &fwd)?;
    Ok((fwd, sm))
}
