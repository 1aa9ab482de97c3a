use crate::error::{MrsError, Result};
use crate::model::MrsModel;

use super::{dependent_log_densities, DependentMrsModel};

/// Regime-level filter output.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonResult {
    /// `P(R_t = i | x_0..x_t)`, indexed `[t][i]`.
    pub filtered: Vec<Vec<f64>>,
    /// `P(R_t = i | x_0..x_{t-1})`; the initial distribution at `t = 0`.
    pub prediction: Vec<Vec<f64>>,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KimResult {
    /// `P(R_t = i | x_0..x_T)`.
    pub smoothed: Vec<Vec<f64>>,
    /// `pairwise[t - 1][i][j] = P(R_{t-1} = i, R_t = j | x_0..x_T)`.
    pub pairwise: Vec<Vec<Vec<f64>>>,
}

/// Regime filter where the conditional log-densities at `t` are produced by
/// `log_density(t, filtered, prediction)` from the results so far, so
/// approximate schemes can feed filter output back into the densities.
pub fn hamilton_with<F>(model: &MrsModel, len: usize, mut log_density: F) -> Result<HamiltonResult>
where
    F: FnMut(usize, &[Vec<f64>], &[Vec<f64>]) -> Result<Vec<f64>>,
{
    let m = model.num_regimes();
    let mut out = HamiltonResult {
        filtered: Vec::with_capacity(len),
        prediction: Vec::with_capacity(len),
        loglik: 0.0,
    };
    let mut pred = model.initial.clone();
    for t in 0..len {
        let logd = log_density(t, &out.filtered, &out.prediction)?;
        let lmax = (0..m)
            .filter(|&i| pred[i] > 0.0)
            .map(|i| logd[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if !lmax.is_finite() {
            return Err(MrsError::ZeroLikelihood { t, partial: None });
        }
        let mut filt: Vec<f64> = (0..m)
            .map(|i| if pred[i] > 0.0 { pred[i] * (logd[i] - lmax).exp() } else { 0.0 })
            .collect();
        let s: f64 = filt.iter().sum();
        filt.iter_mut().for_each(|v| *v /= s);
        out.loglik += s.ln() + lmax;
        let next: Vec<f64> = (0..m)
            .map(|j| (0..m).map(|i| filt[i] * model.transition[i][j]).sum())
            .collect();
        out.prediction.push(std::mem::replace(&mut pred, next));
        out.filtered.push(filt);
    }
    Ok(out)
}

/// Forward filter for the dependent-regime model.
pub fn hamilton_forward(model: &DependentMrsModel, x: &[f64]) -> Result<HamiltonResult> {
    crate::forward::check_inputs(&model.0, x, None)?;
    hamilton_with(&model.0, x.len(), |t, _, _| Ok(dependent_log_densities(&model.0, x, t)))
}

/// Backward pass from a regime filter.
pub fn kim_backward(model: &MrsModel, fwd: &HamiltonResult) -> Result<KimResult> {
    let m = model.num_regimes();
    let len = fwd.filtered.len();
    let mut smoothed = vec![Vec::new(); len];
    let mut pairwise = vec![vec![vec![0.0; m]; m]; len.saturating_sub(1)];
    smoothed[len - 1] = fwd.filtered[len - 1].clone();
    for t in (0..len - 1).rev() {
        let ratio: Vec<f64> = (0..m)
            .map(|j| {
                let g = smoothed[t + 1][j];
                let p = fwd.prediction[t + 1][j];
                if g == 0.0 {
                    Ok(0.0)
                } else if p > 0.0 {
                    Ok(g / p)
                } else {
                    Err(MrsError::Inconsistent(format!(
                        "smoothed mass {g} on regime {} with zero prediction at t = {}",
                        j + 1,
                        t + 1
                    )))
                }
            })
            .collect::<Result<_>>()?;
        let mut sm = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                let v = fwd.filtered[t][i] * model.transition[i][j] * ratio[j];
                pairwise[t][i][j] = v;
                sm[i] += v;
            }
        }
        smoothed[t] = sm;
    }
    Ok(KimResult { smoothed, pairwise })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::normal_pdf;
    use crate::model::{presets, Regime};
    use crate::oracle::brute_dependent;

    fn example_dependent() -> DependentMrsModel {
        DependentMrsModel(
            MrsModel::new(
                vec![
                    Regime::Ar1 { alpha: 0.0, phi: 0.6, sigma2: 1.0 },
                    Regime::Ar1 { alpha: 1.0, phi: 0.9, sigma2: 1.0 },
                ],
                vec![vec![0.9, 0.1], vec![0.1, 0.9]],
                vec![0.5, 0.5],
            )
            .unwrap(),
        )
    }

    #[test]
    fn matches_dependent_enumeration() {
        let x = [0.3, -0.4, 1.2, 2.5, 3.1, 2.2, 0.4, -0.1];
        for model in [example_dependent(), DependentMrsModel(presets::model1())] {
            let f = hamilton_forward(&model, &x).unwrap();
            let k = kim_backward(&model.0, &f).unwrap();
            let o = brute_dependent(&model, &x).unwrap();
            assert!((f.loglik - o.loglik).abs() < 1e-10);
            for t in 0..x.len() {
                for i in 0..2 {
                    assert!((k.smoothed[t][i] - o.regime_posterior[t][i]).abs() < 1e-10);
                }
            }
            for t in 1..x.len() {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((k.pairwise[t - 1][i][j] - o.pairwise[t - 1][i][j]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn iid_only_matches_plain_hmm() {
        let model = DependentMrsModel(
            MrsModel::new(
                vec![Regime::Normal { mu: 0.0, sigma2: 1.0 }, Regime::Normal { mu: 2.0, sigma2: 0.5 }],
                vec![vec![0.7, 0.3], vec![0.4, 0.6]],
                vec![0.2, 0.8],
            )
            .unwrap(),
        );
        let x = [0.1, 2.2, 1.9, -0.3, 0.5];
        // Unscaled textbook recursion.
        let b = |i: usize, v: f64| if i == 0 { normal_pdf(v, 0.0, 1.0) } else { normal_pdf(v, 2.0, 0.5) };
        let mut a: Vec<f64> = (0..2).map(|i| model.0.initial[i] * b(i, x[0])).collect();
        for &v in &x[1..] {
            a = (0..2)
                .map(|j| (0..2).map(|i| a[i] * model.0.transition[i][j]).sum::<f64>() * b(j, v))
                .collect();
        }
        let f = hamilton_forward(&model, &x).unwrap();
        assert!((f.loglik - (a[0] + a[1]).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_regime_is_product_of_conditionals() {
        let model = DependentMrsModel(
            MrsModel::new(vec![Regime::Ar1 { alpha: 0.2, phi: 0.5, sigma2: 2.0 }], vec![vec![1.0]], vec![1.0]).unwrap(),
        );
        let x = [0.5, 0.1, 1.3];
        let expected = crate::densities::stationary_log_density(0.5, &model.0.regimes[0])
            + crate::densities::normal_log_pdf(0.1, 0.2 + 0.25, 2.0)
            + crate::densities::normal_log_pdf(1.3, 0.2 + 0.05, 2.0);
        assert!((hamilton_forward(&model, &x).unwrap().loglik - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_chain_and_single_point() {
        let mut model = example_dependent();
        model.0.transition = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        model.0.initial = vec![1.0, 0.0];
        let f = hamilton_forward(&model, &[0.1, 0.2, 0.3]).unwrap();
        let k = kim_backward(&model.0, &f).unwrap();
        assert!(k.smoothed.iter().all(|s| s == &vec![1.0, 0.0]));
        let f = hamilton_forward(&model, &[0.1]).unwrap();
        let k = kim_backward(&model.0, &f).unwrap();
        assert_eq!(k.smoothed[0], f.filtered[0]);
        assert!(k.pairwise.is_empty());
    }
}
