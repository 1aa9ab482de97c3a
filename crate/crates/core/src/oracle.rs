//! Reference results by enumerating every regime sequence.
//!
//! Exponential in `T`; only for verifying the recursive algorithms on small
//! instances.

use std::collections::BTreeMap;

use crate::baselines::DependentMrsModel;
use crate::densities;
use crate::error::{MrsError, Result};
use crate::forward::check_inputs;
use crate::model::{MrsModel, Regime};

/// Upper bound on the number of enumerated sequences.
pub const MAX_SEQUENCES: u64 = 10_000_000;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub likelihood: f64,
    pub loglik: f64,
    pub regime_posterior: Vec<Vec<f64>>,
    /// `pairwise[t - 1][i][j] = P(R_{t-1} = i, R_t = j | x)`.
    pub pairwise: Vec<Vec<Vec<f64>>>,
    /// Posterior of rendered (counters, regime) per time; independent-regime
    /// oracle only.
    pub state_posterior: Vec<BTreeMap<(Vec<usize>, usize), f64>>,
}

fn sequence_count(m: usize, len: usize) -> Result<u64> {
    let mut n: u64 = 1;
    for _ in 0..len {
        n = n.saturating_mul(m as u64);
        if n > MAX_SEQUENCES {
            return Err(MrsError::TooLarge(format!(
                "{m}^{len} regime sequences exceed the oracle limit of {MAX_SEQUENCES}"
            )));
        }
    }
    Ok(n)
}

/// Joint log weight of a regime sequence and the data, given a conditional
/// log-density for each step.
fn enumerate<F>(m: usize, len: usize, model: &MrsModel, mut log_density: F) -> Vec<f64>
where
    F: FnMut(&[usize], usize) -> f64,
{
    let total = m.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    let mut seq = vec![0usize; len];
    for idx in 0..total {
        decode(idx, m, &mut seq);
        let mut lw = model.initial[seq[0]].ln();
        for t in 0..len {
            if t > 0 {
                lw += model.transition[seq[t - 1]][seq[t]].ln();
            }
            if lw == f64::NEG_INFINITY {
                break;
            }
            lw += log_density(&seq, t);
        }
        out.push(lw);
    }
    out
}

fn decode(mut idx: usize, m: usize, seq: &mut [usize]) {
    for slot in seq.iter_mut().rev() {
        *slot = idx % m;
        idx /= m;
    }
}

/// Rendered counters at time `t` of a regime sequence.
fn counters_at(seq: &[usize], t: usize, k: usize, truncation: Option<usize>) -> Vec<usize> {
    (0..k)
        .map(|i| {
            let lag = (0..t).rev().find(|&s| seq[s] == i).map_or(t + 1, |s| t - s);
            truncation.map_or(lag, |d| lag.min(d))
        })
        .collect()
}

fn assemble(
    m: usize,
    len: usize,
    log_weights: &[f64],
    mut state_of: impl FnMut(&[usize], usize) -> Option<Vec<usize>>,
) -> Result<OracleResult> {
    let lmax = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() {
        return Err(MrsError::ZeroLikelihood { t: 0, partial: None });
    }
    let mut total = 0.0;
    let mut regime = vec![vec![0.0; m]; len];
    let mut pairwise = vec![vec![vec![0.0; m]; m]; len - 1];
    let mut states: Vec<BTreeMap<(Vec<usize>, usize), f64>> = vec![BTreeMap::new(); len];
    let mut seq = vec![0usize; len];
    for (idx, &lw) in log_weights.iter().enumerate() {
        let w = (lw - lmax).exp();
        if w == 0.0 {
            continue;
        }
        decode(idx, m, &mut seq);
        total += w;
        for t in 0..len {
            regime[t][seq[t]] += w;
            if t > 0 {
                pairwise[t - 1][seq[t - 1]][seq[t]] += w;
            }
            if let Some(c) = state_of(&seq, t) {
                *states[t].entry((c, seq[t])).or_insert(0.0) += w;
            }
        }
    }
    let inv = 1.0 / total;
    regime.iter_mut().flatten().for_each(|v| *v *= inv);
    pairwise.iter_mut().flatten().flatten().for_each(|v| *v *= inv);
    states.iter_mut().flat_map(|s| s.values_mut()).for_each(|v| *v *= inv);
    let loglik = lmax + total.ln();
    Ok(OracleResult {
        likelihood: loglik.exp(),
        loglik,
        regime_posterior: regime,
        pairwise,
        state_posterior: states,
    })
}

/// Brute-force posterior for an independent-regime model. Each AR(1) density
/// conditions on the regime's own most recent observation; with a truncation
/// cap, lags of `D` or more use the stationary density.
pub fn brute_likelihood(model: &MrsModel, x: &[f64], truncation: Option<usize>) -> Result<OracleResult> {
    check_inputs(model, x, truncation)?;
    let m = model.num_regimes();
    let k = model.num_ar();
    let len = x.len();
    sequence_count(m, len)?;
    let log_weights = enumerate(m, len, model, |seq, t| {
        let j = seq[t];
        match model.regimes[j] {
            Regime::Ar1 { alpha, phi, sigma2 } => {
                let last = (0..t).rev().find(|&s| seq[s] == j);
                match last {
                    Some(s) if truncation.map_or(true, |d| t - s < d) => {
                        densities::ar1_mstep_log_density(x[t], x[s], t - s, alpha, phi, sigma2)
                    }
                    _ => densities::stationary_log_density(x[t], &model.regimes[j]),
                }
            }
            ref r => densities::iid_log_density(x[t], r),
        }
    });
    assemble(m, len, &log_weights, |seq, t| Some(counters_at(seq, t, k, truncation)))
}

/// Brute-force posterior for a dependent-regime model: every AR(1) regime
/// conditions on the immediately preceding observation.
pub fn brute_dependent(model: &DependentMrsModel, x: &[f64]) -> Result<OracleResult> {
    let model = &model.0;
    check_inputs(model, x, None)?;
    let m = model.num_regimes();
    let len = x.len();
    sequence_count(m, len)?;
    let log_weights = enumerate(m, len, model, |seq, t| {
        let r = &model.regimes[seq[t]];
        match *r {
            Regime::Ar1 { alpha, phi, sigma2 } if t > 0 => {
                densities::normal_log_pdf(x[t], alpha + phi * x[t - 1], sigma2)
            }
            _ => densities::stationary_log_density(x[t], r),
        }
    });
    assemble(m, len, &log_weights, |_, _| None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn single_regime_is_product() {
        let model = MrsModel::new(vec![Regime::Normal { mu: 1.0, sigma2: 0.5 }], vec![vec![1.0]], vec![1.0]).unwrap();
        let x = [0.2, 1.4, 0.9];
        let expected: f64 = x.iter().map(|&v| densities::normal_log_pdf(v, 1.0, 0.5)).sum();
        let o = brute_likelihood(&model, &x, None).unwrap();
        assert!((o.loglik - expected).abs() < 1e-13);
    }

    #[test]
    fn one_observation_uses_stationary_initials() {
        let model = presets::model1();
        let x = [0.7];
        let expected = 0.5 * densities::stationary_density(0.7, &model.regimes[0])
            + 0.5 * densities::stationary_density(0.7, &model.regimes[1]);
        let o = brute_likelihood(&model, &x, None).unwrap();
        assert!((o.likelihood - expected).abs() < 1e-15);
        let s: f64 = o.state_posterior[0].values().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let x = vec![0.0; 30];
        assert!(matches!(brute_likelihood(&presets::model1(), &x, None), Err(MrsError::TooLarge(_))));
    }
}
