//! Synthetic data from independent- and dependent-regime models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::DependentMrsModel;
use crate::error::{MrsError, Result};
use crate::model::{MrsModel, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub x: Vec<f64>,
    /// Regime index (0-based) at each time.
    pub r: Vec<usize>,
    /// Full latent path of each AR(1) regime, observed or not. Empty for
    /// dependent-regime simulations, where there is no separate latent.
    pub latents: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Stream 0 drives the chain, stream `1 + i` drives regime `i`.
fn stream(seed: u64, component: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component as u64);
    rng
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative total; take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn chain(model: &MrsModel, len: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, 0);
    let mut r = Vec::with_capacity(len);
    let mut cur = draw_index(&mut rng, &model.initial);
    r.push(cur);
    for _ in 1..len {
        cur = draw_index(&mut rng, &model.transition[cur]);
        r.push(cur);
    }
    r
}

fn normal(mean: f64, var: f64) -> Result<Normal<f64>> {
    Normal::new(mean, var.sqrt()).map_err(|e| MrsError::InvalidModel(e.to_string()))
}

fn iid_draw(regime: &Regime, rng: &mut ChaCha8Rng) -> Result<f64> {
    Ok(match *regime {
        Regime::Normal { mu, sigma2 } => normal(mu, sigma2)?.sample(rng),
        Regime::ShiftedGamma { shape, scale, shift, orientation } => {
            let g = Gamma::new(shape, scale).map_err(|e| MrsError::InvalidModel(e.to_string()))?;
            shift + orientation.sign() * g.sample(rng)
        }
        Regime::ShiftedLogNormal { mu, sigma2, shift, orientation } => {
            let l = LogNormal::new(mu, sigma2.sqrt()).map_err(|e| MrsError::InvalidModel(e.to_string()))?;
            shift + orientation.sign() * l.sample(rng)
        }
        Regime::Ar1 { .. } => unreachable!("AR(1) regimes are simulated as latent paths"),
    })
}

/// Simulates `x_0..x_T` with `T = horizon`. Every AR(1) latent starts from
/// its stationary law and evolves at every step; i.i.d. regimes draw fresh
/// values each time they are occupied.
pub fn simulate(model: &MrsModel, horizon: usize, seed: u64) -> Result<SimResult> {
    model.ensure_valid()?;
    let len = horizon + 1;
    let r = chain(model, len, seed);
    let mut latents = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(model.num_regimes());
    for (i, regime) in model.regimes.iter().enumerate() {
        let mut rng = stream(seed, i + 1);
        let col = match *regime {
            Regime::Ar1 { alpha, phi, sigma2 } => {
                let eps = normal(0.0, sigma2)?;
                let mut path = Vec::with_capacity(len);
                let mut b = normal(alpha / (1.0 - phi), sigma2 / (1.0 - phi * phi))?.sample(&mut rng);
                for t in 0..len {
                    if t > 0 {
                        b = alpha + phi * b + eps.sample(&mut rng);
                    }
                    path.push(b);
                }
                latents.push(path.clone());
                path
            }
            _ => {
                // Draw only where occupied, so the stream does not depend on T.
                let mut col = vec![f64::NAN; len];
                for t in 0..len {
                    if r[t] == i {
                        col[t] = iid_draw(regime, &mut rng)?;
                    }
                }
                col
            }
        };
        columns.push(col);
    }
    let x = r.iter().enumerate().map(|(t, &i)| columns[i][t]).collect();
    Ok(SimResult { x, r, latents, seed })
}

/// Simulates the dependent-regime model: AR(1) regimes regress on the
/// previous observation, whichever regime produced it. At `t = 0` they draw
/// from their stationary law.
pub fn simulate_dependent(model: &DependentMrsModel, horizon: usize, seed: u64) -> Result<SimResult> {
    let model = &model.0;
    let len = horizon + 1;
    model.ensure_valid()?;
    let r = chain(model, len, seed);
    let mut rngs: Vec<ChaCha8Rng> = (0..model.num_regimes()).map(|i| stream(seed, i + 1)).collect();
    let mut x: Vec<f64> = Vec::with_capacity(len);
    for (t, &i) in r.iter().enumerate() {
        let rng = &mut rngs[i];
        let v = match model.regimes[i] {
            Regime::Ar1 { alpha, phi, sigma2 } => match x.last() {
                Some(&prev) => alpha + phi * prev + normal(0.0, sigma2)?.sample(rng),
                None => normal(alpha / (1.0 - phi), sigma2 / (1.0 - phi * phi))?.sample(rng),
            },
            ref other => iid_draw(other, rng)?,
        };
        debug_assert_eq!(x.len(), t);
        x.push(v);
    }
    Ok(SimResult {
        x,
        r,
        latents: Vec::new(),
        seed,
    })
}
