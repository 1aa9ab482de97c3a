use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{em_fit, FitReport, RestartResult};
use crate::baselines::{dependent_em, emlike_fit, DependentMrsModel};
use crate::config::EmConfig;
use crate::error::{MrsError, Result};
use crate::model::{MrsModel, Regime};

/// Loglik differences below this count as ties between restarts.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Em,
    Emlike,
    DependentEm,
}

impl Algorithm {
    pub fn fit(self, model0: &MrsModel, x: &[f64], config: &EmConfig) -> Result<FitReport> {
        match self {
            Algorithm::Em => em_fit(model0, x, config),
            Algorithm::Emlike => emlike_fit(model0, x, config),
            Algorithm::DependentEm => dependent_em(&DependentMrsModel(model0.clone()), x, config),
        }
    }
}

/// Source of starting parameters for restart `i`.
pub trait StartSampler: Sync {
    fn sample(&self, restart: usize, rng: &mut ChaCha8Rng) -> MrsModel;
}

/// Always starts from the same parameters.
#[derive(Debug, Clone)]
pub struct FixedStart(pub MrsModel);

impl StartSampler for FixedStart {
    fn sample(&self, _: usize, _: &mut ChaCha8Rng) -> MrsModel {
        self.0.clone()
    }
}

/// Independent uniform draws around a template model: `alpha ~ U(-1, 1)`,
/// `phi ~ U(-1, 1)`, variances `~ U(0, 4)`, means and Gamma shapes
/// `~ U(0, 8)`, self-transition probabilities `~ U(0, 1)`. Shifts and the
/// initial distribution come from the template.
#[derive(Debug, Clone)]
pub struct UniformStartSampler {
    pub template: MrsModel,
    /// Use the template itself for restart 0.
    pub template_first: bool,
}

impl StartSampler for UniformStartSampler {
    fn sample(&self, restart: usize, rng: &mut ChaCha8Rng) -> MrsModel {
        if restart == 0 && self.template_first {
            return self.template.clone();
        }
        // Open interval (0, b) so variances and shapes stay valid.
        let mut pos = |b: f64| loop {
            let v = rng.random::<f64>() * b;
            if v > 0.0 {
                break v;
            }
        };
        let mut regimes = self.template.regimes.clone();
        for r in &mut regimes {
            *r = match *r {
                Regime::Ar1 { .. } => Regime::Ar1 {
                    alpha: 2.0 * pos(1.0) - 1.0,
                    phi: 2.0 * pos(1.0) - 1.0,
                    sigma2: pos(4.0),
                },
                Regime::Normal { .. } => Regime::Normal {
                    mu: pos(8.0),
                    sigma2: pos(4.0),
                },
                Regime::ShiftedGamma { shift, orientation, .. } => Regime::ShiftedGamma {
                    shape: pos(8.0),
                    scale: pos(4.0),
                    shift,
                    orientation,
                },
                Regime::ShiftedLogNormal { shift, orientation, .. } => Regime::ShiftedLogNormal {
                    mu: pos(8.0),
                    sigma2: pos(4.0),
                    shift,
                    orientation,
                },
            };
        }
        let m = regimes.len();
        let transition = (0..m)
            .map(|i| {
                if m == 1 {
                    return vec![1.0];
                }
                let stay = pos(1.0);
                let others: Vec<f64> = (0..m - 1).map(|_| pos(1.0)).collect();
                let total: f64 = others.iter().sum();
                let mut row = Vec::with_capacity(m);
                let mut it = others.iter();
                for j in 0..m {
                    row.push(if j == i {
                        stay
                    } else {
                        (1.0 - stay) * it.next().expect("m - 1 entries") / total
                    });
                }
                let s: f64 = row.iter().sum();
                row.iter().map(|v| v / s).collect()
            })
            .collect();
        MrsModel {
            regimes,
            transition,
            initial: self.template.initial.clone(),
        }
    }
}

/// Seed of restart `i`, derived from the master seed by a SplitMix64 step.
pub fn restart_seed(master: u64, restart: usize) -> u64 {
    let mut z = master.wrapping_add((restart as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `config.restarts` fits in parallel from sampled starting points and
/// keeps the one with the highest loglik (lowest index among ties). With
/// several AR(1) regimes, terminating points are relabelled so that `phi`
/// decreases along the AR block.
pub fn multistart(x: &[f64], sampler: &dyn StartSampler, config: &EmConfig, algorithm: Algorithm) -> Result<FitReport> {
    if config.restarts == 0 {
        return Err(MrsError::InvalidConfig("restarts must be >= 1".into()));
    }
    let runs: Vec<(u64, MrsModel, Result<FitReport>)> = (0..config.restarts)
        .into_par_iter()
        .map(|i| {
            let seed = restart_seed(config.seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = sampler.sample(i, &mut rng);
            let cfg = EmConfig { seed, ..config.clone() };
            let fit = algorithm.fit(&start, x, &cfg).map(|mut r| {
                if r.theta_hat.num_ar() >= 2 {
                    r.theta_hat = r.theta_hat.with_ar_ordered_by_phi();
                }
                r
            });
            (seed, start, fit)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, (_, _, fit)) in runs.iter().enumerate() {
        if let Ok(r) = fit {
            if best.map_or(true, |(_, ll)| r.loglik > ll + TIE_TOL) {
                best = Some((i, r.loglik));
            }
        }
    }
    let per_restart: Vec<RestartResult> = runs
        .iter()
        .map(|(seed, start, fit)| match fit {
            Ok(r) => RestartResult {
                seed: *seed,
                start: start.clone(),
                theta: Some(r.theta_hat.clone()),
                loglik: Some(r.loglik),
                iterations: r.iterations,
                termination_reason: Some(r.termination_reason),
                error: None,
            },
            Err(e) => RestartResult {
                seed: *seed,
                start: start.clone(),
                theta: None,
                loglik: None,
                iterations: 0,
                termination_reason: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let Some((best_idx, _)) = best else {
        return Err(MrsError::AllRestartsFailed(config.restarts));
    };
    let mut report = runs
        .into_iter()
        .nth(best_idx)
        .and_then(|(_, _, r)| r.ok())
        .expect("best restart succeeded");
    report.per_restart = per_restart;
    report.best_restart = best_idx;
    Ok(report)
}
