//! M-step updates from E-step sufficient statistics.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::backward::SmoothedResult;
use crate::densities::{mean_factor, variance_factor};
use crate::error::{MrsError, Result};
use crate::model::{MrsModel, Orientation};
use crate::optimize::{bisect, maximize_scalar};

/// Search interval half-width for the AR coefficient.
pub const PHI_BOUND: f64 = 1.0 - 1e-6;
const PHI_GRID: usize = 64;
const PHI_TOL: f64 = 1e-10;

/// Weighted moments of the pairs `(x_t, x_{t-m})` for one lag bin.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LagBin {
    pub w: f64,
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl LagBin {
    #[inline]
    pub fn add(&mut self, w: f64, x: f64, y: f64) {
        self.w += w;
        self.sx += w * x;
        self.sy += w * y;
        self.sxx += w * x * x;
        self.sxy += w * x * y;
        self.syy += w * y * y;
    }
}

/// E-step statistics of one AR(1) regime, binned by lag. Bin 0 holds the
/// stationary case (never visited, or a lag at or beyond the truncation cap)
/// and only uses `w`, `sx`, `sxx`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArStats {
    pub bins: Vec<LagBin>,
}

impl ArStats {
    /// Accumulates `(t, lag, weight)` triples; `lag = None` is the stationary case.
    pub fn from_weights<I>(x: &[f64], weights: I) -> Self
    where
        I: IntoIterator<Item = (usize, Option<usize>, f64)>,
    {
        let mut s = ArStats::default();
        for (t, lag, w) in weights {
            s.add(x, t, lag, w);
        }
        s
    }

    pub fn add(&mut self, x: &[f64], t: usize, lag: Option<usize>, w: f64) {
        let slot = lag.unwrap_or(0);
        if self.bins.len() <= slot {
            self.bins.resize(slot + 1, LagBin::default());
        }
        let y = lag.map_or(0.0, |m| x[t - m]);
        self.bins[slot].add(w, x[t], y);
    }

    pub fn total_weight(&self) -> f64 {
        self.bins.iter().map(|b| b.w).sum()
    }

    /// Per-bin `(phi^m, a_m, v_m)`, with the stationary limits in bin 0.
    fn coefficients(&self, phi: f64) -> impl Iterator<Item = (&LagBin, f64, f64, f64)> + '_ {
        let a_inf = 1.0 / (1.0 - phi);
        let v_inf = 1.0 / (1.0 - phi * phi);
        let mut pow = 1.0;
        self.bins.iter().enumerate().map(move |(m, b)| {
            if m == 0 {
                (b, 0.0, a_inf, v_inf)
            } else {
                pow *= phi;
                // Same closed forms as the densities, so the update and the
                // E-step agree on what lag m means.
                (b, pow, mean_factor(phi, m), variance_factor(phi, m))
            }
        })
    }

    /// Profile of the expected complete-data loglik over `phi`: `alpha` and
    /// `sigma2` at their conditional maximizers (`sigma2` floored). Returns
    /// `(objective, alpha, sigma2)`, dropping the `2 pi` constant.
    pub fn profile(&self, phi: f64, floor: f64) -> (f64, f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for (b, c, a, v) in self.coefficients(phi) {
            if b.w == 0.0 {
                continue;
            }
            num += a / v * (b.sx - c * b.sy);
            den += a * a / v * b.w;
        }
        let alpha = num / den;
        let (mut ss, mut log_v, mut w) = (0.0, 0.0, 0.0);
        for (b, c, a, v) in self.coefficients(phi) {
            if b.w == 0.0 {
                continue;
            }
            let mu = alpha * a;
            // sum w (x - mu - c y)^2 expanded in the moments.
            let q = b.sxx + mu * mu * b.w + c * c * b.syy - 2.0 * mu * b.sx - 2.0 * c * b.sxy
                + 2.0 * mu * c * b.sy;
            ss += q.max(0.0) / v;
            log_v += b.w * v.ln();
            w += b.w;
        }
        let sigma2 = (ss / w).max(floor);
        let obj = -0.5 * log_v - 0.5 * w * sigma2.ln() - 0.5 * ss / sigma2;
        (obj, alpha, sigma2)
    }
}

impl ArStats {
    /// Derivative of [`ArStats::profile`] in `phi`. By the envelope argument
    /// only the explicit `phi` dependence contributes.
    pub fn profile_derivative(&self, phi: f64, floor: f64) -> f64 {
        let (_, alpha, sigma2) = self.profile(phi, floor);
        let one_m = 1.0 - phi;
        let one_m2 = 1.0 - phi * phi;
        let mut d = 0.0;
        for (m, b) in self.bins.iter().enumerate() {
            if b.w == 0.0 {
                continue;
            }
            let (a, da, v, dv, c, dc) = if m == 0 {
                (1.0 / one_m, 1.0 / (one_m * one_m), 1.0 / one_m2, 2.0 * phi / (one_m2 * one_m2), 0.0, 0.0)
            } else {
                let pm = phi.powi(m as i32);
                let pm1 = phi.powi(m as i32 - 1);
                let p2m = pm * pm;
                let a = (1.0 - pm) / one_m;
                let da = ((1.0 - pm) - m as f64 * pm1 * one_m) / (one_m * one_m);
                let v = (1.0 - p2m) / one_m2;
                let dv = (2.0 * phi * (1.0 - p2m) - 2.0 * m as f64 * pm1 * pm * one_m2) / (one_m2 * one_m2);
                (a, da, v, dv, pm, m as f64 * pm1)
            };
            let mu = alpha * a;
            let q = (b.sxx + mu * mu * b.w + c * c * b.syy - 2.0 * mu * b.sx - 2.0 * c * b.sxy + 2.0 * mu * c * b.sy)
                .max(0.0);
            let dq = -2.0 * (alpha * da * (b.sx - mu * b.w - c * b.sy) + dc * (b.sxy - mu * b.sy - c * b.syy));
            d += -0.5 * b.w * dv / v + q * dv / (2.0 * sigma2 * v * v) - dq / (2.0 * sigma2 * v);
        }
        d
    }

    /// Sharpens an interior maximizer by bisecting the derivative, which
    /// resolves `phi` well below the square-root-of-epsilon limit of
    /// comparing objective values.
    fn polish(&self, phi: f64, floor: f64) -> f64 {
        const H: f64 = 1e-6;
        let lo = (phi - H).max(-PHI_BOUND);
        let hi = (phi + H).min(PHI_BOUND);
        let (dl, dh) = (self.profile_derivative(lo, floor), self.profile_derivative(hi, floor));
        if !(dl > 0.0 && dh < 0.0) {
            return phi;
        }
        bisect(|p| self.profile_derivative(p, floor), lo, hi, 1e-15, 200).unwrap_or(phi)
    }
}

/// AR(1) update: `phi` maximizes the profile on `(-1, 1)`; `alpha` and
/// `sigma2` follow in closed form. If `current_phi` scores at least as well
/// it is kept, so the update never lowers the expected loglik.
pub fn m_step_ar1(stats: &ArStats, floor: f64, current_phi: Option<f64>) -> Result<(f64, f64, f64)> {
    if !(stats.total_weight() > 0.0) {
        return Err(MrsError::DegenerateRegime { regime: 0 });
    }
    let (phi, mut best) = maximize_scalar(|p| stats.profile(p, floor).0, -PHI_BOUND, PHI_BOUND, PHI_GRID, PHI_TOL)?;
    let polished = stats.polish(phi, floor);
    let phi = if polished != phi {
        let v = stats.profile(polished, floor).0;
        // Equal up to rounding near a flat maximum.
        if v >= best - 1e-12 * (1.0 + best.abs()) {
            best = best.max(v);
            polished
        } else {
            phi
        }
    } else {
        phi
    };
    let phi = match current_phi {
        Some(p) if p.abs() <= PHI_BOUND && stats.profile(p, floor).0 > best => p,
        _ => phi,
    };
    let (_, alpha, sigma2) = stats.profile(phi, floor);
    Ok((alpha, phi, sigma2))
}

fn weighted_moments(w: &[f64], y: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mean = w.iter().zip(y.clone()).map(|(w, y)| w * y).sum::<f64>() / total;
    let var = w.iter().zip(y).map(|(w, y)| w * (y - mean).powi(2)).sum::<f64>() / total;
    Some((mean, var))
}

/// Weighted mean and (floored) weighted variance of `x`.
pub fn m_step_normal(w: &[f64], x: &[f64], floor: f64) -> Result<(f64, f64)> {
    let (mu, var) = weighted_moments(w, x.iter().copied()).ok_or(MrsError::DegenerateRegime { regime: 0 })?;
    Ok((mu, var.max(floor)))
}

/// `orientation.excess(x_t, shift)` for every positively weighted `t`.
fn excesses(w: &[f64], x: &[f64], shift: f64, orientation: Orientation) -> Result<Vec<f64>> {
    w.iter()
        .zip(x)
        .enumerate()
        .map(|(t, (&w, &x))| {
            let y = orientation.excess(x, shift);
            if w > 0.0 && y <= 0.0 {
                Err(MrsError::SupportViolation { regime: 0, t })
            } else {
                Ok(y)
            }
        })
        .collect()
}

/// Weighted mean and (floored) variance of `log(excess)`.
pub fn m_step_lognormal(w: &[f64], x: &[f64], shift: f64, orientation: Orientation, floor: f64) -> Result<(f64, f64)> {
    let y = excesses(w, x, shift, orientation)?;
    let logs = y.iter().map(|&v| if v > 0.0 { v.ln() } else { 0.0 });
    let (mu, var) = weighted_moments(w, logs).ok_or(MrsError::DegenerateRegime { regime: 0 })?;
    Ok((mu, var.max(floor)))
}

/// Largest shape the Gamma search will consider.
pub const GAMMA_SHAPE_MAX: f64 = 1e8;
const GAMMA_SHAPE_MIN: f64 = 1e-8;

/// Profile of the expected Gamma loglik over the shape, per unit weight,
/// with the scale at its conditional maximizer `mean(y) / shape`.
pub fn gamma_profile(shape: f64, mean_y: f64, mean_log_y: f64) -> f64 {
    let scale = mean_y / shape;
    -shape * scale.ln() - ln_gamma(shape) + (shape - 1.0) * mean_log_y - shape
}

/// Gamma update: the shape solves `ln(shape) - digamma(shape) = ln(mean y) - mean(ln y)`
/// and the scale is `mean(y) / shape`. Returns `(shape, scale)`.
pub fn m_step_gamma(w: &[f64], x: &[f64], shift: f64, orientation: Orientation) -> Result<(f64, f64)> {
    let y = excesses(w, x, shift, orientation)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(MrsError::DegenerateRegime { regime: 0 });
    }
    let mean_y = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / total;
    let mean_log_y = w
        .iter()
        .zip(&y)
        .map(|(&w, &y)| if w > 0.0 { w * y.ln() } else { 0.0 })
        .sum::<f64>()
        / total;
    let target = mean_y.ln() - mean_log_y;
    let foc = |log_shape: f64| {
        let s = log_shape.exp();
        s.ln() - digamma(s) - target
    };
    if foc(GAMMA_SHAPE_MAX.ln()) >= 0.0 {
        return Err(MrsError::SearchFailed(format!(
            "Gamma shape exceeds {GAMMA_SHAPE_MAX:e}: weighted data are (nearly) a point mass \
             (log-mean minus mean-log = {target:e})"
        )));
    }
    let log_shape = bisect(foc, GAMMA_SHAPE_MIN.ln(), GAMMA_SHAPE_MAX.ln(), 1e-13, 200)?;
    let shape = log_shape.exp();
    Ok((shape, mean_y / shape))
}

/// Maximizes `sum_j counts[j] ln p_j` over the simplex with `p_j >= lower`.
/// With `lower = 0` this is `counts / sum(counts)`.
pub fn constrained_row(counts: &[f64], lower: f64) -> Vec<f64> {
    let m = counts.len();
    let mut clamped = vec![false; m];
    loop {
        let free_mass = 1.0 - lower * clamped.iter().filter(|&&c| c).count() as f64;
        let free_total: f64 = counts.iter().zip(&clamped).filter(|(_, &c)| !c).map(|(n, _)| n).sum();
        let mut p: Vec<f64> = counts
            .iter()
            .zip(&clamped)
            .map(|(&n, &c)| {
                if c {
                    lower
                } else if free_total > 0.0 {
                    free_mass * n / free_total
                } else {
                    0.0
                }
            })
            .collect();
        if free_total <= 0.0 {
            // Only clamped entries carry no weight: spread the free mass evenly.
            let free = clamped.iter().filter(|&&c| !c).count();
            for (v, &c) in p.iter_mut().zip(&clamped) {
                if !c {
                    *v = free_mass / free as f64;
                }
            }
        }
        let mut changed = false;
        for j in 0..m {
            if !clamped[j] && p[j] < lower {
                clamped[j] = true;
                changed = true;
            }
        }
        if !changed {
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            return p;
        }
    }
}

/// Expected transition counts and per-regime totals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStats {
    /// `sum_t P(R_{t-1} = i, R_t = j | x)`.
    pub counts: Vec<Vec<f64>>,
    /// `sum_{t=1}^{T} P(R_{t-1} = i | x)`.
    pub totals: Vec<f64>,
    /// `P(R_0 = i | x)`.
    pub initial: Vec<f64>,
}

impl TransitionStats {
    pub fn from_smoothed(s: &SmoothedResult) -> Self {
        Self::from_marginals(&s.regime_marginal, &s.pairwise)
    }

    /// From per-time regime marginals `[t][i]` and pairwise posteriors
    /// `[t - 1][i][j]`.
    pub fn from_marginals(regime_marginal: &[Vec<f64>], pairwise: &[Vec<Vec<f64>>]) -> Self {
        let m = regime_marginal[0].len();
        let mut counts = vec![vec![0.0; m]; m];
        for pw in pairwise {
            for i in 0..m {
                for j in 0..m {
                    counts[i][j] += pw[i][j];
                }
            }
        }
        let mut totals = vec![0.0; m];
        for rm in &regime_marginal[..regime_marginal.len() - 1] {
            for i in 0..m {
                totals[i] += rm[i];
            }
        }
        Self {
            counts,
            totals,
            initial: regime_marginal[0].clone(),
        }
    }
}

/// Transition and initial-distribution update. Rows with no expected visits
/// keep their current values and are reported in the second return value.
pub fn m_step_transitions(
    stats: &TransitionStats,
    current: &MrsModel,
    lower: f64,
    freeze_initial: bool,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
    let mut frozen = Vec::new();
    let transition = stats
        .counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if stats.totals[i] > 0.0 && row.iter().sum::<f64>() > 0.0 {
                constrained_row(row, lower)
            } else {
                frozen.push(i);
                current.transition[i].clone()
            }
        })
        .collect();
    let initial = if freeze_initial {
        current.initial.clone()
    } else {
        let s: f64 = stats.initial.iter().sum();
        stats.initial.iter().map(|v| v / s).collect()
    };
    (transition, initial, frozen)
}
