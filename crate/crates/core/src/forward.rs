//! Forward recursions over the augmented state space.

use crate::densities::{self, ArLagTable};
use crate::error::{MrsError, Result};
use crate::model::{MrsModel, Regime};
use crate::state_space::{self, Lattice, FAR};

/// Normalized forward pass. Per-time vectors are laid out `state * M + regime`
/// with states ordered as in `lattice.layer(t)`.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub lattice: Lattice,
    pub num_regimes: usize,
    /// `P(H_t = (n, i) | x_0..x_t)`.
    pub filtered: Vec<Vec<f64>>,
    /// `P(H_t = (n, i) | x_0..x_{t-1})`; at `t = 0` the initial distribution.
    pub prediction: Vec<Vec<f64>>,
    /// Log of the one-step predictive density of `x_t`.
    pub log_normalizer: Vec<f64>,
    pub loglik: f64,
    pub regime_filtered: Vec<Vec<f64>>,
}

impl ForwardResult {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    /// Filtered probability of rendered counters and regime at time `t`.
    pub fn filtered_at(&self, t: usize, counters: &[usize], regime: usize) -> f64 {
        self.lattice
            .index_of(t, counters)
            .map_or(0.0, |s| self.filtered[t][s * self.num_regimes + regime])
    }
}

/// Log-densities of `x_t` for every (regime, lag) combination reachable at
/// time `t`. AR entries are indexed by packed lag, with slot 0 for [`FAR`].
pub(crate) struct DensityCache {
    tables: Vec<ArLagTable>,
    iid: Vec<Regime>,
    pub(crate) ar: Vec<Vec<f64>>,
    pub(crate) other: Vec<f64>,
}

impl DensityCache {
    pub(crate) fn new(model: &MrsModel, max_lag: usize) -> Self {
        let k = model.num_ar();
        Self {
            tables: model.regimes[..k]
                .iter()
                .map(|r| ArLagTable::from_regime(r, max_lag).expect("leading regimes are AR(1)"))
                .collect(),
            iid: model.regimes[k..].to_vec(),
            ar: vec![Vec::new(); k],
            other: vec![0.0; model.num_regimes() - k],
        }
    }

    pub(crate) fn fill(&mut self, x: &[f64], t: usize, max_finite_lag: usize) {
        let xt = x[t];
        for (table, out) in self.tables.iter().zip(&mut self.ar) {
            out.clear();
            out.push(table.stationary_log_density(xt));
            for m in 1..=max_finite_lag {
                out.push(table.log_density(xt, x[t - m], m));
            }
        }
        for (r, out) in self.iid.iter().zip(&mut self.other) {
            *out = densities::iid_log_density(xt, r);
        }
    }

    /// Replaces every cached log-density `l` by `exp(l - shift)`.
    pub(crate) fn exponentiate(&mut self, shift: f64) {
        for v in self.ar.iter_mut().flatten().chain(self.other.iter_mut()) {
            *v = (*v - shift).exp();
        }
    }

    #[inline]
    pub(crate) fn lookup(&self, lattice: &Lattice, t: usize, s: usize, j: usize) -> f64 {
        if j < self.ar.len() {
            self.ar[j][lag_slot(lattice.lag(t, s, j))]
        } else {
            self.other[j - self.ar.len()]
        }
    }
}

#[inline]
pub(crate) fn lag_slot(lag: u16) -> usize {
    if lag == FAR {
        0
    } else {
        usize::from(lag)
    }
}

pub(crate) fn check_inputs(model: &MrsModel, x: &[f64], truncation: Option<usize>) -> Result<()> {
    model.ensure_valid()?;
    if x.is_empty() {
        return Err(MrsError::InvalidInput("observation sequence is empty".into()));
    }
    if let Some(t) = x.iter().position(|v| !v.is_finite()) {
        return Err(MrsError::InvalidInput(format!("observation {t} is not finite")));
    }
    if let Some(d) = truncation {
        if d <= model.num_ar() {
            return Err(MrsError::InvalidConfig(format!(
                "truncation {d} must exceed the number of AR regimes {}",
                model.num_ar()
            )));
        }
    }
    Ok(())
}

/// Normalized forward recursion. With `truncation = Some(D)` lags of `D` or
/// more share the stationary density; `D > T` reproduces the exact pass.
pub fn forward_normalized(model: &MrsModel, x: &[f64], truncation: Option<usize>) -> Result<ForwardResult> {
    check_inputs(model, x, truncation)?;
    let lattice = Lattice::build(model.num_ar(), model.num_regimes(), x.len() - 1, truncation)?;
    forward_on_lattice(model, x, lattice)
}

pub(crate) fn forward_on_lattice(model: &MrsModel, x: &[f64], lattice: Lattice) -> Result<ForwardResult> {
    let m = model.num_regimes();
    let big_t = x.len() - 1;
    let mut cache = DensityCache::new(model, lattice.max_finite_lag(big_t));
    let mut res = ForwardResult {
        num_regimes: m,
        filtered: Vec::with_capacity(x.len()),
        prediction: Vec::with_capacity(x.len()),
        log_normalizer: Vec::with_capacity(x.len()),
        loglik: 0.0,
        regime_filtered: Vec::with_capacity(x.len()),
        lattice,
    };
    let mut pred = model.initial.clone();
    for t in 0..=big_t {
        let lat = &res.lattice;
        let n = lat.layer(t).len();
        cache.fill(x, t, lat.max_finite_lag(t));

        let mut lmax = f64::NEG_INFINITY;
        for s in 0..n {
            for j in 0..m {
                if pred[s * m + j] > 0.0 {
                    lmax = lmax.max(cache.lookup(lat, t, s, j));
                }
            }
        }
        // Densities relative to the largest one, so the exponentials cannot
        // all underflow; exponentiate per (regime, lag) rather than per state.
        cache.exponentiate(lmax);
        let mut filt = Vec::with_capacity(n * m);
        for s in 0..n {
            for j in 0..m {
                let p = pred[s * m + j];
                filt.push(if p > 0.0 { p * cache.lookup(lat, t, s, j) } else { 0.0 });
            }
        }
        let total: f64 = filt.iter().sum();
        if !(total > 0.0) || !lmax.is_finite() {
            let partial = (t > 0).then(|| Box::new(res));
            return Err(MrsError::ZeroLikelihood { t, partial });
        }
        let inv = 1.0 / total;
        filt.iter_mut().for_each(|v| *v *= inv);
        let log_c = total.ln() + lmax;
        res.loglik += log_c;
        res.log_normalizer.push(log_c);

        let mut regime = vec![0.0; m];
        for s in 0..n {
            for j in 0..m {
                regime[j] += filt[s * m + j];
            }
        }
        res.regime_filtered.push(regime);

        let next_pred = (t < big_t).then(|| push_forward(model, lat, t, &filt));
        res.prediction.push(std::mem::replace(&mut pred, next_pred.unwrap_or_default()));
        res.filtered.push(filt);
    }
    Ok(res)
}

/// Transition-weighted push-forward of a distribution at `t` to `t + 1`.
pub(crate) fn push_forward(model: &MrsModel, lat: &Lattice, t: usize, dist: &[f64]) -> Vec<f64> {
    let m = model.num_regimes();
    let mut out = vec![0.0; lat.layer(t + 1).len() * m];
    for s in 0..lat.layer(t).len() {
        for i in 0..m {
            let w = dist[s * m + i];
            if w == 0.0 {
                continue;
            }
            let base = lat.next_index(t, s, i) * m;
            let row = &model.transition[i];
            for j in 0..m {
                out[base + j] += w * row[j];
            }
        }
    }
    out
}

/// Unnormalized forward table, linear scale, over the full counter sets.
#[derive(Debug, Clone)]
pub struct SimpleForward {
    pub likelihood: f64,
    /// Counter vectors per time, sorted as in `enumerate_counters`.
    pub states: Vec<Vec<Vec<usize>>>,
    /// `alpha[t][s * M + j]`, the joint density of `x_0..x_t` and `H_t = (states[t][s], j)`.
    pub alpha: Vec<Vec<f64>>,
}

/// Exact forward recursion in linear scale, pulling each state's mass from
/// its predecessors. Underflows for long series; meant for cross-checking.
pub fn forward_simple(model: &MrsModel, x: &[f64]) -> Result<SimpleForward> {
    check_inputs(model, x, None)?;
    let m = model.num_regimes();
    let k = model.num_ar();
    let density = |t: usize, n: &[usize], j: usize| -> f64 {
        match model.regimes[j] {
            Regime::Ar1 { alpha, phi, sigma2 } if n[j] <= t => {
                densities::ar1_mstep_density(x[t], x[t - n[j]], n[j], alpha, phi, sigma2)
            }
            ref r => densities::stationary_density(x[t], r),
        }
    };

    let mut states = vec![state_space::enumerate_counters(0, k, None)];
    let mut alpha = vec![(0..m).map(|j| density(0, &states[0][0], j) * model.initial[j]).collect::<Vec<_>>()];
    for t in 1..x.len() {
        let layer = state_space::enumerate_counters(t, k, None);
        let prev_states = &states[t - 1];
        let prev = &alpha[t - 1];
        let mut cur = vec![0.0; layer.len() * m];
        for (s, n) in layer.iter().enumerate() {
            let pre = state_space::predecessors(n, t, m, None)?;
            for j in 0..m {
                let mut acc = 0.0;
                for c in &pre.counters {
                    let ps = prev_states.binary_search(c).expect("predecessor is enumerated");
                    for &r in &pre.regimes {
                        acc += prev[ps * m + r] * model.transition[r][j];
                    }
                }
                if acc != 0.0 {
                    cur[s * m + j] = density(t, n, j) * acc;
                }
            }
        }
        if cur.iter().all(|&v| v == 0.0) {
            return Err(MrsError::Underflow { t });
        }
        states.push(layer);
        alpha.push(cur);
    }
    let likelihood: f64 = alpha.last().expect("at least one step").iter().sum();
    if likelihood == 0.0 {
        return Err(MrsError::Underflow { t: x.len() - 1 });
    }
    Ok(SimpleForward {
        likelihood,
        states,
        alpha,
    })
}
