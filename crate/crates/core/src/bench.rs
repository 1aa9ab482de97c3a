//! Timing of the forward and backward passes for scaling studies.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backward::backward_smooth;
use crate::error::{MrsError, Result};
use crate::forward::forward_normalized;
use crate::model::MrsModel;
use crate::simulate::simulate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// Last time index; the series has `t + 1` observations.
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub d: Option<usize>,
    /// Median wall time of one forward plus backward pass, in seconds.
    pub seconds: f64,
    pub peak_states: usize,
}

/// Times forward + backward on data simulated from `model`, taking the
/// median over `repeats` runs.
pub fn bench_point(model: &MrsModel, t: usize, truncation: Option<usize>, repeats: usize, seed: u64) -> Result<BenchRow> {
    if repeats == 0 {
        return Err(MrsError::InvalidConfig("repeats must be >= 1".into()));
    }
    let x = simulate(model, t, seed)?.x;
    let mut times = Vec::with_capacity(repeats);
    let mut peak = 0;
    for _ in 0..repeats {
        let start = Instant::now();
        let fwd = forward_normalized(model, &x, truncation)?;
        let sm = backward_smooth(model, &fwd)?;
        times.push(start.elapsed().as_secs_f64());
        peak = fwd.lattice.peak_states();
        std::hint::black_box(&sm);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let seconds = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok(BenchRow {
        t,
        k: model.num_ar(),
        m: model.num_regimes(),
        d: truncation,
        seconds,
        peak_states: peak,
    })
}

/// Runs [`bench_point`] for every `t` in `grid`.
pub fn bench_grid(model: &MrsModel, grid: &[usize], truncation: Option<usize>, repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    grid.iter().map(|&t| bench_point(model, t, truncation, repeats, seed)).collect()
}

/// Least-squares slope of `ln seconds` on `ln T`.
pub fn scaling_exponent(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.t as f64).ln(), r.seconds.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, Regime};
    use crate::state_space::cardinality;

    #[test]
    fn exponent_of_power_law() {
        let rows: Vec<BenchRow> = [100, 200, 400, 800]
            .iter()
            .map(|&t| BenchRow {
                t,
                k: 1,
                m: 2,
                d: None,
                seconds: 3e-7 * (t as f64).powf(1.7),
                peak_states: 0,
            })
            .collect();
        assert!((scaling_exponent(&rows) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn peak_states_match_cardinality() {
        let three = MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.5, sigma2: 1.0 },
                Regime::Ar1 { alpha: 0.0, phi: -0.3, sigma2: 1.0 },
                Regime::Normal { mu: 0.0, sigma2: 1.0 },
            ],
            vec![vec![1.0 / 3.0; 3]; 3],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        let row = bench_point(&three, 10, None, 1, 1).unwrap();
        assert_eq!(row.peak_states, cardinality(10, 2).unwrap());
        let rows = bench_grid(&presets::model1(), &[20], Some(5), 3, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].seconds > 0.0);
    }
}
