//! Electricity-price workflow: daily averaging, seasonal detrending, candidate
//! model fitting with BIC ranking, and regime classification.

mod candidates;
mod trend;

pub use candidates::{candidate_start, fit_candidates, Candidate, CandidateReport};
pub use trend::{fit_trend, rfp_detrend, MovingAverage, RfpConfig, RfpResult, TrendModel, TrendSmoother};

use chrono::{NaiveDate, NaiveDateTime};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

/// Observations per full day of half-hourly data.
pub const SLOTS_PER_DAY: usize = 48;
/// Days with fewer observations than this are averaged with a warning.
pub const MIN_SLOTS_WARN: usize = 40;

/// One value per calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(MrsError::InvalidInput(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(MrsError::InvalidInput(format!("dates not increasing at {}", w[1])));
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Averages intraday observations per calendar day. Partial days are kept
/// (with a warning below [`MIN_SLOTS_WARN`] observations); a calendar day
/// with no observations between the first and last day is an error.
pub fn daily_average(stamps: &[NaiveDateTime], prices: &[f64]) -> Result<(PriceSeries, Vec<String>)> {
    if stamps.len() != prices.len() {
        return Err(MrsError::InvalidInput("timestamp and price counts differ".into()));
    }
    if stamps.is_empty() {
        return Err(MrsError::InvalidInput("no observations".into()));
    }
    if let Some(w) = stamps.windows(2).find(|w| w[1] <= w[0]) {
        return Err(MrsError::InvalidInput(format!("timestamps not increasing at {}", w[1])));
    }
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (s, &p) in stamps.iter().zip(prices) {
        let d = s.date();
        match dates.last() {
            Some(&last) if last == d => {
                let e = sums.last_mut().expect("parallel to dates");
                e.0 += p;
                e.1 += 1;
            }
            Some(&last) => {
                if last.succ_opt() != Some(d) {
                    return Err(MrsError::Gap(format!("no observations between {last} and {d}")));
                }
                dates.push(d);
                sums.push((p, 1));
            }
            None => {
                dates.push(d);
                sums.push((p, 1));
            }
        }
    }
    let mut warnings = Vec::new();
    for (d, &(_, n)) in dates.iter().zip(&sums) {
        if n < MIN_SLOTS_WARN {
            let msg = format!("{d} has only {n} of {SLOTS_PER_DAY} observations");
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let values = sums.iter().map(|&(s, n)| s / n as f64).collect();
    Ok((PriceSeries { dates, values }, warnings))
}

/// Labels `t` as belonging to the regime whose smoothed probability is
/// given in `p` when `p[t] > threshold` (strictly).
pub fn classify(p: &[f64], threshold: f64) -> Vec<bool> {
    p.iter().map(|&v| v > threshold).collect()
}

/// `-2 loglik + n_params ln(n_obs)`.
pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    assert!(n_obs >= 1, "bic needs at least one observation");
    -2.0 * loglik + n_params as f64 * (n_obs as f64).ln()
}

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7).
pub fn quantile(data: &[f64], p: f64) -> f64 {
    assert!(!data.is_empty() && (0.0..=1.0).contains(&p));
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
