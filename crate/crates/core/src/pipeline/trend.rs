use chrono::{Datelike, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use super::PriceSeries;
use crate::error::{MrsError, Result};

/// Minimum series length: two weekly cycles.
const MIN_LEN: usize = 14;
const BACKFIT_TOL: f64 = 1e-13;
const BACKFIT_MAX: usize = 500;
const FIXPOINT_TOL: f64 = 1e-10;

/// Long-term trend estimator.
pub trait TrendSmoother: Sync {
    fn smooth(&self, y: &[f64]) -> Vec<f64>;
    fn name(&self) -> String;
}

/// Centered moving average over `2 * (window / 2) + 1` days, shrinking to
/// the available days near the ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovingAverage {
    pub window: usize,
}

impl Default for MovingAverage {
    fn default() -> Self {
        Self { window: 64 }
    }
}

impl TrendSmoother for MovingAverage {
    fn smooth(&self, y: &[f64]) -> Vec<f64> {
        let half = self.window / 2;
        let mut prefix = Vec::with_capacity(y.len() + 1);
        prefix.push(0.0);
        for &v in y {
            prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
        }
        (0..y.len())
            .map(|t| {
                let lo = t.saturating_sub(half);
                let hi = (t + half + 1).min(y.len());
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            })
            .collect()
    }

    fn name(&self) -> String {
        format!("moving-average-{}", self.window)
    }
}

/// Weekly dummies plus a long-term component: `S_t = g_t + h_t` with
/// `g_t = beta[weekday(t)]` and the betas summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    /// Monday first.
    pub weekday_betas: [f64; 7],
    pub longterm: Vec<f64>,
    pub method: String,
}

impl TrendModel {
    pub fn short_term(&self, dates: &[NaiveDate]) -> Vec<f64> {
        dates.iter().map(|d| self.weekday_betas[weekday(d)]).collect()
    }

    pub fn total(&self, dates: &[NaiveDate]) -> Vec<f64> {
        self.short_term(dates).iter().zip(&self.longterm).map(|(g, h)| g + h).collect()
    }
}

fn weekday(d: &NaiveDate) -> usize {
    d.weekday().num_days_from_monday() as usize
}

/// Backfits weekday means and the smoother until the betas settle.
pub fn fit_trend(dates: &[NaiveDate], y: &[f64], smoother: &dyn TrendSmoother) -> Result<TrendModel> {
    if y.len() < MIN_LEN {
        return Err(MrsError::InvalidInput(format!(
            "trend fitting needs at least {MIN_LEN} days, got {}",
            y.len()
        )));
    }
    let days: Vec<usize> = dates.iter().map(weekday).collect();
    let mut betas = [0.0; 7];
    let mut resid = vec![0.0; y.len()];
    for _ in 0..BACKFIT_MAX {
        for t in 0..y.len() {
            resid[t] = y[t] - betas[days[t]];
        }
        let h = smoother.smooth(&resid);
        let mut sums = [0.0; 7];
        let mut counts = [0usize; 7];
        for t in 0..y.len() {
            sums[days[t]] += y[t] - h[t];
            counts[days[t]] += 1;
        }
        let mut next = [0.0; 7];
        for d in 0..7 {
            next[d] = sums[d] / counts[d] as f64;
        }
        let centre = next.iter().sum::<f64>() / 7.0;
        next.iter_mut().for_each(|b| *b -= centre);
        let change = next.iter().zip(&betas).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        betas = next;
        if change < BACKFIT_TOL {
            break;
        }
    }
    for t in 0..y.len() {
        resid[t] = y[t] - betas[days[t]];
    }
    Ok(TrendModel {
        weekday_betas: betas,
        longterm: smoother.smooth(&resid),
        method: smoother.name(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfpConfig {
    pub smoother: MovingAverage,
    /// Replacement threshold in residual standard deviations.
    pub threshold: f64,
    /// Repeat replacement against each refitted trend until neither the
    /// replaced set nor the trend changes, instead of a single pass.
    pub fixpoint: bool,
    pub max_rounds: usize,
}

impl Default for RfpConfig {
    fn default() -> Self {
        Self {
            smoother: MovingAverage::default(),
            threshold: 3.0,
            fixpoint: false,
            max_rounds: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfpResult {
    pub trend: TrendModel,
    /// `g_t` and `h_t` per day of the final trend.
    pub short_term: Vec<f64>,
    pub long_term: Vec<f64>,
    /// `P_t - g_t - h_t` on the original prices.
    pub detrended: Vec<f64>,
    /// Days replaced by the trend in the first pass.
    pub replaced_first: Vec<usize>,
    /// Days replaced before the final fit.
    pub replaced: Vec<usize>,
    pub rounds: usize,
    pub warnings: Vec<String>,
}

fn outliers(prices: &[f64], trend: &[f64], threshold: f64) -> Option<Vec<usize>> {
    let n = prices.len() as f64;
    let r: Vec<f64> = prices.iter().zip(trend).map(|(p, s)| p - s).collect();
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return None;
    }
    Some((0..r.len()).filter(|&t| r[t].abs() > threshold * sd).collect())
}

/// Robust trend estimation: fit on raw prices, replace days farther than
/// `threshold` residual standard deviations from the trend by the trend
/// value, refit, and detrend the original prices with the refitted trend.
pub fn rfp_detrend(series: &PriceSeries, config: &RfpConfig) -> Result<RfpResult> {
    let (dates, prices) = (&series.dates, &series.values);
    let mut warnings = Vec::new();
    let mut trend = fit_trend(dates, prices, &config.smoother)?;
    let mut replaced: Vec<usize> = Vec::new();
    let mut replaced_first = None;
    let mut rounds = 0;
    loop {
        let s = trend.total(dates);
        let Some(found) = outliers(prices, &s, config.threshold) else {
            let msg = "residuals have zero variance; no replacement".to_string();
            warn!("{msg}");
            warnings.push(msg);
            break;
        };
        let mut cleaned = prices.clone();
        for &t in &found {
            cleaned[t] = s[t];
        }
        replaced_first.get_or_insert_with(|| found.clone());
        let same_set = rounds > 0 && found == replaced;
        replaced = found;
        let next = fit_trend(dates, &cleaned, &config.smoother)?;
        let change = next
            .total(dates)
            .iter()
            .zip(&s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trend = next;
        rounds += 1;
        let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if !config.fixpoint || (same_set && change <= FIXPOINT_TOL * scale) {
            break;
        }
        if rounds >= config.max_rounds {
            let msg = format!("replacement did not settle after {rounds} rounds");
            warn!("{msg}");
            warnings.push(msg);
            break;
        }
    }
    let short_term = trend.short_term(dates);
    let long_term = trend.longterm.clone();
    let detrended = (0..prices.len()).map(|t| prices[t] - short_term[t] - long_term[t]).collect();
    Ok(RfpResult {
        trend,
        short_term,
        long_term,
        detrended,
        replaced_first: replaced_first.unwrap_or_default(),
        replaced,
        rounds,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(); // a Monday
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    const WEEK: [f64; 7] = [1.0, 0.5, 0.2, 0.0, -0.3, -0.6, -0.8];

    #[test]
    fn noiseless_weekly_pattern() {
        let d = dates(70);
        let y: Vec<f64> = (0..70).map(|t| 50.0 + WEEK[t % 7]).collect();
        let r = rfp_detrend(&PriceSeries::new(d, y.clone()).unwrap(), &RfpConfig::default()).unwrap();
        let mean_week = WEEK.iter().sum::<f64>() / 7.0;
        for k in 0..7 {
            assert!((r.trend.weekday_betas[k] - (WEEK[k] - mean_week)).abs() < 1e-9);
        }
        assert!(r.detrended.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn single_spike_is_replaced() {
        let d = dates(30);
        let mut y: Vec<f64> = (0..30).map(|t| 10.0 + 0.01 * ((t * 7919) % 13) as f64).collect();
        let clean_mean = y.iter().sum::<f64>() / 30.0;
        y[17] += 100.0;
        let series = PriceSeries::new(d, y.clone()).unwrap();
        let raw = fit_trend(&series.dates, &y, &MovingAverage::default()).unwrap();
        let r = rfp_detrend(&series, &RfpConfig::default()).unwrap();
        assert_eq!(r.replaced_first, vec![17]);
        assert_eq!(r.rounds, 1);
        assert!(r.detrended[17] > 80.0);
        let spread = |v: &[f64]| v.iter().fold(0.0f64, |m, &a| m.max((a - clean_mean).abs()));
        let raw_total = raw.total(&series.dates);
        let once: Vec<f64> = (0..30).map(|t| r.short_term[t] + r.long_term[t]).collect();
        assert!(spread(&once) < 0.5 * spread(&raw_total));
        for t in 0..30 {
            assert!((r.detrended[t] + r.short_term[t] + r.long_term[t] - y[t]).abs() < 1e-12);
        }

        let cfg = RfpConfig { fixpoint: true, ..RfpConfig::default() };
        let r = rfp_detrend(&series, &cfg).unwrap();
        let settled: Vec<f64> = (0..30).map(|t| r.short_term[t] + r.long_term[t]).collect();
        assert!(spread(&settled) < 0.1, "{}", spread(&settled));
        assert!(r.detrended[17] > 99.0);
    }

    #[test]
    fn constant_series_warns() {
        let r = rfp_detrend(&PriceSeries::new(dates(20), vec![3.0; 20]).unwrap(), &RfpConfig::default()).unwrap();
        assert!(r.replaced.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn weekday_relabelling_permutes_betas() {
        let n = 56;
        let y: Vec<f64> = (0..n).map(|t| 5.0 + WEEK[t % 7] + 0.001 * t as f64).collect();
        let a = fit_trend(&dates(n), &y, &MovingAverage::default()).unwrap();
        // Start two days later: every label shifts by two.
        let shifted: Vec<NaiveDate> = dates(n + 2)[2..].to_vec();
        let b = fit_trend(&shifted, &y, &MovingAverage::default()).unwrap();
        for k in 0..7 {
            assert!((a.weekday_betas[k] - b.weekday_betas[(k + 2) % 7]).abs() < 1e-12);
        }
    }

    #[test]
    fn short_series_rejected() {
        assert!(fit_trend(&dates(10), &[1.0; 10], &MovingAverage::default()).is_err());
    }
}
