use chrono::{NaiveDate, NaiveDateTime};
use mrs_core::backward::smooth;
use mrs_core::pipeline::{classify, daily_average, fit_candidates, rfp_detrend, Candidate, RfpConfig, SLOTS_PER_DAY};
use mrs_core::simulate::simulate;
use mrs_core::{EmConfig, MrsModel, Orientation, Regime};

fn spiky_model() -> MrsModel {
    MrsModel::new(
        vec![
            Regime::Ar1 { alpha: 0.0, phi: 0.8, sigma2: 0.5 },
            Regime::ShiftedLogNormal {
                mu: 1.5,
                sigma2: 0.2,
                shift: 1.0,
                orientation: Orientation::Up,
            },
        ],
        vec![vec![0.95, 0.05], vec![0.6, 0.4]],
        vec![1.0, 0.0],
    )
    .unwrap()
}

#[test]
fn candidates_are_ranked_and_spikes_classified() {
    let sim = simulate(&spiky_model(), 600, 41).unwrap();
    let cfg = EmConfig { truncation: Some(40), restarts: 2, seed: 5, ..Default::default() };
    let reports = fit_candidates(&sim.x, &Candidate::ALL, &cfg);
    assert_eq!(reports.len(), 4);
    let bics: Vec<f64> = reports.iter().filter_map(|r| r.bic).collect();
    assert!(!bics.is_empty());
    assert!(bics.windows(2).all(|w| w[0] <= w[1]));
    let best = reports[0].fit.as_ref().unwrap();
    assert_eq!(reports[0].n_params, best.theta_hat.num_free_parameters(true));

    let (_, sm) = smooth(&best.theta_hat, &sim.x, Some(40)).unwrap();
    let p_spike: Vec<f64> = sm.regime_marginal.iter().map(|p| p[1]).collect();
    let labels = classify(&p_spike, 0.5);
    let agree = labels.iter().zip(&sim.r).filter(|(&l, &r)| l == (r == 1)).count();
    assert!(agree as f64 / labels.len() as f64 > 0.9, "{agree} of {}", labels.len());
}

#[test]
fn half_hourly_prices_to_detrended_series() {
    let start = NaiveDate::from_ymd_opt(2023, 5, 1).unwrap();
    let days = 84;
    let mut stamps: Vec<NaiveDateTime> = Vec::new();
    let mut prices = Vec::new();
    for d in 0..days {
        let date = start + chrono::Days::new(d as u64);
        for slot in 0..SLOTS_PER_DAY as u32 {
            stamps.push(date.and_hms_opt(slot / 2, 30 * (slot % 2), 0).unwrap());
            let intraday = if slot % 2 == 0 { 0.5 } else { -0.5 };
            prices.push(30.0 + [1.0, 1.0, 1.0, 1.0, 1.0, -2.5, -2.5][d % 7] + intraday);
        }
    }
    let (daily, warnings) = daily_average(&stamps, &prices).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(daily.len(), days);
    let r = rfp_detrend(&daily, &RfpConfig::default()).unwrap();
    assert!(r.replaced_first.is_empty());
    // Intraday swings average out; only the weekly pattern is left.
    assert!((r.trend.weekday_betas[0] - 1.0).abs() < 1e-9);
    assert!((r.trend.weekday_betas[6] + 2.5).abs() < 1e-9);
    for t in 0..days {
        assert!((daily.values[t] - r.detrended[t] - r.short_term[t] - r.long_term[t]).abs() < 1e-12);
    }
}
