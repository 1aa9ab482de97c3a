mod common;

use common::*;
use mrs_core::backward::{backward_smooth, pairwise_smoothed};
use mrs_core::em::mstep::constrained_row;
use mrs_core::em::{em_fit, StartSampler, UniformStartSampler};
use mrs_core::forward::forward_normalized;
use mrs_core::oracle::brute_likelihood;
use mrs_core::pipeline::quantile;
use mrs_core::simulate::simulate;
use mrs_core::state_space::{cardinality, Lattice};
use mrs_core::EmConfig;
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=3).prop_flat_map(|m| (Just(m), 1usize..=m.min(2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn posteriors_are_distributions(seed in any::<u64>(), (m, k) in shape(), t in 1usize..30, d in prop::option::of(3usize..12)) {
        let model = random_model(&mut rng(seed), m, k);
        let x = simulate(&model, t, seed).unwrap().x;
        let d = d.filter(|&d| d > k);
        let fwd = forward_normalized(&model, &x, d).unwrap();
        let sm = backward_smooth(&model, &fwd).unwrap();
        let pw = pairwise_smoothed(&model, &fwd, &sm).unwrap();
        for s in 0..=t {
            prop_assert!((fwd.filtered[s].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((sm.regime_marginal[s].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(sm.regime_marginal[s].iter().all(|&p| (-1e-15..=1.0 + 1e-12).contains(&p)));
        }
        prop_assert!(max_abs_diff(&sm.regime_marginal[t], &fwd.regime_filtered[t]) < 1e-12);
        for s in 1..=t {
            for i in 0..m {
                let out: f64 = pw[s - 1][i].iter().sum();
                let inc: f64 = (0..m).map(|h| pw[s - 1][h][i]).sum();
                prop_assert!((out - sm.regime_marginal[s - 1][i]).abs() < 1e-12);
                prop_assert!((inc - sm.regime_marginal[s][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_filter_matches_truncated_oracle(seed in any::<u64>(), (m, k) in shape(), t in 1usize..7, d in 3usize..6) {
        prop_assume!(d > k);
        let model = random_model(&mut rng(seed), m, k);
        let x = simulate(&model, t, seed ^ 1).unwrap().x;
        let brute = brute_likelihood(&model, &x, Some(d)).unwrap();
        let fwd = forward_normalized(&model, &x, Some(d)).unwrap();
        let sm = backward_smooth(&model, &fwd).unwrap();
        prop_assert!((fwd.loglik - brute.loglik).abs() < 1e-10);
        prop_assert!(max_abs_diff2(&sm.regime_marginal, &brute.regime_posterior) < 1e-10);
    }

    #[test]
    fn loglik_invariant_under_relabelling(seed in any::<u64>(), t in 2usize..40) {
        // Two AR regimes and two i.i.d. regimes; permute within each block.
        let model = random_model(&mut rng(seed), 4, 2);
        let x = simulate(&model, t, seed).unwrap().x;
        let swapped = model.permuted(&[1, 0, 3, 2]);
        let a = forward_normalized(&model, &x, None).unwrap().loglik;
        let b = forward_normalized(&swapped, &x, None).unwrap().loglik;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn lattice_peak_is_cardinality(t in 0usize..25, k in 1usize..=3) {
        let lattice = Lattice::build(k, k + 1, t, None).unwrap();
        prop_assert_eq!(lattice.layer(t).len(), cardinality(t, k).unwrap());
        prop_assert_eq!(lattice.peak_states(), cardinality(t, k).unwrap());
    }

    #[test]
    fn constrained_rows_are_bounded_distributions(counts in prop::collection::vec(0.0f64..50.0, 2..6), lower in 1e-6f64..0.1) {
        prop_assume!(counts.iter().sum::<f64>() > 0.0);
        prop_assume!(lower * counts.len() as f64 <= 0.5);
        let row = constrained_row(&counts, lower);
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(row.iter().all(|&p| p >= lower - 1e-15));
    }

    #[test]
    fn quantiles_are_monotone(data in prop::collection::vec(-1e3f64..1e3, 1..50), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&data, lo) <= quantile(&data, hi));
        let min = data.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(quantile(&data, 0.0), min);
    }

    #[test]
    fn simulated_observations_follow_the_chain(seed in any::<u64>(), (m, k) in shape(), t in 0usize..50) {
        let model = random_model(&mut rng(seed), m, k);
        let a = simulate(&model, t, seed).unwrap();
        prop_assert_eq!(a.x.len(), t + 1);
        for s in 0..=t {
            if a.r[s] < k {
                prop_assert_eq!(a.x[s], a.latents[a.r[s]][s]);
            }
            prop_assert!(model.p(a.r[s.saturating_sub(1)], a.r[s]) > 0.0 || s == 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn em_never_decreases_loglik(seed in any::<u64>(), (m, k) in shape(), t in 10usize..60) {
        let truth = random_gaussian_model(&mut rng(seed), m, k);
        let x = simulate(&truth, t, seed).unwrap().x;
        let sampler = UniformStartSampler { template: truth, template_first: false };
        let start = sampler.sample(1, &mut rng(seed ^ 7));
        let cfg = EmConfig { max_iters: 40, truncation: Some(8), ..Default::default() };
        let r = em_fit(&start, &x, &cfg).unwrap();
        for w in r.loglik_trajectory.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}
