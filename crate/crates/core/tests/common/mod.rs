#![allow(dead_code)]

use mrs_core::{MrsModel, Orientation, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn row(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// A random valid model with `k` AR(1) regimes followed by `m - k` i.i.d.
/// regimes of mixed families.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize, k: usize) -> MrsModel {
    let mut regimes = Vec::with_capacity(m);
    for i in 0..m {
        let r = if i < k {
            Regime::Ar1 {
                alpha: rng.random_range(-1.0..1.0),
                phi: rng.random_range(-0.9..0.9),
                sigma2: rng.random_range(0.3..2.0),
            }
        } else {
            match rng.random_range(0..3) {
                0 => Regime::Normal {
                    mu: rng.random_range(-2.0..2.0),
                    sigma2: rng.random_range(0.5..2.0),
                },
                1 => Regime::ShiftedGamma {
                    shape: rng.random_range(0.5..4.0),
                    scale: rng.random_range(0.3..2.0),
                    shift: rng.random_range(-1.0..1.0),
                    orientation: Orientation::Up,
                },
                _ => Regime::ShiftedLogNormal {
                    mu: rng.random_range(-0.5..0.5),
                    sigma2: rng.random_range(0.1..1.0),
                    shift: rng.random_range(-1.0..1.0),
                    orientation: if rng.random::<bool>() { Orientation::Up } else { Orientation::Down },
                },
            }
        };
        regimes.push(r);
    }
    let transition = (0..m).map(|_| row(rng, m)).collect();
    let initial = row(rng, m);
    MrsModel::new(regimes, transition, initial).expect("random model is valid")
}

/// Random model with AR(1) and normal regimes only, so any data is in support.
pub fn random_gaussian_model(rng: &mut ChaCha8Rng, m: usize, k: usize) -> MrsModel {
    let mut model = random_model(rng, m, k);
    for r in model.regimes.iter_mut().skip(k) {
        *r = Regime::Normal {
            mu: rng.random_range(-2.0..2.0),
            sigma2: rng.random_range(0.5..2.0),
        };
    }
    model
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs_diff2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| max_abs_diff(x, y)).fold(0.0, f64::max)
}

pub fn max_abs_diff3(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| max_abs_diff2(x, y)).fold(0.0, f64::max)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn ar_params(model: &MrsModel, i: usize) -> (f64, f64, f64) {
    match model.regimes[i] {
        Regime::Ar1 { alpha, phi, sigma2 } => (alpha, phi, sigma2),
        _ => panic!("regime {i} is not AR(1)"),
    }
}
