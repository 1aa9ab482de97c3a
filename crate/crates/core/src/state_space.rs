//! Lag counters of the augmented hidden chain.
//!
//! At time `t` the hidden state is `(n, r)`: the current regime `r` plus, for
//! every AR(1) regime `i`, the number of steps `n_i` since the chain last sat
//! in `i`. When regime `i` has never been visited the paper-style rendering
//! is `t + 1`; under truncation with cap `D` every lag `>= D` renders as `D`.
//!
//! Two layers of API live here. The rendered functions (`enumerate_counters`,
//! `successor`, `predecessors`) work on plain `Vec<usize>` counters and mirror
//! the combinatorial definitions. [`Lattice`] is the packed form used by the
//! forward and backward passes: a single sentinel [`FAR`] stands for both
//! "never visited" and "at least `D` steps ago", since both use the regime's
//! stationary density.

use crate::error::{MrsError, Result};
use crate::model::MAX_AR_REGIMES;

/// Packed lag value meaning "never visited, or at least `D` steps ago".
pub const FAR: u16 = u16::MAX;

const BITS: u32 = 16;
const MASK: u64 = 0xFFFF;

/// Largest lag the packed representation can hold.
pub const MAX_LAG: usize = FAR as usize - 1;

/// Every counter vector allowed at time `t`: entries in `1..=cap` with
/// `cap = min(t + 1, D)`, entries below `cap` pairwise distinct. Sorted
/// lexicographically.
pub fn enumerate_counters(t: usize, k: usize, truncation: Option<usize>) -> Vec<Vec<usize>> {
    let cap = cap_at(t, truncation);
    let mut out = Vec::new();
    let mut current = vec![0; k];
    fill(&mut current, 0, cap, &mut out);
    out
}

fn fill(current: &mut Vec<usize>, pos: usize, cap: usize, out: &mut Vec<Vec<usize>>) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for v in 1..=cap {
        if v < cap && current[..pos].contains(&v) {
            continue;
        }
        current[pos] = v;
        fill(current, pos + 1, cap, out);
    }
}

fn cap_at(t: usize, truncation: Option<usize>) -> usize {
    match truncation {
        Some(d) => (t + 1).min(d),
        None => t + 1,
    }
}

/// Size of the exact counter set at time `t`:
/// `sum_{m=0}^{min(t,k)} C(t,m) C(k,m) m!`.
pub fn cardinality(t: usize, k: usize) -> Result<usize> {
    let overflow = || MrsError::Overflow(format!("cardinality({t}, {k}) exceeds usize"));
    let mut total: usize = 0;
    for m in 0..=t.min(k) {
        // C(t,m) * C(k,m) * m! = C(t,m) * k!/(k-m)!
        let term = binomial(t, m)
            .and_then(|c| falling_factorial(k, m).and_then(|f| c.checked_mul(f)))
            .ok_or_else(overflow)?;
        total = total.checked_add(term).ok_or_else(overflow)?;
    }
    Ok(total)
}

fn binomial(n: usize, m: usize) -> Option<usize> {
    let m = m.min(n - m);
    let mut acc: usize = 1;
    for i in 0..m {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

fn falling_factorial(k: usize, m: usize) -> Option<usize> {
    (0..m).try_fold(1usize, |acc, i| acc.checked_mul(k - i))
}

/// Applies one chain step to rendered counters: leaving AR regime `regime`
/// resets its counter, every other counter advances, and under truncation
/// the result is capped at `D`.
pub fn successor(
    counters: &[usize],
    regime: usize,
    next_regime: usize,
    truncation: Option<usize>,
) -> (Vec<usize>, usize) {
    let next = counters
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let v = if i == regime { 1 } else { n + 1 };
            truncation.map_or(v, |d| v.min(d))
        })
        .collect();
    (next, next_regime)
}

/// The states that can step into a given counter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predecessors {
    /// Possible previous regimes: the unique AR regime whose counter is 1, or
    /// every i.i.d. regime when no counter is 1.
    pub regimes: Vec<usize>,
    /// Possible previous counter vectors, sorted lexicographically.
    pub counters: Vec<Vec<usize>>,
}

/// Inverts [`successor`] for a counter vector at time `t >= 1`.
pub fn predecessors(
    counters: &[usize],
    t: usize,
    num_regimes: usize,
    truncation: Option<usize>,
) -> Result<Predecessors> {
    let k = counters.len();
    if t == 0 {
        return Err(MrsError::InvalidInput("time 0 has no predecessors".into()));
    }
    if !is_member(counters, t, truncation) {
        return Err(MrsError::InvalidInput(format!(
            "{counters:?} is not a valid counter vector at t = {t}"
        )));
    }
    let cap_now = cap_at(t, truncation);
    let cap_prev = cap_at(t - 1, truncation);
    let reset = counters.iter().position(|&n| n == 1);

    // Candidate previous values per entry.
    let options: Vec<Vec<usize>> = counters
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if Some(i) == reset {
                return (1..=cap_prev).collect();
            }
            let mut c = Vec::new();
            if n >= 2 && n - 1 <= cap_prev {
                c.push(n - 1);
            }
            if n == cap_now && cap_prev != n - 1 {
                c.push(cap_prev);
            }
            c
        })
        .collect();

    let regimes: Vec<usize> = match reset {
        Some(l) => vec![l],
        None => (k..num_regimes).collect(),
    };
    let mut prev = Vec::new();
    let mut current = vec![0; k];
    product(&options, 0, &mut current, &mut prev);
    prev.retain(|p| {
        is_member(p, t - 1, truncation)
            && regimes
                .iter()
                .any(|&r| successor(p, r, 0, truncation).0 == counters)
    });
    prev.sort();
    prev.dedup();
    Ok(Predecessors {
        regimes,
        counters: prev,
    })
}

fn product(options: &[Vec<usize>], pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos == options.len() {
        out.push(current.clone());
        return;
    }
    for &v in &options[pos] {
        current[pos] = v;
        product(options, pos + 1, current, out);
    }
}

/// Membership in `enumerate_counters(t, k, truncation)` without enumerating.
pub fn is_member(counters: &[usize], t: usize, truncation: Option<usize>) -> bool {
    let cap = cap_at(t, truncation);
    counters.iter().enumerate().all(|(i, &n)| {
        (1..=cap).contains(&n) && (n == cap || !counters[..i].contains(&n))
    })
}

/// Packed counters for one time step. Lag `i` of a key sits in bits
/// `16 * (k - 1 - i)`, so numeric order equals lexicographic order.
#[derive(Debug, Clone)]
pub struct Layer {
    keys: Vec<u64>,
    /// `next[s * classes + c]`: index in the following layer of the counters
    /// reached from state `s` when leaving a regime of class `c`.
    next: Vec<u32>,
}

impl Layer {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }
}

/// The reachable augmented state space for times `0..=T`.
///
/// Only counter vectors reachable from the all-`FAR` start are stored. When
/// the model has no i.i.d. regime this is a strict subset of
/// [`enumerate_counters`] (some counter is always 1 after `t = 0`).
#[derive(Debug, Clone)]
pub struct Lattice {
    k: usize,
    classes: usize,
    truncation: Option<usize>,
    layers: Vec<Layer>,
}

impl Lattice {
    /// Builds layers `0..=last_t` for `k` AR regimes, out of `num_regimes`.
    pub fn build(
        k: usize,
        num_regimes: usize,
        last_t: usize,
        truncation: Option<usize>,
    ) -> Result<Self> {
        if k > MAX_AR_REGIMES {
            return Err(MrsError::InvalidModel(format!(
                "at most {MAX_AR_REGIMES} AR regimes are supported"
            )));
        }
        let longest = truncation.unwrap_or(last_t + 1);
        if longest > MAX_LAG {
            return Err(MrsError::Overflow(format!(
                "lags up to {longest} exceed the packed limit {MAX_LAG}; use truncation"
            )));
        }
        let classes = k + usize::from(num_regimes > k);
        let start = (0..k).fold(0u64, |acc, _| (acc << BITS) | u64::from(FAR));
        let mut layers = vec![Layer {
            keys: vec![start],
            next: Vec::new(),
        }];
        let mut scratch = Vec::new();
        for _ in 0..last_t {
            let prev = layers.last().expect("layer 0 exists");
            scratch.clear();
            for &key in &prev.keys {
                for c in 0..classes {
                    scratch.push(step_key(key, k, c, truncation));
                }
            }
            let mut keys = scratch.clone();
            // Successor runs are mostly sorted, which the stable sort exploits.
            keys.sort();
            keys.dedup();
            let next = scratch
                .iter()
                .map(|s| keys.binary_search(s).expect("successor is present") as u32)
                .collect();
            layers.last_mut().expect("layer 0 exists").next = next;
            layers.push(Layer {
                keys,
                next: Vec::new(),
            });
        }
        Ok(Self {
            k,
            classes,
            truncation,
            layers,
        })
    }

    pub fn num_ar(&self) -> usize {
        self.k
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, t: usize) -> &Layer {
        &self.layers[t]
    }

    /// Largest layer size over all times.
    pub fn peak_states(&self) -> usize {
        self.layers.iter().map(Layer::len).max().unwrap_or(0)
    }

    pub fn total_states(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    /// Class of a departing regime: its own index for AR regimes, `k` for all
    /// i.i.d. regimes (which only advance the counters).
    #[inline]
    pub fn class_of(&self, regime: usize) -> usize {
        regime.min(self.k)
    }

    /// Index at time `t + 1` reached from state `s` at time `t` when leaving
    /// regime `regime`.
    #[inline]
    pub fn next_index(&self, t: usize, s: usize, regime: usize) -> usize {
        self.layers[t].next[s * self.classes + self.class_of(regime)] as usize
    }

    /// Packed lag of AR regime `i` in state `s` at time `t`.
    #[inline]
    pub fn lag(&self, t: usize, s: usize, i: usize) -> u16 {
        unpack(self.layers[t].keys[s], self.k, i)
    }

    /// Longest finite lag that can occur at time `t`.
    pub fn max_finite_lag(&self, t: usize) -> usize {
        match self.truncation {
            Some(d) => t.min(d - 1),
            None => t,
        }
    }

    /// Rendered counters of state `s` at time `t`.
    pub fn render(&self, t: usize, s: usize) -> Vec<usize> {
        let far = cap_at(t, self.truncation);
        (0..self.k)
            .map(|i| match self.lag(t, s, i) {
                FAR => far,
                v => usize::from(v),
            })
            .collect()
    }

    /// Index of rendered counters at time `t`, if reachable.
    pub fn index_of(&self, t: usize, counters: &[usize]) -> Option<usize> {
        let far = cap_at(t, self.truncation);
        let mut key = 0u64;
        for &n in counters {
            let v = if n == far { FAR } else { u16::try_from(n).ok()? };
            key = (key << BITS) | u64::from(v);
        }
        self.layers[t].keys.binary_search(&key).ok()
    }
}

#[inline]
fn unpack(key: u64, k: usize, i: usize) -> u16 {
    ((key >> (BITS * (k - 1 - i) as u32)) & MASK) as u16
}

fn step_key(key: u64, k: usize, class: usize, truncation: Option<usize>) -> u64 {
    let mut out = 0u64;
    for i in 0..k {
        let v = unpack(key, k, i);
        let next = if i == class {
            1
        } else if v == FAR {
            FAR
        } else {
            let n = v + 1;
            match truncation {
                Some(d) if usize::from(n) >= d => FAR,
                _ => n,
            }
        };
        out = (out << BITS) | u64::from(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    /// Breadth-first reachability over rendered counters, any regime sequence.
    fn reachable(t: usize, k: usize, m: usize, d: Option<usize>) -> BTreeSet<Vec<usize>> {
        let mut layer: BTreeSet<Vec<usize>> = [vec![1; k]].into();
        for _ in 0..t {
            layer = layer
                .iter()
                .flat_map(|c| (0..m).map(move |r| successor(c, r, 0, d).0))
                .collect();
        }
        layer
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_counters(0, 3, None), vec![vec![1, 1, 1]]);
        assert_eq!(
            enumerate_counters(1, 2, None),
            vec![vec![1, 2], vec![2, 1], vec![2, 2]]
        );
        assert_eq!(enumerate_counters(3, 2, None).len(), 13);
        assert_eq!(cardinality(0, 3).unwrap(), 1);
        assert_eq!(cardinality(1, 2).unwrap(), 3);
        assert_eq!(cardinality(3, 2).unwrap(), 13);
    }

    #[test]
    fn enumeration_matches_reachability_with_iid_regime() {
        for k in 1..=3 {
            for t in 0..=6 {
                let set: BTreeSet<_> = enumerate_counters(t, k, None).into_iter().collect();
                assert_eq!(set, reachable(t, k, k + 1, None), "t={t} k={k}");
            }
        }
    }

    #[test]
    fn truncated_enumeration_matches_reachability() {
        for d in [3, 4] {
            for t in 0..=8 {
                let set: BTreeSet<_> = enumerate_counters(t, 2, Some(d)).into_iter().collect();
                assert_eq!(set, reachable(t, 2, 3, Some(d)), "t={t} d={d}");
                assert!(set.len() <= cardinality(t.min(d - 1), 2).unwrap());
            }
        }
    }

    #[test]
    fn cardinality_overflow_is_reported() {
        assert!(cardinality(usize::MAX / 2, 3).is_err());
    }

    #[test]
    fn successor_examples() {
        assert_eq!(successor(&[3, 5], 0, 1, None), (vec![1, 6], 1));
        assert_eq!(successor(&[2, 4], 2, 0, None), (vec![3, 5], 0));
        assert_eq!(successor(&[2, 40], 0, 0, Some(40)), (vec![1, 40], 0));
    }

    #[test]
    fn predecessor_examples() {
        let p = predecessors(&[1, 4], 5, 3, None).unwrap();
        assert_eq!(p.regimes, vec![0]);
        let expected: Vec<Vec<usize>> = (1..=5)
            .map(|m| vec![m, 3])
            .filter(|c| is_member(c, 4, None))
            .collect();
        assert_eq!(p.counters, expected);

        let p = predecessors(&[3, 5], 5, 3, None).unwrap();
        assert_eq!(p.regimes, vec![2]);
        assert_eq!(p.counters, vec![vec![2, 4]]);

        assert!(predecessors(&[1, 1], 3, 3, None).is_err());
    }

    #[test]
    fn predecessors_invert_successor_exhaustively() {
        for d in [None, Some(3), Some(5)] {
            for t in 1..=6 {
                let m = 3;
                let k = 2;
                let prev = enumerate_counters(t - 1, k, d);
                for target in enumerate_counters(t, k, d) {
                    let p = predecessors(&target, t, m, d).unwrap();
                    let mut brute = BTreeSet::new();
                    let mut regimes = BTreeSet::new();
                    for c in &prev {
                        for r in 0..m {
                            if successor(c, r, 0, d).0 == target {
                                brute.insert(c.clone());
                                regimes.insert(r);
                            }
                        }
                    }
                    assert_eq!(p.counters, brute.into_iter().collect::<Vec<_>>(), "{target:?} t={t} d={d:?}");
                    assert_eq!(p.regimes, regimes.into_iter().collect::<Vec<_>>());
                }
            }
        }
    }

    #[test]
    fn lattice_matches_reachability() {
        for (k, m) in [(1, 2), (2, 3), (2, 2), (3, 4), (0, 2)] {
            for d in [None, Some(4)] {
                let lat = Lattice::build(k, m, 7, d).unwrap();
                for t in 0..=7 {
                    let rendered: BTreeSet<_> =
                        (0..lat.layer(t).len()).map(|s| lat.render(t, s)).collect();
                    assert_eq!(rendered, reachable(t, k, m, d), "k={k} m={m} t={t} d={d:?}");
                    let in_order: Vec<_> = (0..lat.layer(t).len()).map(|s| lat.render(t, s)).collect();
                    assert!(in_order.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }

    #[test]
    fn lattice_next_index_agrees_with_successor() {
        let d = Some(5);
        let lat = Lattice::build(2, 3, 8, d).unwrap();
        for t in 0..8 {
            for s in 0..lat.layer(t).len() {
                let c = lat.render(t, s);
                for r in 0..3 {
                    let (n, _) = successor(&c, r, 0, d);
                    // Rendered never-visited counters advance t+1 -> t+2 which
                    // is exactly the rendering at t+1.
                    assert_eq!(lat.render(t + 1, lat.next_index(t, s, r)), n);
                }
            }
        }
    }

    #[test]
    fn all_ar_model_is_quadratic() {
        let lat = Lattice::build(2, 2, 30, None).unwrap();
        assert!(lat.layer(30).len() <= 2 * 31);
        assert!(lat.layer(30).len() < enumerate_counters(30, 2, None).len());
    }

    #[test]
    fn large_truncation_equals_exact() {
        let a = Lattice::build(2, 3, 9, None).unwrap();
        let b = Lattice::build(2, 3, 9, Some(10)).unwrap();
        for t in 0..=9 {
            assert_eq!(a.layer(t).keys(), b.layer(t).keys());
        }
    }
}
