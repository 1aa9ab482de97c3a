//! Model parameterization shared by every algorithm in the crate.
//!
//! A model is an ordered list of regimes, a row-stochastic transition matrix
//! and an initial distribution. AR(1) regimes always come first so that the
//! per-regime lag counters can be indexed positionally.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::kv::{KvDocument, KvWriter};

/// Largest supported number of AR(1) regimes. The augmented state space grows
/// like `T^(k+1)`, so larger `k` is impractical anyway.
pub const MAX_AR_REGIMES: usize = 4;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Orientation of a shifted regime: `Up` models `x - q`, `Down` models `q - x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Up,
    Down,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Up => 1.0,
            Orientation::Down => -1.0,
        }
    }

    /// Distance of `x` from the shift in the direction of the orientation.
    #[inline]
    pub fn excess(self, x: f64, shift: f64) -> f64 {
        self.sign() * (x - shift)
    }

    fn from_sign(s: i32) -> Option<Self> {
        match s {
            1 => Some(Orientation::Up),
            -1 => Some(Orientation::Down),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `B_t = alpha + phi * B_{t-1} + sigma * eps_t`, evolving at every step.
    Ar1 { alpha: f64, phi: f64, sigma2: f64 },
    Normal { mu: f64, sigma2: f64 },
    /// `orientation.excess(x, shift) ~ Gamma(shape, scale)`.
    ShiftedGamma {
        shape: f64,
        scale: f64,
        shift: f64,
        orientation: Orientation,
    },
    /// `log(orientation.excess(x, shift)) ~ N(mu, sigma2)`.
    ShiftedLogNormal {
        mu: f64,
        sigma2: f64,
        shift: f64,
        orientation: Orientation,
    },
}

impl Regime {
    pub fn is_ar(&self) -> bool {
        matches!(self, Regime::Ar1 { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Regime::Ar1 { .. } => "ar1",
            Regime::Normal { .. } => "normal",
            Regime::ShiftedGamma { .. } => "shifted_gamma",
            Regime::ShiftedLogNormal { .. } => "shifted_lognormal",
        }
    }

    /// Estimated parameters, in a fixed order. Shifts are fixed inputs and excluded.
    pub fn estimated_params(&self) -> Vec<f64> {
        match *self {
            Regime::Ar1 { alpha, phi, sigma2 } => vec![alpha, phi, sigma2],
            Regime::Normal { mu, sigma2 } => vec![mu, sigma2],
            Regime::ShiftedGamma { shape, scale, .. } => vec![shape, scale],
            Regime::ShiftedLogNormal { mu, sigma2, .. } => vec![mu, sigma2],
        }
    }

    pub fn num_params(&self) -> usize {
        self.estimated_params().len()
    }

    fn check(&self, idx: usize, out: &mut Vec<Violation>) {
        let field = |name: &str| format!("regime.{}.{}", idx + 1, name);
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(Violation::new(field(name), format!("must be finite and > 0, got {v}")));
            }
        };
        match *self {
            Regime::Ar1 { alpha, phi, sigma2 } => {
                positive("sigma2", sigma2);
                if !alpha.is_finite() {
                    out.push(Violation::new(field("alpha"), "must be finite"));
                }
                if !(phi.abs() < 1.0) {
                    out.push(Violation::new(field("phi"), format!("|phi| must be < 1, got {phi}")));
                }
            }
            Regime::Normal { mu, sigma2 } => {
                positive("sigma2", sigma2);
                if !mu.is_finite() {
                    out.push(Violation::new(field("mu"), "must be finite"));
                }
            }
            Regime::ShiftedGamma { shape, scale, shift, .. } => {
                positive("shape", shape);
                positive("scale", scale);
                if !shift.is_finite() {
                    out.push(Violation::new(field("shift"), "must be finite"));
                }
            }
            Regime::ShiftedLogNormal { mu, sigma2, shift, .. } => {
                positive("sigma2", sigma2);
                if !mu.is_finite() {
                    out.push(Violation::new(field("mu"), "must be finite"));
                }
                if !shift.is_finite() {
                    out.push(Violation::new(field("shift"), "must be finite"));
                }
            }
        }
    }
}

/// One failed invariant: the offending field and what was wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Full parameter set of an independent-regime MRS model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrsModel {
    pub regimes: Vec<Regime>,
    /// Row-stochastic transition matrix, `transition[i][j] = P(R_t = j | R_{t-1} = i)`.
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl MrsModel {
    /// Builds a model and rejects it if any invariant fails.
    pub fn new(regimes: Vec<Regime>, transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let model = Self {
            regimes,
            transition,
            initial,
        };
        model.ensure_valid()?;
        Ok(model)
    }

    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    /// Number of AR(1) regimes (they occupy indices `0..k`).
    pub fn num_ar(&self) -> usize {
        self.regimes.iter().take_while(|r| r.is_ar()).count()
    }

    #[inline]
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.transition[i][j]
    }

    /// Checks every invariant and reports all violations. Never fails.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let m = self.regimes.len();
        if m == 0 {
            out.push(Violation::new("regimes", "at least one regime is required"));
            return out;
        }
        let k = self.num_ar();
        if self.regimes[k..].iter().any(Regime::is_ar) {
            out.push(Violation::new(
                "regimes",
                "AR(1) regimes must precede all i.i.d. regimes",
            ));
        }
        if k > MAX_AR_REGIMES {
            out.push(Violation::new(
                "regimes",
                format!("at most {MAX_AR_REGIMES} AR(1) regimes are supported, got {k}"),
            ));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            r.check(i, &mut out);
        }

        if self.transition.len() != m {
            out.push(Violation::new(
                "P",
                format!("expected {m} rows, got {}", self.transition.len()),
            ));
        }
        for (i, row) in self.transition.iter().enumerate() {
            let field = format!("P.{}", i + 1);
            if row.len() != m {
                out.push(Violation::new(field, format!("expected {m} entries, got {}", row.len())));
                continue;
            }
            check_distribution(&field, row, &mut out);
        }

        if self.initial.len() != m {
            out.push(Violation::new(
                "pi",
                format!("expected {m} entries, got {}", self.initial.len()),
            ));
        } else {
            check_distribution("pi", &self.initial, &mut out);
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msg = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            Err(MrsError::InvalidModel(msg))
        }
    }

    /// Number of estimated parameters: regime parameters (shifts excluded),
    /// `M(M-1)` transition probabilities and, if `initial_estimated`, `M-1`
    /// initial probabilities.
    pub fn num_free_parameters(&self, initial_estimated: bool) -> usize {
        let m = self.num_regimes();
        let regime: usize = self.regimes.iter().map(Regime::num_params).sum();
        let pi = if initial_estimated { m.saturating_sub(1) } else { 0 };
        regime + m * m.saturating_sub(1) + pi
    }

    /// All estimated quantities flattened, used for sup-norm step sizes.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.regimes.iter().flat_map(Regime::estimated_params).collect();
        for row in &self.transition {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.initial);
        v
    }

    /// Sup-norm distance between the parameter vectors of two same-shape models.
    pub fn sup_distance(&self, other: &MrsModel) -> f64 {
        self.parameter_vector()
            .iter()
            .zip(other.parameter_vector())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Relabels regimes: new regime `i` is old regime `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MrsModel {
        let m = self.num_regimes();
        assert_eq!(perm.len(), m);
        MrsModel {
            regimes: perm.iter().map(|&i| self.regimes[i]).collect(),
            transition: (0..m)
                .map(|i| (0..m).map(|j| self.transition[perm[i]][perm[j]]).collect())
                .collect(),
            initial: perm.iter().map(|&i| self.initial[i]).collect(),
        }
    }

    /// Orders the AR(1) block by decreasing `phi`, a canonical labelling for
    /// models whose AR regimes are otherwise exchangeable.
    pub fn with_ar_ordered_by_phi(&self) -> MrsModel {
        let k = self.num_ar();
        let mut perm: Vec<usize> = (0..self.num_regimes()).collect();
        let phi = |i: usize| match self.regimes[i] {
            Regime::Ar1 { phi, .. } => phi,
            _ => unreachable!(),
        };
        perm[..k].sort_by(|&a, &b| phi(b).total_cmp(&phi(a)));
        self.permuted(&perm)
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("independent-regime MRS model");
        for (i, r) in self.regimes.iter().enumerate() {
            let key = |f: &str| format!("regime.{}.{}", i + 1, f);
            w.put(key("kind"), r.kind_name());
            match *r {
                Regime::Ar1 { alpha, phi, sigma2 } => {
                    w.put(key("alpha"), alpha).put(key("phi"), phi).put(key("sigma2"), sigma2);
                }
                Regime::Normal { mu, sigma2 } => {
                    w.put(key("mu"), mu).put(key("sigma2"), sigma2);
                }
                Regime::ShiftedGamma { shape, scale, shift, orientation } => {
                    w.put(key("shape"), shape)
                        .put(key("scale"), scale)
                        .put(key("shift"), shift)
                        .put(key("sign"), orientation.sign() as i32);
                }
                Regime::ShiftedLogNormal { mu, sigma2, shift, orientation } => {
                    w.put(key("mu"), mu)
                        .put(key("sigma2"), sigma2)
                        .put(key("shift"), shift)
                        .put(key("sign"), orientation.sign() as i32);
                }
            }
        }
        for (i, row) in self.transition.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                w.put(format!("P.{}.{}", i + 1, j + 1), p);
            }
        }
        for (i, p) in self.initial.iter().enumerate() {
            w.put(format!("pi.{}", i + 1), p);
        }
        w.finish()
    }

    /// Parses the key-value form and validates the result.
    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDocument::parse(text)?;
        let mut regimes = Vec::new();
        loop {
            let i = regimes.len() + 1;
            let Some(kind) = doc.raw(&format!("regime.{i}.kind")) else {
                break;
            };
            let f = |name: &str| doc.require::<f64>(&format!("regime.{i}.{name}"));
            let orientation = || -> Result<Orientation> {
                let s: i32 = doc.get(&format!("regime.{i}.sign"))?.unwrap_or(1);
                Orientation::from_sign(s).ok_or_else(|| MrsError::Parse {
                    line: 0,
                    message: format!("regime.{i}.sign must be 1 or -1"),
                })
            };
            let regime = match kind {
                "ar1" => Regime::Ar1 {
                    alpha: f("alpha")?,
                    phi: f("phi")?,
                    sigma2: f("sigma2")?,
                },
                "normal" => Regime::Normal {
                    mu: f("mu")?,
                    sigma2: f("sigma2")?,
                },
                "shifted_gamma" => Regime::ShiftedGamma {
                    shape: f("shape")?,
                    scale: f("scale")?,
                    shift: f("shift")?,
                    orientation: orientation()?,
                },
                "shifted_lognormal" => Regime::ShiftedLogNormal {
                    mu: f("mu")?,
                    sigma2: f("sigma2")?,
                    shift: f("shift")?,
                    orientation: orientation()?,
                },
                other => {
                    return Err(MrsError::Parse {
                        line: 0,
                        message: format!("unknown regime kind `{other}`"),
                    })
                }
            };
            regimes.push(regime);
        }
        let m = regimes.len();
        if m == 0 {
            return Err(MrsError::Parse {
                line: 0,
                message: "no `regime.1.kind` entry".into(),
            });
        }
        let mut transition = vec![vec![0.0; m]; m];
        for (i, row) in transition.iter_mut().enumerate() {
            for (j, p) in row.iter_mut().enumerate() {
                *p = doc.require(&format!("P.{}.{}", i + 1, j + 1))?;
            }
        }
        let initial = (0..m)
            .map(|i| doc.require(&format!("pi.{}", i + 1)))
            .collect::<Result<Vec<f64>>>()?;
        for key in doc.keys() {
            let known = key
                .strip_prefix("regime.")
                .and_then(|r| r.split('.').next())
                .and_then(|n| n.parse::<usize>().ok())
                .map(|n| n >= 1 && n <= m)
                .unwrap_or(true);
            if !known {
                return Err(MrsError::Parse {
                    line: 0,
                    message: format!("key `{key}` refers to a regime beyond regime.{m}"),
                });
            }
        }
        MrsModel::new(regimes, transition, initial)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MrsModel = serde_json::from_str(text)?;
        model.ensure_valid()?;
        Ok(model)
    }
}

fn check_distribution(field: &str, probs: &[f64], out: &mut Vec<Violation>) {
    for (j, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            out.push(Violation::new(
                format!("{field}.{}", j + 1),
                format!("probability must lie in [0, 1], got {p}"),
            ));
        }
    }
    let sum: f64 = probs.iter().sum();
    if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
        out.push(Violation::new(field, format!("must sum to 1, sums to {sum}")));
    }
}

/// Reference models used by the simulation studies.
pub mod presets {
    use super::*;

    /// AR(1) base (alpha 0, phi 0.75, sigma2 1) with an i.i.d. N(0, 1) regime,
    /// `p11 = p22 = 0.9`, uniform start.
    pub fn model1() -> MrsModel {
        MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.75, sigma2: 1.0 },
                Regime::Normal { mu: 0.0, sigma2: 1.0 },
            ],
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![0.5, 0.5],
        )
        .expect("preset is valid")
    }

    /// Two independent AR(1) regimes with phi 0.9 and 0.4, `p11 = p22 = 0.6`.
    pub fn model2() -> MrsModel {
        MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.9, sigma2: 1.0 },
                Regime::Ar1 { alpha: 0.0, phi: 0.4, sigma2: 1.0 },
            ],
            vec![vec![0.6, 0.4], vec![0.4, 0.6]],
            vec![0.5, 0.5],
        )
        .expect("preset is valid")
    }

    /// The model on which the EM-like approximation is biased: a persistent
    /// AR(1) base (phi 0.95, sigma2 0.2) and N(2, 1) spikes, `p11 = 0.5`,
    /// `p22 = 0.8`, always starting in the base regime.
    pub fn emlike_failure() -> MrsModel {
        MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.95, sigma2: 0.2 },
                Regime::Normal { mu: 2.0, sigma2: 1.0 },
            ],
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![1.0, 0.0],
        )
        .expect("preset is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model1_is_valid() {
        assert!(presets::model1().validate().is_empty());
    }

    #[test]
    fn unit_phi_is_one_violation() {
        let mut m = presets::model1();
        m.regimes[0] = Regime::Ar1 { alpha: 0.0, phi: 1.0, sigma2: 1.0 };
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "regime.1.phi");
    }

    #[test]
    fn short_row_is_one_violation() {
        let mut m = presets::model1();
        m.transition[1] = vec![0.09, 0.9];
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "P.2");
    }

    #[test]
    fn ar_after_iid_is_rejected() {
        let m = presets::model1().permuted(&[1, 0]);
        assert!(m.validate().iter().any(|v| v.field == "regimes"));
    }

    #[test]
    fn validate_is_idempotent() {
        let mut m = presets::model1();
        m.initial = vec![0.7, 0.7];
        assert_eq!(m.validate(), m.validate());
    }

    #[test]
    fn free_parameter_counts() {
        // AR(1): alpha, phi, sigma2; log-normal: mu, sigma2; 2x1 transitions.
        let m1_ln = MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.5, sigma2: 1.0 },
                Regime::ShiftedLogNormal { mu: 1.0, sigma2: 1.0, shift: 0.0, orientation: Orientation::Up },
            ],
            vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(m1_ln.num_free_parameters(false), 3 + 2 + 2);

        let single = MrsModel::new(
            vec![Regime::Normal { mu: 0.0, sigma2: 1.0 }],
            vec![vec![1.0]],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(single.num_free_parameters(false), 2);

        let third = 1.0 / 3.0;
        let m2_ln = MrsModel::new(
            vec![
                Regime::Ar1 { alpha: 0.0, phi: 0.5, sigma2: 1.0 },
                Regime::ShiftedLogNormal { mu: 1.0, sigma2: 1.0, shift: 1.0, orientation: Orientation::Up },
                Regime::ShiftedLogNormal { mu: 1.0, sigma2: 1.0, shift: -1.0, orientation: Orientation::Down },
            ],
            vec![vec![0.8, 0.1, 0.1], vec![0.5, 0.25, 0.25], vec![third, third, 1.0 - 2.0 * third]],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(m2_ln.num_free_parameters(false), 3 + 2 + 2 + 6);
        assert_eq!(m2_ln.num_free_parameters(true), 15);
    }

    #[test]
    fn kv_and_json_round_trip_bit_exactly() {
        let mut m = presets::model1();
        m.regimes[0] = Regime::Ar1 { alpha: -3.257, phi: 0.683_012_345_678_901_2, sigma2: 213.26 };
        m.transition = vec![vec![0.914, 1.0 - 0.914], vec![0.6055, 0.3945]];
        let kv = m.to_kv();
        let back = MrsModel::from_kv(&kv).unwrap();
        assert_eq!(back, m);
        let json = m.to_json().unwrap();
        assert_eq!(MrsModel::from_json(&json).unwrap(), m);
    }

    #[test]
    fn kv_rejects_invalid_model() {
        let kv = presets::model1().to_kv().replace("regime.1.phi = 0.75", "regime.1.phi = 1.5");
        assert!(matches!(MrsModel::from_kv(&kv), Err(MrsError::InvalidModel(_))));
    }

    #[test]
    fn ar_block_ordering_permutes_transitions() {
        let m = presets::model2().permuted(&[1, 0]);
        let ordered = m.with_ar_ordered_by_phi();
        assert_eq!(ordered, presets::model2());
    }
}
