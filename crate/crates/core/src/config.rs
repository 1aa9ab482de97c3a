use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::kv::{KvDocument, KvWriter};

/// Settings for EM fitting and its multistart driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Stop once the loglik increase or the sup-norm parameter step drops below this.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Counter cap `D`; `None` runs the exact algorithm.
    pub truncation: Option<usize>,
    /// Lower bound on every variance. `None` means `1e-8 * var(x)`.
    pub sigma2_floor: Option<f64>,
    /// Transition probabilities are kept in `[delta, 1 - delta]`.
    pub delta: f64,
    pub seed: u64,
    /// Keep the initial distribution fixed instead of re-estimating it.
    pub freeze_initial: bool,
    /// Apply the variance floor and transition bounds. Disabling them exposes
    /// the degenerate likelihood maxima at the parameter boundary.
    pub guards: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1.5e-8,
            max_iters: 1000,
            restarts: 1,
            truncation: None,
            sigma2_floor: None,
            delta: 1e-4,
            seed: 0,
            freeze_initial: false,
            guards: true,
        }
    }
}

pub const RELATIVE_SIGMA2_FLOOR: f64 = 1e-8;

impl EmConfig {
    /// Checks the settings against a model with `k` AR(1) regimes.
    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |m: String| Err(MrsError::InvalidConfig(m));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad(format!("delta must lie in (0, 0.5), got {}", self.delta));
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1".into());
        }
        if let Some(d) = self.truncation {
            if d <= k {
                return bad(format!("truncation {d} must exceed the number of AR regimes {k}"));
            }
        }
        if let Some(f) = self.sigma2_floor {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("sigma2_floor must be > 0, got {f}"));
            }
        }
        Ok(())
    }

    /// The variance floor to use on data `x`, or 0 when guards are off.
    pub fn resolved_sigma2_floor(&self, x: &[f64]) -> f64 {
        if !self.guards {
            return 0.0;
        }
        match self.sigma2_floor {
            Some(f) => f,
            None => {
                let floor = RELATIVE_SIGMA2_FLOOR * sample_variance(x);
                if floor > 0.0 {
                    floor
                } else {
                    f64::MIN_POSITIVE
                }
            }
        }
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("EM configuration");
        w.put("tol", self.tol)
            .put("max_iters", self.max_iters)
            .put("restarts", self.restarts)
            .put("truncation", opt_display(self.truncation, "none"))
            .put("sigma2_floor", opt_display(self.sigma2_floor, "auto"))
            .put("delta", self.delta)
            .put("seed", self.seed)
            .put("freeze_initial", self.freeze_initial)
            .put("guards", self.guards);
        w.finish()
    }

    /// Parses a key-value config; absent keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDocument::parse(text)?;
        let mut c = EmConfig::default();
        if let Some(v) = doc.get("tol")? {
            c.tol = v;
        }
        if let Some(v) = doc.get("max_iters")? {
            c.max_iters = v;
        }
        if let Some(v) = doc.get("restarts")? {
            c.restarts = v;
        }
        if let Some(v) = doc.raw("truncation") {
            c.truncation = parse_optional(v, "none", "truncation")?;
        }
        if let Some(v) = doc.raw("sigma2_floor") {
            c.sigma2_floor = parse_optional(v, "auto", "sigma2_floor")?;
        }
        if let Some(v) = doc.get("delta")? {
            c.delta = v;
        }
        if let Some(v) = doc.get("seed")? {
            c.seed = v;
        }
        if let Some(v) = doc.get("freeze_initial")? {
            c.freeze_initial = v;
        }
        if let Some(v) = doc.get("guards")? {
            c.guards = v;
        }
        for key in doc.keys() {
            if !KNOWN_KEYS.contains(&key) {
                return Err(MrsError::Parse {
                    line: 0,
                    message: format!("unknown config key `{key}`"),
                });
            }
        }
        Ok(c)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "tol",
    "max_iters",
    "restarts",
    "truncation",
    "sigma2_floor",
    "delta",
    "seed",
    "freeze_initial",
    "guards",
];

fn opt_display<T: fmt::Display>(v: Option<T>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |v| v.to_string())
}

fn parse_optional<T: std::str::FromStr>(v: &str, none: &str, key: &str) -> Result<Option<T>> {
    if v == none {
        return Ok(None);
    }
    v.parse().map(Some).map_err(|_| MrsError::Parse {
        line: 0,
        message: format!("`{key}` must be a number or `{none}`, got `{v}`"),
    })
}

/// Population variance (divides by n).
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
