//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "model": "additive",
//!   "measures": {
//!     "mu": { "kind": "atomic", "carrier": "real",
//!             "atoms": [{ "location": -3, "weight": 0.5 }, { "location": 3, "weight": 0.5 }] },
//!     "s":  { "kind": "semicircle", "center": 0, "radius": 2 }
//!   },
//!   "a_side": { "measure": "mu", "spikes": [-5, 6] },
//!   "b_side": { "measure": "s", "spikes": "2 + 10/k for k = 1..100", "bulk": "gue" },
//!   "sizes": [1000],
//!   "trials": 20,
//!   "seed": 42
//! }
//! ```
//!
//! Optional keys: `tolerances` (`eps_cut`, `window`, `escape_eps`,
//! `level`), `histogram_bin_width`, `output_dir`, `extra_predictions`,
//! and per side `growth`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{VerifyOptions, DEFAULT_ESCAPE_EPS, DEFAULT_LEVEL, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::freeconv::SubordinationPair;
use crate::measures::Measure;
use crate::outliers::{Growth, OutlierPrediction, PredictOptions, SpikeSchedule, DEFAULT_EPS_CUT};
use crate::rmt::{BulkMode, Model, ModelSpec, SideSpec};

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

/// Explicit spike values, or `"a + b/k for k = m..n"` (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpikeList {
    Explicit(Vec<f64>),
    Generator(String),
}

impl Default for SpikeList {
    fn default() -> Self {
        SpikeList::Explicit(Vec::new())
    }
}

impl SpikeList {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            SpikeList::Explicit(v) => Ok(v.clone()),
            SpikeList::Generator(s) => parse_generator(s),
        }
    }
}

/// Expands `a + b/k for k = m..n`; `-` in place of `+`, a missing `a`
/// and `..=` are accepted.
pub fn parse_generator(expr: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::Config(format!("spike generator {expr:?}: {why}"));
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let (term, range) = compact.split_once("fork=").ok_or_else(|| bad("expected `<term> for k = m..n`"))?;
    let (m, n) = range.split_once("..").ok_or_else(|| bad("expected a range m..n"))?;
    let n = n.strip_prefix('=').unwrap_or(n);
    let m: u64 = m.parse().map_err(|_| bad("range start is not a positive integer"))?;
    let n: u64 = n.parse().map_err(|_| bad("range end is not a positive integer"))?;
    if m == 0 || m > n {
        return Err(bad("need 1 ≤ m ≤ n"));
    }
    let body = term.strip_suffix("/k").ok_or_else(|| bad("term must end in `/k`"))?;
    // split at the last sign that is not part of an exponent or the leading sign
    let split = body
        .char_indices()
        .filter(|&(i, c)| (c == '+' || c == '-') && i > 0 && !matches!(body.as_bytes()[i - 1], b'e' | b'E'))
        .map(|(i, _)| i)
        .next_back();
    let (a, b) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let a: f64 = a.parse().map_err(|_| bad("constant term is not a number"))?;
    let b: f64 = b.strip_prefix('+').unwrap_or(b).parse().map_err(|_| bad("coefficient of 1/k is not a number"))?;
    Ok((m..=n).map(|k| a + b / k as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideConfig {
    /// Key into `measures`.
    pub measure: String,
    #[serde(default)]
    pub spikes: SpikeList,
    #[serde(default)]
    pub growth: Growth,
    #[serde(default)]
    pub bulk: BulkMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub eps_cut: f64,
    pub window: f64,
    pub escape_eps: f64,
    pub level: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eps_cut: DEFAULT_EPS_CUT, window: DEFAULT_WINDOW, escape_eps: DEFAULT_ESCAPE_EPS, level: DEFAULT_LEVEL }
    }
}

fn one() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub measures: BTreeMap<String, Measure>,
    pub a_side: SideConfig,
    pub b_side: SideConfig,
    /// Matrix sizes, strictly increasing.
    pub sizes: Vec<usize>,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_bin_width: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Added to the computed predictions when verifying.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_predictions: Vec<OutlierPrediction>,
}

impl ExperimentConfig {
    /// Parses and validates. JSON errors carry line and column.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for side in [&self.a_side, &self.b_side] {
            if !self.measures.contains_key(&side.measure) {
                return Err(Error::Config(format!("measure {:?} is not declared", side.measure)));
            }
            side.spikes.values()?;
        }
        if self.sizes.is_empty() || self.sizes[0] == 0 {
            return Err(Error::Config("sizes must be a nonempty list of positive integers".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sizes must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        let t = &self.tolerances;
        if !(t.eps_cut > 0.0 && t.window > 0.0 && t.escape_eps > 0.0 && (0.0..=1.0).contains(&t.level)) {
            return Err(Error::Config(format!("invalid tolerances {t:?}")));
        }
        if let Some(w) = self.histogram_bin_width {
            if !(w > 0.0) {
                return Err(Error::Config("histogram_bin_width must be positive".into()));
            }
        }
        for &n in &self.sizes {
            self.model_spec(n)?
                .validate()
                .map_err(|e| Error::Config(format!("model at size {n}: {e}")))?;
        }
        self.pair().map_err(|e| Error::Config(format!("measure pair: {e}")))?;
        Ok(())
    }

    fn side_measure(&self, side: &SideConfig) -> Result<Measure> {
        self.measures
            .get(&side.measure)
            .cloned()
            .ok_or_else(|| Error::Config(format!("measure {:?} is not declared", side.measure)))
    }

    fn schedule(&self, side: &SideConfig) -> Result<SpikeSchedule> {
        SpikeSchedule::new(side.spikes.values()?, side.growth, self.side_measure(side)?)
            .map_err(|e| Error::Config(format!("spikes on measure {:?}: {e}", side.measure)))
    }

    pub fn a_schedule(&self) -> Result<SpikeSchedule> {
        self.schedule(&self.a_side)
    }

    pub fn b_schedule(&self) -> Result<SpikeSchedule> {
        self.schedule(&self.b_side)
    }

    pub fn model_spec(&self, n: usize) -> Result<ModelSpec> {
        Ok(ModelSpec {
            model: self.model,
            a_side: SideSpec { schedule: self.a_schedule()?, bulk: self.a_side.bulk },
            b_side: SideSpec { schedule: self.b_schedule()?, bulk: self.b_side.bulk },
            n,
            seed: self.seed,
        })
    }

    /// The pair `(μ, ν)` of the A- and B-side base measures.
    pub fn pair(&self) -> Result<SubordinationPair> {
        SubordinationPair::new(self.model.conv_type(), self.side_measure(&self.a_side)?, self.side_measure(&self.b_side)?)
    }

    pub fn predict_options(&self, n: Option<usize>) -> PredictOptions {
        PredictOptions { present_at: n, ..PredictOptions::with_eps_cut(self.tolerances.eps_cut) }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        let t = &self.tolerances;
        VerifyOptions { window: t.window, escape_eps: t.escape_eps, level: t.level }
    }

    pub fn bin_width(&self) -> f64 {
        self.histogram_bin_width.unwrap_or(DEFAULT_BIN_WIDTH)
    }
}
