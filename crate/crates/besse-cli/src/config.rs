//! JSON configuration accepted by `besse analyze --config`.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "cap": 60,
//!   "tol_profile": "default",
//!   "index": { "metric": { "family": "round_sphere", "n": 3 }, "iterates": [1, 4] },
//!   "orientability": { "loop": "exemplar" },
//!   "ledger": { "families": [{ "tag": "CP", "parameter": 2 }], "checks": ["perfectness"] },
//!   "berger": { "n": [4, 10], "m": [1, 6] }
//! }
//! ```
//!
//! Every section is optional; unknown fields are rejected.

use besse::geodesic_engine::MetricSpec;
use besse::tol::TolProfile;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub cap: Option<usize>,
    #[serde(default)]
    pub tol_profile: Option<TolProfile>,
    #[serde(default)]
    pub index: Option<IndexJob>,
    #[serde(default)]
    pub orientability: Option<OrientJob>,
    #[serde(default)]
    pub ledger: Option<LedgerJob>,
    #[serde(default)]
    pub berger: Option<BergerJob>,
}

fn one() -> usize {
    1
}

fn per_lap() -> usize {
    512
}

fn yes() -> bool {
    true
}

fn horizon() -> f64 {
    3.0 * std::f64::consts::PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexJob {
    pub metric: MetricSpec,
    /// inclusive range of iterates
    pub iterates: [usize; 2],
    #[serde(default = "one")]
    pub geodesics: usize,
    #[serde(default = "per_lap")]
    pub per_lap: usize,
    #[serde(default = "yes")]
    pub oracle: bool,
    #[serde(default = "horizon")]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopSpec {
    Exemplar,
    Twisted { m: usize, turns: i64 },
    Conjugation { m: usize },
}

fn samples() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientJob {
    #[serde(rename = "loop")]
    pub loop_spec: LoopSpec,
    #[serde(default = "samples")]
    pub samples: usize,
    #[serde(default)]
    pub iterates: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub tag: String,
    #[serde(default)]
    pub parameter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Perfectness,
    Lacunarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerJob {
    pub families: Vec<FamilySpec>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub m: usize,
    pub dim_c: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BergerJob {
    #[serde(default)]
    pub n: Option<[usize; 2]>,
    #[serde(default)]
    pub m: Option<[usize; 2]>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config, CliError> {
        let c: Config = serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |s: String| Err(CliError::Input(s));
        if let Some(j) = &self.index {
            let [a, b] = j.iterates;
            if a == 0 || b < a {
                return bad(format!("index.iterates must be 1 ≤ a ≤ b, got [{a}, {b}]"));
            }
            if j.geodesics == 0 {
                return bad("index.geodesics must be positive".into());
            }
            j.metric.validate()?;
        }
        if let Some(j) = &self.ledger {
            if j.families.is_empty() {
                return bad("ledger.families is empty".into());
            }
        }
        if let Some(j) = &self.berger {
            for r in [j.n, j.m].into_iter().flatten() {
                if r[1] < r[0] {
                    return bad(format!("berger range [{}, {}] is empty", r[0], r[1]));
                }
            }
            if j.n.is_some() != j.m.is_some() {
                return bad("berger.n and berger.m go together".into());
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_none() && self.orientability.is_none() && self.ledger.is_none() && self.berger.is_none()
    }
}
