//! Per-command JSON schemas. Every object rejects unknown fields; see `docs/config.md`.

use qtazrp::model::RateProfile;
use qtazrp::qalgebra::QParam;
use serde::{Deserialize, Serialize};

/// Inclusive integer range `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntRange {
    pub from: i64,
    pub to: i64,
}

impl IntRange {
    pub fn values(&self) -> Vec<i64> {
        (self.from..=self.to).collect()
    }

    pub fn check(&self, what: &str) -> Result<(), String> {
        if self.from > self.to {
            return Err(format!("{what}: from ({}) exceeds to ({})", self.from, self.to));
        }
        if self.to - self.from > 10_000 {
            return Err(format!("{what}: more than 10001 values"));
        }
        Ok(())
    }
}

/// `steps` equally spaced points from `from` to `to` inclusive, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RealGrid {
    List(Vec<f64>),
    Range(RealRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealRange {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl RealGrid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let v = match self {
            RealGrid::List(v) => v.clone(),
            RealGrid::Range(r) => {
                if r.steps < 2 || r.steps > 100_000 {
                    return Err(format!("grid needs 2..=100000 steps, got {}", r.steps));
                }
                (0..r.steps).map(|i| r.from + (r.to - r.from) * i as f64 / (r.steps - 1) as f64).collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err("grid must be nonempty and finite".into());
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Finitely many particles at the listed positions (weakly decreasing).
    Finite(Vec<i64>),
    /// Infinitely many particles at 0; the first `tracked` labels are reported.
    Step { tracked: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub profile: RateProfile,
    pub initial: InitialSpec,
    pub t: f64,
    pub m: IntRange,
    #[serde(default)]
    pub samples: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// `P_Y(X; t)` for each target in `x`.
    Transition,
    /// `P(x_n > M)` on the large circle.
    TaggedRight,
    /// `P(x_{N-n+1} <= M)` on the nested circles.
    TaggedLeft,
    /// `P(x_N > M)`.
    Leftmost,
    /// `P(x_1 <= M)`.
    Rightmost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    pub formula: Formula,
    pub profile: RateProfile,
    pub y: Vec<i64>,
    pub t: f64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<IntRange>,
    #[serde(default)]
    pub x: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDistConfig {
    pub profile: RateProfile,
    /// Particle index `m >= 1`.
    pub particle: usize,
    pub t: f64,
    pub m: IntRange,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitDistConfig {
    pub q: QParam,
    pub particle: usize,
    pub tau: RealGrid,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub q: QParam,
    pub tau: f64,
    #[serde(default)]
    pub betas: Vec<f64>,
    /// `[re, im]`.
    pub zeta: [f64; 2],
    pub n: Vec<usize>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub samples: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub q: QParam,
    #[serde(default = "one")]
    pub alpha: f64,
    pub theta: RealGrid,
}

fn one() -> f64 {
    1.0
}

/// Top-level configuration file: the command's parameters plus run-wide settings. Flags
/// given on the command line take precedence over `seed` and `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub parameters: serde_json::Value,
}
