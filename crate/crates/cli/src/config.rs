//! Experiment configuration: JSON with every struct closed to unknown keys.

use std::fmt;

use fkpath::feynmankac::StochasticIntegral;
use fkpath::lattice::LatticeParams;
use fkpath::spde::SpdeEquation;
use fkpath::verify::{Suite, VerifyOptions};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Input that fails validation before any numerics run.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Kernel,
    Mc,
    Lattice,
    Quench,
    Spde,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Mc => "mc",
            Command::Lattice => "lattice",
            Command::Quench => "quench",
            Command::Spde => "spde",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench: Option<QuenchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spde: Option<SpdeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

/// Horizon `t` split into `steps` uniform steps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t: f64,
    pub steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t: 1.0, steps: 64 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_paths: usize,
    /// Bridge modes `K`; absent means the exact bridge.
    pub modes: Option<usize>,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { n_paths: 10_000, modes: None, seed: VerifyOptions::default().seed }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

/// Uniform points `lo, …, hi`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Range {
    pub fn points(&self) -> Result<Vec<f64>, Invalid> {
        if self.nodes == 0 || !(self.hi >= self.lo) {
            return Err(Invalid(format!("range needs hi ≥ lo and nodes ≥ 1, got [{}, {}] with {}", self.lo, self.hi, self.nodes)));
        }
        if self.nodes == 1 {
            return Ok(vec![self.lo]);
        }
        let h = (self.hi - self.lo) / (self.nodes - 1) as f64;
        Ok((0..self.nodes).map(|i| self.lo + h * i as f64).collect())
    }
}

/// One-dimensional closed-form propagator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelKind {
    Heat,
    Ou { theta: f64 },
    Mehler { omega: f64 },
}

/// `K(y, x | t_n)` for every grid time `n ≥ 1` and every `y` in the range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub model: KernelKind,
    pub x: f64,
    pub y: Range,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    None,
    /// `u = −½ω²|x|²`.
    Harmonic { omega: f64 },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftConfig {
    #[default]
    None,
    /// `b = −θx`.
    Linear { theta: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleConfig {
    #[default]
    LeftPoint,
    Midpoint,
}

impl From<RuleConfig> for StochasticIntegral {
    fn from(r: RuleConfig) -> Self {
        match r {
            RuleConfig::LeftPoint => StochasticIntegral::LeftPoint,
            RuleConfig::Midpoint => StochasticIntegral::Midpoint,
        }
    }
}

/// Bridge estimate of `K(y, x | t)` for unit diffusion with optional drift and potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub rule: RuleConfig,
}

/// Euler–Maruyama ensemble moments of a lattice model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub model: LatticeParams,
    /// Initial state; a single value is broadcast to every site.
    pub x0: Vec<f64>,
}

/// Harmonic evolution of a partially quenched ground state along one axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchConfig {
    pub omega: Vec<f64>,
    /// Number of leading sites kept in their ground state.
    pub quenched: usize,
    /// 0-based coordinate swept by `y`; the others stay at 0.
    #[serde(default)]
    pub axis: usize,
    pub y: Range,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialField {
    Constant { value: f64 },
    Gaussian { amplitude: f64, width: f64 },
}

impl InitialField {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialField::Constant { value } => value,
            InitialField::Gaussian { amplitude, width } => amplitude * (-0.5 * (x / width).powi(2)).exp(),
        }
    }
}

/// Stochastic transport or heat equation on a periodic interval `[−L, L)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeConfig {
    pub equation: SpdeEquation,
    pub half_width: f64,
    pub nodes: usize,
    /// Q-Wiener modes; 0 runs the deterministic equation.
    pub noise_modes: usize,
    pub initial: InitialField,
    /// Emit every `every`-th time step.
    #[serde(default = "one")]
    pub every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "all_suites")]
    pub suite: Suite,
    /// Overrides every criterion's path count.
    #[serde(default)]
    pub n_paths: Option<usize>,
}

fn all_suites() -> Suite {
    Suite::All
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { suite: Suite::All, n_paths: None }
    }
}

/// Sets the leaf at a dotted path, creating intermediate objects.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<(), Invalid> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Invalid(format!("malformed override path '{path}'")));
    }
    let (leaf, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = root;
    for key in parents {
        let Value::Object(map) = node else {
            return Err(Invalid(format!("override '{path}' descends into a non-object at '{key}'")));
        };
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let Value::Object(map) = node else {
        return Err(Invalid(format!("override '{path}' descends into a non-object at '{leaf}'")));
    };
    map.insert(leaf.to_string(), value);
    Ok(())
}

pub fn parse(value: Value) -> Result<ExperimentConfig, Invalid> {
    serde_json::from_value(value).map_err(|e| Invalid(format!("invalid config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_parse_json_leaves_and_create_parents() {
        let mut v = json!({"sampling": {"seed": 1}});
        apply_override(&mut v, "sampling.seed", "7").unwrap();
        apply_override(&mut v, "output.format", "json").unwrap();
        apply_override(&mut v, "mc.x", "[0.5]").unwrap();
        assert_eq!(v, json!({"sampling": {"seed": 7}, "output": {"format": "json"}, "mc": {"x": [0.5]}}));
    }

    #[test]
    fn overrides_reject_scalars_on_the_path() {
        let mut v = json!({"sampling": {"seed": 1}});
        assert!(apply_override(&mut v, "sampling.seed.low", "3").is_err());
        assert!(apply_override(&mut v, "sampling..seed", "3").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(parse(json!({"command": "verify", "colour": 1})).is_err());
        assert!(parse(json!({"command": "verify", "sampling": {"n_paths": 2, "seed": 0, "extra": 0}})).is_err());
        assert!(parse(json!({"command": "lattice", "lattice": {"model": {"variant": "dnls", "sites": 3, "x": 0}, "x0": [1]}})).is_err());
        assert!(parse(json!({"command": "verify"})).is_ok());
        let partial = parse(json!({"command": "verify", "sampling": {"seed": 3}})).unwrap();
        assert_eq!((partial.sampling.seed, partial.sampling.n_paths), (3, SamplingConfig::default().n_paths));
    }

    #[test]
    fn ranges_include_both_ends() {
        let r = Range { lo: -1.0, hi: 1.0, nodes: 5 };
        assert_eq!(r.points().unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(Range { lo: 1.0, hi: 0.0, nodes: 3 }.points().is_err());
    }
}
