use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::Strategy;
use crate::net::{NetworkMode, WorldConfig, MAX_DELTA};
use crate::protocol::{Mode, ProtocolKind, ProtocolParams};
use crate::rng;
use crate::types::{Bit, NodeId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("bad value for `{field}`: {message}")]
    BadValue { field: String, message: String },
}

/// Input assignment for agreement runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputPreset {
    #[serde(rename = "all-0")]
    AllZero,
    #[serde(rename = "all-1")]
    AllOne,
    /// Lower half of the ids gets 0, upper half 1.
    #[serde(rename = "split")]
    Split,
    /// Independent fair bits per node, drawn from the trial seed.
    #[default]
    #[serde(rename = "random")]
    Random,
}

impl InputPreset {
    pub fn assign(self, n: u32, seed: u64) -> Vec<Bit> {
        match self {
            InputPreset::AllZero => vec![Bit::Zero; n as usize],
            InputPreset::AllOne => vec![Bit::One; n as usize],
            InputPreset::Split => (0..n).map(|i| Bit::from_bool(i >= n / 2)).collect(),
            InputPreset::Random => {
                let mut r = rng::input_stream(seed);
                (0..n).map(|_| Bit::from_bool(r.gen())).collect()
            }
        }
    }
}

impl fmt::Display for InputPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputPreset::AllZero => "all-0",
            InputPreset::AllOne => "all-1",
            InputPreset::Split => "split",
            InputPreset::Random => "random",
        })
    }
}

impl FromStr for InputPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all-0" => Ok(InputPreset::AllZero),
            "all-1" => Ok(InputPreset::AllOne),
            "split" => Ok(InputPreset::Split),
            "random" => Ok(InputPreset::Random),
            other => Err(format!("unknown input preset `{other}`")),
        }
    }
}

/// One experiment: a protocol setting, an adversary and a batch of seeds.
///
/// Stored as a flat TOML table whose keys are the field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub mode: Mode,
    pub n: u32,
    /// Corruption slack: f = ⌊(bound − epsilon)·n⌋.
    pub epsilon: f64,
    pub lambda: u32,
    /// Iteration count (sync13) or doubling period (psync13); defaults to λ.
    pub iterations: Option<u32>,
    /// Delay bound for psync13; ignored by the synchronous protocols.
    pub delta: u32,
    pub adversary: Strategy,
    pub bit_specific: bool,
    pub strongly_adaptive: bool,
    /// Run behind the broadcast front end.
    pub bb: bool,
    pub bb_sender: u32,
    pub sender_input: Bit,
    pub inputs: InputPreset,
    pub trials: u32,
    pub base_seed: u64,
    /// Round cap; defaults to 50·λ·Δ.
    pub max_rounds: Option<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: ProtocolKind::Sync12,
            mode: Mode::Committee,
            n: 300,
            epsilon: 0.1,
            lambda: 40,
            iterations: None,
            delta: 8,
            adversary: Strategy::Passive,
            bit_specific: true,
            strongly_adaptive: false,
            bb: false,
            bb_sender: 0,
            sender_input: Bit::One,
            inputs: InputPreset::Random,
            trials: 100,
            base_seed: 1,
            max_rounds: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Overrides one field from its textual form, as given on a command line.
    pub fn set(&mut self, field: &str, value: &str) -> Result<(), ConfigError> {
        let mut table = toml::Table::try_from(&*self).expect("configuration serializes");
        if !FIELDS.contains(&field) {
            return Err(ConfigError::UnknownField(field.to_string()));
        }
        let parsed = match format!("v = {value}").parse::<toml::Table>().map(|mut t| t.remove("v")) {
            Ok(Some(v)) if !matches!(v, toml::Value::Table(_) | toml::Value::Array(_)) => v,
            _ => toml::Value::String(value.to_string()),
        };
        table.insert(field.to_string(), parsed);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::BadValue { field: field.to_string(), message: e.message().to_string() })?;
        Ok(())
    }

    pub fn f(&self) -> u32 {
        let raw = (self.protocol.resilience() - self.epsilon) * self.n as f64;
        // Absorb rounding when the product is an exact integer.
        (raw + 1e-9).floor().max(0.0) as u32
    }

    pub fn iteration_param(&self) -> u32 {
        self.iterations.unwrap_or(self.lambda)
    }

    pub fn network_mode(&self) -> NetworkMode {
        if self.protocol.is_partially_synchronous() {
            NetworkMode::PartialSync { delta: self.delta }
        } else {
            NetworkMode::Sync
        }
    }

    pub fn bb_sender(&self) -> Option<NodeId> {
        self.bb.then_some(NodeId(self.bb_sender))
    }

    pub fn protocol_params(&self, seed: u64) -> ProtocolParams {
        ProtocolParams {
            kind: self.protocol,
            mode: self.mode,
            n: self.n,
            f: self.f(),
            lambda: self.lambda,
            iterations: self.iteration_param(),
            seed,
        }
    }

    pub fn world_config(&self, seed: u64) -> WorldConfig {
        let mode = self.network_mode();
        WorldConfig {
            n: self.n,
            f: self.f(),
            mode,
            strongly_adaptive: self.strongly_adaptive,
            seed,
            max_rounds: self
                .max_rounds
                .unwrap_or_else(|| WorldConfig::default_max_rounds(self.lambda, mode) + u32::from(self.bb)),
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.trials as u64).map(|k| self.base_seed.wrapping_add(k))
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let bound = self.protocol.resilience();
        if self.n < 2 {
            errs.push(format!("n: need at least 2 nodes, got {}", self.n));
        }
        if !(self.epsilon > 0.0 && self.epsilon < bound) {
            errs.push(format!("epsilon: must lie in (0, {bound:.4}) for {}, got {}", self.protocol, self.epsilon));
        }
        if self.lambda == 0 {
            errs.push("lambda: must be positive".into());
        }
        if self.mode == Mode::Committee && self.n <= self.lambda {
            errs.push(format!("lambda: committee mode needs n > lambda, got n = {} and lambda = {}", self.n, self.lambda));
        }
        if self.iterations == Some(0) {
            errs.push("iterations: must be at least 1".into());
        }
        if self.protocol.is_partially_synchronous() && !(1..=MAX_DELTA).contains(&self.delta) {
            errs.push(format!("delta: must lie in [1, {MAX_DELTA}], got {}", self.delta));
        }
        if self.trials == 0 {
            errs.push("trials: must be at least 1".into());
        }
        if self.max_rounds == Some(0) {
            errs.push("max_rounds: must be positive".into());
        }
        if self.bb && self.bb_sender >= self.n {
            errs.push(format!("bb_sender: node {} does not exist for n = {}", self.bb_sender, self.n));
        }
        match &self.adversary {
            Strategy::StaticSilence(set) => {
                if let Some(bad) = set.iter().find(|id| id.0 >= self.n) {
                    errs.push(format!("adversary: node {bad} does not exist"));
                }
            }
            Strategy::DrA | Strategy::DrAPrime => {
                if !self.bb {
                    errs.push(format!("adversary: {} runs against the broadcast front end; set bb = true", self.adversary));
                }
                if self.f() < 2 {
                    errs.push(format!("adversary: {} needs f >= 2, got {}", self.adversary, self.f()));
                }
            }
            _ => {}
        }
        if self.adversary.requires_strongly_adaptive() && !self.strongly_adaptive {
            errs.push(format!("adversary: {} needs strongly_adaptive = true", self.adversary));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

/// Every configuration key, in declaration order.
pub const FIELDS: &[&str] = &[
    "protocol",
    "mode",
    "n",
    "epsilon",
    "lambda",
    "iterations",
    "delta",
    "adversary",
    "bit_specific",
    "strongly_adaptive",
    "bb",
    "bb_sender",
    "sender_input",
    "inputs",
    "trials",
    "base_seed",
    "max_rounds",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corruption_budget_from_epsilon() {
        let mut c = ExperimentConfig { n: 300, epsilon: 0.1, ..Default::default() };
        assert_eq!(c.f(), 120);
        c.protocol = ProtocolKind::Psync13;
        assert_eq!(c.f(), 70);
        c.n = 120;
        c.protocol = ProtocolKind::Sync12;
        assert_eq!(c.f(), 48);
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let text = "protocol = \"psync13\"\nmode = \"committee\"\nn = 300\nlambda = 30\niterations = 8\ndelta = 8\nadversary = \"max-delay\"\ntrials = 200\n";
        let mut c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.protocol, ProtocolKind::Psync13);
        assert_eq!(c.iteration_param(), 8);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        c.set("adversary", "adaptive-eager:uniform").unwrap();
        c.set("trials", "5").unwrap();
        c.set("inputs", "all-1").unwrap();
        c.set("sender_input", "0").unwrap();
        assert_eq!(c.trials, 5);
        assert_eq!(c.inputs, InputPreset::AllOne);
        assert_eq!(c.sender_input, Bit::Zero);
        assert!(matches!(c.set("nodes", "3"), Err(ConfigError::UnknownField(_))));
        assert!(matches!(c.set("n", "many"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("nodes = 4").is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = ExperimentConfig { n: 30, lambda: 40, trials: 0, epsilon: 0.6, ..Default::default() };
        let Err(ConfigError::Invalid(errs)) = c.validate() else { panic!("expected errors") };
        assert_eq!(errs.len(), 3, "{errs:?}");
        let c = ExperimentConfig { adversary: Strategy::DrAPrime, ..Default::default() };
        let Err(ConfigError::Invalid(errs)) = c.validate() else { panic!("expected errors") };
        assert_eq!(errs.len(), 2, "{errs:?}");
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn presets() {
        assert_eq!(InputPreset::Split.assign(5, 0), vec![Bit::Zero, Bit::Zero, Bit::One, Bit::One, Bit::One]);
        assert_eq!(InputPreset::Random.assign(50, 3), InputPreset::Random.assign(50, 3));
        assert_ne!(InputPreset::Random.assign(50, 3), InputPreset::Random.assign(50, 4));
    }
}
