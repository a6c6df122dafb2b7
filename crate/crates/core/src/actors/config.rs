//! Scenario configuration, loaded from JSON.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{BoolFormula, CircuitError, InputAssignment};
use crate::pvc::{FunctionBinding, SignatureBinding};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("function {name}: {source}")]
    Formula { name: String, source: CircuitError },
    #[error("{0}")]
    Invalid(String),
    #[error("{what} {name} is not defined")]
    Unknown { what: &'static str, name: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Clients talk to servers directly and verify results themselves.
    #[default]
    Standard,
    /// Clients submit jobs to a manager that owns the server pool.
    Manager,
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(Model::Standard),
            "manager" => Ok(Model::Manager),
            _ => Err(format!("unknown model {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behaviour {
    #[default]
    Honest,
    /// Random group elements in both slots, validly signed.
    Garbage,
    /// Signs an output with both slots empty.
    Withhold,
}

/// From the `from_request`-th compute request on (counting from 1), the
/// server behaves as `mode`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub from_request: u32,
    pub mode: Behaviour,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub id: String,
    /// Functions the server asks to be certified for.
    pub functions: Vec<String>,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
}

impl ServerConfig {
    pub fn mode_at(&self, request: u32) -> Behaviour {
        self.schedule
            .iter()
            .filter(|e| e.from_request <= request)
            .max_by_key(|e| e.from_request)
            .map_or(Behaviour::Honest, |e| e.mode)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobConfig {
    pub function: String,
    /// Input bits, leftmost is `x1` (`"0110"`).
    pub input: String,
    /// Standard model only: the server the first attempt goes to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub id: String,
    pub jobs: Vec<JobConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentPolicy {
    #[default]
    RoundRobin,
    Random,
    /// Lowest pseudo-random nonce wins.
    BidStub,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerConfig {
    #[serde(default = "default_manager_id")]
    pub id: String,
    #[serde(default)]
    pub policy: AssignmentPolicy,
    /// Ledger debit on a rejected output.
    #[serde(default = "default_penalty")]
    pub penalty: i64,
    #[serde(default = "default_max_reassign")]
    pub max_reassign: u32,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self {
            id: default_manager_id(),
            policy: AssignmentPolicy::default(),
            penalty: default_penalty(),
            max_reassign: default_max_reassign(),
        }
    }
}

fn default_manager_id() -> String {
    "manager".into()
}

fn default_penalty() -> i64 {
    5
}

fn default_max_reassign() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Ticks from send to delivery.
    #[serde(default = "default_latency")]
    pub latency: u64,
    /// Extra uniform delay in `0..=jitter` ticks.
    #[serde(default)]
    pub jitter: u64,
    /// Probability that a message is lost.
    #[serde(default)]
    pub drop: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latency: default_latency(),
            jitter: 0,
            drop: 0.0,
        }
    }
}

fn default_latency() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_depth")]
    pub depth: u32,
    #[serde(default)]
    pub binding: SignatureBinding,
    #[serde(default)]
    pub function_binding: FunctionBinding,
    /// Function name to formula text.
    pub functions: BTreeMap<String, String>,
    pub servers: Vec<ServerConfig>,
    pub clients: Vec<ClientConfig>,
    #[serde(default)]
    pub verifiers: Vec<String>,
    #[serde(default)]
    pub manager: Option<ManagerConfig>,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Cap on reassignment after a failed attempt in the standard model.
    #[serde(default = "default_max_reassign")]
    pub max_reassign: u32,
}

fn default_depth() -> u32 {
    4
}

/// A validated config with formulas and inputs parsed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub formulas: BTreeMap<String, BoolFormula>,
    pub inputs: BTreeMap<(String, usize), InputAssignment>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(self) -> Result<Scenario, ConfigError> {
        let mut formulas = BTreeMap::new();
        for (name, text) in &self.functions {
            let f = BoolFormula::parse(text).map_err(|source| ConfigError::Formula {
                name: name.clone(),
                source,
            })?;
            formulas.insert(name.clone(), f);
        }

        let mut ids = BTreeSet::new();
        let mut claim = |id: &str| {
            if id.is_empty() || id == super::KDC || !ids.insert(id.to_owned()) {
                return Err(ConfigError::Invalid(format!("actor id {id:?} is reserved or used twice")));
            }
            Ok(())
        };
        for s in &self.servers {
            claim(&s.id)?;
        }
        for c in &self.clients {
            claim(&c.id)?;
        }
        for v in &self.verifiers {
            claim(v)?;
        }
        if let Some(m) = &self.manager {
            claim(&m.id)?;
        }
        if self.model == Model::Manager && self.manager.is_none() {
            return Err(ConfigError::Invalid("manager model needs a manager section".into()));
        }
        if !(1..=20).contains(&self.depth) || self.servers.len() > 1 << self.depth {
            return Err(ConfigError::Invalid(format!(
                "depth {} cannot hold {} servers",
                self.depth,
                self.servers.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.network.drop) {
            return Err(ConfigError::Invalid("drop probability outside [0, 1]".into()));
        }

        let servers: BTreeMap<&str, &ServerConfig> =
            self.servers.iter().map(|s| (s.id.as_str(), s)).collect();
        for s in &self.servers {
            for f in &s.functions {
                if !formulas.contains_key(f) {
                    return Err(ConfigError::Unknown { what: "function", name: f.clone() });
                }
            }
            if s.schedule.iter().any(|e| e.from_request == 0) {
                return Err(ConfigError::Invalid(format!("server {}: requests count from 1", s.id)));
            }
        }

        let mut inputs = BTreeMap::new();
        for c in &self.clients {
            for (i, job) in c.jobs.iter().enumerate() {
                let f = formulas
                    .get(&job.function)
                    .ok_or_else(|| ConfigError::Unknown { what: "function", name: job.function.clone() })?;
                if let Some(s) = &job.server {
                    let s = servers
                        .get(s.as_str())
                        .ok_or_else(|| ConfigError::Unknown { what: "server", name: s.clone() })?;
                    if !s.functions.contains(&job.function) {
                        return Err(ConfigError::Invalid(format!(
                            "client {} job {i}: server {} is not set up for {}",
                            c.id, s.id, job.function
                        )));
                    }
                }
                let x = InputAssignment::parse(&job.input)
                    .map_err(|e| ConfigError::Invalid(format!("client {} job {i}: {e}", c.id)))?;
                if x.len() != f.arity() {
                    return Err(ConfigError::Invalid(format!(
                        "client {} job {i}: {} input bits for a function of arity {}",
                        c.id,
                        x.len(),
                        f.arity()
                    )));
                }
                inputs.insert((c.id.clone(), i), x);
            }
        }
        Ok(Scenario {
            config: self,
            formulas,
            inputs,
        })
    }
}
