//! Run configuration. One TOML document fully determines a simulation:
//! the arena shape (iterations, batch, group), the learning policy, the
//! frozen opponent pool, the judge, and the master seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judging::{JudgeKind, JudgeModel, LengthDistribution};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// The learning agent. Its rating starts at `init_elo`; its responses are
/// Normal(init_skill, spread^2) in quality with word counts from `words`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub init_skill: f64,
    pub spread: f64,
    #[serde(default = "default_policy_elo")]
    pub init_elo: f64,
    #[serde(default = "default_words")]
    pub words: LengthDistribution,
}

/// One frozen opponent: fixed rating seed and a fixed response-quality
/// distribution used when its responses are cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub skill: f64,
    pub spread: f64,
    pub init_elo: f64,
    #[serde(default = "default_words")]
    pub words: LengthDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKindSpec {
    Thurstone,
    Absolute,
    Remote,
}

/// Judge selection plus kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSpec {
    pub kind: JudgeKindSpec,
    #[serde(default)]
    pub sigma_comp: Option<f64>,
    #[serde(default)]
    pub sigma_abs: Option<f64>,
    /// Remote judge endpoint; the ELO_ARENA_JUDGE_URL environment variable
    /// overrides it at client construction.
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub max_in_flight: Option<usize>,
}

impl JudgeSpec {
    /// Simulated judge model for this spec; remote judges have no simulated
    /// model and are constructed through the gateway instead.
    pub fn to_model(&self) -> Result<JudgeModel, ConfigError> {
        match self.kind {
            JudgeKindSpec::Thurstone => {
                let sigma = self
                    .sigma_comp
                    .ok_or_else(|| invalid("judge.sigma_comp is required for kind \"thurstone\""))?;
                JudgeModel::thurstone(sigma).map_err(|e| invalid(e.to_string()))
            }
            JudgeKindSpec::Absolute => {
                let sigma = self
                    .sigma_abs
                    .ok_or_else(|| invalid("judge.sigma_abs is required for kind \"absolute\""))?;
                JudgeModel::noisy_absolute(sigma).map_err(|e| invalid(e.to_string()))
            }
            JudgeKindSpec::Remote => Ok(JudgeModel {
                kind: JudgeKind::Remote,
                sigma_comp: 0.0,
                sigma_abs: 0.0,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: u32,
    /// Prompts drawn per iteration (with replacement).
    pub batch_size: u32,
    /// Outputs sampled per prompt; advantage normalization needs >= 2.
    #[serde(default = "default_group_size")]
    pub group_size: u32,
    /// Matchmaking temperature in rating points.
    pub temperature: f64,
    #[serde(default = "default_k_factor")]
    pub k_factor: f64,
    #[serde(default = "default_clip_epsilon")]
    pub clip_epsilon: f64,
    #[serde(default = "default_kl_beta")]
    pub kl_beta: f64,
    /// Step size for the surrogate's skill updates. There is no canonical
    /// value; the default suits quality scales around 1.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Word-count margin beyond which a policy win is revoked.
    #[serde(default = "default_length_guard")]
    pub length_guard: u32,
    pub policy: PolicySpec,
    pub opponents: Vec<AgentSpec>,
    pub judge: JudgeSpec,
}

fn default_policy_elo() -> f64 {
    1350.0
}
fn default_words() -> LengthDistribution {
    LengthDistribution::Uniform { min: 80, max: 120 }
}
fn default_group_size() -> u32 {
    crate::policy::DEFAULT_GROUP_SIZE
}
fn default_k_factor() -> f64 {
    crate::rating::DEFAULT_K_FACTOR
}
fn default_clip_epsilon() -> f64 {
    crate::policy::DEFAULT_CLIP_EPSILON
}
fn default_kl_beta() -> f64 {
    crate::policy::DEFAULT_KL_BETA
}
fn default_learning_rate() -> f64 {
    0.05
}
fn default_length_guard() -> u32 {
    crate::judging::DEFAULT_LENGTH_GUARD
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if self.group_size < 2 {
            return Err(invalid(
                "group_size must be at least 2: a single output has no group statistics",
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(invalid(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if !(self.k_factor.is_finite() && self.k_factor > 0.0) {
            return Err(invalid(format!(
                "k_factor must be positive and finite, got {}",
                self.k_factor
            )));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(invalid(format!(
                "clip_epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if !(self.kl_beta.is_finite() && self.kl_beta >= 0.0) {
            return Err(invalid(format!(
                "kl_beta must be non-negative and finite, got {}",
                self.kl_beta
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid(format!(
                "learning_rate must be non-negative and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.policy.spread.is_finite() && self.policy.spread > 0.0) {
            return Err(invalid(format!(
                "policy.spread must be positive and finite, got {}",
                self.policy.spread
            )));
        }
        if !self.policy.init_skill.is_finite() || !self.policy.init_elo.is_finite() {
            return Err(invalid("policy skill and rating must be finite"));
        }
        self.policy
            .words
            .validate()
            .map_err(|e| invalid(format!("policy.words: {e}")))?;

        if self.opponents.is_empty() {
            return Err(invalid("at least one opponent is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for opp in &self.opponents {
            if opp.id.is_empty() {
                return Err(invalid("opponent ids must not be empty"));
            }
            if opp.id == crate::orchestrator::POLICY_AGENT_ID {
                return Err(invalid(format!(
                    "opponent id `{}` collides with the reserved policy id",
                    opp.id
                )));
            }
            if !seen.insert(opp.id.as_str()) {
                return Err(invalid(format!("duplicate opponent id `{}`", opp.id)));
            }
            if !opp.skill.is_finite() || !opp.init_elo.is_finite() {
                return Err(invalid(format!(
                    "opponent `{}` skill and rating must be finite",
                    opp.id
                )));
            }
            if !(opp.spread.is_finite() && opp.spread >= 0.0) {
                return Err(invalid(format!(
                    "opponent `{}` spread must be non-negative and finite",
                    opp.id
                )));
            }
            opp.words
                .validate()
                .map_err(|e| invalid(format!("opponent `{}` words: {e}", opp.id)))?;
        }

        match self.judge.kind {
            JudgeKindSpec::Thurstone | JudgeKindSpec::Absolute => {
                self.judge.to_model()?;
            }
            JudgeKindSpec::Remote => {
                let env_url = std::env::var("ELO_ARENA_JUDGE_URL").ok();
                if self.judge.base_url.is_none() && env_url.is_none() {
                    return Err(invalid(
                        "remote judge needs judge.base_url or ELO_ARENA_JUDGE_URL",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn opponent_ids(&self) -> Vec<String> {
        self.opponents.iter().map(|o| o.id.clone()).collect()
    }
}
