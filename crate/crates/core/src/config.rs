//! Experiment configuration: a TOML file whose keys can each be overridden
//! by dotted path (`objective.epochs = 20`, `ttr.skip-threshold = 0.1`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{GenConfig, NoiseConfig};
use crate::eval::Direction;
use crate::objective::{LossSettings, Variant};
use crate::{Result, RuleError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_embed: usize,
    pub tau: f64,
    /// Balance between certainty and consensus in the reliability weight.
    pub balance: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_embed: 32,
            tau: 0.07,
            balance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    pub beta: f64,
    pub variant: Variant,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: 1e-4,
            beta: 0.3,
            variant: Variant::Mse,
            warmup_epochs: 5,
            epochs: 100,
            lr: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Mock,
    Http,
    Replay,
}

impl FromStr for Backend {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(Backend::Mock),
            "http" => Ok(Backend::Http),
            "replay" => Ok(Backend::Replay),
            other => Err(RuleError::Config(format!("unknown reasoner backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtrConfig {
    pub enabled: bool,
    pub backend: Backend,
    pub k: usize,
    pub skip_threshold: f64,
    /// Re-asks after a malformed answer before falling back to the neutral score.
    pub retries: usize,
    pub parallelism: usize,
    /// Prompt with names and both rethinking sections.
    pub all_attributes: bool,
    /// Chance that the mock reasoner answers at random.
    pub mock_error_rate: f64,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token for the http backend.
    pub token_env: String,
    pub timeout_secs: u64,
    /// Transport attempts per call, with exponential backoff in between.
    pub max_attempts: usize,
    pub backoff_ms: u64,
    /// Response log replayed by the replay backend.
    pub replay_log: Option<String>,
}

impl Default for TtrConfig {
    fn default() -> Self {
        TtrConfig {
            enabled: false,
            backend: Backend::Mock,
            k: 8,
            skip_threshold: 0.2,
            retries: 2,
            parallelism: 4,
            all_attributes: false,
            mock_error_rate: 0.0,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "reasoner".into(),
            token_env: "RULE_REASONER_TOKEN".into(),
            timeout_secs: 60,
            max_attempts: 4,
            backoff_ms: 500,
            replay_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Division-based robust learning; off means every anchor counts as clean.
    pub drl: bool,
    /// Reliability-weighted fusion; off means plain concatenation.
    pub drf: bool,
    /// Keep only the uncertainty split (no consensus refinement).
    pub only_unc: bool,
    /// Keep only the consensus split (no high-uncertainty exclusion).
    pub only_cons: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Ablation::Full.flags()
    }
}

/// Named ablation presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    WoDrl,
    WoDrf,
    OnlyUnc,
    OnlyCons,
    /// Neither robust learning nor weighted fusion.
    Baseline,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Full,
        Ablation::WoDrl,
        Ablation::WoDrf,
        Ablation::OnlyUnc,
        Ablation::OnlyCons,
        Ablation::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::WoDrl => "wo_drl",
            Ablation::WoDrf => "wo_drf",
            Ablation::OnlyUnc => "only_unc",
            Ablation::OnlyCons => "only_cons",
            Ablation::Baseline => "baseline",
        }
    }

    pub fn flags(self) -> AblationConfig {
        let (drl, drf, only_unc, only_cons) = match self {
            Ablation::Full => (true, true, false, false),
            Ablation::WoDrl => (false, true, false, false),
            Ablation::WoDrf => (true, false, false, false),
            Ablation::OnlyUnc => (true, true, true, false),
            Ablation::OnlyCons => (true, true, false, true),
            Ablation::Baseline => (false, false, false, false),
        };
        AblationConfig {
            drl,
            drf,
            only_unc,
            only_cons,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| RuleError::Config(format!("unknown ablation {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Seeds of a multi-seed sweep.
    pub seeds: Vec<u64>,
    /// Generator settings; its own `seed` is replaced by the run seed.
    pub data: GenConfig,
    pub noise: NoiseConfig,
    pub model: ModelConfig,
    pub objective: ObjectiveConfig,
    pub ttr: TtrConfig,
    pub ablation: AblationConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            seeds: vec![7, 8, 9],
            data: GenConfig::default(),
            noise: NoiseConfig::default(),
            model: ModelConfig::default(),
            objective: ObjectiveConfig::default(),
            ttr: TtrConfig::default(),
            ablation: AblationConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| RuleError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RuleError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            RuleError::Config(msg) => RuleError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation.flags();
        self
    }

    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            variant: self.objective.variant,
            lambda: self.objective.lambda,
            tau: self.model.tau,
        }
    }

    /// Sets the key at a dotted path; dashes in the path read as underscores.
    /// The value is parsed as a TOML value, falling back to a bare string.
    pub fn apply_override(&mut self, path: &str, raw: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| RuleError::Config(e.to_string()))?;
        let keys: Vec<String> = path.split('.').map(|k| k.replace('-', "_")).collect();
        let unknown = || RuleError::Config(format!("unknown config key {path:?}"));
        let (last, parents) = keys.split_last().ok_or_else(unknown)?;
        let mut table = root.as_table_mut().ok_or_else(unknown)?;
        for key in parents {
            table = table.get_mut(key).and_then(|v| v.as_table_mut()).ok_or_else(unknown)?;
        }
        // unset optional keys are absent from the serialized table
        let slot = table.entry(last.clone()).or_insert_with(|| toml::Value::String(String::new()));
        let value = raw.parse::<toml::Value>().unwrap_or_else(|_| toml::Value::String(raw.to_string()));
        *slot = match (&*slot, value) {
            // allow integer literals for float keys
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (toml::Value::String(_), v) if !v.is_str() => toml::Value::String(raw.to_string()),
            (_, v) => v,
        };
        let updated: ExperimentConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| RuleError::Config(format!("bad value {raw:?} for {path}: {}", e.message())))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(RuleError::Config(msg));
        if self.model.tau <= 0.0 {
            return fail(format!("model.tau must be positive, got {}", self.model.tau));
        }
        if !(0.0..=1.0).contains(&self.model.balance) {
            return fail(format!("model.balance must lie in [0,1], got {}", self.model.balance));
        }
        if self.model.d_embed == 0 {
            return fail("model.d_embed must be positive".into());
        }
        if !(0.0..=0.5).contains(&self.objective.beta) {
            return fail(format!("objective.beta must lie in [0,0.5], got {}", self.objective.beta));
        }
        if self.objective.lambda < 0.0 || self.objective.lr <= 0.0 {
            return fail("objective.lambda must be non-negative and objective.lr positive".into());
        }
        if self.objective.batch_size == 0 {
            return fail("objective.batch_size must be positive".into());
        }
        if self.ablation.only_unc && self.ablation.only_cons {
            return fail("ablation.only_unc and ablation.only_cons are mutually exclusive".into());
        }
        if self.ttr.k == 0 || self.ttr.parallelism == 0 || self.ttr.max_attempts == 0 {
            return fail("ttr.k, ttr.parallelism and ttr.max_attempts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.ttr.mock_error_rate) {
            return fail("ttr.mock_error_rate must lie in [0,1]".into());
        }
        let as_config = |e: RuleError| match e {
            RuleError::InvalidArgument(msg) => RuleError::Config(msg),
            other => other,
        };
        self.data.validate().map_err(as_config)?;
        self.noise.validate().map_err(as_config)?;
        Ok(())
    }
}
