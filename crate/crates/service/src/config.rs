//! Service configuration, read from a TOML file.
//!
//! Every key is optional. A complete file with the defaults:
//!
//! ```toml
//! corpus = "corpus.jsonl"        # relative paths resolve against the data dir
//! clips_per_domain = 32
//! clip_policy = "uniform_random_action"
//! seed = 0
//! port = 8080
//! horizon = 8
//! hci_population = 25
//!
//! [reward]
//! activation = "leaky_relu"
//! closure_pairs = false
//!
//! [reward.train]
//! learning_rate = 0.001
//! epochs = 200
//! batch_size = 16
//! l2 = 0.0001
//! val_fraction = 0.1
//!
//! [agent]
//! kind = "actor_critic"          # or "q_table"
//! beta = 0.5
//! steps = 50000
//!
//! [agent.actor_critic]
//! workers = 4
//! n_step = 5
//! gamma = 0.95
//! entropy_coef = 0.01
//! value_coef = 0.5
//! learning_rate = 0.0003
//! max_grad_norm = 1.0
//!
//! [agent.q_table]
//! alpha = 0.1
//! gamma = 0.95
//! epsilon_start = 1.0
//! epsilon_end = 0.05
//! epsilon_decay_steps = 20000
//! ```
//!
//! Seeds inside the nested tables are ignored; per-user seeds are derived
//! from the top-level `seed`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use aui_core::agents::{ACConfig, QConfig};
use aui_core::env::ClipPolicy;
use aui_core::nn::Activation;
use aui_core::reward::TrainConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "aui.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    ActorCritic,
    QTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub activation: Activation,
    /// Train on the transitive closure of the ranking instead of asked pairs only.
    pub closure_pairs: bool,
    pub train: TrainConfig,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            activation: Activation::LeakyRelu,
            closure_pairs: false,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentKind,
    pub beta: f64,
    pub steps: usize,
    pub actor_critic: ACConfig,
    pub q_table: QConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            kind: AgentKind::ActorCritic,
            beta: 0.5,
            steps: 50_000,
            actor_critic: ACConfig::default(),
            q_table: QConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub clips_per_domain: usize,
    pub clip_policy: ClipPolicy,
    pub seed: u64,
    pub port: u16,
    pub horizon: usize,
    /// Size of the persona population standing in for the engagement model.
    pub hci_population: usize,
    pub reward: RewardSection,
    pub agent: AgentSection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            clips_per_domain: 32,
            clip_policy: ClipPolicy::UniformRandomAction,
            seed: 0,
            port: 8080,
            horizon: aui_core::env::DEFAULT_HORIZON,
            hci_population: 25,
            reward: RewardSection::default(),
            agent: AgentSection::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(s: &str) -> anyhow::Result<Self> {
        let cfg: ServiceConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `explicit` if given, else `<data>/aui.toml` if present, else defaults.
    pub fn load(data_dir: &Path, explicit: Option<&Path>) -> anyhow::Result<Self> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = data_dir.join(CONFIG_FILE);
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.clips_per_domain < 2 {
            bail!("clips_per_domain must be at least 2");
        }
        if self.horizon == 0 {
            bail!("horizon must be at least 1");
        }
        if self.hci_population == 0 {
            bail!("hci_population must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.agent.beta) {
            bail!("agent.beta must lie in [0, 1]");
        }
        if self.agent.steps == 0 {
            bail!("agent.steps must be at least 1");
        }
        self.reward.train.validate()?;
        self.agent.actor_critic.validate()?;
        self.agent.q_table.validate()?;
        Ok(())
    }

    pub fn corpus_path(&self, data_dir: &Path) -> PathBuf {
        if self.corpus.is_absolute() {
            self.corpus.clone()
        } else {
            data_dir.join(&self.corpus)
        }
    }
}
