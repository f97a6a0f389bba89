//! Fixed-horizon MDP over UI configurations and the offline clip corpus.

use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Rng};
use crate::ui::{apply_action, AdaptationAction, ContextModel, Domain, UiConfig};

pub const DEFAULT_HORIZON: usize = 8;
pub const CLIP_LEN: usize = 8;
pub const DEFAULT_MS_PER_STEP: u32 = 500;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode exhausted")]
    Exhausted,
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("invalid clip {id}: {reason}")]
    InvalidClip { id: String, reason: String },
    #[error("corpus line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar reward for taking `action` in `state`. Implementations must be pure
/// for a fixed configuration so that they can be shared across workers.
pub trait RewardProvider: Send + Sync {
    fn reward(
        &self,
        domain: Domain,
        state: &UiConfig,
        action: AdaptationAction,
        ctx: &ContextModel,
    ) -> f64;
}

impl<F> RewardProvider for F
where
    F: Fn(Domain, &UiConfig, AdaptationAction, &ContextModel) -> f64 + Send + Sync,
{
    fn reward(
        &self,
        domain: Domain,
        state: &UiConfig,
        action: AdaptationAction,
        ctx: &ContextModel,
    ) -> f64 {
        self(domain, state, action, ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantReward(pub f64);

impl RewardProvider for ConstantReward {
    fn reward(&self, _: Domain, _: &UiConfig, _: AdaptationAction, _: &ContextModel) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    FixedDefault,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub domain: Domain,
    pub horizon: usize,
    pub start: StartMode,
    pub seed: u64,
    pub context: ContextModel,
}

impl EpisodeConfig {
    pub fn new(domain: Domain) -> Self {
        EpisodeConfig {
            domain,
            horizon: DEFAULT_HORIZON,
            start: StartMode::UniformRandom,
            seed: 0,
            context: ContextModel::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_start(mut self, start: StartMode) -> Self {
        self.start = start;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_context(mut self, context: ContextModel) -> Self {
        self.context = context;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: UiConfig,
    pub reward: f64,
    pub done: bool,
}

/// Single-owner episode state. Successive `reset` calls draw successive start
/// states from the seeded stream.
#[derive(Debug, Clone)]
pub struct AdaptEnv {
    cfg: EpisodeConfig,
    rng: Rng,
    state: UiConfig,
    steps: usize,
}

impl AdaptEnv {
    pub fn new(cfg: EpisodeConfig) -> Result<Self, EnvError> {
        if cfg.horizon == 0 {
            return Err(EnvError::Horizon);
        }
        let rng = rng::seeded(cfg.seed);
        Ok(AdaptEnv {
            cfg,
            rng,
            state: UiConfig::default(),
            steps: 0,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn domain(&self) -> Domain {
        self.cfg.domain
    }

    pub fn state(&self) -> UiConfig {
        self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.cfg.horizon
    }

    pub fn reset(&mut self) -> UiConfig {
        let start = match self.cfg.start {
            StartMode::FixedDefault => UiConfig::default(),
            StartMode::UniformRandom => {
                UiConfig::from_index(self.rng.random_range(0..UiConfig::COUNT))
                    .expect("index in range")
            }
        };
        self.reset_to(start)
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, start: UiConfig) -> UiConfig {
        self.state = start;
        self.steps = 0;
        start
    }

    pub fn step(
        &mut self,
        action: AdaptationAction,
        rp: &dyn RewardProvider,
    ) -> Result<StepOutcome, EnvError> {
        if self.is_done() {
            return Err(EnvError::Exhausted);
        }
        let reward = rp.reward(self.cfg.domain, &self.state, action, &self.cfg.context);
        self.state = apply_action(self.state, action);
        self.steps += 1;
        Ok(StepOutcome {
            next_state: self.state,
            reward,
            done: self.is_done(),
        })
    }
}

/// Convenience form of [`AdaptEnv::reset`] on a fresh environment.
pub fn reset(cfg: &EpisodeConfig) -> Result<UiConfig, EnvError> {
    Ok(AdaptEnv::new(cfg.clone())?.reset())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipStep {
    pub state: UiConfig,
    pub action: AdaptationAction,
}

/// A short recorded trajectory; the unit humans compare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSegment {
    pub id: String,
    pub domain: Domain,
    pub steps: Vec<ClipStep>,
    pub render_hint_ms_per_step: u32,
}

impl ClipSegment {
    pub fn states(&self) -> impl Iterator<Item = &UiConfig> + '_ {
        self.steps.iter().map(|s| &s.state)
    }

    pub fn playback_ms(&self) -> u64 {
        self.steps.len() as u64 * u64::from(self.render_hint_ms_per_step)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |reason: String| EnvError::InvalidClip {
            id: self.id.clone(),
            reason,
        };
        if self.steps.len() != CLIP_LEN {
            return Err(fail(format!("expected {CLIP_LEN} steps, got {}", self.steps.len())));
        }
        if self.render_hint_ms_per_step == 0 {
            return Err(fail("render hint must be positive".into()));
        }
        for (i, w) in self.steps.windows(2).enumerate() {
            if apply_action(w[0].state, w[0].action) != w[1].state {
                return Err(fail(format!("step {} does not follow from step {i}", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipPolicy {
    UniformRandomAction,
    /// Cycles deterministically through the 14 assignments; with two or more
    /// clips per domain every assignment appears at least once.
    ScriptedSweep,
}

/// Generates `n_per_domain` clips for each domain (courses first), ids
/// `"<domain>-<nnn>"`, each starting from a uniformly random configuration.
pub fn generate_clips(n_per_domain: usize, policy: ClipPolicy, seed: u64) -> Vec<ClipSegment> {
    let mut clips = Vec::with_capacity(2 * n_per_domain);
    for &domain in Domain::ALL {
        let mut rng = rng::seeded(rng::derive(seed, &[domain.index() as u64]));
        for i in 0..n_per_domain {
            let mut state = UiConfig::from_index(rng.random_range(0..UiConfig::COUNT))
                .expect("index in range");
            let mut steps = Vec::with_capacity(CLIP_LEN);
            for j in 0..CLIP_LEN {
                let action = match policy {
                    ClipPolicy::UniformRandomAction => {
                        AdaptationAction::from_index(rng.random_range(0..AdaptationAction::COUNT))
                    }
                    ClipPolicy::ScriptedSweep => {
                        AdaptationAction::from_index((i * CLIP_LEN + j) % AdaptationAction::NOOP_INDEX)
                    }
                }
                .expect("index in range");
                steps.push(ClipStep { state, action });
                state = apply_action(state, action);
            }
            clips.push(ClipSegment {
                id: format!("{domain}-{i:03}"),
                domain,
                steps,
                render_hint_ms_per_step: DEFAULT_MS_PER_STEP,
            });
        }
    }
    clips
}

/// Writes one JSON object per line.
pub fn write_corpus<W: Write>(mut w: W, clips: &[ClipSegment]) -> Result<(), EnvError> {
    for clip in clips {
        serde_json::to_writer(&mut w, clip).map_err(|e| EnvError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<ClipSegment>, EnvError> {
    let mut clips = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let clip: ClipSegment =
            serde_json::from_str(&line).map_err(|source| EnvError::Parse { line: i + 1, source })?;
        clip.validate()?;
        clips.push(clip);
    }
    Ok(clips)
}
