//! Per-user agents and their evaluation.
//!
//! Three learners share the [`Policy`] interface: a tabular Q-learner, a
//! synchronous advantage actor-critic and a UCT planner. Action ties are
//! always broken toward the lowest action index.

pub mod ac;
pub mod mcts;
pub mod qlearn;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{AdaptEnv, EnvError, EpisodeConfig, RewardProvider};
use crate::nn::NnError;
use crate::rng::{self, Rng};
use crate::ui::{enumerate_configs, path_between, AdaptationAction, ContextModel, Domain, UiConfig};

pub use ac::{ac_act, ac_train, ac_train_monitored, ACConfig, ACModel, ACPolicy, ActMode};
pub use mcts::{mcts_plan, mcts_plan_with_actions, MctsConfig, MctsPolicy};
pub use qlearn::{q_policy, q_train, q_train_monitored, QConfig, QPolicy, QTable};

pub const AGENT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error("malformed agent: {0}")]
    Shape(&'static str),
    #[error("unsupported agent file version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Maps the current UI state to an adaptation.
pub trait Policy {
    fn act(&mut self, domain: Domain, state: &UiConfig, ctx: &ContextModel) -> AdaptationAction;
}

pub struct RandomPolicy {
    rng: Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: rng::seeded(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _: Domain, _: &UiConfig, _: &ContextModel) -> AdaptationAction {
        AdaptationAction::from_index(self.rng.random_range(0..AdaptationAction::COUNT)).expect("index in range")
    }
}

/// Walks straight to a fixed target, one attribute per step, then no-ops.
pub struct ScriptedPolicy {
    pub target: UiConfig,
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, _: Domain, state: &UiConfig, _: &ContextModel) -> AdaptationAction {
        path_between(state, &self.target)
            .first()
            .copied()
            .unwrap_or(AdaptationAction::NoOp)
    }
}

/// Never adapts.
pub struct NoOpPolicy;

impl Policy for NoOpPolicy {
    fn act(&mut self, _: Domain, _: &UiConfig, _: &ContextModel) -> AdaptationAction {
        AdaptationAction::NoOp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps_to_optimal: usize,
    pub final_config: UiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mean_return: f64,
    /// `horizon + 1` for episodes that never reach the target.
    pub mean_steps_to_optimal: f64,
    pub final_config_match_rate: f64,
    pub episodes: Vec<EpisodeLog>,
}

impl EvalMetrics {
    /// CSV `episode,return,steps_to_optimal,final_config`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["episode", "return", "steps_to_optimal", "final_config"])
            .expect("in-memory write");
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.ret.to_string(),
                e.steps_to_optimal.to_string(),
                e.final_config.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Runs `n_episodes` episodes of `policy` from starts drawn per `env` (with
/// its seed replaced by `seed`) and measures progress toward `target`.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &EpisodeConfig,
    rp: &dyn RewardProvider,
    n_episodes: usize,
    seed: u64,
    target: UiConfig,
) -> Result<EvalMetrics, AgentError> {
    if n_episodes == 0 {
        return Err(AgentError::Config("n_episodes must be at least 1"));
    }
    let mut e = AdaptEnv::new(env.clone().with_seed(seed))?;
    let horizon = env.horizon;
    let mut episodes = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let mut s = e.reset();
        let mut ret = 0.0;
        let mut reached = (s == target).then_some(0);
        loop {
            let a = policy.act(env.domain, &s, &env.context);
            let out = e.step(a, rp)?;
            ret += out.reward;
            s = out.next_state;
            if reached.is_none() && s == target {
                reached = Some(e.steps_taken());
            }
            if out.done {
                break;
            }
        }
        episodes.push(EpisodeLog {
            episode,
            ret,
            steps_to_optimal: reached.unwrap_or(horizon + 1),
            final_config: s,
        });
    }
    let n = n_episodes as f64;
    Ok(EvalMetrics {
        mean_return: episodes.iter().map(|e| e.ret).sum::<f64>() / n,
        mean_steps_to_optimal: episodes.iter().map(|e| e.steps_to_optimal as f64).sum::<f64>() / n,
        final_config_match_rate: episodes.iter().filter(|e| e.final_config == target).count() as f64 / n,
        episodes,
    })
}

/// Best undiscounted `horizon`-step return from every start state, by
/// backward induction over the 120-state MDP. Indexed by config index.
pub fn optimal_returns(
    rp: &dyn RewardProvider,
    domain: Domain,
    ctx: &ContextModel,
    horizon: usize,
) -> Vec<f64> {
    let configs = enumerate_configs();
    let actions = AdaptationAction::all();
    let mut value = vec![0.0; configs.len()];
    for _ in 0..horizon {
        value = configs
            .iter()
            .map(|s| {
                actions
                    .iter()
                    .map(|&a| rp.reward(domain, s, a, ctx) + value[crate::ui::apply_action(*s, a).index()])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    value
}

/// Versioned on-disk agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentFile {
    QTable { version: u32, table: QTable },
    ActorCritic { version: u32, model: ACModel },
}

impl AgentFile {
    pub fn version(&self) -> u32 {
        match self {
            AgentFile::QTable { version, .. } | AgentFile::ActorCritic { version, .. } => *version,
        }
    }

    pub fn to_json(&self) -> Result<String, AgentError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, AgentError> {
        let f: AgentFile = serde_json::from_str(s)?;
        if f.version() != AGENT_VERSION {
            return Err(AgentError::Version(f.version()));
        }
        match &f {
            AgentFile::QTable { table, .. } => table.validate()?,
            AgentFile::ActorCritic { model, .. } => model.validate()?,
        }
        Ok(f)
    }

    pub fn policy(&self) -> Box<dyn Policy + '_> {
        match self {
            AgentFile::QTable { table, .. } => Box::new(QPolicy(table)),
            AgentFile::ActorCritic { model, .. } => Box::new(ACPolicy(model)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ConstantReward;
    use crate::persona::{oracle_best, presets, PersonaReward};

    #[test]
    fn scripted_oracle_always_matches() {
        let p = presets().remove(1);
        let ctx = ContextModel::default();
        let (target, _) = oracle_best(&p, Domain::Courses, &ctx);
        let rp = PersonaReward::noiseless(p);
        let m = evaluate(&mut ScriptedPolicy { target }, &EpisodeConfig::new(Domain::Courses), &rp, 50, 1, target).unwrap();
        assert_eq!(m.final_config_match_rate, 1.0);
        assert!(m.mean_steps_to_optimal <= 5.0);
    }

    #[test]
    fn random_policy_rarely_matches() {
        let p = presets().remove(0);
        let ctx = ContextModel::default();
        let (target, _) = oracle_best(&p, Domain::Trips, &ctx);
        let rp = PersonaReward::noiseless(p);
        let m = evaluate(&mut RandomPolicy::new(3), &EpisodeConfig::new(Domain::Trips), &rp, 1000, 2, target).unwrap();
        assert!(m.final_config_match_rate < 0.5);
    }

    #[test]
    fn zero_reward_zero_return() {
        let m = evaluate(
            &mut RandomPolicy::new(0),
            &EpisodeConfig::new(Domain::Courses),
            &ConstantReward(0.0),
            20,
            0,
            UiConfig::default(),
        )
        .unwrap();
        assert_eq!(m.mean_return, 0.0);
        assert_eq!(m.episodes.len(), 20);
        assert!(m.to_csv().starts_with("episode,return,steps_to_optimal,final_config\n"));
    }

    #[test]
    fn dp_oracle_matches_scripted_walk_for_uniform_weights() {
        // With equal weights every correcting order is optimal, so walking
        // straight to the target achieves the DP optimum.
        let mut p = presets().remove(0);
        p.weights = [0.2; 5];
        let ctx = ContextModel::default();
        let (target, _) = oracle_best(&p, Domain::Courses, &ctx);
        let rp = PersonaReward::noiseless(p);
        let best = optimal_returns(&rp, Domain::Courses, &ctx, 8);
        for c in enumerate_configs() {
            let mut s = c;
            let mut ret = 0.0;
            let mut pol = ScriptedPolicy { target };
            for _ in 0..8 {
                let a = pol.act(Domain::Courses, &s, &ctx);
                ret += rp.reward(Domain::Courses, &s, a, &ctx);
                s = crate::ui::apply_action(s, a);
            }
            assert!((best[c.index()] - ret).abs() < 1e-12);
        }
    }

    #[test]
    fn agent_file_roundtrip() {
        let f = AgentFile::QTable { version: AGENT_VERSION, table: QTable::default() };
        let json = f.to_json().unwrap();
        assert!(json.contains("\"kind\":\"q_table\""));
        assert_eq!(AgentFile::from_json(&json).unwrap(), f);
        let g = AgentFile::ActorCritic { version: 7, model: ACModel::new(0) };
        assert!(matches!(AgentFile::from_json(&g.to_json().unwrap()), Err(AgentError::Version(7))));
    }
}
