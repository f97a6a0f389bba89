//! Tabular ε-greedy Q-learning over the 2 × 120 × 15 state-action space.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{AgentError, Policy};
use crate::env::{AdaptEnv, EpisodeConfig, RewardProvider};
use crate::rng;
use crate::ui::{AdaptationAction, ContextModel, Domain, UiConfig};

const N_ACTIONS: usize = AdaptationAction::COUNT;
const TABLE_LEN: usize = Domain::COUNT * UiConfig::COUNT * N_ACTIONS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
}

impl Default for QTable {
    fn default() -> Self {
        QTable {
            values: vec![0.0; TABLE_LEN],
            visits: vec![0; TABLE_LEN],
        }
    }
}

impl QTable {
    fn offset(domain: Domain, config: &UiConfig) -> usize {
        (domain.index() * UiConfig::COUNT + config.index()) * N_ACTIONS
    }

    pub fn row(&self, domain: Domain, config: &UiConfig) -> &[f64] {
        let o = Self::offset(domain, config);
        &self.values[o..o + N_ACTIONS]
    }

    pub fn row_mut(&mut self, domain: Domain, config: &UiConfig) -> &mut [f64] {
        let o = Self::offset(domain, config);
        &mut self.values[o..o + N_ACTIONS]
    }

    pub fn get(&self, domain: Domain, config: &UiConfig, action: AdaptationAction) -> f64 {
        self.row(domain, config)[action.index()]
    }

    pub fn visits(&self, domain: Domain, config: &UiConfig, action: AdaptationAction) -> u64 {
        self.visits[Self::offset(domain, config) + action.index()]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.values.len() != TABLE_LEN || self.visits.len() != TABLE_LEN {
            return Err(AgentError::Shape("q-table must be 2×120×15"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::Shape("q-table has non-finite entries"));
        }
        Ok(())
    }
}

/// Greedy action; ties go to the lowest action index.
pub fn q_policy(q: &QTable, domain: Domain, config: &UiConfig) -> AdaptationAction {
    AdaptationAction::from_index(argmax(q.row(domain, config))).expect("index in range")
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
            episodes: 0,
            seed: 0,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AgentError::Config("alpha must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(AgentError::Config("gamma must lie in [0, 1)"));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return Err(AgentError::Config("epsilon must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`.
    pub fn epsilon(&self, step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Trains from zero; episodes cycle round-robin over `envs`.
pub fn q_train(envs: &[EpisodeConfig], rp: &dyn RewardProvider, cfg: &QConfig) -> Result<QTable, AgentError> {
    q_train_monitored(envs, rp, cfg, 0, |_, _| {})
}

/// As [`q_train`], calling `monitor(step, table)` every `every` steps (if non-zero).
pub fn q_train_monitored(
    envs: &[EpisodeConfig],
    rp: &dyn RewardProvider,
    cfg: &QConfig,
    every: usize,
    mut monitor: impl FnMut(usize, &QTable),
) -> Result<QTable, AgentError> {
    cfg.validate()?;
    if envs.is_empty() && cfg.episodes > 0 {
        return Err(AgentError::Config("at least one environment is required"));
    }
    let mut q = QTable::default();
    let mut envs: Vec<AdaptEnv> = envs
        .iter()
        .enumerate()
        .map(|(i, e)| AdaptEnv::new(e.clone().with_seed(rng::derive(cfg.seed ^ e.seed, &[i as u64]))))
        .collect::<Result<_, _>>()?;
    let mut r = rng::seeded(rng::derive(cfg.seed, &[u64::MAX]));
    let mut step = 0usize;
    for ep in 0..cfg.episodes {
        let n_envs = envs.len();
        let env = &mut envs[ep % n_envs];
        let domain = env.domain();
        let mut s = env.reset();
        loop {
            let action = if r.random::<f64>() < cfg.epsilon(step) {
                AdaptationAction::from_index(r.random_range(0..N_ACTIONS)).expect("index in range")
            } else {
                q_policy(&q, domain, &s)
            };
            let out = env.step(action, rp)?;
            // The horizon is a time limit, not a terminal state, so always bootstrap.
            let next_max = q.row(domain, &out.next_state).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let target = out.reward + cfg.gamma * next_max;
            let o = QTable::offset(domain, &s) + action.index();
            q.values[o] += cfg.alpha * (target - q.values[o]);
            q.visits[o] += 1;
            step += 1;
            if every > 0 && step.is_multiple_of(every) {
                monitor(step, &q);
            }
            s = out.next_state;
            if out.done {
                break;
            }
        }
    }
    Ok(q)
}

/// Greedy policy view of a Q-table.
pub struct QPolicy<'a>(pub &'a QTable);

impl Policy for QPolicy<'_> {
    fn act(&mut self, domain: Domain, state: &UiConfig, _: &ContextModel) -> AdaptationAction {
        q_policy(self.0, domain, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ConstantReward;

    #[test]
    fn zero_episodes_leave_table_zero() {
        let q = q_train(&[EpisodeConfig::new(Domain::Courses)], &ConstantReward(1.0), &QConfig::default()).unwrap();
        assert_eq!(q, QTable::default());
    }

    #[test]
    fn single_update_arithmetic() {
        let env = EpisodeConfig::new(Domain::Courses).with_horizon(1);
        let cfg = QConfig { gamma: 0.0, episodes: 1, ..Default::default() };
        let q = q_train(&[env], &ConstantReward(1.0), &cfg).unwrap();
        let updated: Vec<usize> = (0..q.values.len()).filter(|&i| q.values[i] != 0.0).collect();
        assert_eq!(updated.len(), 1);
        assert!((q.values[updated[0]] - 0.1).abs() < 1e-15);
        assert_eq!(q.visits.iter().sum::<u64>(), 1);
    }

    #[test]
    fn policy_tie_break_and_unique_max() {
        let mut q = QTable::default();
        let s = UiConfig::default();
        assert_eq!(q_policy(&q, Domain::Trips, &s).index(), 0);
        q.row_mut(Domain::Trips, &s)[7] = 1.0;
        assert_eq!(q_policy(&q, Domain::Trips, &s).index(), 7);
        for v in q.row_mut(Domain::Trips, &s) {
            *v *= 2.0;
        }
        assert_eq!(q_policy(&q, Domain::Trips, &s).index(), 7);
    }

    #[test]
    fn epsilon_schedule_is_linear() {
        let cfg = QConfig::default();
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(10_000) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(20_000), 0.05);
        assert_eq!(cfg.epsilon(1_000_000), 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(QConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(QConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let env = EpisodeConfig::new(Domain::Courses);
        let rp = |_: Domain, s: &UiConfig, a: AdaptationAction, _: &ContextModel| {
            (s.index() + a.index()) as f64 / 200.0
        };
        let cfg = QConfig { episodes: 200, seed: 4, ..Default::default() };
        let a = q_train(std::slice::from_ref(&env), &rp, &cfg).unwrap();
        assert_eq!(a, q_train(std::slice::from_ref(&env), &rp, &cfg).unwrap());
        assert_ne!(a, q_train(&[env], &rp, &QConfig { seed: 5, ..cfg }).unwrap());
    }
}
