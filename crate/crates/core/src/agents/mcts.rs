//! UCT planner with uniform-random rollouts.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{AgentError, Policy};
use crate::env::RewardProvider;
use crate::rng;
use crate::ui::{apply_action, AdaptationAction, ContextModel, Domain, UiConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub simulations: usize,
    pub uct_c: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            simulations: 200,
            uct_c: 1.414,
            max_depth: 8,
            seed: 0,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.simulations == 0 {
            return Err(AgentError::Config("simulations must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(AgentError::Config("max_depth must be at least 1"));
        }
        Ok(())
    }
}

struct Node {
    state: UiConfig,
    depth: usize,
    visits: u32,
    children: Vec<Option<usize>>,
    edge_visits: Vec<u32>,
    edge_value: Vec<f64>,
}

impl Node {
    fn new(state: UiConfig, depth: usize, n_actions: usize) -> Self {
        Node {
            state,
            depth,
            visits: 0,
            children: vec![None; n_actions],
            edge_visits: vec![0; n_actions],
            edge_value: vec![0.0; n_actions],
        }
    }

    fn mean(&self, a: usize) -> f64 {
        if self.edge_visits[a] == 0 {
            0.0
        } else {
            self.edge_value[a] / f64::from(self.edge_visits[a])
        }
    }
}

/// Plans over the full 15-action space.
pub fn mcts_plan(
    root: UiConfig,
    domain: Domain,
    ctx: &ContextModel,
    rp: &dyn RewardProvider,
    cfg: &MctsConfig,
) -> Result<AdaptationAction, AgentError> {
    mcts_plan_with_actions(root, domain, ctx, rp, cfg, &AdaptationAction::all())
}

/// Plans over a restricted action set. Untried actions are expanded in the
/// order given; afterwards children are selected by UCT. The most visited
/// root action is returned (ties: higher mean, then earlier in `actions`).
pub fn mcts_plan_with_actions(
    root: UiConfig,
    domain: Domain,
    ctx: &ContextModel,
    rp: &dyn RewardProvider,
    cfg: &MctsConfig,
    actions: &[AdaptationAction],
) -> Result<AdaptationAction, AgentError> {
    cfg.validate()?;
    if actions.is_empty() {
        return Err(AgentError::Config("action set is empty"));
    }
    let k = actions.len();
    let mut r = rng::seeded(cfg.seed);
    let mut tree = vec![Node::new(root, 0, k)];
    for _ in 0..cfg.simulations {
        let mut path: Vec<(usize, usize, f64)> = Vec::new();
        let mut node = 0;
        let mut tail = 0.0;
        while tree[node].depth < cfg.max_depth {
            let n = &tree[node];
            let untried = n.edge_visits.iter().position(|&v| v == 0);
            let a = untried.unwrap_or_else(|| {
                let ln_n = f64::from(n.visits).ln();
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for a in 0..k {
                    let score = n.mean(a) + cfg.uct_c * (ln_n / f64::from(n.edge_visits[a])).sqrt();
                    if score > best_score {
                        best = a;
                        best_score = score;
                    }
                }
                best
            });
            let state = n.state;
            let depth = n.depth;
            let reward = rp.reward(domain, &state, actions[a], ctx);
            path.push((node, a, reward));
            let child = match tree[node].children[a] {
                Some(c) => c,
                None => {
                    let next = apply_action(state, actions[a]);
                    tree.push(Node::new(next, depth + 1, k));
                    let c = tree.len() - 1;
                    tree[node].children[a] = Some(c);
                    c
                }
            };
            node = child;
            if untried.is_some() {
                // rollout from the freshly expanded child
                let mut s = tree[child].state;
                for _ in tree[child].depth..cfg.max_depth {
                    let act = actions[r.random_range(0..k)];
                    tail += rp.reward(domain, &s, act, ctx);
                    s = apply_action(s, act);
                }
                break;
            }
        }
        let mut g = tail;
        for &(n, a, reward) in path.iter().rev() {
            g += reward;
            let node = &mut tree[n];
            node.visits += 1;
            node.edge_visits[a] += 1;
            node.edge_value[a] += g;
        }
    }
    let root = &tree[0];
    let mut best = 0;
    for a in 1..k {
        let (va, vb) = (root.edge_visits[a], root.edge_visits[best]);
        if va > vb || (va == vb && root.mean(a) > root.mean(best)) {
            best = a;
        }
    }
    Ok(actions[best])
}

/// Re-plans at every step; each decision uses a fresh derived seed.
pub struct MctsPolicy<'a> {
    pub rp: &'a dyn RewardProvider,
    pub cfg: MctsConfig,
    decisions: u64,
}

impl<'a> MctsPolicy<'a> {
    pub fn new(rp: &'a dyn RewardProvider, cfg: MctsConfig) -> Self {
        MctsPolicy { rp, cfg, decisions: 0 }
    }
}

impl Policy for MctsPolicy<'_> {
    fn act(&mut self, domain: Domain, state: &UiConfig, ctx: &ContextModel) -> AdaptationAction {
        let cfg = MctsConfig {
            seed: rng::derive(self.cfg.seed, &[self.decisions]),
            ..self.cfg.clone()
        };
        self.decisions += 1;
        mcts_plan(*state, domain, ctx, self.rp, &cfg).expect("validated config")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{presets, PersonaReward};

    #[test]
    fn single_simulation_returns_first_explored() {
        let rp = PersonaReward::noiseless(presets().remove(0));
        let cfg = MctsConfig { simulations: 1, ..Default::default() };
        let a = mcts_plan(UiConfig::default(), Domain::Courses, &ContextModel::default(), &rp, &cfg).unwrap();
        assert_eq!(a.index(), 0);
    }

    #[test]
    fn invalid_config() {
        let rp = PersonaReward::noiseless(presets().remove(0));
        let cfg = MctsConfig { simulations: 0, ..Default::default() };
        assert!(mcts_plan(UiConfig::default(), Domain::Courses, &ContextModel::default(), &rp, &cfg).is_err());
    }

    #[test]
    fn seed_determinism() {
        let rp = PersonaReward::noiseless(presets().remove(2));
        let ctx = ContextModel::default();
        let cfg = MctsConfig { seed: 13, ..Default::default() };
        let a = mcts_plan(UiConfig::default(), Domain::Trips, &ctx, &rp, &cfg).unwrap();
        assert_eq!(a, mcts_plan(UiConfig::default(), Domain::Trips, &ctx, &rp, &cfg).unwrap());
    }
}
