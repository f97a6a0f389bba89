//! Synchronous advantage actor-critic with parallel rollout workers.
//!
//! Each worker owns an environment and collects `n_step` transitions under a
//! read-only snapshot of the parameters. Gradients from all workers are
//! summed in worker order and applied once per round with Adam, so a run is
//! reproducible for a fixed seed regardless of thread scheduling.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AgentError, Policy};
use crate::env::{AdaptEnv, EpisodeConfig, RewardProvider};
use crate::nn::{Activation, Adam, Mlp, Trace};
use crate::rng::{self, Rng};
use crate::ui::{encode_state, AdaptationAction, ContextModel, Domain, UiConfig, FEATURE_DIM};

const N_ACTIONS: usize = AdaptationAction::COUNT;
/// Trunk `16 → 64 → 64`, then one linear layer holding both heads:
/// outputs `0..15` are policy logits, output `15` is the state value.
pub const AC_LAYERS: [usize; 4] = [FEATURE_DIM, 64, 64, N_ACTIONS + 1];
const VALUE_OUT: usize = N_ACTIONS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ACModel {
    pub net: Mlp,
}

impl ACModel {
    pub fn new(seed: u64) -> Self {
        let mut net = Mlp::new(&AC_LAYERS, Activation::LeakyRelu, seed).expect("static shape");
        // Start from a near-uniform policy and a near-zero critic.
        let last = net.weights.len() - 1;
        for w in net.weights[last].iter_mut() {
            *w *= 0.01;
        }
        ACModel { net }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.net.validate()?;
        if self.net.layer_sizes.first() != Some(&FEATURE_DIM) || self.net.output_dim() != N_ACTIONS + 1 {
            return Err(AgentError::Shape("actor-critic network must map 16 features to 15 logits + 1 value"));
        }
        Ok(())
    }

    /// Policy logits and value estimate for an encoded state.
    pub fn evaluate(&self, x: &[f64]) -> Result<(Vec<f64>, f64), AgentError> {
        let out = self.net.forward(x)?;
        Ok((out[..N_ACTIONS].to_vec(), out[VALUE_OUT]))
    }

    pub fn policy(&self, x: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(softmax(&self.evaluate(x)?.0))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    Greedy,
}

fn sample_index(probs: &[f64], r: &mut Rng) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Greedy takes the arg-max logit (lowest index on ties); Sample draws from
/// the softmax with an RNG seeded by `seed`.
pub fn ac_act(m: &ACModel, x: &[f64], mode: ActMode, seed: u64) -> Result<AdaptationAction, AgentError> {
    let (logits, _) = m.evaluate(x)?;
    let i = match mode {
        ActMode::Greedy => super::qlearn::argmax(&logits),
        ActMode::Sample => sample_index(&softmax(&logits), &mut rng::seeded(seed)),
    };
    Ok(AdaptationAction::from_index(i).expect("index in range"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ACConfig {
    pub workers: usize,
    pub n_step: usize,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    pub total_steps: usize,
    pub seed: u64,
}

impl Default for ACConfig {
    fn default() -> Self {
        ACConfig {
            workers: 4,
            n_step: 5,
            gamma: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: 1.0,
            total_steps: 0,
            seed: 0,
        }
    }
}

impl ACConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.workers == 0 || self.n_step == 0 {
            return Err(AgentError::Config("workers and n_step must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(AgentError::Config("gamma must lie in [0, 1)"));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || !(self.learning_rate > 0.0) {
            return Err(AgentError::Config("coefficients must be non-negative and the learning rate positive"));
        }
        Ok(())
    }
}

/// One transition prepared for the loss: advantage is treated as a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ACSample {
    pub x: [f64; FEATURE_DIM],
    pub action: usize,
    pub ret: f64,
    pub advantage: f64,
}

/// Mean over the batch of
/// `−log π(a|s)·A + value_coef·(G − V(s))² − entropy_coef·H(π(·|s))`,
/// with `A` held fixed, and its gradient.
pub fn ac_loss_and_grad(m: &ACModel, batch: &[ACSample], cfg: &ACConfig) -> (f64, Mlp) {
    let mut grads = m.net.zeros_like();
    let mut loss = 0.0;
    let n = batch.len().max(1) as f64;
    for s in batch {
        let trace = m.net.forward_trace(&s.x).expect("16-dim encoding");
        loss += sample_loss_grad(&trace, s, cfg, n, &mut grads, &m.net);
    }
    (loss / n, grads)
}

fn sample_loss_grad(trace: &Trace, s: &ACSample, cfg: &ACConfig, n: f64, grads: &mut Mlp, net: &Mlp) -> f64 {
    let out = trace.output();
    let probs = softmax(&out[..N_ACTIONS]);
    let logp: Vec<f64> = probs.iter().map(|p| p.max(1e-300).ln()).collect();
    let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let value = out[VALUE_OUT];
    let td = s.ret - value;
    let loss = -logp[s.action] * s.advantage + cfg.value_coef * td * td - cfg.entropy_coef * entropy;

    let mut g = vec![0.0; N_ACTIONS + 1];
    for j in 0..N_ACTIONS {
        let onehot = if j == s.action { 1.0 } else { 0.0 };
        g[j] = (-s.advantage * (onehot - probs[j]) + cfg.entropy_coef * probs[j] * (logp[j] + entropy)) / n;
    }
    g[VALUE_OUT] = -2.0 * cfg.value_coef * td / n;
    net.backward(trace, &g, grads);
    loss
}

struct Worker {
    env: AdaptEnv,
    rng: Rng,
    state: UiConfig,
}

struct Transition {
    x: [f64; FEATURE_DIM],
    action: usize,
    reward: f64,
    value: f64,
    /// Encoded final state when the episode ended on this step.
    end: Option<[f64; FEATURE_DIM]>,
}

impl Worker {
    fn rollout(&mut self, m: &ACModel, steps: usize, rp: &dyn RewardProvider) -> Result<(Vec<Transition>, [f64; FEATURE_DIM]), AgentError> {
        let domain = self.env.domain();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let x = encode_state(&self.state, domain);
            let (logits, value) = m.evaluate(&x)?;
            let a = sample_index(&softmax(&logits), &mut self.rng);
            let action = AdaptationAction::from_index(a).expect("index in range");
            let step = self.env.step(action, rp)?;
            let end = step.done.then(|| encode_state(&step.next_state, domain));
            out.push(Transition {
                x,
                action: a,
                reward: step.reward,
                value,
                end,
            });
            self.state = if step.done { self.env.reset() } else { step.next_state };
        }
        Ok((out, encode_state(&self.state, domain)))
    }
}

/// Trains a fresh model. `env` is the template for every worker's
/// environment; worker `i` gets a seed derived from `(cfg.seed, i)`.
pub fn ac_train(env: &EpisodeConfig, rp: &dyn RewardProvider, cfg: &ACConfig) -> Result<ACModel, AgentError> {
    ac_train_from(ACModel::new(cfg.seed), env, rp, cfg)
}

pub fn ac_train_from(
    model: ACModel,
    env: &EpisodeConfig,
    rp: &dyn RewardProvider,
    cfg: &ACConfig,
) -> Result<ACModel, AgentError> {
    ac_train_monitored(model, env, rp, cfg, |_| {})
}

/// As [`ac_train_from`], calling `monitor(steps_done)` after every update.
pub fn ac_train_monitored(
    mut model: ACModel,
    env: &EpisodeConfig,
    rp: &dyn RewardProvider,
    cfg: &ACConfig,
    mut monitor: impl FnMut(usize),
) -> Result<ACModel, AgentError> {
    cfg.validate()?;
    model.validate()?;
    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|i| {
            let mut env = AdaptEnv::new(env.clone().with_seed(rng::derive(cfg.seed, &[1, i as u64])))?;
            let state = env.reset();
            Ok(Worker {
                env,
                rng: rng::seeded(rng::derive(cfg.seed, &[2, i as u64])),
                state,
            })
        })
        .collect::<Result<_, AgentError>>()?;
    let mut opt = Adam::new(cfg.learning_rate, model.net.num_params());
    let mut done_steps = 0usize;
    while done_steps < cfg.total_steps {
        let remaining = cfg.total_steps - done_steps;
        let per_worker = cfg.n_step.min(remaining.div_ceil(cfg.workers));
        let snapshot = &model;
        let rollouts: Vec<_> = workers
            .par_iter_mut()
            .map(|w| w.rollout(snapshot, per_worker, rp))
            .collect::<Result<_, _>>()?;
        let mut batch = Vec::with_capacity(cfg.workers * per_worker);
        for (transitions, last_x) in &rollouts {
            let mut g = snapshot.evaluate(last_x)?.1;
            let mut rets = vec![0.0; transitions.len()];
            for (t, tr) in transitions.iter().enumerate().rev() {
                g = match &tr.end {
                    // time-limit truncation: bootstrap from the final state
                    Some(end) => tr.reward + cfg.gamma * snapshot.evaluate(end)?.1,
                    None => tr.reward + cfg.gamma * g,
                };
                rets[t] = g;
            }
            for (tr, ret) in transitions.iter().zip(rets) {
                batch.push(ACSample {
                    x: tr.x,
                    action: tr.action,
                    ret,
                    advantage: ret - tr.value,
                });
            }
        }
        done_steps += batch.len();
        let n = batch.len() as f64;
        let partials: Vec<Mlp> = batch
            .par_chunks(per_worker)
            .map(|chunk| {
                let mut grads = snapshot.net.zeros_like();
                for s in chunk {
                    let trace = snapshot.net.forward_trace(&s.x).expect("16-dim encoding");
                    sample_loss_grad(&trace, s, cfg, n, &mut grads, &snapshot.net);
                }
                grads
            })
            .collect();
        let mut grads = snapshot.net.zeros_like();
        for p in &partials {
            grads.add_scaled(p, 1.0);
        }
        if cfg.max_grad_norm > 0.0 {
            let norm = grads.sq_norm().sqrt();
            if norm > cfg.max_grad_norm {
                grads.scale(cfg.max_grad_norm / norm);
            }
        }
        opt.step(&mut model.net, &grads);
        monitor(done_steps);
    }
    Ok(model)
}

/// Greedy actor-critic policy.
pub struct ACPolicy<'a>(pub &'a ACModel);

impl Policy for ACPolicy<'_> {
    fn act(&mut self, domain: Domain, state: &UiConfig, _: &ContextModel) -> AdaptationAction {
        ac_act(self.0, &encode_state(state, domain), ActMode::Greedy, 0).expect("16-dim encoding")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ConstantReward;
    use crate::reward::relative_error;
    use crate::ui::enumerate_configs;

    #[test]
    fn softmax_sums_to_one_everywhere() {
        let m = ACModel::new(3);
        for c in enumerate_configs() {
            for &d in Domain::ALL {
                let p = m.policy(&encode_state(&c, d)).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn greedy_tie_break_and_unique_max() {
        let mut m = ACModel::new(0);
        let last = m.net.weights.len() - 1;
        m.net.weights[last].iter_mut().for_each(|w| *w = 0.0);
        m.net.biases[last].iter_mut().for_each(|b| *b = 0.0);
        let x = encode_state(&UiConfig::default(), Domain::Courses);
        assert_eq!(ac_act(&m, &x, ActMode::Greedy, 0).unwrap().index(), 0);
        m.net.biases[last][12] = 1.0;
        assert_eq!(ac_act(&m, &x, ActMode::Greedy, 0).unwrap().index(), 12);
        assert!(ac_act(&m, &[0.0; 3], ActMode::Greedy, 0).is_err());
    }

    #[test]
    fn sampling_matches_softmax() {
        let mut m = ACModel::new(0);
        let last = m.net.weights.len() - 1;
        m.net.weights[last].iter_mut().for_each(|w| *w = 0.0);
        for (j, b) in m.net.biases[last].iter_mut().enumerate().take(N_ACTIONS) {
            *b = (j as f64 * 0.37).sin();
        }
        let x = encode_state(&UiConfig::default(), Domain::Trips);
        let probs = m.policy(&x).unwrap();
        let n = 100_000u64;
        let mut counts = [0usize; N_ACTIONS];
        for seed in 0..n {
            counts[ac_act(&m, &x, ActMode::Sample, seed).unwrap().index()] += 1;
        }
        for j in 0..N_ACTIONS {
            let f = counts[j] as f64 / n as f64;
            assert!((f - probs[j]).abs() < 0.01, "action {j}: {f} vs {}", probs[j]);
        }
    }

    #[test]
    fn zero_steps_leave_model_unchanged() {
        let cfg = ACConfig { seed: 9, ..Default::default() };
        let m = ac_train(&EpisodeConfig::new(Domain::Courses), &ConstantReward(1.0), &cfg).unwrap();
        assert_eq!(m, ACModel::new(9));
    }

    #[test]
    fn single_worker_is_deterministic() {
        let cfg = ACConfig { workers: 1, total_steps: 400, seed: 5, ..Default::default() };
        let env = EpisodeConfig::new(Domain::Courses);
        let rp = |_: Domain, s: &UiConfig, _: AdaptationAction, _: &ContextModel| s.layout.index() as f64;
        let a = ac_train(&env, &rp, &cfg).unwrap();
        let b = ac_train(&env, &rp, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ACModel::new(5));
        let multi = ACConfig { workers: 3, ..cfg };
        assert_eq!(ac_train(&env, &rp, &multi).unwrap(), ac_train(&env, &rp, &multi).unwrap());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let m = ACModel::new(21);
        let cfg = ACConfig::default();
        let configs = enumerate_configs();
        let batch: Vec<ACSample> = (0..6)
            .map(|i| ACSample {
                x: encode_state(&configs[i * 17], Domain::ALL[i % 2]),
                action: (i * 4) % N_ACTIONS,
                ret: 0.3 * i as f64 - 0.5,
                advantage: 0.8 - 0.25 * i as f64,
            })
            .collect();
        let (_, grads) = ac_loss_and_grad(&m, &batch, &cfg);
        let analytic: Vec<f64> = grads.params().copied().collect();
        let mut r = rng::seeded(4);
        let mut probe = m.clone();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..150 {
            let i = r.random_range(0..m.net.num_params());
            let orig = *probe.net.param_mut(i);
            *probe.net.param_mut(i) = orig + h;
            let up = ac_loss_and_grad(&probe, &batch, &cfg).0;
            *probe.net.param_mut(i) = orig - h;
            let down = ac_loss_and_grad(&probe, &batch, &cfg).0;
            *probe.net.param_mut(i) = orig;
            worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }
}
