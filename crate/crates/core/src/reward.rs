//! Per-user preference model and the dual-source reward combiner.
//!
//! The model maps an encoded UI state to a latent per-step reward. A clip's
//! return is the sum over its states, and the probability that one clip is
//! preferred over another follows the Bradley-Terry form
//! `exp(Ra) / (exp(Ra) + exp(Rb))`. Training minimizes the cross-entropy
//! against the human labels with plain seeded mini-batch SGD.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ClipSegment, RewardProvider};
use crate::nn::{Activation, Mlp, NnError};
use crate::rank::PreferencePair;
use crate::rng;
use crate::ui::{apply_action, encode_state, AdaptationAction, ContextModel, Domain, UiConfig, FEATURE_DIM};

pub const MODEL_VERSION: u32 = 1;
pub const REWARD_LAYERS: [usize; 4] = [FEATURE_DIM, 64, 64, 1];

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("no preference pairs to train on")]
    NoPairs,
    #[error("clip '{0}' not found in corpus")]
    MissingClip(String),
    #[error("reward model must map {FEATURE_DIM} features to one output")]
    Shape,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("beta must lie in [0, 1], got {0}")]
    Beta(f64),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Reward network: `16 → 64 → 64 → 1`.
pub fn new_reward_model(activation: Activation, seed: u64) -> Mlp {
    Mlp::new(&REWARD_LAYERS, activation, seed).expect("static shape")
}

pub fn zero_reward_model(activation: Activation) -> Mlp {
    Mlp::zeros(&REWARD_LAYERS, activation).expect("static shape")
}

pub fn predict_step_reward(m: &Mlp, x: &[f64]) -> Result<f64, RewardError> {
    if m.output_dim() != 1 {
        return Err(RewardError::Shape);
    }
    Ok(m.forward(x)?[0])
}

fn state_reward(m: &Mlp, state: &UiConfig, domain: Domain) -> f64 {
    m.forward(&encode_state(state, domain)).expect("16-dim encoding")[0]
}

/// Sum of per-step predictions over the clip's states.
pub fn clip_return(m: &Mlp, clip: &ClipSegment) -> f64 {
    clip.states().map(|s| state_reward(m, s, clip.domain)).sum()
}

/// `P(a ≻ b)` from two returns, evaluated without overflow.
pub fn bt_probability(ra: f64, rb: f64) -> f64 {
    let top = ra.max(rb);
    let ea = (ra - top).exp();
    let eb = (rb - top).exp();
    ea / (ea + eb)
}

pub fn pref_probability(m: &Mlp, a: &ClipSegment, b: &ClipSegment) -> f64 {
    bt_probability(clip_return(m, a), clip_return(m, b))
}

/// `-ln σ(d)` computed stably.
fn neg_log_sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        (-d).exp().ln_1p()
    } else {
        -d + d.exp().ln_1p()
    }
}

/// Cross-entropy of one pair given the return difference `ra - rb`.
pub fn pair_loss(d: f64, mu: (f64, f64)) -> f64 {
    mu.0 * neg_log_sigmoid(d) + mu.1 * neg_log_sigmoid(-d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 16,
            l2: 1e-4,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.learning_rate > 0.0) {
            return Err(RewardError::Config("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(RewardError::Config("epochs and batch_size must be positive"));
        }
        if !(self.l2 >= 0.0) {
            return Err(RewardError::Config("l2 must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(RewardError::Config("val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split is empty.
    pub val_loss: Option<f64>,
}

/// Clips looked up by id.
pub type ClipStore = HashMap<String, ClipSegment>;

pub fn clip_store(clips: impl IntoIterator<Item = ClipSegment>) -> ClipStore {
    clips.into_iter().map(|c| (c.id.clone(), c)).collect()
}

/// A training pair with both clips reduced to their state-index histograms.
#[derive(Debug, Clone)]
pub struct ResolvedPair {
    first: Vec<(usize, f64)>,
    second: Vec<(usize, f64)>,
    mu: (f64, f64),
}

/// Distinct `(config, domain)` inputs, indexed `domain * 120 + config`.
const N_INPUTS: usize = 2 * UiConfig::COUNT;

fn input_index(state: &UiConfig, domain: Domain) -> usize {
    domain.index() * UiConfig::COUNT + state.index()
}

fn input_features(i: usize) -> [f64; FEATURE_DIM] {
    let domain = Domain::ALL[i / UiConfig::COUNT];
    let config = UiConfig::from_index(i % UiConfig::COUNT).expect("index in range");
    encode_state(&config, domain)
}

fn histogram(clip: &ClipSegment) -> Vec<(usize, f64)> {
    let mut counts: Vec<(usize, f64)> = Vec::new();
    for s in clip.states() {
        let k = input_index(s, clip.domain);
        match counts.iter_mut().find(|(i, _)| *i == k) {
            Some((_, c)) => *c += 1.0,
            None => counts.push((k, 1.0)),
        }
    }
    counts
}

pub fn resolve_pairs(pairs: &[PreferencePair], corpus: &ClipStore) -> Result<Vec<ResolvedPair>, RewardError> {
    pairs
        .iter()
        .map(|p| {
            let get = |id: &str| {
                corpus
                    .get(id)
                    .map(histogram)
                    .ok_or_else(|| RewardError::MissingClip(id.to_string()))
            };
            Ok(ResolvedPair {
                first: get(&p.first)?,
                second: get(&p.second)?,
                mu: p.mu,
            })
        })
        .collect()
}

/// Per-input predictions for all 240 distinct inputs.
fn input_table(m: &Mlp) -> Vec<f64> {
    (0..N_INPUTS)
        .map(|i| m.forward(&input_features(i)).expect("16-dim encoding")[0])
        .collect()
}

fn ret(table: &[f64], hist: &[(usize, f64)]) -> f64 {
    hist.iter().map(|&(i, c)| c * table[i]).sum()
}

/// Summed cross-entropy over `pairs` (without regularization).
pub fn data_loss(m: &Mlp, pairs: &[ResolvedPair]) -> f64 {
    let table = input_table(m);
    pairs
        .iter()
        .map(|p| pair_loss(ret(&table, &p.first) - ret(&table, &p.second), p.mu))
        .sum()
}

/// `Σ CE + l2·‖θ‖²` and its gradient.
pub fn loss_and_grad(m: &Mlp, pairs: &[ResolvedPair], l2: f64) -> (f64, Mlp) {
    let table = input_table(m);
    let mut coef = vec![0.0; N_INPUTS];
    let mut loss = 0.0;
    for p in pairs {
        let d = ret(&table, &p.first) - ret(&table, &p.second);
        loss += pair_loss(d, p.mu);
        // ∂L/∂d = (μ1 + μ2)·σ(d) − μ1
        let g = (p.mu.0 + p.mu.1) * bt_probability(d, 0.0) - p.mu.0;
        for &(i, c) in &p.first {
            coef[i] += g * c;
        }
        for &(i, c) in &p.second {
            coef[i] -= g * c;
        }
    }
    let mut grads = m.zeros_like();
    for (i, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            let trace = m.forward_trace(&input_features(i)).expect("16-dim encoding");
            m.backward(&trace, &[c], &mut grads);
        }
    }
    if l2 > 0.0 {
        loss += l2 * m.sq_norm();
        grads.add_scaled(m, 2.0 * l2);
    }
    (loss, grads)
}

/// Fits the model to the labelled pairs. Returns the trained model and the
/// per-epoch mean cross-entropy (training loss includes the L2 term).
pub fn train(
    m: &Mlp,
    pairs: &[PreferencePair],
    corpus: &ClipStore,
    cfg: &TrainConfig,
) -> Result<(Mlp, Vec<EpochLoss>), RewardError> {
    train_monitored(m, pairs, corpus, cfg, |_| {})
}

/// As [`train`], calling `monitor` after every epoch.
pub fn train_monitored(
    m: &Mlp,
    pairs: &[PreferencePair],
    corpus: &ClipStore,
    cfg: &TrainConfig,
    mut monitor: impl FnMut(&EpochLoss),
) -> Result<(Mlp, Vec<EpochLoss>), RewardError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(RewardError::NoPairs);
    }
    if m.input_dim() != FEATURE_DIM || m.output_dim() != 1 {
        return Err(RewardError::Shape);
    }
    let mut resolved = resolve_pairs(pairs, corpus)?;
    let mut r = rng::seeded(cfg.seed);
    resolved.shuffle(&mut r);
    let n_val = ((resolved.len() as f64 * cfg.val_fraction).floor() as usize).min(resolved.len() - 1);
    let val = resolved.split_off(resolved.len() - n_val);
    let mut train_set = resolved;

    let mut model = m.clone();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_set.shuffle(&mut r);
        for batch in train_set.chunks(cfg.batch_size) {
            let (_, g) = loss_and_grad(&model, batch, cfg.l2);
            model.add_scaled(&g, -cfg.learning_rate);
        }
        let train_loss = data_loss(&model, &train_set) / train_set.len() as f64 + cfg.l2 * model.sq_norm();
        let val_loss = (!val.is_empty()).then(|| data_loss(&model, &val) / val.len() as f64);
        let e = EpochLoss {
            epoch,
            train_loss,
            val_loss,
        };
        monitor(&e);
        curve.push(e);
    }
    Ok((model, curve))
}

/// Largest relative error between the analytic gradient and central finite
/// differences (`h = 1e-5`) over `n_params` randomly chosen parameters. The
/// objective is divided by the pair count so that round-off in the summed
/// loss does not swamp near-zero gradient entries.
pub fn grad_check(m: &Mlp, pairs: &[ResolvedPair], l2: f64, n_params: usize, seed: u64) -> f64 {
    let h = 1e-5;
    let k = 1.0 / pairs.len().max(1) as f64;
    let (_, grads) = loss_and_grad(m, pairs, l2);
    let analytic: Vec<f64> = grads.params().map(|g| g * k).collect();
    let mut r = rng::seeded(seed);
    let mut probe = m.clone();
    let mut worst: f64 = 0.0;
    let total = m.num_params();
    let loss = |net: &Mlp| (data_loss(net, pairs) + l2 * net.sq_norm()) * k;
    for _ in 0..n_params {
        let i = r.random_range(0..total);
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = loss(&probe);
        *probe.param_mut(i) = orig - h;
        let down = loss(&probe);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Fraction of pairs whose model ordering agrees with `utility` (pairs with
/// equal utility are ignored).
pub fn pairwise_accuracy(
    m: &Mlp,
    pairs: &[(&ClipSegment, &ClipSegment)],
    utility: impl Fn(&ClipSegment) -> f64,
) -> f64 {
    let mut agree = 0usize;
    let mut total = 0usize;
    for (a, b) in pairs {
        let du = utility(a) - utility(b);
        if du == 0.0 {
            continue;
        }
        total += 1;
        let dm = clip_return(m, a) - clip_return(m, b);
        if dm * du > 0.0 {
            agree += 1;
        }
    }
    if total == 0 {
        return 1.0;
    }
    agree as f64 / total as f64
}

/// Kendall's tau-b between two score vectors.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tie_x += 1.0;
            } else if dy == 0.0 {
                tie_y += 1.0;
            } else if dx * dy > 0.0 {
                concordant += 1.0;
            } else {
                discordant += 1.0;
            }
        }
    }
    let denom = ((concordant + discordant + tie_x) * (concordant + discordant + tie_y)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (concordant - discordant) / denom
}

/// Versioned on-disk form of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    #[serde(flatten)]
    pub model: Mlp,
}

impl ModelFile {
    pub fn new(model: Mlp) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, RewardError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Mlp, RewardError> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.version != MODEL_VERSION {
            return Err(RewardError::Version(f.version));
        }
        f.model.validate()?;
        Ok(f.model)
    }
}

/// Loss curve as CSV `epoch,train_loss,val_loss`.
pub fn loss_curve_csv(curve: &[EpochLoss]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_loss"]).expect("in-memory write");
    for e in curve {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Welford accumulator for one reward stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard score of `x`; identity until two samples have been seen.
    pub fn standardize(&self, x: f64) -> f64 {
        if self.count < 2 {
            return x;
        }
        let sd = self.variance().sqrt();
        if sd > 0.0 {
            (x - self.mean) / sd
        } else {
            x - self.mean
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRewardConfig {
    /// Weight of the human-feedback source.
    pub beta: f64,
    pub hci: RunningStats,
    pub hf: RunningStats,
}

impl Default for DualRewardConfig {
    fn default() -> Self {
        DualRewardConfig {
            beta: 0.5,
            hci: RunningStats::default(),
            hf: RunningStats::default(),
        }
    }
}

impl DualRewardConfig {
    pub fn new(beta: f64) -> Result<Self, RewardError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(RewardError::Beta(beta));
        }
        Ok(DualRewardConfig {
            beta,
            ..Default::default()
        })
    }
}

/// `(1 − β)·z(hci) + β·z(hf)` with per-source running standardization. When
/// `update_stats` is set the sample is folded into the statistics first.
pub fn combined_reward(hci: f64, hf: f64, cfg: &mut DualRewardConfig, update_stats: bool) -> f64 {
    if update_stats {
        cfg.hci.push(hci);
        cfg.hf.push(hf);
    }
    (1.0 - cfg.beta) * cfg.hci.standardize(hci) + cfg.beta * cfg.hf.standardize(hf)
}

/// Human-feedback source: the preference model's prediction for the state an
/// action leads to.
#[derive(Debug, Clone)]
pub struct LearnedReward {
    pub model: Mlp,
}

impl RewardProvider for LearnedReward {
    fn reward(&self, domain: Domain, state: &UiConfig, action: AdaptationAction, _: &ContextModel) -> f64 {
        state_reward(&self.model, &apply_action(*state, action), domain)
    }
}

/// Combined reward with frozen standardization statistics.
///
/// The statistics are calibrated once by sweeping every (config, action)
/// pair of the domain through both sources, after which the provider is pure
/// and can be shared read-only across workers.
pub struct DualReward<H, F> {
    pub hci: H,
    pub hf: F,
    pub config: DualRewardConfig,
}

impl<H: RewardProvider, F: RewardProvider> DualReward<H, F> {
    pub fn calibrated(hci: H, hf: F, beta: f64, domain: Domain, ctx: &ContextModel) -> Result<Self, RewardError> {
        let mut config = DualRewardConfig::new(beta)?;
        for c in crate::ui::enumerate_configs() {
            for a in AdaptationAction::all() {
                let h = hci.reward(domain, &c, a, ctx);
                let f = hf.reward(domain, &c, a, ctx);
                combined_reward(h, f, &mut config, true);
            }
        }
        Ok(DualReward { hci, hf, config })
    }

    /// Combined score of a state itself (the reward for staying there).
    pub fn state_score(&self, domain: Domain, state: &UiConfig, ctx: &ContextModel) -> f64 {
        self.reward(domain, state, AdaptationAction::NoOp, ctx)
    }
}

impl<H: RewardProvider, F: RewardProvider> RewardProvider for DualReward<H, F> {
    fn reward(&self, domain: Domain, state: &UiConfig, action: AdaptationAction, ctx: &ContextModel) -> f64 {
        let h = self.hci.reward(domain, state, action, ctx);
        let f = self.hf.reward(domain, state, action, ctx);
        let mut cfg = self.config.clone();
        combined_reward(h, f, &mut cfg, false)
    }
}
