use aui_core::agents::{evaluate, q_train, QConfig, QPolicy};
use aui_core::env::{generate_clips, ClipPolicy, ClipSegment, EpisodeConfig, RewardProvider};
use aui_core::nn::Activation;
use aui_core::persona::{best_by, oracle_best, presets, PersonaReward, SimulatedHuman};
use aui_core::rank::RankSession;
use aui_core::reward::{clip_store, new_reward_model, train, DualReward, LearnedReward, TrainConfig};
use aui_core::ui::{enumerate_configs, AdaptationAction, ContextModel, Domain, UiConfig};

const DOMAIN: Domain = Domain::Courses;

/// Preference model fitted to one persona's noiseless rankings.
fn learned_from(persona_idx: usize) -> LearnedReward {
    let human = SimulatedHuman::new(presets().remove(persona_idx));
    let clips: Vec<ClipSegment> = generate_clips(32, ClipPolicy::UniformRandomAction, 8)
        .into_iter()
        .filter(|c| c.domain == DOMAIN)
        .collect();
    let store = clip_store(clips.clone());
    let mut s = RankSession::new("hf", DOMAIN, &clips, 8).unwrap();
    s.drive(|q| human.compare(&store[&q.left], &store[&q.right]));
    let (model, _) = train(
        &new_reward_model(Activation::LeakyRelu, 8),
        &s.training_pairs(false),
        &store,
        &TrainConfig::default(),
    )
    .unwrap();
    LearnedReward { model }
}

/// Greedy terminal configuration most often reached from uniform starts.
fn trained_terminal(rp: &dyn RewardProvider, seed: u64) -> (UiConfig, f64) {
    let env = EpisodeConfig::new(DOMAIN);
    let cfg = QConfig { alpha: 1.0, episodes: 50_000 / 8, seed, ..Default::default() };
    let q = q_train(std::slice::from_ref(&env), rp, &cfg).unwrap();
    let m = evaluate(&mut QPolicy(&q), &env, rp, 500, seed + 1, UiConfig::default()).unwrap();
    let mut counts = vec![0usize; UiConfig::COUNT];
    for e in &m.episodes {
        counts[e.final_config.index()] += 1;
    }
    let top = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i)).unwrap();
    (UiConfig::from_index(top).unwrap(), counts[top] as f64 / m.episodes.len() as f64)
}

#[test]
fn beta_moves_terminal_config_between_sources() {
    let ctx = ContextModel::default();
    let persona = presets().remove(0);
    let hf = learned_from(2);
    let (persona_opt, _) = oracle_best(&persona, DOMAIN, &ctx);
    let (hf_opt, _) = best_by(|c| hf.reward(DOMAIN, c, AdaptationAction::NoOp, &ctx));
    assert_ne!(persona_opt, hf_opt, "fixture needs conflicting sources");

    let betas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut terminals = Vec::new();
    for &beta in &betas {
        let dual = DualReward::calibrated(PersonaReward::noiseless(persona.clone()), hf.clone(), beta, DOMAIN, &ctx)
            .unwrap();
        let (combined_opt, _) = best_by(|c| dual.state_score(DOMAIN, c, &ctx));
        let (terminal, share) = trained_terminal(&dual, 3);
        assert_eq!(terminal, combined_opt, "beta {beta}");
        assert!(share >= 0.95, "beta {beta}: {share}");
        terminals.push(terminal);
    }
    assert_eq!(terminals[0], persona_opt);
    assert_eq!(terminals[betas.len() - 1], hf_opt);
    let switch = terminals.iter().position(|t| *t != persona_opt).unwrap();
    // The threshold lies in (betas[switch - 1], betas[switch]) ⊂ (0, 1).
    assert!(switch >= 1);
}

#[test]
fn calibrated_statistics_cover_the_whole_domain() {
    let ctx = ContextModel::default();
    let dual = DualReward::calibrated(
        PersonaReward::noiseless(presets().remove(1)),
        learned_from(0),
        0.5,
        DOMAIN,
        &ctx,
    )
    .unwrap();
    let n = (enumerate_configs().len() * AdaptationAction::COUNT) as u64;
    assert_eq!(dual.config.hci.count, n);
    assert_eq!(dual.config.hf.count, n);
    let before = dual.config.clone();
    dual.reward(DOMAIN, &UiConfig::default(), AdaptationAction::NoOp, &ctx);
    assert_eq!(dual.config, before);
}
