//! Synthetic users: a weighted-Hamming engagement model with one context rule.
//!
//! Personas stand in for a learned engagement predictor. Their optimum is
//! known in closed form, which makes them the brute-force oracle for the
//! ranking, reward-model and policy tests.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ClipSegment, RewardProvider};
use crate::rank::PreferenceLabel;
use crate::rng;
use crate::ui::{
    apply_action, enumerate_configs, AdaptationAction, Attribute, ContextModel, Density, Domain,
    FontSize, Layout, Theme, UiConfig, Widget,
};

/// Below this ambient light a `dark_when_dim` persona prefers the dark theme.
pub const DIM_LIGHT_THRESHOLD: f64 = 0.3;
/// Clip utilities closer than this are judged equal by the simulated human.
pub const EQUAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PersonaError {
    #[error("weights must lie in [0, 1] and not all be zero")]
    Weights,
    #[error("noise_sd must be finite and non-negative")]
    Noise,
}

/// A value for each domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerDomain<T> {
    pub courses: T,
    pub trips: T,
}

impl<T> PerDomain<T> {
    pub fn get(&self, domain: Domain) -> &T {
        match domain {
            Domain::Courses => &self.courses,
            Domain::Trips => &self.trips,
        }
    }

    pub fn get_mut(&mut self, domain: Domain) -> &mut T {
        match domain {
            Domain::Courses => &mut self.courses,
            Domain::Trips => &mut self.trips,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub preferred: PerDomain<UiConfig>,
    /// Raw per-attribute weights in declaration order; normalized on use.
    pub weights: [f64; 5],
    pub noise_sd: f64,
    pub dark_when_dim: bool,
}

impl Persona {
    pub fn new(
        id: impl Into<String>,
        preferred: PerDomain<UiConfig>,
        weights: [f64; 5],
        noise_sd: f64,
        dark_when_dim: bool,
    ) -> Result<Self, PersonaError> {
        let p = Persona {
            id: id.into(),
            preferred,
            weights,
            noise_sd,
            dark_when_dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if self.weights.iter().any(|w| !(0.0..=1.0).contains(w)) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(PersonaError::Weights);
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(PersonaError::Noise);
        }
        Ok(())
    }

    pub fn normalized_weights(&self) -> [f64; 5] {
        let total: f64 = self.weights.iter().sum();
        self.weights.map(|w| w / total)
    }

    /// Preferred configuration after applying the dim-light rule.
    pub fn target(&self, domain: Domain, ctx: &ContextModel) -> UiConfig {
        let mut pref = *self.preferred.get(domain);
        if self.dark_when_dim && ctx.environment.ambient_light < DIM_LIGHT_THRESHOLD {
            pref.theme = Theme::Dark;
        }
        pref
    }

    /// Engagement without observation noise.
    pub fn noiseless(&self, domain: Domain, s: &UiConfig, ctx: &ContextModel) -> f64 {
        let target = self.target(domain, ctx);
        let w = self.normalized_weights();
        let mismatch: f64 = Attribute::ALL
            .iter()
            .filter(|&&a| s.value_index(a) != target.value_index(a))
            .map(|&a| w[a.index()])
            .sum();
        (1.0 - mismatch).clamp(0.0, 1.0)
    }

    /// Engagement in `[0, 1]`, with Gaussian noise drawn deterministically from `seed`.
    pub fn engagement(&self, domain: Domain, s: &UiConfig, ctx: &ContextModel, seed: u64) -> f64 {
        let base = self.noiseless(domain, s, ctx);
        if self.noise_sd == 0.0 {
            return base;
        }
        let normal = Normal::new(0.0, self.noise_sd).expect("validated noise_sd");
        let mut r = rng::seeded(seed);
        (base + normal.sample(&mut r)).clamp(0.0, 1.0)
    }

    /// Mean noiseless engagement over the states shown in a clip.
    pub fn clip_utility(&self, clip: &ClipSegment, ctx: &ContextModel) -> f64 {
        let n = clip.steps.len().max(1) as f64;
        clip.states()
            .map(|s| self.noiseless(clip.domain, s, ctx))
            .sum::<f64>()
            / n
    }
}

/// Exhaustive argmax of noiseless engagement; ties go to the earlier config
/// in enumeration order.
pub fn oracle_best(p: &Persona, domain: Domain, ctx: &ContextModel) -> (UiConfig, f64) {
    best_by(|c| p.noiseless(domain, c, ctx))
}

/// Exhaustive argmax of an arbitrary scoring function over all 120 configs.
pub fn best_by(mut score: impl FnMut(&UiConfig) -> f64) -> (UiConfig, f64) {
    let mut best: Option<(UiConfig, f64)> = None;
    for c in enumerate_configs() {
        let v = score(&c);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((c, v));
        }
    }
    best.expect("config space is non-empty")
}

pub const PRESET_NAMES: [&str; 3] = ["readability-focused", "aesthetics-focused", "density-averse"];

/// The three documented presets.
///
/// | preset | courses | trips |
/// |---|---|---|
/// | readability-focused | list/large/detailed/light/list_menu | grid2/large/detailed/light/list_menu |
/// | aesthetics-focused | grid3/medium/condensed/dark/dropdown | grid4/medium/condensed/dark/dropdown |
/// | density-averse | grid2/medium/condensed/light/dropdown | grid3/small/condensed/light/dropdown |
pub fn presets() -> Vec<Persona> {
    use Density::*;
    use FontSize::*;
    use Layout::*;
    use Theme::*;
    use Widget::*;
    vec![
        Persona {
            id: PRESET_NAMES[0].into(),
            preferred: PerDomain {
                courses: UiConfig::new(List, Large, Detailed, Light, ListMenu),
                trips: UiConfig::new(Grid2, Large, Detailed, Light, ListMenu),
            },
            weights: [0.15, 0.45, 0.2, 0.12, 0.08],
            noise_sd: 0.0,
            dark_when_dim: false,
        },
        Persona {
            id: PRESET_NAMES[1].into(),
            preferred: PerDomain {
                courses: UiConfig::new(Grid3, Medium, Condensed, Dark, Dropdown),
                trips: UiConfig::new(Grid4, Medium, Condensed, Dark, Dropdown),
            },
            weights: [0.35, 0.07, 0.13, 0.3, 0.15],
            noise_sd: 0.0,
            dark_when_dim: true,
        },
        Persona {
            id: PRESET_NAMES[2].into(),
            preferred: PerDomain {
                courses: UiConfig::new(Grid2, Medium, Condensed, Light, Dropdown),
                trips: UiConfig::new(Grid3, Small, Condensed, Light, Dropdown),
            },
            weights: [0.2, 0.1, 0.45, 0.09, 0.16],
            noise_sd: 0.0,
            dark_when_dim: false,
        },
    ]
}

pub fn preset(name: &str) -> Option<Persona> {
    presets().into_iter().find(|p| p.id == name)
}

/// `n` personas: the presets first (as many as fit), then random personas
/// with ids `persona-<k>`.
pub fn make_personas(n: usize, seed: u64) -> Vec<Persona> {
    let mut out: Vec<Persona> = presets().into_iter().take(n).collect();
    let mut r = rng::seeded(seed);
    let random_config = |r: &mut rng::Rng| {
        UiConfig::from_index(r.random_range(0..UiConfig::COUNT)).expect("index in range")
    };
    for k in out.len()..n {
        let preferred = PerDomain {
            courses: random_config(&mut r),
            trips: random_config(&mut r),
        };
        let weights = [(); 5].map(|_| r.random_range(0.05..=1.0));
        out.push(Persona {
            id: format!("persona-{k}"),
            preferred,
            weights,
            noise_sd: 0.05,
            dark_when_dim: r.random_bool(0.3),
        });
    }
    out
}

/// Persona engagement of the state reached by an action.
#[derive(Debug, Clone)]
pub struct PersonaReward {
    pub persona: Persona,
    /// When set, engagement noise is keyed on (seed, state, action).
    pub noise_seed: Option<u64>,
}

impl PersonaReward {
    pub fn noiseless(persona: Persona) -> Self {
        PersonaReward {
            persona,
            noise_seed: None,
        }
    }
}

impl RewardProvider for PersonaReward {
    fn reward(
        &self,
        domain: Domain,
        state: &UiConfig,
        action: AdaptationAction,
        ctx: &ContextModel,
    ) -> f64 {
        let next = apply_action(*state, action);
        match self.noise_seed {
            None => self.persona.noiseless(domain, &next, ctx),
            Some(seed) => {
                let key = rng::derive(seed, &[state.index() as u64, action.index() as u64]);
                self.persona.engagement(domain, &next, ctx, key)
            }
        }
    }
}

/// Mean noiseless engagement over a persona population; a generic engagement
/// baseline not tuned to any one user.
#[derive(Debug, Clone)]
pub struct PopulationReward {
    pub personas: Vec<Persona>,
}

impl PopulationReward {
    pub fn engagement(&self, domain: Domain, s: &UiConfig, ctx: &ContextModel) -> f64 {
        let n = self.personas.len().max(1) as f64;
        self.personas.iter().map(|p| p.noiseless(domain, s, ctx)).sum::<f64>() / n
    }
}

impl RewardProvider for PopulationReward {
    fn reward(
        &self,
        domain: Domain,
        state: &UiConfig,
        action: AdaptationAction,
        ctx: &ContextModel,
    ) -> f64 {
        self.engagement(domain, &apply_action(*state, action), ctx)
    }
}

/// Noiseless comparator: prefers the clip with higher mean engagement.
#[derive(Debug, Clone)]
pub struct SimulatedHuman {
    pub persona: Persona,
    pub context: ContextModel,
}

impl SimulatedHuman {
    pub fn new(persona: Persona) -> Self {
        SimulatedHuman {
            persona,
            context: ContextModel::default(),
        }
    }

    pub fn utility(&self, clip: &ClipSegment) -> f64 {
        self.persona.clip_utility(clip, &self.context)
    }

    pub fn compare(&self, left: &ClipSegment, right: &ClipSegment) -> PreferenceLabel {
        let (l, r) = (self.utility(left), self.utility(right));
        if (l - r).abs() < EQUAL_TOLERANCE {
            PreferenceLabel::Equal
        } else if l > r {
            PreferenceLabel::Left
        } else {
            PreferenceLabel::Right
        }
    }
}
