//! UI configuration space, context model and the adaptation action space.
//!
//! A [`UiConfig`] is one point in the 120-element space
//! `layout × font_size × density × theme × widget`. Adaptations are direct
//! assignments of one attribute, plus a no-op, for 15 actions in total.
//!
//! Action indices follow declaration order: layout values `0..5`, font sizes
//! `5..8`, densities `8..10`, themes `10..12`, widgets `12..14`, and `NoOp`
//! at `14`. The same block order is used by [`encode_state`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UiError {
    #[error("unknown {attribute} value '{value}'")]
    UnknownValue { attribute: &'static str, value: String },
    #[error("action index {0} out of range (0..{n})", n = AdaptationAction::COUNT)]
    ActionIndex(usize),
    #[error("config index {0} out of range (0..{n})", n = UiConfig::COUNT)]
    ConfigIndex(usize),
}

/// Declares a closed attribute-value enum with a stable index and string form.
macro_rules! value_enum {
    ($(#[$meta:meta])* $name:ident, $label:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = UiError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UiError::UnknownValue { attribute: $label, value: s.to_string() }),
                }
            }
        }
    };
}

value_enum!(
    /// Application domain hosting the adapted UI.
    Domain, "domain" { Courses => "courses", Trips => "trips" }
);
value_enum!(
    Layout, "layout" {
        List => "list", Grid2 => "grid2", Grid3 => "grid3", Grid4 => "grid4", Grid5 => "grid5",
    }
);
value_enum!(FontSize, "font_size" { Small => "small", Medium => "medium", Large => "large" });
value_enum!(Density, "density" { Detailed => "detailed", Condensed => "condensed" });
value_enum!(Theme, "theme" { Light => "light", Dark => "dark" });
value_enum!(Widget, "widget" { ListMenu => "list_menu", Dropdown => "dropdown" });
value_enum!(
    /// The five adaptable attributes of a [`UiConfig`].
    Attribute, "attribute" {
        Layout => "layout", FontSize => "font_size", Density => "density", Theme => "theme", Widget => "widget",
    }
);

impl Attribute {
    /// Number of values the attribute can take.
    pub fn cardinality(self) -> usize {
        match self {
            Attribute::Layout => Layout::COUNT,
            Attribute::FontSize => FontSize::COUNT,
            Attribute::Density => Density::COUNT,
            Attribute::Theme => Theme::COUNT,
            Attribute::Widget => Widget::COUNT,
        }
    }

    /// Offset of this attribute's block in the one-hot encoding and action index space.
    pub fn offset(self) -> usize {
        Attribute::ALL[..self.index()]
            .iter()
            .map(|a| a.cardinality())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UiConfig {
    pub layout: Layout,
    pub font_size: FontSize,
    pub density: Density,
    pub theme: Theme,
    pub widget: Widget,
}

impl Default for UiConfig {
    /// The non-adaptive baseline configuration.
    fn default() -> Self {
        UiConfig {
            layout: Layout::List,
            font_size: FontSize::Medium,
            density: Density::Detailed,
            theme: Theme::Light,
            widget: Widget::ListMenu,
        }
    }
}

impl UiConfig {
    pub const COUNT: usize =
        Layout::COUNT * FontSize::COUNT * Density::COUNT * Theme::COUNT * Widget::COUNT;

    pub fn new(
        layout: Layout,
        font_size: FontSize,
        density: Density,
        theme: Theme,
        widget: Widget,
    ) -> Self {
        UiConfig {
            layout,
            font_size,
            density,
            theme,
            widget,
        }
    }

    /// Position in [`enumerate_configs`] (mixed radix, widget varies fastest).
    pub fn index(&self) -> usize {
        (((self.layout.index() * FontSize::COUNT + self.font_size.index()) * Density::COUNT
            + self.density.index())
            * Theme::COUNT
            + self.theme.index())
            * Widget::COUNT
            + self.widget.index()
    }

    pub fn from_index(mut i: usize) -> Result<Self, UiError> {
        if i >= Self::COUNT {
            return Err(UiError::ConfigIndex(i));
        }
        let widget = Widget::ALL[i % Widget::COUNT];
        i /= Widget::COUNT;
        let theme = Theme::ALL[i % Theme::COUNT];
        i /= Theme::COUNT;
        let density = Density::ALL[i % Density::COUNT];
        i /= Density::COUNT;
        let font_size = FontSize::ALL[i % FontSize::COUNT];
        i /= FontSize::COUNT;
        Ok(UiConfig::new(Layout::ALL[i], font_size, density, theme, widget))
    }

    /// Index of the current value of `attr` within that attribute's value set.
    pub fn value_index(&self, attr: Attribute) -> usize {
        match attr {
            Attribute::Layout => self.layout.index(),
            Attribute::FontSize => self.font_size.index(),
            Attribute::Density => self.density.index(),
            Attribute::Theme => self.theme.index(),
            Attribute::Widget => self.widget.index(),
        }
    }

    /// Assignment that would set `attr` to its current value in `self`.
    pub fn assignment(&self, attr: Attribute) -> Assignment {
        match attr {
            Attribute::Layout => Assignment::Layout(self.layout),
            Attribute::FontSize => Assignment::FontSize(self.font_size),
            Attribute::Density => Assignment::Density(self.density),
            Attribute::Theme => Assignment::Theme(self.theme),
            Attribute::Widget => Assignment::Widget(self.widget),
        }
    }

    /// Attributes on which `self` and `other` disagree, in declaration order.
    pub fn differing(&self, other: &UiConfig) -> Vec<Attribute> {
        Attribute::ALL
            .iter()
            .copied()
            .filter(|&a| self.value_index(a) != other.value_index(a))
            .collect()
    }
}

impl fmt::Display for UiConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.layout, self.font_size, self.density, self.theme, self.widget
        )
    }
}

impl std::str::FromStr for UiConfig {
    type Err = UiError;

    /// Parses the `layout/font_size/density/theme/widget` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 5 {
            return Err(UiError::UnknownValue {
                attribute: "config",
                value: s.to_string(),
            });
        }
        Ok(UiConfig::new(
            parts[0].parse()?,
            parts[1].parse()?,
            parts[2].parse()?,
            parts[3].parse()?,
            parts[4].parse()?,
        ))
    }
}

/// All 120 configurations in lexicographic order of
/// (layout, font_size, density, theme, widget), each by declared value order.
pub fn enumerate_configs() -> Vec<UiConfig> {
    (0..UiConfig::COUNT)
        .map(|i| UiConfig::from_index(i).expect("index in range"))
        .collect()
}

/// A value for exactly one attribute; well-formed by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assignment {
    Layout(Layout),
    FontSize(FontSize),
    Density(Density),
    Theme(Theme),
    Widget(Widget),
}

impl Assignment {
    pub fn attribute(self) -> Attribute {
        match self {
            Assignment::Layout(_) => Attribute::Layout,
            Assignment::FontSize(_) => Attribute::FontSize,
            Assignment::Density(_) => Attribute::Density,
            Assignment::Theme(_) => Attribute::Theme,
            Assignment::Widget(_) => Attribute::Widget,
        }
    }

    pub fn value_index(self) -> usize {
        match self {
            Assignment::Layout(v) => v.index(),
            Assignment::FontSize(v) => v.index(),
            Assignment::Density(v) => v.index(),
            Assignment::Theme(v) => v.index(),
            Assignment::Widget(v) => v.index(),
        }
    }

    pub fn value_str(self) -> &'static str {
        match self {
            Assignment::Layout(v) => v.as_str(),
            Assignment::FontSize(v) => v.as_str(),
            Assignment::Density(v) => v.as_str(),
            Assignment::Theme(v) => v.as_str(),
            Assignment::Widget(v) => v.as_str(),
        }
    }

    pub fn parse(attribute: Attribute, value: &str) -> Result<Self, UiError> {
        Ok(match attribute {
            Attribute::Layout => Assignment::Layout(value.parse()?),
            Attribute::FontSize => Assignment::FontSize(value.parse()?),
            Attribute::Density => Assignment::Density(value.parse()?),
            Attribute::Theme => Assignment::Theme(value.parse()?),
            Attribute::Widget => Assignment::Widget(value.parse()?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdaptationAction {
    Assign(Assignment),
    NoOp,
}

impl AdaptationAction {
    pub const COUNT: usize = 15;
    pub const NOOP_INDEX: usize = 14;

    pub fn index(self) -> usize {
        match self {
            AdaptationAction::Assign(a) => a.attribute().offset() + a.value_index(),
            AdaptationAction::NoOp => Self::NOOP_INDEX,
        }
    }

    pub fn from_index(i: usize) -> Result<Self, UiError> {
        if i == Self::NOOP_INDEX {
            return Ok(AdaptationAction::NoOp);
        }
        for &attr in Attribute::ALL {
            let off = attr.offset();
            if i >= off && i < off + attr.cardinality() {
                let v = i - off;
                let a = match attr {
                    Attribute::Layout => Assignment::Layout(Layout::ALL[v]),
                    Attribute::FontSize => Assignment::FontSize(FontSize::ALL[v]),
                    Attribute::Density => Assignment::Density(Density::ALL[v]),
                    Attribute::Theme => Assignment::Theme(Theme::ALL[v]),
                    Attribute::Widget => Assignment::Widget(Widget::ALL[v]),
                };
                return Ok(AdaptationAction::Assign(a));
            }
        }
        Err(UiError::ActionIndex(i))
    }

    /// All 15 actions in index order.
    pub fn all() -> Vec<AdaptationAction> {
        (0..Self::COUNT)
            .map(|i| Self::from_index(i).expect("index in range"))
            .collect()
    }

    /// True when applying the action to `config` leaves it unchanged.
    pub fn is_identity_on(self, config: &UiConfig) -> bool {
        apply_action(*config, self) == *config
    }
}

impl fmt::Display for AdaptationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptationAction::Assign(a) => write!(f, "{}={}", a.attribute(), a.value_str()),
            AdaptationAction::NoOp => f.write_str("no_op"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ActionRepr {
    Assign { attribute: Attribute, value: String },
    NoOp,
}

impl Serialize for AdaptationAction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            AdaptationAction::Assign(a) => ActionRepr::Assign {
                attribute: a.attribute(),
                value: a.value_str().to_string(),
            },
            AdaptationAction::NoOp => ActionRepr::NoOp,
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AdaptationAction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match ActionRepr::deserialize(deserializer)? {
            ActionRepr::NoOp => Ok(AdaptationAction::NoOp),
            ActionRepr::Assign { attribute, value } => Assignment::parse(attribute, &value)
                .map(AdaptationAction::Assign)
                .map_err(serde::de::Error::custom),
        }
    }
}

/// Applies an adaptation. Only the targeted attribute changes.
pub fn apply_action(config: UiConfig, action: AdaptationAction) -> UiConfig {
    let mut next = config;
    if let AdaptationAction::Assign(a) = action {
        match a {
            Assignment::Layout(v) => next.layout = v,
            Assignment::FontSize(v) => next.font_size = v,
            Assignment::Density(v) => next.density = v,
            Assignment::Theme(v) => next.theme = v,
            Assignment::Widget(v) => next.widget = v,
        }
    }
    next
}

/// Assignments that transform `from` into `to`, one per differing attribute.
pub fn path_between(from: &UiConfig, to: &UiConfig) -> Vec<AdaptationAction> {
    from.differing(to)
        .into_iter()
        .map(|attr| AdaptationAction::Assign(to.assignment(attr)))
        .collect()
}

pub const FEATURE_DIM: usize = 16;

/// One-hot encoding: layout(5) | font(3) | density(2) | theme(2) | widget(2) | domain(2).
pub fn encode_state(config: &UiConfig, domain: Domain) -> [f64; FEATURE_DIM] {
    let mut x = [0.0; FEATURE_DIM];
    for &attr in Attribute::ALL {
        x[attr.offset() + config.value_index(attr)] = 1.0;
    }
    x[14 + domain.index()] = 1.0;
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBand {
    Under25,
    From25To44,
    From45To64,
    Over64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputDevice {
    Mouse,
    Touch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub age_band: AgeBand,
    pub interaction_count: u64,
    pub declared_pref: Option<UiConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformContext {
    pub screen_w_px: u32,
    pub screen_h_px: u32,
    pub input: InputDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentContext {
    pub ambient_light: f64,
    pub noise_level: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("screen dimensions must be positive")]
    Screen,
    #[error("{0} must lie in [0, 1]")]
    Range(&'static str),
}

/// User, platform and environment context carried alongside the UI state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel {
    pub user: UserContext,
    pub platform: PlatformContext,
    pub environment: EnvironmentContext,
}

impl Default for ContextModel {
    fn default() -> Self {
        ContextModel {
            user: UserContext {
                age_band: AgeBand::From25To44,
                interaction_count: 0,
                declared_pref: None,
            },
            platform: PlatformContext {
                screen_w_px: 1920,
                screen_h_px: 1080,
                input: InputDevice::Mouse,
            },
            environment: EnvironmentContext {
                ambient_light: 0.7,
                noise_level: 0.2,
            },
        }
    }
}

impl ContextModel {
    pub fn with_ambient_light(mut self, light: f64) -> Self {
        self.environment.ambient_light = light;
        self
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        if self.platform.screen_w_px == 0 || self.platform.screen_h_px == 0 {
            return Err(ContextError::Screen);
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.environment.ambient_light) {
            return Err(ContextError::Range("ambient_light"));
        }
        if !unit(self.environment.noise_level) {
            return Err(ContextError::Range("noise_level"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn cardinalities() {
        assert_eq!(UiConfig::COUNT, 120);
        assert_eq!(AdaptationAction::all().len(), 15);
        let assigns = AdaptationAction::all()
            .into_iter()
            .filter(|a| matches!(a, AdaptationAction::Assign(_)))
            .count();
        assert_eq!(assigns, 14);
    }

    #[test]
    fn apply_single_field() {
        let c = UiConfig::default();
        let next = apply_action(c, AdaptationAction::Assign(Assignment::Layout(Layout::Grid3)));
        assert_eq!(next, UiConfig { layout: Layout::Grid3, ..c });
        assert_eq!(apply_action(c, AdaptationAction::NoOp), c);
        let dark = UiConfig { theme: Theme::Dark, ..c };
        assert_eq!(
            apply_action(dark, AdaptationAction::Assign(Assignment::Theme(Theme::Dark))),
            dark
        );
    }

    #[test]
    fn enumeration_order_and_distinctness() {
        let all = enumerate_configs();
        assert_eq!(all.len(), 120);
        assert_eq!(
            all[0],
            UiConfig::new(Layout::List, FontSize::Small, Density::Detailed, Theme::Light, Widget::ListMenu)
        );
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), 120);
        for w in all.windows(2) {
            assert!(w[0] < w[1], "lexicographic order");
        }
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }

    #[test]
    fn encoding_first_variants() {
        let c = enumerate_configs()[0];
        let x = encode_state(&c, Domain::Courses);
        let hot: Vec<usize> = (0..16).filter(|&i| x[i] == 1.0).collect();
        assert_eq!(hot, vec![0, 5, 8, 10, 12, 14]);
    }

    #[test]
    fn encoding_is_injective_and_six_hot() {
        let mut seen = HashSet::new();
        for c in enumerate_configs() {
            for &d in Domain::ALL {
                let x = encode_state(&c, d);
                assert_eq!(x.iter().sum::<f64>(), 6.0);
                assert!(x.iter().all(|&v| v == 0.0 || v == 1.0));
                let key: Vec<u8> = x.iter().map(|&v| v as u8).collect();
                assert!(seen.insert(key));
            }
        }
        assert_eq!(seen.len(), 240);
    }

    #[test]
    fn action_index_roundtrip() {
        for i in 0..15 {
            assert_eq!(AdaptationAction::from_index(i).unwrap().index(), i);
        }
        assert_eq!(AdaptationAction::from_index(14).unwrap(), AdaptationAction::NoOp);
        assert!(AdaptationAction::from_index(15).is_err());
    }

    #[test]
    fn any_pair_reachable_in_five_steps() {
        let all = enumerate_configs();
        for a in &all {
            for b in &all {
                let path = path_between(a, b);
                assert!(path.len() <= 5);
                let end = path.iter().fold(*a, |s, &act| apply_action(s, act));
                assert_eq!(end, *b);
            }
        }
    }

    #[test]
    fn json_conventions() {
        let c = UiConfig::default();
        let v = serde_json::to_value(c).unwrap();
        assert_eq!(v["layout"], "list");
        assert_eq!(v["widget"], "list_menu");
        let a = AdaptationAction::Assign(Assignment::FontSize(FontSize::Large));
        let v = serde_json::to_value(a).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "assign", "attribute": "font_size", "value": "large"}));
        let back: AdaptationAction = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
        let bad = serde_json::json!({"kind": "assign", "attribute": "theme", "value": "grid3"});
        assert!(serde_json::from_value::<AdaptationAction>(bad).is_err());
        let noop = serde_json::to_value(AdaptationAction::NoOp).unwrap();
        assert_eq!(noop, serde_json::json!({"kind": "no_op"}));
        let ctx: ContextModel =
            serde_json::from_str(&serde_json::to_string(&ContextModel::default()).unwrap()).unwrap();
        assert_eq!(ctx, ContextModel::default());
    }

    #[test]
    fn display_parse_roundtrip() {
        for c in enumerate_configs() {
            assert_eq!(c.to_string().parse::<UiConfig>().unwrap(), c);
        }
    }

    #[test]
    fn context_validation() {
        assert!(ContextModel::default().validate().is_ok());
        assert!(ContextModel::default().with_ambient_light(1.5).validate().is_err());
        let mut c = ContextModel::default();
        c.platform.screen_w_px = 0;
        assert_eq!(c.validate(), Err(ContextError::Screen));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn config() -> impl Strategy<Value = UiConfig> {
            (0..UiConfig::COUNT).prop_map(|i| UiConfig::from_index(i).unwrap())
        }

        proptest! {
            #[test]
            fn assign_touches_only_target(c in config(), a in 0..15usize) {
                let action = AdaptationAction::from_index(a).unwrap();
                let next = apply_action(c, action);
                let diff = c.differing(&next);
                match action {
                    AdaptationAction::NoOp => prop_assert!(diff.is_empty()),
                    AdaptationAction::Assign(asg) => {
                        prop_assert!(diff.iter().all(|&d| d == asg.attribute()));
                        prop_assert_eq!(apply_action(next, action), next);
                    }
                }
            }
        }
    }
}
