//! Preference-driven reinforcement learning for adaptive user interfaces.
//!
//! The crate covers the whole offline loop: a small UI configuration space
//! ([`ui`]), a fixed-horizon environment and clip corpus ([`env`]), synthetic
//! users ([`persona`]), red-black-tree comparison ranking ([`rank`]), a
//! Bradley-Terry reward model ([`reward`]), per-user agents ([`agents`]) and
//! crossover-study bookkeeping ([`study`]).

pub mod agents;
pub mod env;
pub mod nn;
pub mod persona;
pub mod rank;
pub mod reward;
pub mod rng;
pub mod study;
pub mod ui;
