#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use aui_core::persona::{Persona, SimulatedHuman};
use aui_core::ui::Domain;
use aui_service::config::{AgentKind, ServiceConfig};
use aui_service::service::{Answer, CreateUser, Service};

/// Small, fast configuration: tabular agent with a unit step size.
pub fn fast_config() -> ServiceConfig {
    let mut cfg = ServiceConfig::default();
    cfg.seed = 3;
    cfg.reward.train.epochs = 60;
    cfg.agent.kind = AgentKind::QTable;
    cfg.agent.q_table.alpha = 1.0;
    cfg.agent.steps = 20_000;
    cfg
}

pub fn open(dir: &Path) -> Service {
    Service::open(dir, fast_config()).unwrap()
}

pub fn register(s: &Service, id: &str) {
    s.create_user(CreateUser { user_id: id.into(), demographic: None }).unwrap();
}

/// Answers every query of the user's session as `persona` would.
pub fn rank_all(s: &Service, user: &str, domain: Domain, persona: &Persona) -> String {
    let human = SimulatedHuman::new(persona.clone());
    let (info, _) = s.start_session(user, domain).unwrap();
    let sid = info.session_id;
    while let Ok(next) = s.next_query(&sid) {
        let q = next.query;
        let label = human.compare(&s.clip(&q.left).unwrap(), &s.clip(&q.right).unwrap());
        s.answer(&sid, &Answer { query_id: q.query_id, label }).unwrap();
    }
    sid
}

pub const JOB_TIMEOUT: Duration = Duration::from_secs(300);
