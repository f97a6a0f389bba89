//! Headless participant: a simulated human drives the whole loop through the
//! service API, from registration to the questionnaires.

use std::time::{Duration, Instant};

use aui_core::persona::{PerDomain, Persona, SimulatedHuman};
use aui_core::rng;
use aui_core::study::{plan, Technique, QUIS_DEFAULT_ITEMS, UES_ITEMS};
use aui_core::ui::{ContextModel, Domain, UiConfig};
use rand::Rng;
use serde::Serialize;

use crate::error::ApiError;
use crate::service::{
    Answer, CreateUser, JobKind, JobStatus, QuestionnaireKind, QuestionnairePayload, Service, TrainRequest,
};

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub beta: f64,
    pub steps: usize,
    pub seed: u64,
    pub job_timeout: Duration,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            beta: 0.5,
            steps: 50_000,
            seed: 0,
            job_timeout: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainOutcome {
    pub queries: usize,
    /// Mean engagement over the states shown during one adaptive episode.
    pub adaptive_engagement: f64,
    pub na_engagement: f64,
    pub adaptive_trajectory: Vec<UiConfig>,
    pub persona_optimum: UiConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub user_id: String,
    pub persona: String,
    pub group: u8,
    pub domains: PerDomain<DomainOutcome>,
    pub adaptive_engagement: f64,
    pub na_engagement: f64,
    pub seconds: f64,
}

impl SimReport {
    pub fn adaptive_wins(&self) -> bool {
        self.adaptive_engagement > self.na_engagement
    }
}

/// Greedy rollout of one technique from the default interface, scored by
/// the persona's noiseless engagement on each state shown.
pub fn rollout(
    service: &Service,
    user: &str,
    domain: Domain,
    technique: Technique,
    persona: &Persona,
) -> Result<(f64, Vec<UiConfig>), ApiError> {
    let ctx = ContextModel::default();
    let mut state = UiConfig::default();
    let mut trajectory = Vec::new();
    let mut total = 0.0;
    let horizon = service.config().horizon;
    for _ in 0..horizon {
        state = service.adapted_ui(user, domain, state, technique)?.next_config;
        total += persona.noiseless(domain, &state, &ctx);
        trajectory.push(state);
    }
    Ok((total / horizon as f64, trajectory))
}

fn run_job(service: &Service, user: &str, kind: JobKind, req: TrainRequest, timeout: Duration) -> Result<(), ApiError> {
    let job = service.enqueue_training(user, kind, req)?;
    let job = service.wait_job(&job.job_id, timeout)?;
    match job.status {
        JobStatus::Done => Ok(()),
        _ => Err(ApiError::internal(format!(
            "{} failed: {}",
            job.job_id,
            job.error.unwrap_or_default()
        ))),
    }
}

/// Likert answers centered on `level` in `[0, 1]`, jittered by one point.
fn likert(level: f64, items: usize, scale: u8, r: &mut rng::Rng) -> Vec<u8> {
    let center = 1.0 + level.clamp(0.0, 1.0) * f64::from(scale - 1);
    (0..items)
        .map(|_| {
            let v = center.round() as i32 + r.random_range(-1..=1);
            v.clamp(1, i32::from(scale)) as u8
        })
        .collect()
}

pub fn simulate_participant(
    service: &Service,
    user_id: &str,
    persona: Persona,
    opts: &SimOptions,
) -> Result<SimReport, ApiError> {
    let start = Instant::now();
    let human = SimulatedHuman::new(persona.clone());
    let user = service.create_user(CreateUser {
        user_id: user_id.to_string(),
        demographic: None,
    })?;

    let mut queries = PerDomain::<usize>::default();
    for &domain in Domain::ALL {
        let (info, _) = service.start_session(user_id, domain)?;
        let sid = info.session_id;
        let mut next = if info.progress.complete {
            None
        } else {
            Some(service.next_query(&sid)?.query)
        };
        while let Some(q) = next {
            let label = human.compare(&service.clip(&q.left)?, &service.clip(&q.right)?);
            let ack = service.answer(&sid, &Answer { query_id: q.query_id, label })?;
            *queries.get_mut(domain) = ack.progress.queries;
            next = ack.next;
        }
    }

    run_job(service, user_id, JobKind::RewardModel, TrainRequest::default(), opts.job_timeout)?;
    run_job(
        service,
        user_id,
        JobKind::Agent,
        TrainRequest {
            domain: None,
            beta: Some(opts.beta),
            steps: Some(opts.steps),
        },
        opts.job_timeout,
    )?;

    let ctx = ContextModel::default();
    let outcome = |domain: Domain| -> Result<DomainOutcome, ApiError> {
        let (adaptive, trajectory) = rollout(service, user_id, domain, Technique::Adaptive, &persona)?;
        let (na, _) = rollout(service, user_id, domain, Technique::NA, &persona)?;
        Ok(DomainOutcome {
            queries: *queries.get(domain),
            adaptive_engagement: adaptive,
            na_engagement: na,
            adaptive_trajectory: trajectory,
            persona_optimum: persona.target(domain, &ctx),
        })
    };
    let domains = PerDomain {
        courses: outcome(Domain::Courses)?,
        trips: outcome(Domain::Trips)?,
    };

    let mut r = rng::seeded(rng::derive(opts.seed, &[user.index as u64]));
    let sp = plan(user.group)?;
    for period in 1..=2u8 {
        let pp = sp.period(period).expect("two periods");
        let d = domains.get(pp.domain);
        let level = match pp.technique {
            Technique::Adaptive => d.adaptive_engagement,
            Technique::NA => d.na_engagement,
        };
        for (kind, items, scale) in [
            (QuestionnaireKind::Quis, QUIS_DEFAULT_ITEMS, 10),
            (QuestionnaireKind::Ues, UES_ITEMS, 5),
        ] {
            service.post_questionnaire(
                user_id,
                period,
                QuestionnairePayload {
                    kind,
                    items: likert(level, items, scale, &mut r),
                    reverse_coded: None,
                },
            )?;
        }
    }

    let adaptive_engagement = (domains.courses.adaptive_engagement + domains.trips.adaptive_engagement) / 2.0;
    let na_engagement = (domains.courses.na_engagement + domains.trips.na_engagement) / 2.0;
    Ok(SimReport {
        user_id: user_id.to_string(),
        persona: persona.id,
        group: user.group,
        domains,
        adaptive_engagement,
        na_engagement,
        seconds: start.elapsed().as_secs_f64(),
    })
}
