//! Request-level logic behind the HTTP routes and the CLI.
//!
//! All state lives on disk; the in-memory maps are caches rebuilt by
//! [`Service::open`]. Rank sessions are restored by replaying their answer
//! logs, so a restarted service continues every session exactly where it was.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use aui_core::agents::{
    ac_train_monitored, evaluate, q_train_monitored, ACModel, AgentFile, EvalMetrics, AGENT_VERSION,
};
use aui_core::env::{generate_clips, read_corpus, write_corpus, ClipSegment, EpisodeConfig};
use aui_core::persona::{best_by, make_personas, PerDomain, PopulationReward};
use aui_core::rank::{ComparisonQuery, PreferenceLabel, RankSession};
use aui_core::reward::{
    clip_store, loss_curve_csv, new_reward_model, train_monitored, zero_reward_model, ClipStore, DualReward,
    LearnedReward, ModelFile,
};
use aui_core::rng;
use aui_core::study::{
    export_results, group_for_index, plan, quis_score, ues_score, QuisResponse, ResultRecord, Technique,
    UesResponse,
};
use aui_core::ui::{apply_action, AdaptationAction, ContextModel, Domain, UiConfig};
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, ServiceConfig};
use crate::error::{ApiError, ErrorKind};
use crate::store::{self, Store};

pub const NO_PREFERENCE_DATA: &str = "no preference data";

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// FNV-1a, used to fold user ids into derived seeds.
fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn validate_user_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ApiError::invalid(format!(
            "user id '{id}' must be 1-64 characters of letters, digits, '-', '_' or '.'"
        )))
    }
}

fn no_preference_data() -> ApiError {
    ApiError::new(ErrorKind::Invalid, "no_preference_data", NO_PREFERENCE_DATA)
}

fn missing_prerequisite(message: impl Into<String>) -> ApiError {
    ApiError::new(ErrorKind::Invalid, "missing_prerequisite", message)
}

pub fn session_id(user: &str, domain: Domain) -> String {
    format!("{user}.{domain}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainRefs {
    pub session: Option<String>,
    pub reward_model: Option<String>,
    pub agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub group: u8,
    /// Registration order, starting at 0.
    pub index: usize,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographic: Option<BTreeMap<String, String>>,
    pub domains: PerDomain<DomainRefs>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateUser {
    pub user_id: String,
    #[serde(default)]
    pub demographic: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub user_id: String,
    pub domain: Domain,
    pub seed: u64,
    pub clip_ids: Vec<String>,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressView {
    pub placed: usize,
    pub total: usize,
    pub queries: usize,
    pub complete: bool,
}

fn progress_of(s: &RankSession) -> ProgressView {
    let p = s.progress();
    ProgressView {
        placed: p.placed,
        total: p.total,
        queries: p.queries,
        complete: s.is_complete(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub user_id: String,
    pub domain: Domain,
    pub progress: ProgressView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextQuery {
    pub session_id: String,
    pub query: ComparisonQuery,
    pub progress: ProgressView,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub query_id: String,
    pub label: PreferenceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerAck {
    pub progress: ProgressView,
    /// The following query, absent once the session is complete.
    pub next: Option<ComparisonQuery>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    RewardModel,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingJob {
    pub job_id: String,
    pub user_id: String,
    /// `None` trains every domain with the required data.
    pub domain: Option<Domain>,
    pub kind: JobKind,
    pub status: JobStatus,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub domain: Domain,
    pub pairs: usize,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub kind: AgentKind,
    pub beta: f64,
    pub steps: usize,
    /// Best configuration under the combined reward the agent was trained on.
    pub combined_optimum: UiConfig,
    pub trained_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedUi {
    pub action: AdaptationAction,
    pub next_config: UiConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionnaireKind {
    Quis,
    Ues,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnairePayload {
    pub kind: QuestionnaireKind,
    pub items: Vec<u8>,
    #[serde(default)]
    pub reverse_coded: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRecord {
    pub period: u8,
    pub kind: QuestionnaireKind,
    pub items: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_coded: Option<Vec<bool>>,
    pub score: f64,
    #[serde(default)]
    pub per_factor: BTreeMap<String, f64>,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireResult {
    pub user_id: String,
    pub period: u8,
    pub kind: QuestionnaireKind,
    pub score: f64,
    pub per_factor: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub user_id: String,
    pub domain: Domain,
    pub beta: f64,
    pub target: UiConfig,
    pub metrics: EvalMetrics,
}

struct SessionEntry {
    meta: SessionMeta,
    session: RankSession,
}

struct Inner {
    store: Store,
    config: ServiceConfig,
    corpus: Vec<ClipSegment>,
    clips: ClipStore,
    users: Mutex<BTreeMap<String, UserRecord>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionEntry>>>>,
    jobs: Mutex<BTreeMap<String, TrainingJob>>,
    next_job: AtomicU64,
    agents: Mutex<HashMap<(String, Domain), Arc<(AgentFile, AgentMeta)>>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

/// Shared handle; clones refer to the same state.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Service {
    /// Opens (or initializes) the data directory. A missing corpus is
    /// generated from the configured seed.
    pub fn open(data_dir: &Path, config: ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let store = Store::open(data_dir).with_context(|| format!("opening {}", data_dir.display()))?;
        let corpus_path = config.corpus_path(data_dir);
        let corpus = if corpus_path.exists() {
            let f = File::open(&corpus_path).with_context(|| format!("reading {}", corpus_path.display()))?;
            read_corpus(BufReader::new(f))?
        } else {
            let clips = generate_clips(config.clips_per_domain, config.clip_policy, config.seed);
            let mut buf = Vec::new();
            write_corpus(&mut buf, &clips)?;
            store::write_atomic(&corpus_path, &buf)?;
            clips
        };
        let clips = clip_store(corpus.clone());
        if clips.len() != corpus.len() {
            bail!("corpus contains duplicate clip ids");
        }

        let mut users = BTreeMap::new();
        let mut sessions = HashMap::new();
        for id in store.user_ids()? {
            let rec: UserRecord = store.read_json(store::user_file(&id))?.expect("listed users have a record");
            for &domain in Domain::ALL {
                let Some(meta) = store.read_json::<SessionMeta>(store::session_meta(&id, domain))? else {
                    continue;
                };
                let log_path = store::session_log(&id, domain);
                store.repair_jsonl(&log_path)?;
                let log = store.read_jsonl(&log_path)?;
                let session = RankSession::replay(&id, domain, &meta.clip_ids, meta.seed, &log)
                    .with_context(|| format!("replaying session {}", meta.session_id))?;
                sessions.insert(meta.session_id.clone(), Arc::new(Mutex::new(SessionEntry { meta, session })));
            }
            users.insert(id, rec);
        }

        let mut jobs = BTreeMap::new();
        let mut max_job = 0;
        for rel in store.job_files()? {
            let mut job: TrainingJob = store.read_json(&rel)?.expect("listed job exists");
            if !job.status.is_terminal() {
                job.status = JobStatus::Failed;
                job.error = Some("interrupted by restart".into());
                job.finished_at = Some(now_ms());
                store.write_json(&rel, &job)?;
            }
            if let Some(n) = job.job_id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()) {
                max_job = max_job.max(n);
            }
            jobs.insert(job.job_id.clone(), job);
        }

        Ok(Service {
            inner: Arc::new(Inner {
                store,
                config,
                corpus,
                clips,
                users: Mutex::new(users),
                sessions: Mutex::new(sessions),
                jobs: Mutex::new(jobs),
                next_job: AtomicU64::new(max_job + 1),
                agents: Mutex::new(HashMap::new()),
                workers: Mutex::new(Vec::new()),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn data_dir(&self) -> &Path {
        self.inner.store.root()
    }

    pub fn corpus(&self, domain: Option<Domain>) -> Vec<ClipSegment> {
        self.inner
            .corpus
            .iter()
            .filter(|c| domain.is_none_or(|d| c.domain == d))
            .cloned()
            .collect()
    }

    pub fn clip(&self, id: &str) -> Result<ClipSegment, ApiError> {
        self.inner.clips.get(id).cloned().ok_or_else(|| ApiError::not_found("clip", id))
    }

    // ---- users ----

    pub fn create_user(&self, req: CreateUser) -> Result<UserRecord, ApiError> {
        validate_user_id(&req.user_id)?;
        let mut users = lock(&self.inner.users);
        if users.contains_key(&req.user_id) {
            return Err(ApiError::new(
                ErrorKind::Conflict,
                "duplicate_user",
                format!("user '{}' already exists", req.user_id),
            ));
        }
        let index = users.len();
        let rec = UserRecord {
            user_id: req.user_id.clone(),
            group: group_for_index(index, self.inner.config.seed),
            index,
            created_at: now_ms(),
            demographic: req.demographic,
            domains: PerDomain::default(),
        };
        self.inner.store.write_json(store::user_file(&rec.user_id), &rec)?;
        users.insert(rec.user_id.clone(), rec.clone());
        Ok(rec)
    }

    pub fn user(&self, id: &str) -> Result<UserRecord, ApiError> {
        lock(&self.inner.users).get(id).cloned().ok_or_else(|| ApiError::not_found("user", id))
    }

    pub fn users(&self) -> Vec<UserRecord> {
        lock(&self.inner.users).values().cloned().collect()
    }

    fn update_user(&self, id: &str, f: impl FnOnce(&mut UserRecord)) -> Result<(), ApiError> {
        let mut users = lock(&self.inner.users);
        let rec = users.get_mut(id).ok_or_else(|| ApiError::not_found("user", id))?;
        let mut next = rec.clone();
        f(&mut next);
        if next != *rec {
            self.inner.store.write_json(store::user_file(id), &next)?;
            *rec = next;
        }
        Ok(())
    }

    // ---- feedback sessions ----

    /// Starts the user's session for `domain`, or returns the existing one.
    /// The flag is true when a new session was created.
    pub fn start_session(&self, user: &str, domain: Domain) -> Result<(SessionInfo, bool), ApiError> {
        self.user(user)?;
        let sid = session_id(user, domain);
        let mut sessions = lock(&self.inner.sessions);
        if let Some(e) = sessions.get(&sid) {
            return Ok((info(&lock(e)), false));
        }
        let clip_ids: Vec<String> = self.corpus(Some(domain)).into_iter().map(|c| c.id).collect();
        let seed = rng::derive(self.inner.config.seed, &[fnv1a(user), domain.index() as u64]);
        let session = RankSession::from_ids(user, domain, &clip_ids, seed)?;
        let meta = SessionMeta {
            session_id: sid.clone(),
            user_id: user.to_string(),
            domain,
            seed,
            clip_ids,
            created_at: now_ms(),
        };
        let log = self.inner.store.path(store::session_log(user, domain));
        if log.exists() {
            std::fs::remove_file(&log)?;
        }
        self.inner.store.write_json(store::session_meta(user, domain), &meta)?;
        let entry = SessionEntry { meta, session };
        let out = info(&entry);
        sessions.insert(sid.clone(), Arc::new(Mutex::new(entry)));
        drop(sessions);
        self.update_user(user, |u| u.domains.get_mut(domain).session = Some(sid))?;
        Ok((out, true))
    }

    fn session_entry(&self, sid: &str) -> Result<Arc<Mutex<SessionEntry>>, ApiError> {
        lock(&self.inner.sessions)
            .get(sid)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", sid))
    }

    pub fn session_info(&self, sid: &str) -> Result<SessionInfo, ApiError> {
        let entry = self.session_entry(sid)?;
        let e = lock(&entry);
        Ok(info(&e))
    }

    pub fn next_query(&self, sid: &str) -> Result<NextQuery, ApiError> {
        let entry = self.session_entry(sid)?;
        let e = lock(&entry);
        let query = e.session.next_query().ok_or(aui_core::rank::RankError::Complete)?;
        Ok(NextQuery {
            session_id: sid.to_string(),
            query,
            progress: progress_of(&e.session),
        })
    }

    /// Applies one answer. The answer is logged to disk before the in-memory
    /// session advances; a rejected answer changes nothing.
    pub fn answer(&self, sid: &str, answer: &Answer) -> Result<AnswerAck, ApiError> {
        let entry = self.session_entry(sid)?;
        let mut e = lock(&entry);
        let mut next = e.session.clone();
        next.submit_at(&answer.query_id, answer.label, now_ms())?;
        let logged = next.log().last().expect("submit appends to the log");
        self.inner
            .store
            .append_jsonl(store::session_log(&e.meta.user_id, e.meta.domain), logged)?;
        e.session = next;
        Ok(AnswerAck {
            progress: progress_of(&e.session),
            next: e.session.next_query(),
        })
    }

    pub fn progress(&self, sid: &str) -> Result<ProgressView, ApiError> {
        let entry = self.session_entry(sid)?;
        let e = lock(&entry);
        Ok(progress_of(&e.session))
    }

    /// Best-first buckets of clip ids; only available once complete.
    pub fn ranking(&self, sid: &str) -> Result<Vec<Vec<String>>, ApiError> {
        let entry = self.session_entry(sid)?;
        let e = lock(&entry);
        Ok(e.session.ranking()?)
    }

    // ---- training ----

    pub fn enqueue_training(&self, user: &str, kind: JobKind, req: TrainRequest) -> Result<TrainingJob, ApiError> {
        self.user(user)?;
        if let Some(b) = req.beta {
            if !(0.0..=1.0).contains(&b) {
                return Err(ApiError::invalid(format!("beta must lie in [0, 1], got {b}")));
            }
        }
        if req.steps == Some(0) {
            return Err(ApiError::invalid("steps must be at least 1"));
        }
        if kind == JobKind::RewardModel {
            if req.beta.is_some() || req.steps.is_some() {
                return Err(ApiError::invalid("beta and steps apply to agent training only"));
            }
            let has_session = self
                .domains_for(req.domain)
                .into_iter()
                .any(|d| self.session_entry(&session_id(user, d)).is_ok());
            if !has_session {
                return Err(missing_prerequisite(format!("user '{user}' has no rank session")));
            }
        }
        let mut jobs = lock(&self.inner.jobs);
        if let Some(active) = jobs.values().find(|j| j.user_id == user && !j.status.is_terminal()) {
            return Err(ApiError::new(
                ErrorKind::Conflict,
                "job_conflict",
                format!("job '{}' is still {:?} for this user", active.job_id, active.status),
            ));
        }
        let n = self.inner.next_job.fetch_add(1, Ordering::SeqCst);
        let job = TrainingJob {
            job_id: format!("job-{n:06}"),
            user_id: user.to_string(),
            domain: req.domain,
            kind,
            status: JobStatus::Queued,
            progress: 0.0,
            beta: (kind == JobKind::Agent).then(|| req.beta.unwrap_or(self.inner.config.agent.beta)),
            steps: (kind == JobKind::Agent).then(|| req.steps.unwrap_or(self.inner.config.agent.steps)),
            error: None,
            created_at: now_ms(),
            finished_at: None,
        };
        self.inner.store.write_json(store::job_file(&job.job_id), &job)?;
        jobs.insert(job.job_id.clone(), job.clone());
        drop(jobs);

        let svc = self.clone();
        let id = job.job_id.clone();
        let handle = std::thread::Builder::new()
            .name(id.clone())
            .spawn(move || svc.run_job(&id))
            .map_err(|e| ApiError::internal(format!("spawning job: {e}")))?;
        let mut workers = lock(&self.inner.workers);
        workers.retain(|h| !h.is_finished());
        workers.push(handle);
        Ok(job)
    }

    pub fn job(&self, id: &str) -> Result<TrainingJob, ApiError> {
        lock(&self.inner.jobs).get(id).cloned().ok_or_else(|| ApiError::not_found("job", id))
    }

    /// Polls until the job finishes or `timeout` elapses.
    pub fn wait_job(&self, id: &str, timeout: Duration) -> Result<TrainingJob, ApiError> {
        let start = Instant::now();
        loop {
            let job = self.job(id)?;
            if job.status.is_terminal() {
                return Ok(job);
            }
            if start.elapsed() > timeout {
                return Err(ApiError::internal(format!("timed out waiting for job '{id}'")));
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    /// Blocks until every background job thread has exited.
    pub fn join_jobs(&self) {
        let handles: Vec<_> = lock(&self.inner.workers).drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }

    fn set_job(&self, id: &str, f: impl FnOnce(&mut TrainingJob), persist: bool) {
        let mut jobs = lock(&self.inner.jobs);
        let Some(job) = jobs.get_mut(id) else { return };
        f(job);
        if persist {
            let _ = self.inner.store.write_json(store::job_file(id), job);
        }
    }

    fn run_job(&self, id: &str) {
        self.set_job(id, |j| j.status = JobStatus::Running, true);
        let job = match self.job(id) {
            Ok(j) => j,
            Err(_) => return,
        };
        let mut report = |p: f64| self.set_job(id, |j| j.progress = p.clamp(0.0, 1.0), false);
        let result = match job.kind {
            JobKind::RewardModel => self.run_reward_job(&job, &mut report),
            JobKind::Agent => self.run_agent_job(&job, &mut report),
        };
        self.set_job(
            id,
            |j| {
                j.finished_at = Some(now_ms());
                match result {
                    Ok(()) => {
                        j.status = JobStatus::Done;
                        j.progress = 1.0;
                    }
                    Err(e) => {
                        j.status = JobStatus::Failed;
                        j.error = Some(e.message);
                    }
                }
            },
            true,
        );
    }

    fn domains_for(&self, domain: Option<Domain>) -> Vec<Domain> {
        domain.map_or_else(|| Domain::ALL.to_vec(), |d| vec![d])
    }

    fn run_reward_job(&self, job: &TrainingJob, report: &mut dyn FnMut(f64)) -> Result<(), ApiError> {
        let user = &job.user_id;
        let domains: Vec<Domain> = self
            .domains_for(job.domain)
            .into_iter()
            .filter(|&d| self.training_pairs(user, d).is_ok_and(|p| !p.is_empty()))
            .collect();
        if domains.is_empty() {
            return Err(no_preference_data());
        }
        let n = domains.len() as f64;
        for (i, &d) in domains.iter().enumerate() {
            self.train_reward(user, d, &mut |p| report((i as f64 + p) / n))?;
        }
        Ok(())
    }

    fn run_agent_job(&self, job: &TrainingJob, report: &mut dyn FnMut(f64)) -> Result<(), ApiError> {
        let user = &job.user_id;
        let beta = job.beta.unwrap_or(self.inner.config.agent.beta);
        let steps = job.steps.unwrap_or(self.inner.config.agent.steps);
        let domains: Vec<Domain> = self
            .domains_for(job.domain)
            .into_iter()
            .filter(|&d| beta == 0.0 || self.inner.store.path(store::reward_model(user, d)).exists())
            .collect();
        if domains.is_empty() {
            return Err(no_preference_data());
        }
        let n = domains.len() as f64;
        for (i, &d) in domains.iter().enumerate() {
            self.train_agent(user, d, beta, steps, &mut |p| report((i as f64 + p) / n))?;
        }
        Ok(())
    }

    fn training_pairs(&self, user: &str, domain: Domain) -> Result<Vec<aui_core::rank::PreferencePair>, ApiError> {
        let entry = self.session_entry(&session_id(user, domain))?;
        let e = lock(&entry);
        Ok(e.session.training_pairs(self.inner.config.reward.closure_pairs))
    }

    fn user_seed(&self, user: &str, domain: Domain, purpose: u64) -> u64 {
        rng::derive(self.inner.config.seed, &[fnv1a(user), domain.index() as u64, purpose])
    }

    /// Fits the user's preference model for `domain` from the session's
    /// answers and stores it.
    pub fn train_reward(
        &self,
        user: &str,
        domain: Domain,
        report: &mut dyn FnMut(f64),
    ) -> Result<RewardSummary, ApiError> {
        self.user(user)?;
        let pairs = self
            .training_pairs(user, domain)
            .map_err(|_| missing_prerequisite(format!("user '{user}' has no {domain} rank session")))?;
        if pairs.is_empty() {
            return Err(no_preference_data());
        }
        let cfg = &self.inner.config.reward;
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = self.user_seed(user, domain, 1);
        let init = new_reward_model(cfg.activation, self.user_seed(user, domain, 2));
        let epochs = train_cfg.epochs as f64;
        let (model, curve) = train_monitored(&init, &pairs, &self.inner.clips, &train_cfg, |e| {
            report((e.epoch + 1) as f64 / epochs)
        })
        .map_err(|e| ApiError::internal(format!("reward training: {e}")))?;
        let json = ModelFile::new(model)
            .to_json()
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let path = store::reward_model(user, domain);
        self.inner.store.write_atomic(&path, json.as_bytes())?;
        self.inner
            .store
            .write_atomic(store::reward_loss(user, domain), loss_curve_csv(&curve).as_bytes())?;
        let rel = path.to_string_lossy().into_owned();
        self.update_user(user, |u| u.domains.get_mut(domain).reward_model = Some(rel))?;
        let last = curve.last().expect("at least one epoch");
        Ok(RewardSummary {
            domain,
            pairs: pairs.len(),
            epochs: curve.len(),
            final_train_loss: last.train_loss,
            final_val_loss: last.val_loss,
        })
    }

    fn reward_model(&self, user: &str, domain: Domain) -> Result<Option<aui_core::nn::Mlp>, ApiError> {
        let path = self.inner.store.path(store::reward_model(user, domain));
        match std::fs::read_to_string(&path) {
            Ok(s) => ModelFile::from_json(&s)
                .map(Some)
                .map_err(|e| ApiError::internal(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// The combined reward an agent for (`user`, `domain`) optimizes.
    pub fn dual_reward(
        &self,
        user: &str,
        domain: Domain,
        beta: f64,
    ) -> Result<DualReward<PopulationReward, LearnedReward>, ApiError> {
        let model = match self.reward_model(user, domain)? {
            Some(m) => m,
            None if beta == 0.0 => zero_reward_model(self.inner.config.reward.activation),
            None => return Err(no_preference_data()),
        };
        let hci = PopulationReward {
            personas: make_personas(self.inner.config.hci_population, self.inner.config.seed),
        };
        DualReward::calibrated(hci, LearnedReward { model }, beta, domain, &ContextModel::default())
            .map_err(|e| ApiError::invalid(e.to_string()))
    }

    /// Trains and stores the user's agent for `domain`.
    pub fn train_agent(
        &self,
        user: &str,
        domain: Domain,
        beta: f64,
        steps: usize,
        report: &mut dyn FnMut(f64),
    ) -> Result<AgentMeta, ApiError> {
        self.user(user)?;
        if steps == 0 {
            return Err(ApiError::invalid("steps must be at least 1"));
        }
        let cfg = &self.inner.config;
        let dual = self.dual_reward(user, domain, beta)?;
        let env = EpisodeConfig::new(domain)
            .with_horizon(cfg.horizon)
            .with_seed(self.user_seed(user, domain, 3));
        let seed = self.user_seed(user, domain, 4);
        let total = steps as f64;
        let file = match cfg.agent.kind {
            AgentKind::ActorCritic => {
                let mut ac = cfg.agent.actor_critic.clone();
                ac.total_steps = steps;
                ac.seed = seed;
                let model = ac_train_monitored(ACModel::new(seed), &env, &dual, &ac, |done| report(done as f64 / total))
                    .map_err(|e| ApiError::internal(format!("agent training: {e}")))?;
                AgentFile::ActorCritic { version: AGENT_VERSION, model }
            }
            AgentKind::QTable => {
                let mut q = cfg.agent.q_table.clone();
                q.episodes = steps.div_ceil(cfg.horizon);
                q.seed = seed;
                let table = q_train_monitored(&[env], &dual, &q, 500, |done, _| report(done as f64 / total))
                    .map_err(|e| ApiError::internal(format!("agent training: {e}")))?;
                AgentFile::QTable { version: AGENT_VERSION, table }
            }
        };
        let ctx = ContextModel::default();
        let meta = AgentMeta {
            kind: cfg.agent.kind,
            beta,
            steps,
            combined_optimum: best_by(|c| dual.state_score(domain, c, &ctx)).0,
            trained_at: now_ms(),
        };
        let json = file.to_json().map_err(|e| ApiError::internal(e.to_string()))?;
        let path = store::agent_file(user, domain);
        self.inner.store.write_atomic(&path, json.as_bytes())?;
        self.inner.store.write_json(store::agent_meta(user, domain), &meta)?;
        lock(&self.inner.agents).insert((user.to_string(), domain), Arc::new((file, meta.clone())));
        let rel = path.to_string_lossy().into_owned();
        self.update_user(user, |u| u.domains.get_mut(domain).agent = Some(rel))?;
        Ok(meta)
    }

    fn agent(&self, user: &str, domain: Domain) -> Result<Arc<(AgentFile, AgentMeta)>, ApiError> {
        let key = (user.to_string(), domain);
        if let Some(a) = lock(&self.inner.agents).get(&key) {
            return Ok(a.clone());
        }
        let missing = || {
            ApiError::new(
                ErrorKind::NotFound,
                "agent_missing",
                format!("no agent trained for user '{user}' in {domain}"),
            )
        };
        let path = self.inner.store.path(store::agent_file(user, domain));
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing()),
            Err(e) => return Err(e.into()),
        };
        let file = AgentFile::from_json(&text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
        let meta: AgentMeta = self.inner.store.read_json(store::agent_meta(user, domain))?.ok_or_else(missing)?;
        let a = Arc::new((file, meta));
        lock(&self.inner.agents).insert(key, a.clone());
        Ok(a)
    }

    /// The adaptation to show next. The non-adaptive technique always keeps
    /// the default interface.
    pub fn adapted_ui(
        &self,
        user: &str,
        domain: Domain,
        state: UiConfig,
        technique: Technique,
    ) -> Result<AdaptedUi, ApiError> {
        self.user(user)?;
        if technique == Technique::NA {
            return Ok(AdaptedUi {
                action: AdaptationAction::NoOp,
                next_config: UiConfig::default(),
            });
        }
        let agent = self.agent(user, domain)?;
        let mut action = agent.0.policy().act(domain, &state, &ContextModel::default());
        if action.is_identity_on(&state) {
            action = AdaptationAction::NoOp;
        }
        Ok(AdaptedUi {
            action,
            next_config: apply_action(state, action),
        })
    }

    /// Greedy rollouts of the stored agent under its own combined reward.
    pub fn evaluate_agent(&self, user: &str, domain: Domain, episodes: usize, seed: u64) -> Result<EvalReport, ApiError> {
        self.user(user)?;
        let agent = self.agent(user, domain)?;
        let (file, meta) = &*agent;
        let dual = self.dual_reward(user, domain, meta.beta)?;
        let env = EpisodeConfig::new(domain).with_horizon(self.inner.config.horizon);
        let mut policy = file.policy();
        let metrics = evaluate(policy.as_mut(), &env, &dual, episodes, seed, meta.combined_optimum)
            .map_err(|e| ApiError::invalid(e.to_string()))?;
        Ok(EvalReport {
            user_id: user.to_string(),
            domain,
            beta: meta.beta,
            target: meta.combined_optimum,
            metrics,
        })
    }

    // ---- questionnaires and export ----

    pub fn post_questionnaire(
        &self,
        user: &str,
        period: u8,
        payload: QuestionnairePayload,
    ) -> Result<QuestionnaireResult, ApiError> {
        self.user(user)?;
        if !(1..=2).contains(&period) {
            return Err(ApiError::invalid(format!("period must be 1 or 2, got {period}")));
        }
        let (score, per_factor) = match payload.kind {
            QuestionnaireKind::Quis => {
                if payload.reverse_coded.is_some() {
                    return Err(ApiError::invalid("reverse_coded applies to UES only"));
                }
                (quis_score(&QuisResponse { items: payload.items.clone() })?, BTreeMap::new())
            }
            QuestionnaireKind::Ues => {
                let s = ues_score(&UesResponse {
                    items: payload.items.clone(),
                    reverse_coded: payload.reverse_coded.clone(),
                })?;
                (s.overall, s.per_factor)
            }
        };
        let rec = QuestionnaireRecord {
            period,
            kind: payload.kind,
            items: payload.items,
            reverse_coded: payload.reverse_coded,
            score,
            per_factor: per_factor.clone(),
            t: now_ms(),
        };
        self.inner.store.append_jsonl(store::questionnaire_log(user), &rec)?;
        Ok(QuestionnaireResult {
            user_id: user.to_string(),
            period,
            kind: rec.kind,
            score,
            per_factor,
        })
    }

    /// One row per (participant, period) for participants who completed both
    /// questionnaires in both periods; the latest submission counts.
    pub fn results(&self) -> Result<Vec<ResultRecord>, ApiError> {
        let mut out = Vec::new();
        for u in self.users() {
            let log: Vec<QuestionnaireRecord> = self.inner.store.read_jsonl(store::questionnaire_log(&u.user_id))?;
            let latest = |period: u8, kind: QuestionnaireKind| {
                log.iter().rev().find(|r| r.period == period && r.kind == kind).map(|r| r.score)
            };
            let sp = plan(u.group)?;
            let mut rows = Vec::new();
            for period in 1..=2u8 {
                let (Some(satisfaction), Some(engagement)) =
                    (latest(period, QuestionnaireKind::Quis), latest(period, QuestionnaireKind::Ues))
                else {
                    break;
                };
                let pp = sp.period(period).expect("periods 1 and 2 exist");
                rows.push(ResultRecord {
                    participant: u.user_id.clone(),
                    group: u.group,
                    period,
                    technique: pp.technique,
                    domain: pp.domain,
                    satisfaction,
                    engagement,
                });
            }
            if rows.len() == 2 {
                out.extend(rows);
            }
        }
        Ok(out)
    }

    pub fn export_csv(&self) -> Result<String, ApiError> {
        Ok(export_results(&self.results()?)?)
    }
}

fn info(e: &SessionEntry) -> SessionInfo {
    SessionInfo {
        session_id: e.meta.session_id.clone(),
        user_id: e.meta.user_id.clone(),
        domain: e.meta.domain,
        progress: progress_of(&e.session),
    }
}
