//! Active pairwise-comparison ranking of clips.
//!
//! Clips are inserted one at a time into a red-black tree of buckets. Each
//! insertion descends from the root, asking the comparator whether the
//! pending clip is better or worse than the bucket at the current node, so a
//! session of `n` clips needs roughly `Σ log2 i` answers. Clips judged equal
//! share a bucket; skipped clips go to the back of the queue.

pub mod rbtree;

use std::collections::{HashSet, VecDeque};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::ClipSegment;
use crate::rng;
use crate::ui::Domain;

pub use rbtree::{AuditError, RbTree, Side};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("a session needs at least 2 clips, got {0}")]
    TooFewClips(usize),
    #[error("duplicate clip id '{0}'")]
    DuplicateId(String),
    #[error("clip '{id}' belongs to {found}, session domain is {expected}")]
    DomainMismatch {
        id: String,
        expected: Domain,
        found: Domain,
    },
    #[error("query mismatch: expected {expected:?}, got '{got}'")]
    QueryMismatch { expected: Option<String>, got: String },
    #[error("session complete")]
    Complete,
    #[error("ranking unavailable: session incomplete")]
    RankingUnavailable,
    #[error("replay diverged at log entry {0}")]
    ReplayDiverged(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonQuery {
    pub query_id: String,
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreferenceLabel {
    Left,
    Right,
    Equal,
    Skip,
}

/// One answered query, persisted as a line of JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub query_id: String,
    pub left: String,
    pub right: String,
    pub label: PreferenceLabel,
    /// Milliseconds since the Unix epoch.
    pub t: u64,
}

/// Bradley-Terry training label: `mu.0` is the probability mass on `first`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub first: String,
    pub second: String,
    pub mu: (f64, f64),
}

impl PreferencePair {
    pub fn from_label(first: &str, second: &str, label: PreferenceLabel) -> Option<Self> {
        let mu = match label {
            PreferenceLabel::Left => (1.0, 0.0),
            PreferenceLabel::Right => (0.0, 1.0),
            PreferenceLabel::Equal => (0.5, 0.5),
            PreferenceLabel::Skip => return None,
        };
        Some(PreferencePair {
            first: first.to_string(),
            second: second.to_string(),
            mu,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    clip: String,
    node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub placed: usize,
    pub total: usize,
    pub queries: usize,
}

#[derive(Debug, Clone)]
pub struct RankSession {
    participant: String,
    domain: Domain,
    tree: RbTree<Vec<String>>,
    pending: Option<Pending>,
    queue: VecDeque<String>,
    log: Vec<LogEntry>,
    total: usize,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl RankSession {
    /// Starts a session. The insertion order is a seeded shuffle of `clips`;
    /// the first clip seeds the tree without a query.
    pub fn new(
        participant: impl Into<String>,
        domain: Domain,
        clips: &[ClipSegment],
        seed: u64,
    ) -> Result<Self, RankError> {
        let ids: Vec<String> = clips.iter().map(|c| c.id.clone()).collect();
        for c in clips {
            if c.domain != domain {
                return Err(RankError::DomainMismatch {
                    id: c.id.clone(),
                    expected: domain,
                    found: c.domain,
                });
            }
        }
        Self::from_ids(participant, domain, &ids, seed)
    }

    pub fn from_ids(
        participant: impl Into<String>,
        domain: Domain,
        ids: &[String],
        seed: u64,
    ) -> Result<Self, RankError> {
        if ids.len() < 2 {
            return Err(RankError::TooFewClips(ids.len()));
        }
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(RankError::DuplicateId(id.clone()));
            }
        }
        let mut order = ids.to_vec();
        order.shuffle(&mut rng::seeded(seed));
        let mut queue: VecDeque<String> = order.into();
        let mut tree = RbTree::new();
        let first = queue.pop_front().expect("at least two clips");
        tree.insert_at(None, vec![first]);
        let mut s = RankSession {
            participant: participant.into(),
            domain,
            tree,
            pending: None,
            queue,
            log: Vec::new(),
            total: ids.len(),
        };
        s.advance();
        Ok(s)
    }

    /// Rebuilds a session by re-submitting a persisted log.
    pub fn replay(
        participant: impl Into<String>,
        domain: Domain,
        ids: &[String],
        seed: u64,
        log: &[LogEntry],
    ) -> Result<Self, RankError> {
        let mut s = Self::from_ids(participant, domain, ids, seed)?;
        for (i, e) in log.iter().enumerate() {
            match s.next_query() {
                Some(q) if q.query_id == e.query_id && q.left == e.left && q.right == e.right => {}
                _ => return Err(RankError::ReplayDiverged(i)),
            }
            s.submit_at(&e.query_id, e.label, e.t)?;
        }
        Ok(s)
    }

    fn advance(&mut self) {
        if self.pending.is_none() {
            if let Some(clip) = self.queue.pop_front() {
                let node = self.tree.root().expect("tree is seeded");
                self.pending = Some(Pending { clip, node });
            }
        }
    }

    pub fn participant(&self) -> &str {
        &self.participant
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn tree(&self) -> &RbTree<Vec<String>> {
        &self.tree
    }

    pub fn queue(&self) -> impl Iterator<Item = &str> {
        self.queue.iter().map(String::as_str)
    }

    pub fn pending_clip(&self) -> Option<&str> {
        self.pending.as_ref().map(|p| p.clip.as_str())
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_none() && self.queue.is_empty()
    }

    pub fn placed(&self) -> usize {
        self.tree.in_order().iter().map(|&n| self.tree.value(n).len()).sum()
    }

    pub fn progress(&self) -> Progress {
        Progress {
            placed: self.placed(),
            total: self.total,
            queries: self.log.len(),
        }
    }

    /// Number of non-Skip answers so far.
    pub fn answered(&self) -> usize {
        self.log
            .iter()
            .filter(|e| e.label != PreferenceLabel::Skip)
            .count()
    }

    /// The current comparison; calling it repeatedly returns the same query.
    pub fn next_query(&self) -> Option<ComparisonQuery> {
        let p = self.pending.as_ref()?;
        Some(ComparisonQuery {
            query_id: format!("q{}", self.log.len()),
            left: p.clip.clone(),
            right: self.tree.value(p.node)[0].clone(),
        })
    }

    pub fn submit(&mut self, query_id: &str, label: PreferenceLabel) -> Result<(), RankError> {
        self.submit_at(query_id, label, now_ms())
    }

    /// Applies an answer to the current query. `Left` means the pending clip
    /// (left) is preferred and descends into the better subtree.
    pub fn submit_at(&mut self, query_id: &str, label: PreferenceLabel, t: u64) -> Result<(), RankError> {
        let q = match self.next_query() {
            None => return Err(RankError::Complete),
            Some(q) if q.query_id != query_id => {
                return Err(RankError::QueryMismatch {
                    expected: Some(q.query_id),
                    got: query_id.to_string(),
                })
            }
            Some(q) => q,
        };
        let pending = self.pending.take().expect("query implies pending clip");
        match label {
            PreferenceLabel::Equal => {
                self.tree.value_mut(pending.node).push(pending.clip);
            }
            PreferenceLabel::Skip => {
                self.queue.push_back(pending.clip);
            }
            PreferenceLabel::Left | PreferenceLabel::Right => {
                let side = if label == PreferenceLabel::Left {
                    Side::Better
                } else {
                    Side::Worse
                };
                match self.tree.child(pending.node, side) {
                    Some(next) => {
                        self.pending = Some(Pending {
                            clip: pending.clip,
                            node: next,
                        })
                    }
                    None => {
                        self.tree.insert_at(Some((pending.node, side)), vec![pending.clip]);
                    }
                }
            }
        }
        self.log.push(LogEntry {
            query_id: q.query_id,
            left: q.left,
            right: q.right,
            label,
            t,
        });
        self.advance();
        Ok(())
    }

    /// Buckets best-first. Only available once every clip is placed.
    pub fn ranking(&self) -> Result<Vec<Vec<String>>, RankError> {
        if !self.is_complete() {
            return Err(RankError::RankingUnavailable);
        }
        Ok(self.buckets())
    }

    /// Current buckets best-first, whether or not the session is complete.
    pub fn buckets(&self) -> Vec<Vec<String>> {
        self.tree
            .in_order()
            .into_iter()
            .map(|n| self.tree.value(n).clone())
            .collect()
    }

    /// One pair per non-Skip answer. With `closure`, pairs are instead
    /// derived from every ordered bucket pair of the current tree (and ties
    /// within buckets).
    pub fn training_pairs(&self, closure: bool) -> Vec<PreferencePair> {
        if !closure {
            return self
                .log
                .iter()
                .filter_map(|e| PreferencePair::from_label(&e.left, &e.right, e.label))
                .collect();
        }
        let buckets = self.buckets();
        let mut pairs = Vec::new();
        for (i, b) in buckets.iter().enumerate() {
            for (x, a) in b.iter().enumerate() {
                for c in &b[x + 1..] {
                    pairs.extend(PreferencePair::from_label(a, c, PreferenceLabel::Equal));
                }
                for worse in &buckets[i + 1..] {
                    for c in worse {
                        pairs.extend(PreferencePair::from_label(a, c, PreferenceLabel::Left));
                    }
                }
            }
        }
        pairs
    }

    /// Answers queries with `answer` until the session completes.
    pub fn drive(&mut self, mut answer: impl FnMut(&ComparisonQuery) -> PreferenceLabel) {
        while let Some(q) = self.next_query() {
            let label = answer(&q);
            self.submit_at(&q.query_id, label, 0).expect("current query");
        }
    }

    /// Every clip id currently held by the session, in no particular order.
    pub fn all_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.buckets().into_iter().flatten().collect();
        ids.extend(self.pending.iter().map(|p| p.clip.clone()));
        ids.extend(self.queue.iter().cloned());
        ids
    }
}

/// Upper bound on comparisons for binary insertion of `n` items.
pub fn binary_insertion_bound(n: usize) -> usize {
    (2..=n).map(|i| (i as f64).log2().ceil() as usize).sum()
}
