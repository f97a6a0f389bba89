//! Crossover-study bookkeeping: group assignment, per-group session plans,
//! questionnaire scoring, reliability and descriptive statistics, and the
//! long-format export consumed by external mixed-model tools.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::ui::Domain;

pub const N_GROUPS: u8 = 4;
pub const QUIS_DEFAULT_ITEMS: usize = 27;
pub const QUIS_SCALE: u8 = 10;
pub const UES_ITEMS: usize = 31;
pub const UES_SCALE: u8 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum StudyError {
    #[error("no participants given")]
    Empty,
    #[error("duplicate participant id '{0}'")]
    DuplicateId(String),
    #[error("group must be in 1..=4, got {0}")]
    Group(u8),
    #[error("items out of range (1..={scale}) at positions {items:?}")]
    OutOfRange { scale: u8, items: Vec<usize> },
    #[error("expected {expected} items, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("questionnaire has no items")]
    NoItems,
    #[error("degenerate responses")]
    Degenerate,
    #[error("need at least {0}")]
    TooSmall(&'static str),
    #[error("participant '{participant}' is missing period {period}")]
    MissingPeriod { participant: String, period: u8 },
    #[error("participant '{participant}' has period {period} more than once")]
    DuplicatePeriod { participant: String, period: u8 },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub group: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographic: Option<BTreeMap<String, String>>,
}

/// Seeded shuffle, then round-robin over groups 1..=4. Participants are
/// returned in input order.
pub fn assign_groups(ids: &[String], seed: u64) -> Result<Vec<Participant>, StudyError> {
    if ids.is_empty() {
        return Err(StudyError::Empty);
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(StudyError::DuplicateId(id.clone()));
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut groups = vec![0u8; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        groups[i] = (pos % N_GROUPS as usize) as u8 + 1;
    }
    Ok(ids
        .iter()
        .zip(groups)
        .map(|(id, group)| Participant {
            id: id.clone(),
            group,
            demographic: None,
        })
        .collect())
}

/// Group for the `k`-th registrant (0-based) when participants arrive one at
/// a time: each block of four receives a seeded permutation of 1..=4.
pub fn group_for_index(k: usize, seed: u64) -> u8 {
    let mut perm = [1u8, 2, 3, 4];
    perm.shuffle(&mut rng::seeded(rng::derive(seed, &[(k / 4) as u64])));
    perm[k % 4]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    Adaptive,
    #[serde(rename = "NA")]
    NA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodPlan {
    pub technique: Technique,
    pub domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub period1: PeriodPlan,
    pub period2: PeriodPlan,
}

impl SessionPlan {
    pub fn period(&self, period: u8) -> Option<PeriodPlan> {
        match period {
            1 => Some(self.period1),
            2 => Some(self.period2),
            _ => None,
        }
    }
}

/// The four counterbalanced sequences of the crossover design.
pub fn plan(group: u8) -> Result<SessionPlan, StudyError> {
    use Domain::{Courses, Trips};
    use Technique::{Adaptive, NA};
    let p = |technique, domain| PeriodPlan { technique, domain };
    let (a, b) = match group {
        1 => (p(NA, Courses), p(Adaptive, Trips)),
        2 => (p(Adaptive, Trips), p(NA, Courses)),
        3 => (p(Adaptive, Courses), p(NA, Trips)),
        4 => (p(NA, Trips), p(Adaptive, Courses)),
        g => return Err(StudyError::Group(g)),
    };
    Ok(SessionPlan { period1: a, period2: b })
}

/// One questionnaire item definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDef {
    pub id: String,
    /// Highest point of the scale; the lowest is 1.
    pub scale: u8,
    #[serde(alias = "dimension")]
    pub factor: String,
    #[serde(default)]
    pub reverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireDef {
    pub items: Vec<ItemDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub overall: f64,
    pub per_factor: BTreeMap<String, f64>,
}

impl QuestionnaireDef {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// QUIS form with `n` ten-point items in a single factor.
    pub fn quis(n: usize) -> Self {
        QuestionnaireDef {
            items: (0..n)
                .map(|i| ItemDef {
                    id: format!("quis{:02}", i + 1),
                    scale: QUIS_SCALE,
                    factor: "satisfaction".into(),
                    reverse: false,
                })
                .collect(),
        }
    }

    /// 31 five-point UES items over six dimensions, none reverse-coded.
    pub fn ues() -> Self {
        let mut items = Vec::with_capacity(UES_ITEMS);
        for (dim, count) in UES_DIMENSIONS {
            for _ in 0..count {
                items.push(ItemDef {
                    id: format!("ues{:02}", items.len() + 1),
                    scale: UES_SCALE,
                    factor: dim.to_string(),
                    reverse: false,
                });
            }
        }
        QuestionnaireDef { items }
    }

    /// Validates ranges, applies reverse coding (`v → scale + 1 − v`) and
    /// averages overall and per factor.
    pub fn score(&self, values: &[u8]) -> Result<Scores, StudyError> {
        if self.items.is_empty() {
            return Err(StudyError::NoItems);
        }
        if values.len() != self.items.len() {
            return Err(StudyError::Arity {
                expected: self.items.len(),
                got: values.len(),
            });
        }
        let bad: Vec<usize> = values
            .iter()
            .zip(&self.items)
            .enumerate()
            .filter(|(_, (&v, item))| v < 1 || v > item.scale)
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            let scale = self.items[bad[0]].scale;
            return Err(StudyError::OutOfRange { scale, items: bad });
        }
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        for (&v, item) in values.iter().zip(&self.items) {
            let x = if item.reverse {
                f64::from(item.scale + 1 - v)
            } else {
                f64::from(v)
            };
            total += x;
            let e = sums.entry(item.factor.clone()).or_default();
            e.0 += x;
            e.1 += 1;
        }
        Ok(Scores {
            overall: total / values.len() as f64,
            per_factor: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        })
    }
}

/// UES dimensions with their item counts (31 in total).
pub const UES_DIMENSIONS: [(&str, usize); 6] = [
    ("focused_attention", 7),
    ("perceived_usability", 8),
    ("aesthetic_appeal", 5),
    ("endurability", 5),
    ("novelty", 3),
    ("involvement", 3),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuisResponse {
    pub items: Vec<u8>,
}

/// Mean of the QUIS items (any item count, 1..=10 each).
pub fn quis_score(r: &QuisResponse) -> Result<f64, StudyError> {
    if r.items.is_empty() {
        return Err(StudyError::NoItems);
    }
    Ok(QuestionnaireDef::quis(r.items.len()).score(&r.items)?.overall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UesResponse {
    pub items: Vec<u8>,
    /// Per-item reverse-coding flags; all false when absent.
    #[serde(default)]
    pub reverse_coded: Option<Vec<bool>>,
}

pub fn ues_score(r: &UesResponse) -> Result<Scores, StudyError> {
    let mut def = QuestionnaireDef::ues();
    if let Some(rev) = &r.reverse_coded {
        if rev.len() != UES_ITEMS {
            return Err(StudyError::Arity {
                expected: UES_ITEMS,
                got: rev.len(),
            });
        }
        for (item, &flag) in def.items.iter_mut().zip(rev) {
            item.reverse = flag;
        }
    }
    def.score(&r.items)
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Cronbach's alpha over a participants × items matrix.
pub fn cronbach_alpha(matrix: &[Vec<f64>]) -> Result<f64, StudyError> {
    if matrix.len() < 2 {
        return Err(StudyError::TooSmall("2 participants"));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(StudyError::TooSmall("2 items"));
    }
    if let Some(row) = matrix.iter().find(|r| r.len() != k) {
        return Err(StudyError::Arity {
            expected: k,
            got: row.len(),
        });
    }
    let item_var: f64 = (0..k)
        .map(|j| sample_variance(&matrix.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = matrix.iter().map(|r| r.iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var == 0.0 {
        return Err(StudyError::Degenerate);
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var / total_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; `None` for a single value.
    pub std: Option<f64>,
}

impl DescriptiveStats {
    /// `label | min | max | mean | median | std` with two decimals.
    pub fn table_row(&self, label: &str) -> String {
        let std = self.std.map_or_else(|| "n/a".to_string(), |s| format!("{s:.2}"));
        format!(
            "{label} | {:.2} | {:.2} | {:.2} | {:.2} | {std}",
            self.min, self.max, self.mean, self.median
        )
    }
}

pub fn descriptive(values: &[f64]) -> Result<DescriptiveStats, StudyError> {
    if values.is_empty() {
        return Err(StudyError::TooSmall("1 value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(DescriptiveStats {
        min: sorted[0],
        max: sorted[n - 1],
        mean: sorted.iter().sum::<f64>() / n as f64,
        median,
        std: (n >= 2).then(|| sample_variance(&sorted).sqrt()),
    })
}

/// One participant-period observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub participant: String,
    pub group: u8,
    pub period: u8,
    pub technique: Technique,
    pub domain: Domain,
    pub satisfaction: f64,
    pub engagement: f64,
}

/// Long-format CSV, one row per (participant, period), ordered by participant
/// id then period. Every participant must have exactly periods 1 and 2.
pub fn export_results(records: &[ResultRecord]) -> Result<String, StudyError> {
    let mut by_participant: BTreeMap<&str, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        by_participant.entry(&r.participant).or_default().push(r);
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["participant", "group", "period", "technique", "domain", "satisfaction", "engagement"])
        .map_err(|e| StudyError::Csv(e.to_string()))?;
    for (participant, mut rows) in by_participant {
        rows.sort_by_key(|r| r.period);
        for period in 1..=2u8 {
            match rows.iter().filter(|r| r.period == period).count() {
                0 => {
                    return Err(StudyError::MissingPeriod {
                        participant: participant.to_string(),
                        period,
                    })
                }
                1 => {}
                _ => {
                    return Err(StudyError::DuplicatePeriod {
                        participant: participant.to_string(),
                        period,
                    })
                }
            }
        }
        for r in rows {
            w.serialize(r).map_err(|e| StudyError::Csv(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| StudyError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| StudyError::Csv(e.to_string()))
}

pub fn parse_results(csv_text: &str) -> Result<Vec<ResultRecord>, StudyError> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| StudyError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:02}")).collect()
    }

    #[test]
    fn group_sizes_balanced() {
        let ps = assign_groups(&ids(33), 7).unwrap();
        let mut sizes = [0; 4];
        for p in &ps {
            sizes[p.group as usize - 1] += 1;
        }
        let mut sorted = sizes;
        sorted.sort();
        assert_eq!(sorted, [8, 8, 8, 9]);
        assert_eq!(ps, assign_groups(&ids(33), 7).unwrap());

        let four = assign_groups(&ids(4), 1).unwrap();
        let mut g: Vec<u8> = four.iter().map(|p| p.group).collect();
        g.sort();
        assert_eq!(g, vec![1, 2, 3, 4]);
    }

    #[test]
    fn group_assignment_errors() {
        assert_eq!(assign_groups(&[], 0), Err(StudyError::Empty));
        let dup = vec!["a".to_string(), "a".to_string()];
        assert_eq!(assign_groups(&dup, 0), Err(StudyError::DuplicateId("a".into())));
    }

    #[test]
    fn incremental_groups_are_round_robin_blocks() {
        for block in 0..5 {
            let mut g: Vec<u8> = (block * 4..block * 4 + 4).map(|k| group_for_index(k, 3)).collect();
            g.sort();
            assert_eq!(g, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn crossover_sequences() {
        use Domain::*;
        use Technique::*;
        let expect = [
            (1, (NA, Courses), (Adaptive, Trips)),
            (2, (Adaptive, Trips), (NA, Courses)),
            (3, (Adaptive, Courses), (NA, Trips)),
            (4, (NA, Trips), (Adaptive, Courses)),
        ];
        for (g, a, b) in expect {
            let p = plan(g).unwrap();
            assert_eq!((p.period1.technique, p.period1.domain), a);
            assert_eq!((p.period2.technique, p.period2.domain), b);
            assert_ne!(p.period1.technique, p.period2.technique);
            assert_ne!(p.period1.domain, p.period2.domain);
        }
        assert_eq!(plan(0), Err(StudyError::Group(0)));
        assert_eq!(plan(5), Err(StudyError::Group(5)));
    }

    #[test]
    fn quis_means() {
        assert_eq!(quis_score(&QuisResponse { items: vec![7; 27] }).unwrap(), 7.0);
        assert_eq!(quis_score(&QuisResponse { items: vec![4, 6] }).unwrap(), 5.0);
        assert_eq!(quis_score(&QuisResponse { items: vec![6, 4] }).unwrap(), 5.0);
        let err = quis_score(&QuisResponse { items: vec![0, 5, 11] }).unwrap_err();
        assert_eq!(err, StudyError::OutOfRange { scale: 10, items: vec![0, 2] });
        assert_eq!(quis_score(&QuisResponse { items: vec![] }), Err(StudyError::NoItems));
    }

    #[test]
    fn ues_scoring() {
        let all3 = ues_score(&UesResponse { items: vec![3; 31], reverse_coded: None }).unwrap();
        assert_eq!(all3.overall, 3.0);
        assert_eq!(all3.per_factor.len(), 6);
        assert!(all3.per_factor.values().all(|&v| v == 3.0));

        let mut items = vec![3; 31];
        items[0] = 1;
        let mut rev = vec![false; 31];
        rev[0] = true;
        let s = ues_score(&UesResponse { items, reverse_coded: Some(rev) }).unwrap();
        assert!((s.overall - (30.0 * 3.0 + 5.0) / 31.0).abs() < 1e-12);
        assert!((s.per_factor["focused_attention"] - (6.0 * 3.0 + 5.0) / 7.0).abs() < 1e-12);

        assert_eq!(
            ues_score(&UesResponse { items: vec![3; 30], reverse_coded: None }),
            Err(StudyError::Arity { expected: 31, got: 30 })
        );
        assert!(matches!(
            ues_score(&UesResponse { items: vec![6; 31], reverse_coded: None }),
            Err(StudyError::OutOfRange { scale: 5, .. })
        ));
    }

    #[test]
    fn ues_dimension_means_decompose_overall() {
        let mut r = rng::seeded(2);
        let def = QuestionnaireDef::ues();
        for _ in 0..50 {
            let items: Vec<u8> = (0..31).map(|_| r.random_range(1..=5)).collect();
            let s = ues_score(&UesResponse { items, reverse_coded: None }).unwrap();
            let weighted: f64 = UES_DIMENSIONS
                .iter()
                .map(|(d, n)| s.per_factor[*d] * *n as f64)
                .sum::<f64>()
                / 31.0;
            assert!((weighted - s.overall).abs() < 1e-12);
        }
        assert_eq!(def.items.len(), 31);
    }

    #[test]
    fn questionnaire_from_json() {
        let def = QuestionnaireDef::from_json(
            r#"{"items":[{"id":"a","scale":5,"dimension":"novelty","reverse":true},{"id":"b","scale":5,"factor":"novelty"}]}"#,
        )
        .unwrap();
        let s = def.score(&[1, 3]).unwrap();
        assert_eq!(s.overall, 4.0);
        assert_eq!(s.per_factor["novelty"], 4.0);
    }

    #[test]
    fn alpha_perfect_items() {
        let m = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]];
        assert!((cronbach_alpha(&m).unwrap() - 1.0).abs() < 1e-12);
        let flat = vec![vec![3.0, 3.0], vec![3.0, 3.0]];
        assert_eq!(cronbach_alpha(&flat), Err(StudyError::Degenerate));
    }

    #[test]
    fn alpha_independent_items_near_zero() {
        let mut r = rng::seeded(10);
        let m: Vec<Vec<f64>> = (0..10_000).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        assert!(cronbach_alpha(&m).unwrap().abs() < 0.15);
    }

    #[test]
    fn alpha_shift_invariant() {
        let m = vec![vec![2.0, 3.0, 5.0], vec![4.0, 4.0, 6.0], vec![3.0, 5.0, 4.0], vec![5.0, 6.0, 7.0]];
        let shifted: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v + 3.5).collect()).collect();
        assert!((cronbach_alpha(&m).unwrap() - cronbach_alpha(&shifted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn descriptive_basics() {
        let d = descriptive(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((d.min, d.max, d.mean, d.median), (1.0, 3.0, 2.0, 2.0));
        assert_eq!(d.std, Some(1.0));
        assert_eq!(descriptive(&[5.0]).unwrap().std, None);
        assert_eq!(descriptive(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        assert!(descriptive(&[]).is_err());
    }

    #[test]
    fn table_row_format() {
        let d = DescriptiveStats { min: 4.61, max: 8.98, mean: 6.90, median: 7.02, std: Some(1.11) };
        assert_eq!(d.table_row("Adaptive"), "Adaptive | 4.61 | 8.98 | 6.90 | 7.02 | 1.11");
    }

    fn record(p: &str, period: u8) -> ResultRecord {
        let plan = plan(2).unwrap().period(period).unwrap();
        ResultRecord {
            participant: p.into(),
            group: 2,
            period,
            technique: plan.technique,
            domain: plan.domain,
            satisfaction: 6.25 + period as f64 / 3.0,
            engagement: 3.1,
        }
    }

    #[test]
    fn export_roundtrip_and_validation() {
        assert_eq!(
            export_results(&[]).unwrap(),
            "participant,group,period,technique,domain,satisfaction,engagement\n"
        );
        let recs = vec![record("b", 2), record("a", 1), record("b", 1), record("a", 2)];
        let csv = export_results(&recs).unwrap();
        let back = parse_results(&csv).unwrap();
        assert_eq!(back, vec![record("a", 1), record("a", 2), record("b", 1), record("b", 2)]);
        assert!(csv.lines().nth(1).unwrap().starts_with("a,2,1,Adaptive,trips,"));
        assert!(matches!(
            export_results(&[record("a", 1)]),
            Err(StudyError::MissingPeriod { period: 2, .. })
        ));
    }
}
