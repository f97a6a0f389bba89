use std::collections::BTreeMap;
use std::time::Instant;

use aui_core::env::{generate_clips, ClipPolicy, ClipSegment};
use aui_core::persona::{make_personas, SimulatedHuman};
use aui_core::rank::{binary_insertion_bound, PreferenceLabel, RankSession};
use aui_core::reward::clip_store;
use aui_core::ui::Domain;
use proptest::prelude::*;
use rand::Rng as _;

fn courses(n: usize, seed: u64) -> Vec<ClipSegment> {
    generate_clips(n, ClipPolicy::UniformRandomAction, seed)
        .into_iter()
        .filter(|c| c.domain == Domain::Courses)
        .collect()
}

fn id_multiset(s: &RankSession) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for b in s.buckets() {
        for id in b {
            *m.entry(id).or_insert(0) += 1;
        }
    }
    for id in s.pending_clip().into_iter().chain(s.queue()) {
        *m.entry(id.to_string()).or_insert(0) += 1;
    }
    m
}

#[test]
fn noiseless_ranking_matches_utility_sort() {
    let start = Instant::now();
    let human = SimulatedHuman::new(make_personas(4, 11).remove(3));
    let clips = courses(32, 5);
    let mut utils: Vec<f64> = clips.iter().map(|c| human.utility(c)).collect();
    utils.sort_by(f64::total_cmp);
    assert!(utils.windows(2).all(|w| w[1] - w[0] > 1e-9), "fixture needs distinct utilities");

    let store = clip_store(clips.clone());
    let mut s = RankSession::new("p", Domain::Courses, &clips, 1).unwrap();
    s.drive(|q| human.compare(&store[&q.left], &store[&q.right]));
    let ranking = s.ranking().unwrap();

    let mut expected: Vec<&ClipSegment> = clips.iter().collect();
    expected.sort_by(|a, b| human.utility(b).total_cmp(&human.utility(a)));
    let expected: Vec<Vec<String>> = expected.iter().map(|c| vec![c.id.clone()]).collect();
    assert_eq!(ranking, expected);
    let asked = s.log().iter().filter(|e| e.label != PreferenceLabel::Skip).count();
    assert!((100..=135).contains(&asked), "asked {asked}");
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn query_counts_across_seeds() {
    let human = SimulatedHuman::new(make_personas(5, 2).remove(4));
    let clips = courses(32, 9);
    let store = clip_store(clips.clone());
    for seed in 0..50 {
        let mut s = RankSession::new("p", Domain::Courses, &clips, seed).unwrap();
        s.drive(|q| human.compare(&store[&q.left], &store[&q.right]));
        assert!(s.log().len() <= binary_insertion_bound(32), "seed {seed}: {}", s.log().len());
        assert!(s.log().len() >= 100);
    }
}

#[test]
fn audit_after_every_randomized_submit() {
    let start = Instant::now();
    let mut rng = aui_core::rng::seeded(77);
    let mut submits = 0;
    let mut session_no = 0u64;
    while submits < 10_000 {
        let n = rng.random_range(2..60);
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let mut s = RankSession::from_ids("fuzz", Domain::Trips, &ids, session_no).unwrap();
        session_no += 1;
        let before = id_multiset(&s);
        while let Some(q) = s.next_query() {
            let label = match rng.random_range(0..10) {
                0 => PreferenceLabel::Skip,
                1 => PreferenceLabel::Equal,
                2..=5 => PreferenceLabel::Left,
                _ => PreferenceLabel::Right,
            };
            s.submit(&q.query_id, label).unwrap();
            submits += 1;
            s.tree().audit().unwrap();
            assert_eq!(id_multiset(&s), before);
        }
        let buckets = s.tree().len() as f64;
        assert!(s.tree().height() as f64 <= 2.0 * (buckets + 1.0).log2());
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perfect_comparator_sorts_and_respects_bound(
        keys in prop::collection::hash_set(0u32..10_000, 2..80),
        seed in any::<u64>(),
    ) {
        let keys: Vec<u32> = keys.into_iter().collect();
        let ids: Vec<String> = keys.iter().map(|k| format!("k{k}")).collect();
        let key = |id: &str| id[1..].parse::<u32>().unwrap();
        let mut s = RankSession::from_ids("p", Domain::Courses, &ids, seed).unwrap();
        s.drive(|q| if key(&q.left) > key(&q.right) { PreferenceLabel::Left } else { PreferenceLabel::Right });
        let ranking: Vec<u32> = s.ranking().unwrap().into_iter().map(|b| key(&b[0])).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        prop_assert_eq!(ranking, sorted);
        prop_assert!(s.log().len() <= tree_descent_bound(keys.len()));
    }
}

/// Worst case for descents through a red-black tree that holds `i` nodes:
/// one comparison per level, height ≤ 2·log2(i + 1).
fn tree_descent_bound(n: usize) -> usize {
    (1..n).map(|i| (2.0 * ((i + 1) as f64).log2()).floor() as usize).sum()
}
