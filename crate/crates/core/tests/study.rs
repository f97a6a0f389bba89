use aui_core::study::{
    assign_groups, cronbach_alpha, export_results, parse_results, plan, quis_score, ues_score, QuestionnaireDef,
    QuisResponse, ResultRecord, StudyError, UesResponse, UES_DIMENSIONS,
};
use proptest::prelude::*;

#[test]
fn thirty_three_participants_give_sixty_six_rows() {
    let ids: Vec<String> = (1..=33).map(|i| format!("P{i:02}")).collect();
    let participants = assign_groups(&ids, 2024).unwrap();
    let mut records = Vec::new();
    for (i, p) in participants.iter().enumerate() {
        let sp = plan(p.group).unwrap();
        for period in 1..=2u8 {
            let pp = sp.period(period).unwrap();
            records.push(ResultRecord {
                participant: p.id.clone(),
                group: p.group,
                period,
                technique: pp.technique,
                domain: pp.domain,
                satisfaction: 5.0 + (i % 5) as f64 * 0.5,
                engagement: 3.0 + period as f64 * 0.25,
            });
        }
    }
    let csv = export_results(&records).unwrap();
    assert_eq!(csv.lines().count(), 67);
    let back = parse_results(&csv).unwrap();
    assert_eq!(back.len(), 66);
    for pair in back.chunks(2) {
        assert_eq!(pair[0].participant, pair[1].participant);
        assert_ne!(pair[0].technique, pair[1].technique);
        assert_ne!(pair[0].domain, pair[1].domain);
    }
}

#[test]
fn alpha_hand_computed_fixture() {
    // Item variances (sample): 2/3, 11/12, 9/4, summing to 23/6.
    // Totals 7, 9, 13, 11 → variance 20/3.
    // α = 3/2 · (1 − (23/6)/(20/3)) = 3/2 · 17/40 = 51/80
    let m = vec![
        vec![2.0, 3.0, 2.0],
        vec![3.0, 4.0, 2.0],
        vec![4.0, 5.0, 4.0],
        vec![3.0, 3.0, 5.0],
    ];
    assert!((cronbach_alpha(&m).unwrap() - 51.0 / 80.0).abs() < 1e-12);
}

#[test]
fn alpha_rejects_small_or_ragged_input() {
    assert!(cronbach_alpha(&[vec![1.0, 2.0]]).is_err());
    assert!(cronbach_alpha(&[vec![1.0], vec![2.0]]).is_err());
    assert!(matches!(
        cronbach_alpha(&[vec![1.0, 2.0], vec![1.0]]),
        Err(StudyError::Arity { .. })
    ));
}

#[test]
fn scorers_reject_out_of_range() {
    assert!(quis_score(&QuisResponse { items: vec![10, 1, 11] }).is_err());
    assert!(quis_score(&QuisResponse { items: vec![0; 27] }).is_err());
    let mut ues = vec![3u8; 31];
    ues[30] = 0;
    assert!(matches!(
        ues_score(&UesResponse { items: ues, reverse_coded: None }),
        Err(StudyError::OutOfRange { items, .. }) if items == vec![30]
    ));
}

/// Index ranges of each UES dimension in the default item order.
fn dimension_ranges() -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    UES_DIMENSIONS
        .iter()
        .map(|(_, n)| {
            let r = start..start + n;
            start += n;
            r
        })
        .collect()
}

proptest! {
    #[test]
    fn quis_permutation_invariant(
        items in prop::collection::vec(1u8..=10, 1..40)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let (a, b) = items;
        let sa = quis_score(&QuisResponse { items: a }).unwrap();
        let sb = quis_score(&QuisResponse { items: b }).unwrap();
        prop_assert!((sa - sb).abs() < 1e-12);
        prop_assert!((1.0..=10.0).contains(&sa));
    }

    #[test]
    fn ues_within_dimension_permutation_invariant(
        items in prop::collection::vec(1u8..=5, 31),
        reverse in prop::collection::vec(any::<bool>(), 31),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut r = aui_core::rng::seeded(seed);
        // Shuffle (value, reverse flag) pairs within each dimension.
        let mut pairs: Vec<(u8, bool)> = items.iter().copied().zip(reverse.iter().copied()).collect();
        for range in dimension_ranges() {
            pairs[range].shuffle(&mut r);
        }
        let a = ues_score(&UesResponse { items: items.clone(), reverse_coded: Some(reverse.clone()) }).unwrap();
        let b = ues_score(&UesResponse {
            items: pairs.iter().map(|p| p.0).collect(),
            reverse_coded: Some(pairs.iter().map(|p| p.1).collect()),
        })
        .unwrap();
        prop_assert!((a.overall - b.overall).abs() < 1e-12);
        for (k, v) in &a.per_factor {
            prop_assert!((v - b.per_factor[k]).abs() < 1e-12);
            prop_assert!((1.0..=5.0).contains(v));
        }
    }

    #[test]
    fn alpha_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(1.0f64..10.0, 4), 3..20),
        c in -50.0f64..50.0,
    ) {
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
        match (cronbach_alpha(&rows), cronbach_alpha(&shifted)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-6 * a.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

#[test]
fn questionnaire_definitions_load_from_json() {
    let json = serde_json::to_string(&QuestionnaireDef::ues()).unwrap();
    let def = QuestionnaireDef::from_json(&json).unwrap();
    assert_eq!(def, QuestionnaireDef::ues());
    assert_eq!(def.items.len(), 31);
    assert_eq!(QuestionnaireDef::quis(27).items.len(), 27);
}
