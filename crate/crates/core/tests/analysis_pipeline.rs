mod common;

use common::brute_force_violations;
use ldvote_core::analysis::{
    bootstrap_exp1, conditional_differential, estimate_thresholds, frequency_summary, ingest, ks_two_sample,
    scan_thresholds, write_csv, ClusterLevel,
};
use ldvote_core::engine::Behavior;
use ldvote_core::model::{PrecisionDistribution, StrategyProfileLD, StrategyProfileMVA, SubjectAction, Treatment};
use ldvote_core::montecarlo::{generate_dataset, SyntheticDesign};
use proptest::prelude::*;

const LAB: (f64, f64) = (0.5, 0.7);

fn design(treatment: Treatment, n: usize, sessions: usize) -> SyntheticDesign {
    let dist = PrecisionDistribution::uniform(0.5, 0.7).unwrap();
    let behavior = match treatment {
        Treatment::Ld => Behavior::Ld(StrategyProfileLD::canonical(0.543, &dist).unwrap()),
        Treatment::Mva => Behavior::Mva(StrategyProfileMVA::new(0.58, &dist).unwrap()),
    };
    SyntheticDesign {
        treatment,
        group_size: n,
        n_experts: if n == 5 { 1 } else { 3 },
        expert_precision: 0.7,
        distribution: dist,
        behavior,
        n_sessions: sessions,
        subjects_per_session: 15,
        rounds: 20,
    }
}

fn decisions() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec(((50u32..=70).prop_map(|c| c as f64 / 100.0), any::<bool>()), 1..=16)
}

fn mismatches(decisions: &[(f64, bool)], t: f64) -> usize {
    decisions
        .iter()
        .filter(|&&(q, w)| (q < t || t >= LAB.1) != w)
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cut_scan_equals_brute_force(d in decisions()) {
        let e = scan_thresholds("s", &d, LAB).unwrap();
        prop_assert_eq!(e.min_violation_count, brute_force_violations(&d));
        prop_assert!(e.min_violation_count <= d.len() / 2);
    }

    #[test]
    fn estimated_thresholds_reproduce_the_count(d in decisions()) {
        let e = scan_thresholds("s", &d, LAB).unwrap();
        for (lo, hi) in &e.intervals {
            prop_assert_eq!(mismatches(&d, 0.5 * (lo + hi)), e.min_violation_count);
        }
        prop_assert!(e.threshold_range.0 >= LAB.0 && e.threshold_range.1 <= LAB.1);
    }

    #[test]
    fn permutation_p_value_ignores_order(mut a in prop::collection::vec(0.0f64..1.0, 1..12), mut b in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let first = ks_two_sample(&a, &b, 99, 4).unwrap();
        a.reverse();
        let mid = b.len() / 2;
        b.rotate_left(mid);
        prop_assert_eq!(first, ks_two_sample(&a, &b, 99, 4).unwrap());
    }

    #[test]
    fn differential_identity(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..50)) {
        let d = conditional_differential(&pairs);
        prop_assert_eq!(d.system_correct + d.mv_correct, d.disagreements);
        if let (Some(gs), Some(gm)) = (d.gamma_system(), d.gamma_mv()) {
            prop_assert!((gm - (1.0 - gs)).abs() < 1e-15);
        } else {
            prop_assert_eq!(d.disagreements, 0);
        }
    }
}

#[test]
fn synthetic_dataset_round_trips() {
    let mut rows = generate_dataset(&design(Treatment::Ld, 5, 2), 1).unwrap().rows;
    rows.extend(generate_dataset(&design(Treatment::Mva, 15, 2), 2).unwrap().rows);
    let data = ldvote_core::model::SubjectDataset { rows };
    let mut first = Vec::new();
    write_csv(&data, &mut first).unwrap();
    let back = ingest(first.as_slice(), Some(LAB)).unwrap();
    assert!(back.is_clean(), "{:?}", back.issues);
    assert_eq!(back.dataset, data);
    let mut second = Vec::new();
    write_csv(&back.dataset, &mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn synthetic_delegation_rate_matches_the_generator() {
    let data = generate_dataset(&design(Treatment::Ld, 5, 20), 3).unwrap();
    let rows = frequency_summary(&data, ClusterLevel::Session).unwrap();
    let r = &rows[0];
    let target = (0.543 - 0.5) / 0.2;
    assert!((r.frequency - target).abs() < 3.0 * r.std_error.unwrap(), "{r:?}");
    assert_eq!(r.n_clusters, 20);
}

#[test]
fn equilibrium_subjects_have_no_violations() {
    let data = generate_dataset(&design(Treatment::Mva, 15, 1), 4).unwrap();
    let report = estimate_thresholds(&data, Treatment::Mva, 15, LAB).unwrap();
    assert_eq!(report.estimates.len() + report.flagged.len(), 15);
    for e in &report.estimates {
        assert_eq!(e.min_violation_count, 0);
        assert!(e.threshold_range.0 <= 0.58 && 0.58 <= e.threshold_range.1, "{e:?}");
    }
}

#[test]
fn always_correct_treatment_bootstraps_to_one() {
    let mut data = generate_dataset(&design(Treatment::Ld, 5, 2), 5).unwrap();
    for r in &mut data.rows {
        r.signal_correct = true;
        if r.action == SubjectAction::Vote {
            r.vote_matches_signal = Some(true);
        }
    }
    let b = bootstrap_exp1(&data, Treatment::Ld, 5, 200, 6).unwrap();
    assert!(b.frequency.values.iter().all(|&v| v == 1.0));
    assert_eq!(b.no_disagreement_reps, 200);
    assert!(b.differential.summary.is_none());
}

#[test]
fn bootstrap_is_seeded() {
    let data = generate_dataset(&design(Treatment::Mva, 15, 3), 7).unwrap();
    let a = bootstrap_exp1(&data, Treatment::Mva, 15, 300, 8).unwrap();
    let b = bootstrap_exp1(&data, Treatment::Mva, 15, 300, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.decisions_per_rep, 120);
    assert_eq!(a.frequency.values.len(), 300);
    for v in &a.differential.values {
        assert!((-1.0..=1.0).contains(v));
    }
}

#[test]
fn bootstrap_needs_both_roles() {
    let mut data = generate_dataset(&design(Treatment::Ld, 5, 1), 9).unwrap();
    data.rows.retain(|r| r.role == ldvote_core::model::Role::NonExpert);
    assert!(bootstrap_exp1(&data, Treatment::Ld, 5, 10, 1).is_err());
}
