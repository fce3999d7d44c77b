use ldvote_core::engine::{resolve_delegations, tally, DelegationGraph, TraceEvent};
use ldvote_core::model::{Alternative, Role, VoterAction};
use ldvote_core::rng::{stream, Purpose};
use proptest::prelude::*;
use rand::Rng;

fn roles(n: usize, k: usize) -> Vec<Role> {
    (0..n).map(|i| if i < k { Role::Expert } else { Role::NonExpert }).collect()
}

/// Experts 0, 1, 2; non-experts i = 3 and j = 4 delegate to expert z = 0,
/// who delegates back to i. Voters 5 and 6 cast.
fn triangle() -> DelegationGraph {
    let mut targets = vec![None; 7];
    targets[3] = Some(0);
    targets[4] = Some(0);
    targets[0] = Some(3);
    DelegationGraph::from_targets(&roles(7, 3), targets).unwrap()
}

#[test]
fn broken_link_is_uniform_over_the_three_delegators() {
    let runs = 30_000u64;
    let mut first = [0u64; 3];
    for r in 0..runs {
        let res = triangle().resolve(&mut stream(11, r, Purpose::Delegation));
        let TraceEvent::Redirect { attempts, target, .. } = &res.trace[0] else {
            panic!("expected a redirect, got {:?}", res.trace);
        };
        assert_eq!(attempts.len(), 1, "every link has an eligible target here");
        let link = attempts[0];
        match link {
            0 => {
                first[2] += 1;
                assert!([5, 6].contains(target));
                assert_eq!(res.weights[*target], 4);
            }
            3 | 4 => {
                first[link - 3] += 1;
                assert!([1, 2].contains(target));
                assert_eq!(res.weights[*target], 4);
            }
            other => panic!("voter {other} is not part of the cycle's basin"),
        }
        assert_eq!(res.weights.iter().sum::<u32>(), 7);
    }
    for c in first {
        let share = c as f64 / runs as f64;
        assert!((share - 1.0 / 3.0).abs() < 0.015, "{first:?}");
    }
}

#[test]
fn cycle_with_no_outside_target_in_category_falls_back() {
    // two experts delegate to each other; the only other voter is a caster
    // of the other class
    let targets = vec![Some(1), Some(0), None];
    let g = DelegationGraph::from_targets(&[Role::Expert, Role::Expert, Role::NonExpert], targets).unwrap();
    let res = g.resolve(&mut stream(1, 0, Purpose::Delegation));
    assert!(matches!(res.trace[0], TraceEvent::Fallback { .. }));
    assert_eq!(res.weights, vec![0, 0, 3]);
}

#[test]
fn everyone_in_one_cycle_is_a_coin_toss() {
    let runs = 40_000u64;
    let mut right = 0u64;
    for r in 0..runs {
        let mut rng = stream(5, r, Purpose::Delegation);
        let targets = vec![Some(1), Some(2), Some(0)];
        let res = DelegationGraph::from_targets(&roles(3, 1), targets).unwrap().resolve(&mut rng);
        assert!(res.all_cycle);
        let votes = vec![Some(Alternative::One); 3];
        let d = tally(&res.weights, &votes, &mut stream(5, r, Purpose::Tally));
        assert!(d.is_coin_toss());
        right += u64::from(d.alternative() == Alternative::One);
    }
    assert!((right as f64 / runs as f64 - 0.5).abs() < 0.01);
}

#[test]
fn long_chain_moves_whole_packets() {
    // 4 -> 3 -> 2 -> 1 -> 0, voter 0 casts
    let targets = vec![None, Some(0), Some(1), Some(2), Some(3)];
    let res = DelegationGraph::from_targets(&roles(5, 1), targets)
        .unwrap()
        .resolve(&mut stream(0, 0, Purpose::Delegation));
    assert_eq!(res.weights, vec![5, 0, 0, 0, 0]);
    assert!(res.trace.is_empty());
}

fn random_actions(n: usize, k: usize, seed: u64) -> Vec<VoterAction> {
    let mut rng = stream(seed, 0, Purpose::Actions);
    (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            let other_experts = k - usize::from(i < k);
            let other_nonexperts = n - k - usize::from(i >= k);
            if u < 0.3 && other_experts > 0 {
                VoterAction::Delegate(Role::Expert)
            } else if u < 0.6 && other_nonexperts > 0 {
                VoterAction::Delegate(Role::NonExpert)
            } else {
                VoterAction::CastVote(Alternative::One)
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn votes_are_conserved((n, k) in (1usize..10).prop_flat_map(|h| (Just(2 * h + 1), (0..h).prop_map(|j| 2 * j + 1))), seed in any::<u64>()) {
        let actions = random_actions(n, k, seed);
        let res = resolve_delegations(&roles(n, k), &actions, &mut stream(seed, 1, Purpose::Delegation)).unwrap();
        if res.all_cycle {
            prop_assert!(res.weights.iter().all(|&w| w == 0));
            prop_assert!(actions.iter().all(|a| matches!(a, VoterAction::Delegate(_))));
        } else {
            prop_assert_eq!(res.weights.iter().sum::<u32>() as usize, n);
            for (a, &w) in actions.iter().zip(&res.weights) {
                if matches!(a, VoterAction::Delegate(_)) {
                    prop_assert_eq!(w, 0);
                } else {
                    prop_assert!(w >= 1);
                }
            }
        }
    }
}
