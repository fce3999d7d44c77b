//! Independent reference computations used as oracles by the integration
//! tests. Everything here is brute force: every signal pattern and every
//! delegation target is enumerated explicitly.

#![allow(dead_code)]

use ldvote_core::model::PrecisionDistribution;

pub const GRID: [f64; 5] = [0.5, 0.55, 0.6, 0.65, 0.7];

/// Five equally likely precisions on the lab support.
pub fn grid_distribution() -> PrecisionDistribution {
    PrecisionDistribution::empirical(GRID.iter().map(|&q| (q, 0.2)).collect()).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Act {
    Vote,
    /// Delegate to an expert drawn uniformly (LD) or abstain (MVA).
    Withdraw,
}

/// Probability that the group decides correctly when `k` experts of
/// precision `p` vote and each non-expert `(q, act)` acts as given.
/// Withdrawn votes either move to a uniformly drawn expert (`delegation`)
/// or vanish. Ties are worth one half.
pub fn group_correct(p: f64, k: usize, nonexperts: &[(f64, Act)], delegation: bool) -> f64 {
    let voters: Vec<f64> = std::iter::repeat(p)
        .take(k)
        .chain(nonexperts.iter().filter(|(_, a)| *a == Act::Vote).map(|(q, _)| *q))
        .collect();
    let withdrawn = nonexperts.iter().filter(|(_, a)| *a == Act::Withdraw).count();
    let n_voters = voters.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << n_voters) {
        let mut prob = 1.0;
        for (v, &q) in voters.iter().enumerate() {
            prob *= if mask >> v & 1 == 1 { q } else { 1.0 - q };
        }
        if prob == 0.0 {
            continue;
        }
        if !delegation || withdrawn == 0 {
            let right = mask.count_ones() as usize;
            total += prob * score(right, n_voters - right);
            continue;
        }
        // every assignment of the withdrawn votes to experts is equally likely
        let assignments = k.pow(withdrawn as u32);
        let mut acc = 0.0;
        for code in 0..assignments {
            let mut weight: Vec<usize> = vec![1; n_voters];
            let mut c = code;
            for _ in 0..withdrawn {
                weight[c % k] += 1;
                c /= k;
            }
            let right: usize = (0..n_voters).filter(|&v| mask >> v & 1 == 1).map(|v| weight[v]).sum();
            let total_w: usize = weight.iter().sum();
            acc += score(right, total_w - right);
        }
        total += prob * acc / assignments as f64;
    }
    total
}

fn score(right: usize, wrong: usize) -> f64 {
    match right.cmp(&wrong) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Less => 0.0,
    }
}

fn act_at(q: f64, threshold: f64, hi: f64) -> Act {
    if q < threshold || threshold >= hi {
        Act::Withdraw
    } else {
        Act::Vote
    }
}

/// Expectation over every type profile of `others` non-experts drawn from the
/// grid, with a focal non-expert fixed to `focal` (if any).
fn over_types(
    p: f64,
    k: usize,
    others: usize,
    threshold: f64,
    focal: Option<(f64, Act)>,
    delegation: bool,
) -> f64 {
    let hi = GRID[GRID.len() - 1];
    let profiles = GRID.len().pow(others as u32);
    let mut total = 0.0;
    for code in 0..profiles {
        let mut c = code;
        let mut nonexperts: Vec<(f64, Act)> = focal.into_iter().collect();
        for _ in 0..others {
            let q = GRID[c % GRID.len()];
            c /= GRID.len();
            nonexperts.push((q, act_at(q, threshold, hi)));
        }
        total += group_correct(p, k, &nonexperts, delegation);
    }
    total / profiles as f64
}

/// Interim utility of a non-expert of precision `q` who votes while the
/// others follow `threshold`.
pub fn interim_vote(n: usize, k: usize, p: f64, threshold: f64, q: f64, delegation: bool) -> f64 {
    over_types(p, k, n - k - 1, threshold, Some((q, Act::Vote)), delegation)
}

/// Interim utility of a non-expert who withdraws while the others follow
/// `threshold`.
pub fn interim_withdraw(n: usize, k: usize, p: f64, threshold: f64, delegation: bool) -> f64 {
    over_types(p, k, n - k - 1, threshold, Some((0.5, Act::Withdraw)), delegation)
}

/// Ex-ante probability of a correct decision when everybody follows
/// `threshold`.
pub fn ex_ante(n: usize, k: usize, p: f64, threshold: f64, delegation: bool) -> f64 {
    over_types(p, k, n - k, threshold, None, delegation)
}

/// Minimal flips to make a precision-sorted withdraw/vote sequence
/// consistent with some threshold, by trying every flip set.
pub fn brute_force_violations(decisions: &[(f64, bool)]) -> usize {
    let n = decisions.len();
    assert!(n <= 20);
    let mut best = usize::MAX;
    for flips in 0u32..(1 << n) {
        let cost = flips.count_ones() as usize;
        if cost >= best {
            continue;
        }
        let flipped: Vec<(f64, bool)> = decisions
            .iter()
            .enumerate()
            .map(|(i, &(q, w))| (q, w != (flips >> i & 1 == 1)))
            .collect();
        // threshold form: every withdrawal is at a strictly lower precision
        // than every vote
        let max_withdraw = flipped.iter().filter(|d| d.1).map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
        let min_vote = flipped.iter().filter(|d| !d.1).map(|d| d.0).fold(f64::INFINITY, f64::min);
        if max_withdraw < min_vote {
            best = cost;
        }
    }
    best
}
