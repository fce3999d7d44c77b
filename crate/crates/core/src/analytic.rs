//! Exact interim and ex-ante expected utilities.
//!
//! All quantities are evaluated by dynamic programs over vote counts. For a
//! focal non-expert, the other `M - 1` non-experts split into `z` voters and
//! `M - 1 - z` delegators; voters are correct independently with the mean
//! precision of those above the threshold; delegated votes land on experts
//! uniformly, so the number landing on correct experts is assembled one vote
//! at a time by [`delegated_allocation_pmf`].
//!
//! Interim utility from voting is affine in the focal voter's own precision,
//! so the ex-ante integral over voting types reduces to evaluating it at the
//! conditional mean precision of voters.

use crate::error::{Error, Result};
use crate::model::{Electorate, PrecisionDistribution, StrategyProfileLD, StrategyProfileMVA};

/// `Binomial(n, p)` probabilities built by repeated convolution.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for trial in 0..n {
        for k in (0..=trial + 1).rev() {
            let stay = if k <= trial { pmf[k] * (1.0 - p) } else { 0.0 };
            let step = if k > 0 { pmf[k - 1] * p } else { 0.0 };
            pmf[k] = stay + step;
        }
    }
    pmf
}

/// Distribution of the number of `delegated` votes that land on the
/// `correct_experts` experts who hold a correct signal, when each delegated
/// vote picks one of `n_experts` experts uniformly.
///
/// State of the program: (votes assigned so far, votes on correct experts).
pub fn delegated_allocation_pmf(delegated: usize, correct_experts: usize, n_experts: usize) -> Vec<f64> {
    let share = correct_experts as f64 / n_experts as f64;
    let mut dp = vec![0.0; delegated + 1];
    dp[0] = 1.0;
    for assigned in 0..delegated {
        for on_correct in (0..=assigned + 1).rev() {
            let miss = if on_correct <= assigned { dp[on_correct] * (1.0 - share) } else { 0.0 };
            let hit = if on_correct > 0 { dp[on_correct - 1] * share } else { 0.0 };
            dp[on_correct] = miss + hit;
        }
    }
    dp
}

/// Expert-side effective correct weight `c_e + x` for `delegated` votes.
fn expert_side_pmf(el: &Electorate, delegated: usize) -> Vec<f64> {
    let k = el.n_experts();
    let experts = binomial_pmf(k, el.expert_precision());
    let mut out = vec![0.0; k + delegated + 1];
    for (c_e, &pe) in experts.iter().enumerate() {
        if pe == 0.0 {
            continue;
        }
        for (x, px) in delegated_allocation_pmf(delegated, c_e, k).into_iter().enumerate() {
            out[c_e + x] += pe * px;
        }
    }
    out
}

/// `tail[s] = P(S >= s)`, with one trailing zero.
fn tails(pmf: &[f64]) -> Vec<f64> {
    let mut tail = vec![0.0; pmf.len() + 1];
    for s in (0..pmf.len()).rev() {
        tail[s] = tail[s + 1] + pmf[s];
    }
    tail
}

fn tail_at(tail: &[f64], need: isize) -> f64 {
    if need <= 0 {
        1.0
    } else if need as usize >= tail.len() {
        0.0
    } else {
        tail[need as usize]
    }
}

/// Payoff of a tally with `correct` of `total` votes on the right side,
/// breaking exact ties by a fair coin.
pub fn majority_score(correct: usize, total: usize) -> f64 {
    match (2 * correct).cmp(&total) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Less => 0.0,
    }
}

fn require_nonexperts(el: &Electorate) -> Result<()> {
    if el.n_nonexperts() == 0 {
        Err(Error::InvalidArgument(
            "interim utilities need at least one non-expert".into(),
        ))
    } else {
        Ok(())
    }
}

/// Interim utilities of a focal non-expert under liquid democracy when the
/// others follow a canonical threshold profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LdInterim {
    /// P(correct decision | focal votes and her signal is correct).
    pub vote_if_correct: f64,
    /// P(correct decision | focal votes and her signal is wrong).
    pub vote_if_wrong: f64,
    /// P(correct decision | focal delegates to a random expert).
    pub delegate: f64,
}

impl LdInterim {
    /// Interim utility of voting with precision `q`.
    pub fn vote(&self, q: f64) -> f64 {
        q * self.vote_if_correct + (1.0 - q) * self.vote_if_wrong
    }

    /// Gain from voting rather than delegating at precision `q`.
    pub fn gain_from_voting(&self, q: f64) -> f64 {
        self.vote(q) - self.delegate
    }
}

pub fn ld_interim(threshold: f64, el: &Electorate, dist: &PrecisionDistribution) -> Result<LdInterim> {
    require_nonexperts(el)?;
    let m = el.n_nonexperts();
    let n = el.n_total();
    let need = (n / 2 + 1) as isize;
    let withdraw = dist.withdraw_mass(threshold);
    let mu_v = dist.participant_mean(threshold);

    let others = binomial_pmf(m - 1, 1.0 - withdraw);
    let expert_tails: Vec<Vec<f64>> = (0..=m).map(|d| tails(&expert_side_pmf(el, d))).collect();

    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for (z, &pz) in others.iter().enumerate() {
        if pz == 0.0 {
            continue;
        }
        let voting = binomial_pmf(z, mu_v);
        let tail_nd = &expert_tails[m - 1 - z];
        let tail_d = &expert_tails[m - z];
        for (c_n, &pc) in voting.iter().enumerate() {
            let w = pz * pc;
            if w == 0.0 {
                continue;
            }
            let c_n = c_n as isize;
            a += w * tail_at(tail_nd, need - c_n - 1);
            b += w * tail_at(tail_nd, need - c_n);
            d += w * tail_at(tail_d, need - c_n);
        }
    }
    Ok(LdInterim {
        vote_if_correct: a,
        vote_if_wrong: b,
        delegate: d,
    })
}

/// Interim utilities of a focal non-expert under majority voting with
/// abstention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvaInterim {
    pub vote_if_correct: f64,
    pub vote_if_wrong: f64,
    pub abstain: f64,
}

impl MvaInterim {
    pub fn vote(&self, q: f64) -> f64 {
        q * self.vote_if_correct + (1.0 - q) * self.vote_if_wrong
    }

    pub fn gain_from_voting(&self, q: f64) -> f64 {
        self.vote(q) - self.abstain
    }
}

pub fn mva_interim(threshold: f64, el: &Electorate, dist: &PrecisionDistribution) -> Result<MvaInterim> {
    require_nonexperts(el)?;
    let m = el.n_nonexperts();
    let k = el.n_experts();
    let withdraw = dist.withdraw_mass(threshold);
    let mu_v = dist.participant_mean(threshold);
    let others = binomial_pmf(m - 1, 1.0 - withdraw);
    let experts = binomial_pmf(k, el.expert_precision());

    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (v, &pv) in others.iter().enumerate() {
        if pv == 0.0 {
            continue;
        }
        for (c_n, pc) in binomial_pmf(v, mu_v).into_iter().enumerate() {
            for (c_e, &pe) in experts.iter().enumerate() {
                let w = pv * pc * pe;
                if w == 0.0 {
                    continue;
                }
                a += w * majority_score(c_n + 1 + c_e, v + 1 + k);
                b += w * majority_score(c_n + c_e, v + 1 + k);
                c += w * majority_score(c_n + c_e, v + k);
            }
        }
    }
    Ok(MvaInterim {
        vote_if_correct: a,
        vote_if_wrong: b,
        abstain: c,
    })
}

/// Ex-ante probability of a correct decision under universal sincere voting.
pub fn eu_mv(el: &Electorate, dist: &PrecisionDistribution) -> f64 {
    let nonexperts = binomial_pmf(el.n_nonexperts(), dist.mean());
    let experts = binomial_pmf(el.n_experts(), el.expert_precision());
    let mut total = 0.0;
    for (c_n, &pn) in nonexperts.iter().enumerate() {
        for (c_e, &pe) in experts.iter().enumerate() {
            total += pn * pe * majority_score(c_n + c_e, el.n_total());
        }
    }
    total
}

fn canonical(profile: &StrategyProfileLD) -> Result<()> {
    if profile.is_canonical() {
        Ok(())
    } else {
        Err(Error::NonCanonicalProfile)
    }
}

/// Interim utility of a non-expert with precision `q_i` who casts her vote.
pub fn eu_nd_ld(
    q_i: f64,
    profile: &StrategyProfileLD,
    el: &Electorate,
    dist: &PrecisionDistribution,
) -> Result<f64> {
    canonical(profile)?;
    dist.check_in_support(q_i)?;
    Ok(ld_interim(profile.threshold, el, dist)?.vote(q_i))
}

/// Interim utility of a non-expert who delegates to a random expert.
pub fn eu_d_ld(profile: &StrategyProfileLD, el: &Electorate, dist: &PrecisionDistribution) -> Result<f64> {
    canonical(profile)?;
    Ok(ld_interim(profile.threshold, el, dist)?.delegate)
}

/// Ex-ante utility of a threshold profile under liquid democracy.
pub fn ex_ante_eu_ld(
    profile: &StrategyProfileLD,
    el: &Electorate,
    dist: &PrecisionDistribution,
) -> Result<f64> {
    canonical(profile)?;
    ld_ex_ante_at(profile.threshold, el, dist)
}

pub(crate) fn ld_ex_ante_at(threshold: f64, el: &Electorate, dist: &PrecisionDistribution) -> Result<f64> {
    if el.n_nonexperts() == 0 {
        return Ok(eu_mv(el, dist));
    }
    let interim = ld_interim(threshold, el, dist)?;
    let withdraw = dist.withdraw_mass(threshold);
    Ok(withdraw * interim.delegate + (1.0 - withdraw) * interim.vote(dist.participant_mean(threshold)))
}

/// Interim utility of a non-expert with precision `q_i` who votes when others
/// abstain below the profile's threshold.
pub fn eu_v_mva(
    q_i: f64,
    profile: &StrategyProfileMVA,
    el: &Electorate,
    dist: &PrecisionDistribution,
) -> Result<f64> {
    dist.check_in_support(q_i)?;
    Ok(mva_interim(profile.threshold, el, dist)?.vote(q_i))
}

pub fn eu_a_mva(profile: &StrategyProfileMVA, el: &Electorate, dist: &PrecisionDistribution) -> Result<f64> {
    Ok(mva_interim(profile.threshold, el, dist)?.abstain)
}

pub fn ex_ante_eu_mva(
    profile: &StrategyProfileMVA,
    el: &Electorate,
    dist: &PrecisionDistribution,
) -> Result<f64> {
    mva_ex_ante_at(profile.threshold, el, dist)
}

pub(crate) fn mva_ex_ante_at(threshold: f64, el: &Electorate, dist: &PrecisionDistribution) -> Result<f64> {
    if el.n_nonexperts() == 0 {
        return Ok(eu_mv(el, dist));
    }
    let interim = mva_interim(threshold, el, dist)?;
    let withdraw = dist.withdraw_mass(threshold);
    Ok(withdraw * interim.abstain + (1.0 - withdraw) * interim.vote(dist.participant_mean(threshold)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lab() -> PrecisionDistribution {
        PrecisionDistribution::uniform(0.5, 0.7).unwrap()
    }

    fn el(n: usize, k: usize) -> Electorate {
        Electorate::new(n, k, 0.7).unwrap()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    fn choose(n: usize, k: usize) -> f64 {
        factorial(n) / (factorial(k) * factorial(n - k))
    }

    /// The nested multinomial sums for K = 3, written out literally.
    fn direct_sum_k3(q_i: f64, t: f64, m: usize, p: f64, dist: &PrecisionDistribution) -> (f64, f64) {
        let k = 3usize;
        let f = dist.withdraw_mass(t);
        let mu = dist.participant_mean(t);
        let half = (m + k) as f64 / 2.0;
        let (mut eund, mut eud) = (0.0, 0.0);
        for z in 0..m {
            let pz = choose(m - 1, z) * (1.0 - f).powi(z as i32) * f.powi((m - 1 - z) as i32);
            for c_n in 0..=z {
                let pc = choose(z, c_n) * mu.powi(c_n as i32) * (1.0 - mu).powi((z - c_n) as i32);
                for c_e in 0..=k {
                    let pe = choose(k, c_e) * p.powi(c_e as i32) * (1.0 - p).powi((k - c_e) as i32);
                    let d = m - z - 1;
                    let scale = (1.0 / k as f64).powi(d as i32);
                    let mut inner = 0.0;
                    for x1 in 0..=d {
                        for x2 in 0..=d - x1 {
                            let x3 = d - x1 - x2;
                            let xs = [x1, x2, x3];
                            let coef = factorial(d) / (factorial(x1) * factorial(x2) * factorial(x3));
                            let on: usize = xs[..c_e].iter().sum();
                            let right = (c_n + 1 + c_e + on) as f64 > half;
                            let wrong = (c_n + c_e + on) as f64 > half;
                            inner += coef
                                * scale
                                * (q_i * f64::from(u8::from(right)) + (1.0 - q_i) * f64::from(u8::from(wrong)));
                        }
                    }
                    eund += pz * pc * pe * inner;
                    let d = m - z;
                    let scale = (1.0 / k as f64).powi(d as i32);
                    let mut inner = 0.0;
                    for y1 in 0..=d {
                        for y2 in 0..=d - y1 {
                            let y3 = d - y1 - y2;
                            let ys = [y1, y2, y3];
                            let coef = factorial(d) / (factorial(y1) * factorial(y2) * factorial(y3));
                            let on: usize = ys[..c_e].iter().sum();
                            if (c_n + c_e + on) as f64 > half {
                                inner += coef * scale;
                            }
                        }
                    }
                    eud += pz * pc * pe * inner;
                }
            }
        }
        (eund, eud)
    }

    #[test]
    fn binomial_sums_to_one() {
        for (n, p) in [(0, 0.3), (1, 0.7), (12, 0.55), (40, 0.0), (40, 1.0)] {
            let pmf = binomial_pmf(n, p);
            assert_abs_diff_eq!(pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        let pmf = binomial_pmf(4, 0.5);
        assert_abs_diff_eq!(pmf[2], 6.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn allocation_dp_is_binomial() {
        let dp = delegated_allocation_pmf(7, 2, 3);
        let bin = binomial_pmf(7, 2.0 / 3.0);
        for (a, b) in dp.iter().zip(&bin) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn eu_mv_matches_table_one() {
        assert!((eu_mv(&el(5, 1), &lab()) - 0.717).abs() < 1e-3);
        assert!((eu_mv(&el(15, 3), &lab()) - 0.832).abs() < 1e-3);
        assert_abs_diff_eq!(eu_mv(&el(1, 1), &lab()), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn direct_sum_equivalence_k3() {
        let dists = [lab(), PrecisionDistribution::binned(0.5, 0.7, 0.01).unwrap()];
        for dist in &dists {
            for m in (2..=12).step_by(2) {
                let e = Electorate::new(m + 3, 3, 0.7).unwrap();
                for t in [0.5, 0.532, 0.58, 0.66, 0.7] {
                    let interim = ld_interim(t, &e, dist).unwrap();
                    for q in [0.5, 0.6, 0.7] {
                        let (eund, eud) = direct_sum_k3(q, t, m, 0.7, dist);
                        assert_abs_diff_eq!(interim.vote(q), eund, epsilon = 1e-12);
                        assert_abs_diff_eq!(interim.delegate, eud, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn table_one_ex_ante_values() {
        let d = lab();
        let p5 = StrategyProfileLD::canonical(0.543, &d).unwrap();
        assert!((ex_ante_eu_ld(&p5, &el(5, 1), &d).unwrap() - 0.731).abs() < 1e-3);
        let p15 = StrategyProfileLD::canonical(0.532, &d).unwrap();
        assert!((ex_ante_eu_ld(&p15, &el(15, 3), &d).unwrap() - 0.843).abs() < 1e-3);
        let full = StrategyProfileLD::canonical(0.7, &d).unwrap();
        assert_abs_diff_eq!(eu_d_ld(&full, &el(5, 1), &d).unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(ex_ante_eu_ld(&full, &el(5, 1), &d).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn three_voter_indifference() {
        let d = lab();
        let p = StrategyProfileLD::canonical(0.572, &d).unwrap();
        let e = el(3, 1);
        let gap = eu_nd_ld(0.572, &p, &e, &d).unwrap() - eu_d_ld(&p, &e, &d).unwrap();
        // g has slope of order 0.1 near the root, and 0.572 is rounded
        assert!(gap.abs() < 1e-4, "gap {gap}");
    }

    #[test]
    fn no_delegation_reduces_to_mv() {
        let d = lab();
        let e = el(5, 1);
        let none = StrategyProfileLD::canonical(0.5, &d).unwrap();
        let exante = ex_ante_eu_ld(&none, &e, &d).unwrap();
        assert_abs_diff_eq!(exante, eu_mv(&e, &d), epsilon = 1e-14);
        let mva = StrategyProfileMVA::new(0.5, &d).unwrap();
        assert_abs_diff_eq!(ex_ante_eu_mva(&mva, &e, &d).unwrap(), eu_mv(&e, &d), epsilon = 1e-14);
    }

    #[test]
    fn table_two_values() {
        let d = lab();
        let a = StrategyProfileMVA::new(0.580, &d).unwrap();
        assert!((ex_ante_eu_mva(&a, &el(5, 1), &d).unwrap() - 0.724).abs() < 1e-3);
        assert!((ex_ante_eu_mva(&a, &el(15, 3), &d).unwrap() - 0.849).abs() < 1e-3);
        let full = StrategyProfileMVA::new(0.7, &d).unwrap();
        let expected = 0.7f64.powi(3) + 3.0 * 0.49 * 0.3;
        assert_abs_diff_eq!(eu_a_mva(&full, &el(15, 3), &d).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(eu_a_mva(&full, &el(5, 1), &d).unwrap(), 0.7, epsilon = 1e-12);
        let gap = eu_v_mva(0.580, &a, &el(5, 1), &d).unwrap() - eu_a_mva(&a, &el(5, 1), &d).unwrap();
        assert!(gap.abs() < 1e-4);
    }

    #[test]
    fn full_withdrawal_differs_between_systems_with_three_experts() {
        let d = lab();
        let e = el(15, 3);
        let ld = ex_ante_eu_ld(&StrategyProfileLD::canonical(0.7, &d).unwrap(), &e, &d).unwrap();
        let mva = eu_a_mva(&StrategyProfileMVA::new(0.7, &d).unwrap(), &e, &d).unwrap();
        assert!((ld - mva).abs() > 1e-3);
        let ld1 = ex_ante_eu_ld(&StrategyProfileLD::canonical(0.7, &d).unwrap(), &el(5, 1), &d).unwrap();
        assert_abs_diff_eq!(ld1, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_canonical_profiles() {
        let d = lab();
        let p = StrategyProfileLD::new(0.6, 0.25, 0.25, 0.0, 0.0, &d).unwrap();
        assert_eq!(eu_d_ld(&p, &el(5, 1), &d), Err(Error::NonCanonicalProfile));
        let canon = StrategyProfileLD::canonical(0.6, &d).unwrap();
        assert!(eu_nd_ld(0.9, &canon, &el(5, 1), &d).is_err());
    }

    #[test]
    fn quadrature_agrees_with_affine_reduction() {
        // composite Simpson over the voting types, independent of the
        // mean-precision shortcut
        let d = lab();
        let e = el(15, 3);
        let t = 0.56;
        let interim = ld_interim(t, &e, &d).unwrap();
        let n = 200;
        let h = (0.7 - t) / n as f64;
        let mut s = interim.vote(t) + interim.vote(0.7);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * interim.vote(t + i as f64 * h);
        }
        let integral = s * h / 3.0 / 0.2;
        let quad = d.withdraw_mass(t) * interim.delegate + integral;
        assert_abs_diff_eq!(quad, ld_ex_ante_at(t, &e, &d).unwrap(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn interim_voting_is_nondecreasing(t in 0.5f64..0.7, k in prop::sample::select(vec![1usize, 3]), m in prop::sample::select(vec![2usize, 4, 6, 12])) {
            let d = lab();
            let e = Electorate::new(m + k, k, 0.7).unwrap();
            let ld = ld_interim(t, &e, &d).unwrap();
            prop_assert!(ld.vote_if_correct + 1e-14 >= ld.vote_if_wrong);
            let mva = mva_interim(t, &e, &d).unwrap();
            prop_assert!(mva.vote_if_correct + 1e-14 >= mva.vote_if_wrong);
        }

        #[test]
        fn utilities_are_probabilities(t in 0.5f64..=0.7, q in 0.5f64..=0.7) {
            let d = lab();
            for (n, k) in [(5, 1), (15, 3), (7, 3)] {
                let e = Electorate::new(n, k, 0.7).unwrap();
                let ld = ld_interim(t, &e, &d).unwrap();
                let mva = mva_interim(t, &e, &d).unwrap();
                for v in [ld.vote(q), ld.delegate, mva.vote(q), mva.abstain] {
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
                }
            }
        }
    }
}
