//! Domain types: electorate, precision laws, strategy profiles, actions and
//! the records produced by simulated or observed elections.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-9;

fn check_probability(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProfile(format!("{name} = {value} is not a probability")))
    }
}

/// Sizes of the two voter classes and the experts' signal precision.
///
/// Voters are indexed with experts first: `0..n_experts` are experts and the
/// remaining `n_nonexperts()` indices are non-experts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElectorate")]
pub struct Electorate {
    n_total: usize,
    n_experts: usize,
    expert_precision: f64,
}

#[derive(Deserialize)]
struct RawElectorate {
    n_total: usize,
    n_experts: usize,
    expert_precision: f64,
}

impl TryFrom<RawElectorate> for Electorate {
    type Error = Error;

    fn try_from(raw: RawElectorate) -> Result<Self> {
        Electorate::new(raw.n_total, raw.n_experts, raw.expert_precision)
    }
}

impl Electorate {
    pub fn new(n_total: usize, n_experts: usize, expert_precision: f64) -> Result<Self> {
        if n_total.is_multiple_of(2) {
            return Err(Error::InvalidElectorate(format!("N = {n_total} must be odd")));
        }
        if n_experts.is_multiple_of(2) {
            return Err(Error::InvalidElectorate(format!("K = {n_experts} must be odd")));
        }
        if n_experts > n_total {
            return Err(Error::InvalidElectorate(format!(
                "K = {n_experts} exceeds N = {n_total}"
            )));
        }
        if !(expert_precision > 0.5 && expert_precision <= 1.0) {
            return Err(Error::InvalidElectorate(format!(
                "expert precision {expert_precision} must lie in (1/2, 1]"
            )));
        }
        Ok(Self {
            n_total,
            n_experts,
            expert_precision,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_experts(&self) -> usize {
        self.n_experts
    }

    pub fn n_nonexperts(&self) -> usize {
        self.n_total - self.n_experts
    }

    pub fn expert_precision(&self) -> f64 {
        self.expert_precision
    }

    pub fn role_of(&self, voter: usize) -> Role {
        if voter < self.n_experts {
            Role::Expert
        } else {
            Role::NonExpert
        }
    }

    pub fn roles(&self) -> Vec<Role> {
        (0..self.n_total).map(|i| self.role_of(i)).collect()
    }
}

/// Law of a non-expert's signal precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawDistribution")]
pub enum PrecisionDistribution {
    ContinuousUniform { lo: f64, hi: f64 },
    /// Equal mass at the midpoints of bins of width `bin_width` tiling `[lo, hi]`.
    DiscreteBinned { lo: f64, hi: f64, bin_width: f64 },
    /// Atoms `(q, weight)` sorted by `q` with weights summing to one.
    Empirical { atoms: Vec<(f64, f64)> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawDistribution {
    ContinuousUniform { lo: f64, hi: f64 },
    DiscreteBinned { lo: f64, hi: f64, bin_width: f64 },
    Empirical { atoms: Vec<(f64, f64)> },
}

impl TryFrom<RawDistribution> for PrecisionDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::ContinuousUniform { lo, hi } => Self::uniform(lo, hi),
            RawDistribution::DiscreteBinned { lo, hi, bin_width } => {
                Self::binned(lo, hi, bin_width)
            }
            RawDistribution::Empirical { atoms } => Self::empirical(atoms),
        }
    }
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidDistribution(format!(
            "support [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1"
        )));
    }
    Ok(())
}

impl PrecisionDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        if lo >= hi {
            return Err(Error::InvalidDistribution(format!(
                "continuous uniform needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::ContinuousUniform { lo, hi })
    }

    pub fn binned(lo: f64, hi: f64, bin_width: f64) -> Result<Self> {
        check_support(lo, hi)?;
        if !(bin_width > 0.0) || lo >= hi {
            return Err(Error::InvalidDistribution(format!(
                "binned law needs lo < hi and a positive bin width, got [{lo}, {hi}] / {bin_width}"
            )));
        }
        let bins = ((hi - lo) / bin_width).round();
        if bins < 1.0 || (bins * bin_width - (hi - lo)).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "bin width {bin_width} does not divide [{lo}, {hi}] evenly"
            )));
        }
        Ok(Self::DiscreteBinned { lo, hi, bin_width })
    }

    /// Builds an empirical law, sorting atoms, merging duplicates and
    /// normalising weights.
    pub fn empirical(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("empirical law has no atoms".into()));
        }
        for &(q, w) in &atoms {
            if !(q.is_finite() && (0.0..=1.0).contains(&q)) {
                return Err(Error::InvalidDistribution(format!("atom {q} outside [0, 1]")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidDistribution(format!("atom weight {w} must be positive")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (q, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == q => last.1 += w,
                _ => merged.push((q, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        for atom in &mut merged {
            atom.1 /= total;
        }
        Ok(Self::Empirical { atoms: merged })
    }

    pub fn point_mass(q: f64) -> Result<Self> {
        Self::empirical(vec![(q, 1.0)])
    }

    pub fn lo(&self) -> f64 {
        match self {
            Self::ContinuousUniform { lo, .. } | Self::DiscreteBinned { lo, .. } => *lo,
            Self::Empirical { atoms } => atoms[0].0,
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            Self::ContinuousUniform { hi, .. } | Self::DiscreteBinned { hi, .. } => *hi,
            Self::Empirical { atoms } => atoms[atoms.len() - 1].0,
        }
    }

    /// Atoms of a discrete law; `None` for the continuous uniform.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::ContinuousUniform { .. } => None,
            Self::DiscreteBinned { lo, hi, bin_width } => {
                let bins = ((hi - lo) / bin_width).round() as usize;
                let w = 1.0 / bins as f64;
                Some(
                    (0..bins)
                        .map(|i| (lo + (i as f64 + 0.5) * bin_width, w))
                        .collect(),
                )
            }
            Self::Empirical { atoms } => Some(atoms.clone()),
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lo() && q <= self.hi()
    }

    pub fn check_in_support(&self, q: f64) -> Result<()> {
        if self.contains(q) {
            Ok(())
        } else {
            Err(Error::OutOfSupport {
                value: q,
                lo: self.lo(),
                hi: self.hi(),
            })
        }
    }

    /// `P(q <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::ContinuousUniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            _ => self.discrete_mass(|q| q <= x),
        }
    }

    /// `P(q < t)`.
    pub fn mass_below(&self, t: f64) -> f64 {
        match self {
            Self::ContinuousUniform { .. } => self.cdf(t),
            _ => self.discrete_mass(|q| q < t),
        }
    }

    fn discrete_mass(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let atoms = self.atoms().expect("discrete law");
        let mass: f64 = atoms.iter().filter(|a| pred(a.0)).map(|a| a.1).sum();
        mass.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::ContinuousUniform { lo, hi } => 0.5 * (lo + hi),
            _ => self.atoms().unwrap().iter().map(|(q, w)| q * w).sum(),
        }
    }

    /// `E[q | q > t]`, with the limit `hi` at `t = hi`.
    pub fn conditional_mean_above(&self, t: f64) -> Result<f64> {
        self.check_in_support(t)?;
        if t >= self.hi() {
            return Ok(self.hi());
        }
        match self {
            Self::ContinuousUniform { hi, .. } => Ok(0.5 * (t + hi)),
            _ => {
                let atoms = self.atoms().unwrap();
                let (mass, moment) = atoms
                    .iter()
                    .filter(|a| a.0 > t)
                    .fold((0.0, 0.0), |(m, s), &(q, w)| (m + w, s + q * w));
                if mass <= 0.0 {
                    return Err(Error::InvalidDistribution(format!(
                        "no mass above {t} although {t} < hi"
                    )));
                }
                Ok(moment / mass)
            }
        }
    }

    /// Probability that a non-expert withdraws (delegates or abstains) under
    /// threshold `t`: `P(q < t)`, and one for `t >= hi`.
    pub fn withdraw_mass(&self, t: f64) -> f64 {
        if t >= self.hi() {
            1.0
        } else {
            self.mass_below(t)
        }
    }

    /// Mean precision of the non-experts who keep their vote under threshold
    /// `t`, i.e. `E[q | q >= t]`, with the limit `hi` once nobody votes.
    pub fn participant_mean(&self, t: f64) -> f64 {
        if t >= self.hi() {
            return self.hi();
        }
        match self {
            Self::ContinuousUniform { lo, hi } => 0.5 * (t.max(*lo) + hi),
            _ => {
                let atoms = self.atoms().unwrap();
                let (mass, moment) = atoms
                    .iter()
                    .filter(|a| a.0 >= t)
                    .fold((0.0, 0.0), |(m, s), &(q, w)| (m + w, s + q * w));
                if mass > 0.0 {
                    moment / mass
                } else {
                    self.hi()
                }
            }
        }
    }

    /// Smallest `q` with `cdf(q) >= u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Self::ContinuousUniform { lo, hi } => lo + u * (hi - lo),
            _ => {
                let atoms = self.atoms().unwrap();
                let mut acc = 0.0;
                for &(q, w) in &atoms {
                    acc += w;
                    if acc >= u - WEIGHT_TOL {
                        return q;
                    }
                }
                atoms[atoms.len() - 1].0
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::ContinuousUniform { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
            _ => self.quantile(rng.random::<f64>()),
        }
    }
}

impl fmt::Display for PrecisionDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ContinuousUniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            Self::DiscreteBinned { lo, hi, bin_width } => write!(f, "binned:{lo}:{hi}:{bin_width}"),
            Self::Empirical { atoms } if atoms.len() == 1 => write!(f, "point:{}", atoms[0].0),
            Self::Empirical { atoms } => {
                write!(f, "empirical:")?;
                for (i, (q, w)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{q}={w}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PrecisionDistribution {
    type Err = Error;

    /// Accepts `uniform:LO:HI`, `binned:LO:HI:WIDTH`, `point:Q` and
    /// `empirical:Q1=W1,Q2=W2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidDistribution(format!("cannot parse distribution '{s}'"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "uniform" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 2 {
                    return Err(bad());
                }
                Self::uniform(num(parts[0])?, num(parts[1])?)
            }
            "binned" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 3 {
                    return Err(bad());
                }
                Self::binned(num(parts[0])?, num(parts[1])?, num(parts[2])?)
            }
            "point" => Self::point_mass(num(rest)?),
            "empirical" => {
                let atoms = rest
                    .split(',')
                    .map(|pair| {
                        let (q, w) = pair.split_once('=').ok_or_else(bad)?;
                        Ok((num(q)?, num(w)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::empirical(atoms)
            }
            _ => Err(bad()),
        }
    }
}

/// The two alternatives (equivalently, the two states of the world).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alternative {
    One,
    Two,
}

impl Alternative {
    pub fn flip(self) -> Self {
        match self {
            Self::One => Self::Two,
            Self::Two => Self::One,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Self::One
        } else {
            Self::Two
        }
    }

    /// 1 for `One`, 2 for `Two`.
    pub fn index(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(Self::One),
            2 => Some(Self::Two),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Expert,
    #[serde(rename = "nonexpert")]
    NonExpert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// Liquid democracy: vote or delegate.
    Ld,
    /// Majority voting with abstention.
    Mva,
    /// Universal sincere majority voting.
    Mv,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Ld => "ld",
            System::Mva => "mva",
            System::Mv => "mv",
        })
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ld" => Ok(System::Ld),
            "mva" => Ok(System::Mva),
            "mv" => Ok(System::Mv),
            _ => Err(Error::InvalidArgument(format!("unknown system '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoterAction {
    CastVote(Alternative),
    Delegate(Role),
    Abstain,
}

impl VoterAction {
    pub fn vote(&self) -> Option<Alternative> {
        match self {
            Self::CastVote(a) => Some(*a),
            _ => None,
        }
    }
}

/// Semi-symmetric liquid-democracy profile. Non-experts with precision below
/// `threshold` delegate; the two `prob_delegate_*` fields split that mass by
/// target class. Experts delegate with total probability
/// `expert_prob_delegate_expert + expert_prob_delegate_nonexpert`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfileLD {
    pub threshold: f64,
    pub prob_delegate_to_expert: f64,
    pub prob_delegate_to_nonexpert: f64,
    pub expert_prob_delegate_expert: f64,
    pub expert_prob_delegate_nonexpert: f64,
}

impl StrategyProfileLD {
    pub fn new(
        threshold: f64,
        prob_delegate_to_expert: f64,
        prob_delegate_to_nonexpert: f64,
        expert_prob_delegate_expert: f64,
        expert_prob_delegate_nonexpert: f64,
        dist: &PrecisionDistribution,
    ) -> Result<Self> {
        dist.check_in_support(threshold)
            .map_err(|e| Error::InvalidProfile(e.to_string()))?;
        check_probability("prob_delegate_to_expert", prob_delegate_to_expert)?;
        check_probability("prob_delegate_to_nonexpert", prob_delegate_to_nonexpert)?;
        check_probability("expert_prob_delegate_expert", expert_prob_delegate_expert)?;
        check_probability("expert_prob_delegate_nonexpert", expert_prob_delegate_nonexpert)?;
        check_probability(
            "expert delegation total",
            expert_prob_delegate_expert + expert_prob_delegate_nonexpert,
        )?;
        let mass = dist.withdraw_mass(threshold);
        if (prob_delegate_to_expert + prob_delegate_to_nonexpert - mass).abs() > 1e-9 {
            return Err(Error::InvalidProfile(format!(
                "delegation probabilities sum to {} but F(threshold) = {mass}",
                prob_delegate_to_expert + prob_delegate_to_nonexpert
            )));
        }
        Ok(Self {
            threshold,
            prob_delegate_to_expert,
            prob_delegate_to_nonexpert,
            expert_prob_delegate_expert,
            expert_prob_delegate_nonexpert,
        })
    }

    /// Experts never delegate; non-experts below the threshold delegate to a
    /// random expert.
    pub fn canonical(threshold: f64, dist: &PrecisionDistribution) -> Result<Self> {
        Self::new(threshold, dist.withdraw_mass(threshold), 0.0, 0.0, 0.0, dist)
    }

    pub fn is_canonical(&self) -> bool {
        self.prob_delegate_to_nonexpert == 0.0
            && self.expert_prob_delegate_expert == 0.0
            && self.expert_prob_delegate_nonexpert == 0.0
    }

    /// Probability that a withdrawing non-expert targets an expert.
    pub fn expert_target_share(&self) -> f64 {
        let total = self.prob_delegate_to_expert + self.prob_delegate_to_nonexpert;
        if total > 0.0 {
            self.prob_delegate_to_expert / total
        } else {
            1.0
        }
    }
}

/// Abstention profile: non-experts with precision below `threshold` abstain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfileMVA {
    pub threshold: f64,
}

impl StrategyProfileMVA {
    pub fn new(threshold: f64, dist: &PrecisionDistribution) -> Result<Self> {
        dist.check_in_support(threshold)
            .map_err(|e| Error::InvalidProfile(e.to_string()))?;
        Ok(Self { threshold })
    }
}

/// Law of per-agent thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdLaw {
    PointMass { threshold: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Thresholds drawn uniformly from a list, e.g. estimated lab thresholds.
    Empirical { thresholds: Vec<f64> },
}

impl ThresholdLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::PointMass { threshold } => *threshold,
            Self::Uniform { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
            Self::Empirical { thresholds } => thresholds[rng.random_range(0..thresholds.len())],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::PointMass { threshold } => *threshold,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Empirical { thresholds } => {
                thresholds.iter().sum::<f64>() / thresholds.len() as f64
            }
        }
    }
}

/// Probability of casting a vote against one's own signal, as a function of
/// precision. Linear rates are clamped to `[0, 1]` only through validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgainstSignalRate {
    Constant { rate: f64 },
    Linear { intercept: f64, slope: f64 },
}

impl AgainstSignalRate {
    pub const ZERO: Self = Self::Constant { rate: 0.0 };

    pub fn rate(&self, q: f64) -> f64 {
        match self {
            Self::Constant { rate } => *rate,
            Self::Linear { intercept, slope } => intercept + slope * q,
        }
    }
}

/// Heterogeneous behaviour: each non-expert draws a personal threshold and
/// votes against signal at a precision-dependent rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehavioralProfile {
    pub threshold_law: ThresholdLaw,
    pub vote_against_signal_rate: AgainstSignalRate,
}

impl BehavioralProfile {
    pub fn new(
        threshold_law: ThresholdLaw,
        vote_against_signal_rate: AgainstSignalRate,
    ) -> Result<Self> {
        // a linear rate is in [0, 1] on [0, 1] iff it is at both endpoints
        for q in [0.0, 1.0] {
            check_probability("vote_against_signal_rate", vote_against_signal_rate.rate(q))?;
        }
        match &threshold_law {
            ThresholdLaw::PointMass { threshold } => check_probability("threshold", *threshold)?,
            ThresholdLaw::Uniform { lo, hi } => {
                check_probability("threshold lo", *lo)?;
                check_probability("threshold hi", *hi)?;
                if lo > hi {
                    return Err(Error::InvalidProfile("threshold law has lo > hi".into()));
                }
            }
            ThresholdLaw::Empirical { thresholds } => {
                if thresholds.is_empty() {
                    return Err(Error::InvalidProfile("empty threshold list".into()));
                }
                for t in thresholds {
                    check_probability("threshold", *t)?;
                }
            }
        }
        Ok(Self {
            threshold_law,
            vote_against_signal_rate,
        })
    }

    /// Every agent uses the same threshold and votes sincerely.
    pub fn symmetric(threshold: f64) -> Result<Self> {
        Self::new(ThresholdLaw::PointMass { threshold }, AgainstSignalRate::ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Majority(Alternative),
    CoinToss(Alternative),
}

impl Decision {
    pub fn alternative(&self) -> Alternative {
        match self {
            Self::Majority(a) | Self::CoinToss(a) => *a,
        }
    }

    pub fn is_coin_toss(&self) -> bool {
        matches!(self, Self::CoinToss(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoterRecord {
    pub role: Role,
    pub precision: f64,
    pub signal: Alternative,
    pub action: VoterAction,
    pub final_weight: u32,
}

/// One realised election.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub system: System,
    pub true_state: Alternative,
    pub voters: Vec<VoterRecord>,
    pub decision: Decision,
    pub correct: bool,
    /// Every vote was trapped in an unbreakable delegation cycle.
    pub all_cycle: bool,
}

impl ElectionRecord {
    pub fn total_weight(&self) -> u32 {
        self.voters.iter().map(|v| v.final_weight).sum()
    }

    pub fn n_withdrawn(&self) -> usize {
        self.voters
            .iter()
            .filter(|v| !matches!(v.action, VoterAction::CastVote(_)))
            .count()
    }

    /// Checks weight accounting and decision consistency.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::IllegalActions(m));
        if self.correct != (self.decision.alternative() == self.true_state) {
            return fail("correct flag disagrees with decision".into());
        }
        for (i, v) in self.voters.iter().enumerate() {
            if v.action.vote().is_none() && v.final_weight != 0 {
                return fail(format!("voter {i} did not cast but holds weight {}", v.final_weight));
            }
        }
        let casting = self.voters.iter().filter(|v| v.action.vote().is_some()).count() as u32;
        match self.system {
            System::Ld => {
                if !self.all_cycle && self.total_weight() as usize != self.voters.len() {
                    return fail(format!(
                        "vote conservation violated: total weight {} for {} voters",
                        self.total_weight(),
                        self.voters.len()
                    ));
                }
                if self.all_cycle && !self.decision.is_coin_toss() {
                    return fail("all-cycle election must be decided by coin toss".into());
                }
            }
            System::Mva | System::Mv => {
                if self
                    .voters
                    .iter()
                    .any(|v| v.action.vote().is_some() && v.final_weight != 1)
                {
                    return fail("every casting voter must have weight 1".into());
                }
                if self.total_weight() != casting {
                    return fail("total weight differs from number of casting voters".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Treatment {
    #[serde(rename = "LD")]
    Ld,
    #[serde(rename = "MVA")]
    Mva,
}

impl Treatment {
    pub fn system(self) -> System {
        match self {
            Treatment::Ld => System::Ld,
            Treatment::Mva => System::Mva,
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Treatment::Ld => "LD",
            Treatment::Mva => "MVA",
        })
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LD" => Ok(Treatment::Ld),
            "MVA" => Ok(Treatment::Mva),
            _ => Err(Error::InvalidArgument(format!("unknown treatment '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectAction {
    Vote,
    Delegate,
    Abstain,
}

mod bool01 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(de::Error::custom(format!("expected 0 or 1, got '{other}'"))),
        }
    }

    pub mod option {
        use serde::{de, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(b) => s.serialize_u8(u8::from(*b)),
                None => s.serialize_str(""),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
            match String::deserialize(d)?.trim() {
                "" => Ok(None),
                "0" => Ok(Some(false)),
                "1" => Ok(Some(true)),
                other => Err(de::Error::custom(format!("expected 0, 1 or empty, got '{other}'"))),
            }
        }
    }
}

mod state12 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::Alternative;

    pub fn serialize<S: Serializer>(v: &Alternative, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(v.index())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Alternative, D::Error> {
        let raw = String::deserialize(d)?;
        raw.trim()
            .parse::<u8>()
            .ok()
            .and_then(Alternative::from_index)
            .ok_or_else(|| de::Error::custom(format!("state must be 1 or 2, got '{raw}'")))
    }
}

/// One subject's decision in one round. Column order is the CSV schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub session_id: String,
    pub treatment: Treatment,
    pub group_size: u32,
    pub round: u32,
    pub subject_id: String,
    pub role: Role,
    pub precision: f64,
    #[serde(with = "bool01")]
    pub signal_correct: bool,
    pub action: SubjectAction,
    #[serde(with = "bool01::option")]
    pub vote_matches_signal: Option<bool>,
    #[serde(with = "state12")]
    pub state: Alternative,
    #[serde(with = "bool01")]
    pub group_decision_correct: bool,
}

impl SubjectRow {
    /// Whether the subject's cast vote matched the state; `None` if the
    /// subject did not vote.
    pub fn vote_correct(&self) -> Option<bool> {
        match (self.action, self.vote_matches_signal) {
            (SubjectAction::Vote, Some(m)) => Some(self.signal_correct == m),
            _ => None,
        }
    }

    pub fn withdrew(&self) -> bool {
        self.action != SubjectAction::Vote
    }
}

pub const SUBJECT_COLUMNS: [&str; 12] = [
    "session_id",
    "treatment",
    "group_size",
    "round",
    "subject_id",
    "role",
    "precision",
    "signal_correct",
    "action",
    "vote_matches_signal",
    "state",
    "group_decision_correct",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubjectDataset {
    pub rows: Vec<SubjectRow>,
}

impl SubjectDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn treatment_rows(&self, treatment: Treatment, group_size: u32) -> Vec<&SubjectRow> {
        self.rows
            .iter()
            .filter(|r| r.treatment == treatment && r.group_size == group_size)
            .collect()
    }
}
