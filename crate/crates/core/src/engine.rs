//! Single-election mechanics: draws, actions, delegation resolution, tally.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AgainstSignalRate, Alternative, BehavioralProfile, Decision, ElectionRecord, Electorate,
    PrecisionDistribution, Role, StrategyProfileLD, StrategyProfileMVA, System, VoterAction,
    VoterRecord,
};
use crate::rng::{ElectionSeed, Purpose};

/// State, precisions and signals of one election, experts first.
#[derive(Clone, Debug, PartialEq)]
pub struct ElectionDraw {
    pub state: Alternative,
    pub precisions: Vec<f64>,
    pub signals: Vec<Alternative>,
}

pub fn draw_election(el: &Electorate, dist: &PrecisionDistribution, seed: ElectionSeed) -> ElectionDraw {
    let state = Alternative::random(&mut seed.rng(Purpose::State));
    let mut prec_rng = seed.rng(Purpose::Precisions);
    let precisions: Vec<f64> = (0..el.n_total())
        .map(|i| match el.role_of(i) {
            Role::Expert => el.expert_precision(),
            Role::NonExpert => dist.sample(&mut prec_rng),
        })
        .collect();
    let signals = draw_signals(state, &precisions, seed);
    ElectionDraw {
        state,
        precisions,
        signals,
    }
}

/// Each signal matches `state` with its holder's precision.
pub fn draw_signals(state: Alternative, precisions: &[f64], seed: ElectionSeed) -> Vec<Alternative> {
    let mut rng = seed.rng(Purpose::Signals);
    precisions
        .iter()
        .map(|&q| if rng.random::<f64>() < q { state } else { state.flip() })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A cycle was broken. `attempts` lists the links drawn in order; all but
    /// the last had no eligible redirection target.
    Redirect {
        attempts: Vec<usize>,
        entry: usize,
        target: usize,
    },
    /// No link of the cycle could be redirected within its category; the
    /// packet went to a random voter outside the cycle.
    Fallback { attempts: Vec<usize>, entry: usize, target: usize },
    /// Every vote flows into a single cycle.
    AllCycle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub weights: Vec<u32>,
    pub all_cycle: bool,
    pub trace: Vec<TraceEvent>,
}

/// Who each voter's vote is forwarded to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelegationGraph {
    roles: Vec<Role>,
    targets: Vec<Option<usize>>,
    categories: Vec<Option<Role>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sink {
    Caster(usize),
    Cycle(usize),
}

impl DelegationGraph {
    /// Draws each delegator's initial target uniformly from the chosen class,
    /// excluding the delegator.
    pub fn from_actions<R: Rng + ?Sized>(roles: &[Role], actions: &[VoterAction], rng: &mut R) -> Result<Self> {
        if roles.len() != actions.len() {
            return Err(Error::IllegalActions("roles and actions differ in length".into()));
        }
        let mut targets = vec![None; roles.len()];
        let mut categories = vec![None; roles.len()];
        for (i, action) in actions.iter().enumerate() {
            match action {
                VoterAction::CastVote(_) => {}
                VoterAction::Abstain => {
                    return Err(Error::IllegalActions(format!(
                        "voter {i} abstains under delegation rules"
                    )))
                }
                VoterAction::Delegate(class) => {
                    let pool: Vec<usize> = (0..roles.len())
                        .filter(|&j| j != i && roles[j] == *class)
                        .collect();
                    if pool.is_empty() {
                        return Err(Error::IllegalActions(format!(
                            "voter {i} delegates to an empty class {class:?}"
                        )));
                    }
                    targets[i] = Some(pool[rng.random_range(0..pool.len())]);
                    categories[i] = Some(*class);
                }
            }
        }
        Ok(Self {
            roles: roles.to_vec(),
            targets,
            categories,
        })
    }

    /// Graph with explicit initial targets; each edge's category is the
    /// target's role.
    pub fn from_targets(roles: &[Role], targets: Vec<Option<usize>>) -> Result<Self> {
        if roles.len() != targets.len() {
            return Err(Error::IllegalActions("roles and targets differ in length".into()));
        }
        let mut categories = vec![None; roles.len()];
        for (i, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                if t >= roles.len() || t == i {
                    return Err(Error::IllegalActions(format!("voter {i} has invalid target {t}")));
                }
                categories[i] = Some(roles[t]);
            }
        }
        Ok(Self {
            roles: roles.to_vec(),
            targets,
            categories,
        })
    }

    fn sinks(&self) -> (Vec<Sink>, Vec<Vec<usize>>) {
        let n = self.roles.len();
        let mut sink: Vec<Option<Sink>> = vec![None; n];
        let mut on_path = vec![false; n];
        let mut cycles: Vec<Vec<usize>> = Vec::new();
        let mut path = Vec::new();
        for start in 0..n {
            if sink[start].is_some() {
                continue;
            }
            path.clear();
            let mut node = start;
            let found = loop {
                if let Some(s) = sink[node] {
                    break s;
                }
                if on_path[node] {
                    let pos = path.iter().position(|&v| v == node).unwrap();
                    let mut cycle = path[pos..].to_vec();
                    cycle.sort_unstable();
                    cycles.push(cycle);
                    break Sink::Cycle(cycles.len() - 1);
                }
                match self.targets[node] {
                    None => break Sink::Caster(node),
                    Some(next) => {
                        on_path[node] = true;
                        path.push(node);
                        node = next;
                    }
                }
            };
            for &v in &path {
                on_path[v] = false;
                sink[v] = Some(found);
            }
            sink[node].get_or_insert(found);
        }
        (sink.into_iter().map(Option::unwrap).collect(), cycles)
    }

    /// Forwards packets along chains and breaks cycles until every vote ends
    /// at a casting voter, or flags that all votes are trapped in one cycle.
    pub fn resolve<R: Rng + ?Sized>(mut self, rng: &mut R) -> Resolution {
        let n = self.roles.len();
        let mut trace = Vec::new();
        // each pass removes one cycle
        for _ in 0..=n {
            let (sinks, cycles) = self.sinks();
            let Some(cycle) = cycles.first() else {
                let mut weights = vec![0u32; n];
                for s in &sinks {
                    if let Sink::Caster(c) = s {
                        weights[*c] += 1;
                    }
                }
                return Resolution {
                    weights,
                    all_cycle: false,
                    trace,
                };
            };
            let basin: Vec<usize> = (0..n).filter(|&v| sinks[v] == Sink::Cycle(0)).collect();
            if basin.len() == n {
                trace.push(TraceEvent::AllCycle);
                return Resolution {
                    weights: vec![0; n],
                    all_cycle: true,
                    trace,
                };
            }
            let outside = |v: usize| sinks[v] != Sink::Cycle(0);
            let mut untried = basin.clone();
            let mut attempts = Vec::new();
            let mut redirected = false;
            while !untried.is_empty() {
                let link = untried.remove(rng.random_range(0..untried.len()));
                attempts.push(link);
                let category = self.categories[link].expect("basin members delegate");
                let eligible: Vec<usize> = (0..n)
                    .filter(|&v| self.roles[v] == category && outside(v))
                    .collect();
                if eligible.is_empty() {
                    continue;
                }
                let target = eligible[rng.random_range(0..eligible.len())];
                let entry = self.entry_point(link, cycle);
                self.targets[entry] = Some(target);
                self.categories[entry] = Some(category);
                trace.push(TraceEvent::Redirect {
                    attempts: std::mem::take(&mut attempts),
                    entry,
                    target,
                });
                redirected = true;
                break;
            }
            if !redirected {
                let pool: Vec<usize> = (0..n).filter(|&v| outside(v)).collect();
                let target = pool[rng.random_range(0..pool.len())];
                let entry = cycle[0];
                self.targets[entry] = Some(target);
                self.categories[entry] = Some(self.roles[target]);
                trace.push(TraceEvent::Fallback {
                    attempts,
                    entry,
                    target,
                });
            }
        }
        unreachable!("cycle count strictly decreases on every pass")
    }

    /// First node on `cycle` reached from `from`.
    fn entry_point(&self, from: usize, cycle: &[usize]) -> usize {
        let mut node = from;
        while cycle.binary_search(&node).is_err() {
            node = self.targets[node].expect("basin members delegate");
        }
        node
    }
}

/// Resolves class-targeted delegations into final vote weights.
pub fn resolve_delegations<R: Rng + ?Sized>(
    roles: &[Role],
    actions: &[VoterAction],
    rng: &mut R,
) -> Result<Resolution> {
    Ok(DelegationGraph::from_actions(roles, actions, rng)?.resolve(rng))
}

/// Weighted majority; an exact tie (including no weight at all) is settled by
/// a fair coin.
pub fn tally<R: Rng + ?Sized>(weights: &[u32], votes: &[Option<Alternative>], rng: &mut R) -> Decision {
    let (mut one, mut two) = (0u64, 0u64);
    for (w, v) in weights.iter().zip(votes) {
        match v {
            Some(Alternative::One) => one += u64::from(*w),
            Some(Alternative::Two) => two += u64::from(*w),
            None => {}
        }
    }
    if one == 0 && two == 0 {
        log::debug!("no weight cast; deciding by coin toss");
    }
    match one.cmp(&two) {
        std::cmp::Ordering::Greater => Decision::Majority(Alternative::One),
        std::cmp::Ordering::Less => Decision::Majority(Alternative::Two),
        std::cmp::Ordering::Equal => Decision::CoinToss(Alternative::random(rng)),
    }
}

/// How voters behave in a simulated election.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Ld(StrategyProfileLD),
    Mva(StrategyProfileMVA),
    Behavioral(BehavioralProfile),
}

impl Behavior {
    pub fn check_system(&self, system: System) -> Result<()> {
        match (self, system) {
            (Behavior::Ld(_), System::Ld | System::Mv)
            | (Behavior::Mva(_), System::Mva | System::Mv)
            | (Behavior::Behavioral(_), _) => Ok(()),
            _ => Err(Error::InvalidArgument(format!(
                "behavior {self:?} does not apply to system {system}"
            ))),
        }
    }

    pub fn against_signal(&self) -> AgainstSignalRate {
        match self {
            Behavior::Behavioral(b) => b.vote_against_signal_rate,
            _ => AgainstSignalRate::ZERO,
        }
    }

    fn draw_threshold<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Behavior::Ld(p) => p.threshold,
            Behavior::Mva(p) => p.threshold,
            Behavior::Behavioral(b) => b.threshold_law.sample(rng),
        }
    }
}

/// Per-voter thresholds for one election; experts get `NaN`.
pub fn draw_thresholds(el: &Electorate, behavior: &Behavior, seed: ElectionSeed) -> Vec<f64> {
    let mut rng = seed.rng(Purpose::Thresholds);
    (0..el.n_total())
        .map(|i| match el.role_of(i) {
            Role::Expert => f64::NAN,
            Role::NonExpert => behavior.draw_threshold(&mut rng),
        })
        .collect()
}

fn withdraws(q: f64, threshold: f64, dist_hi: f64) -> bool {
    q < threshold || threshold >= dist_hi
}

fn choose_actions(
    system: System,
    el: &Electorate,
    draw: &ElectionDraw,
    behavior: &Behavior,
    thresholds: &[f64],
    dist_hi: f64,
    seed: ElectionSeed,
) -> Vec<VoterAction> {
    let mut act_rng = seed.rng(Purpose::Actions);
    let mut against_rng = seed.rng(Purpose::AgainstSignal);
    let against = behavior.against_signal();
    (0..el.n_total())
        .map(|i| {
            let q = draw.precisions[i];
            let direction: f64 = act_rng.random();
            let flip: f64 = against_rng.random();
            let withdrawal = match (el.role_of(i), system) {
                (_, System::Mv) => None,
                (Role::Expert, System::Ld) => match behavior {
                    Behavior::Ld(p) if direction < p.expert_prob_delegate_expert => {
                        Some(VoterAction::Delegate(Role::Expert))
                    }
                    Behavior::Ld(p)
                        if direction
                            < p.expert_prob_delegate_expert + p.expert_prob_delegate_nonexpert =>
                    {
                        Some(VoterAction::Delegate(Role::NonExpert))
                    }
                    _ => None,
                },
                (Role::Expert, _) => None,
                (Role::NonExpert, System::Ld) if withdraws(q, thresholds[i], dist_hi) => {
                    let share = match behavior {
                        Behavior::Ld(p) => p.expert_target_share(),
                        _ => 1.0,
                    };
                    let class = if direction < share { Role::Expert } else { Role::NonExpert };
                    Some(VoterAction::Delegate(class))
                }
                (Role::NonExpert, System::Mva) if withdraws(q, thresholds[i], dist_hi) => {
                    Some(VoterAction::Abstain)
                }
                (Role::NonExpert, _) => None,
            };
            withdrawal.unwrap_or_else(|| {
                let sincere = draw.signals[i];
                if flip < against.rate(q) {
                    VoterAction::CastVote(sincere.flip())
                } else {
                    VoterAction::CastVote(sincere)
                }
            })
        })
        .collect()
}

/// Plays one election on a given draw with given per-voter thresholds.
pub fn play(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
    draw: &ElectionDraw,
    behavior: &Behavior,
    thresholds: &[f64],
    seed: ElectionSeed,
) -> Result<ElectionRecord> {
    behavior.check_system(system)?;
    let actions = choose_actions(system, el, draw, behavior, thresholds, dist.hi(), seed);
    let roles = el.roles();
    let (weights, all_cycle) = match system {
        System::Ld => {
            let r = resolve_delegations(&roles, &actions, &mut seed.rng(Purpose::Delegation))?;
            (r.weights, r.all_cycle)
        }
        System::Mva | System::Mv => (
            actions.iter().map(|a| u32::from(a.vote().is_some())).collect(),
            false,
        ),
    };
    let votes: Vec<Option<Alternative>> = actions.iter().map(VoterAction::vote).collect();
    let decision = tally(&weights, &votes, &mut seed.rng(Purpose::Tally));
    let voters = (0..el.n_total())
        .map(|i| VoterRecord {
            role: roles[i],
            precision: draw.precisions[i],
            signal: draw.signals[i],
            action: actions[i],
            final_weight: weights[i],
        })
        .collect();
    Ok(ElectionRecord {
        system,
        true_state: draw.state,
        voters,
        decision,
        correct: decision.alternative() == draw.state,
        all_cycle,
    })
}

/// Draws and plays one election.
pub fn run_election(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
    behavior: &Behavior,
    seed: ElectionSeed,
) -> Result<ElectionRecord> {
    let draw = draw_election(el, dist, seed);
    let thresholds = draw_thresholds(el, behavior, seed);
    play(system, el, dist, &draw, behavior, &thresholds, seed)
}

/// Majority-voting outcome on the same realised signals: voters who cast keep
/// their vote, voters who withdrew vote their signal, flipped with the given
/// against-signal rate.
pub fn counterfactual_mv(record: &ElectionRecord, against: &AgainstSignalRate, seed: ElectionSeed) -> Decision {
    let mut rng = seed.rng(Purpose::Counterfactual);
    let votes: Vec<Option<Alternative>> = record
        .voters
        .iter()
        .map(|v| {
            let flip: f64 = rng.random();
            Some(match v.action {
                VoterAction::CastVote(a) => a,
                _ if flip < against.rate(v.precision) => v.signal.flip(),
                _ => v.signal,
            })
        })
        .collect();
    let weights = vec![1; votes.len()];
    tally(&weights, &votes, &mut rng)
}
