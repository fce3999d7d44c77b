use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::differential::DifferentialStat;
use crate::error::{Error, Result};
use crate::model::{Role, SubjectAction, SubjectDataset, Treatment};
use crate::rng::{stream, Purpose};

pub const MODE_BIN_WIDTH: f64 = 0.02;

/// Attempts at drawing a subject observed in a needed role before giving up.
pub const REDRAW_CAP: usize = 1000;

const SUBJECTS_PER_SESSION: usize = 15;
const DRAWS_PER_SESSION: usize = 20;
const EXPERTS_PER_DRAW: usize = 3;
const QUANTILES: [f64; 7] = [0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n: usize,
    pub mean: f64,
    /// Centre of the most populated bin of width [`MODE_BIN_WIDTH`], bins
    /// being centred on its multiples.
    pub mode: f64,
    pub mass_below_zero: f64,
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub values: Vec<f64>,
    /// `None` when there are no values.
    pub summary: Option<BootstrapSummary>,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

impl BootstrapDistribution {
    pub fn new(values: Vec<f64>) -> Self {
        let summary = (!values.is_empty()).then(|| {
            let n = values.len();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
            for v in &values {
                *bins.entry((v / MODE_BIN_WIDTH).round() as i64).or_default() += 1;
            }
            let top = bins.values().copied().max().unwrap_or(0);
            let mode_bin = bins.iter().find(|(_, &c)| c == top).map(|(&k, _)| k).unwrap_or(0);
            BootstrapSummary {
                n,
                mean: values.iter().sum::<f64>() / n as f64,
                mode: mode_bin as f64 * MODE_BIN_WIDTH,
                mass_below_zero: values.iter().filter(|&&v| v < 0.0).count() as f64 / n as f64,
                quantiles: QUANTILES.iter().map(|&p| (p, quantile_sorted(&sorted, p))).collect(),
            }
        });
        Self { values, summary }
    }
}

/// Outcome of the subject-level bootstrap for one treatment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub treatment: Treatment,
    pub group_size: u32,
    pub reps: u64,
    pub decisions_per_rep: usize,
    /// Share of cast votes against the voter's signal, used for the
    /// universal-voting counterfactual of withdrawn voters.
    pub against_signal_rate: f64,
    /// Frequency of correct decisions, one value per replication.
    pub frequency: BootstrapDistribution,
    /// Conditional differential against universal voting, one value per
    /// replication that had at least one disagreement.
    pub differential: BootstrapDistribution,
    pub no_disagreement_reps: u64,
    /// Disagreement counts of every replication, in replication order.
    #[serde(skip)]
    pub stats: Vec<DifferentialStat>,
}

#[derive(Clone, Copy, Debug)]
struct Choice {
    withdrew: bool,
    vote_correct: bool,
    signal_correct: bool,
}

#[derive(Default)]
struct SubjectChoices {
    expert: Vec<Choice>,
    nonexpert: Vec<Choice>,
}

impl SubjectChoices {
    fn of(&self, role: Role) -> &[Choice] {
        match role {
            Role::Expert => &self.expert,
            Role::NonExpert => &self.nonexpert,
        }
    }
}

struct Plan<'a> {
    system: Treatment,
    subjects: Vec<&'a SubjectChoices>,
    group_size: usize,
    sessions: usize,
    against: f64,
}

fn draw_choice<R: Rng>(plan: &Plan, session: &[usize], role: Role, rng: &mut R) -> Result<Choice> {
    for _ in 0..REDRAW_CAP {
        let s = plan.subjects[session[rng.random_range(0..session.len())]];
        let pool = s.of(role);
        if !pool.is_empty() {
            return Ok(pool[rng.random_range(0..pool.len())]);
        }
    }
    Err(Error::InsufficientData(format!(
        "no subject observed as {role:?} after {REDRAW_CAP} draws"
    )))
}

fn decide<R: Rng>(correct: u32, wrong: u32, rng: &mut R) -> bool {
    match correct.cmp(&wrong) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => rng.random::<bool>(),
    }
}

/// Plays one resampled group; returns (system correct, MV correct).
fn play_group<R: Rng>(plan: &Plan, experts: &[Choice], nonexperts: &[Choice], rng: &mut R) -> (bool, bool) {
    let mut weight = vec![1u32; experts.len()];
    let (mut sys_c, mut sys_w) = (0u32, 0u32);
    let (mut mv_c, mut mv_w) = (0u32, 0u32);
    for c in nonexperts {
        if c.withdrew {
            if plan.system == Treatment::Ld {
                weight[rng.random_range(0..experts.len())] += 1;
            }
            let flip = rng.random::<f64>() < plan.against;
            if c.signal_correct != flip {
                mv_c += 1;
            } else {
                mv_w += 1;
            }
        } else {
            let (sc, mc) = if c.vote_correct { (&mut sys_c, &mut mv_c) } else { (&mut sys_w, &mut mv_w) };
            *sc += 1;
            *mc += 1;
        }
    }
    for (e, w) in experts.iter().zip(weight) {
        if e.vote_correct {
            sys_c += w;
            mv_c += 1;
        } else {
            sys_w += w;
            mv_w += 1;
        }
    }
    (decide(sys_c, sys_w, rng), decide(mv_c, mv_w, rng))
}

fn replicate(plan: &Plan, seed: u64, rep: u64) -> Result<(f64, DifferentialStat)> {
    let mut rng = stream(seed, rep, Purpose::Bootstrap);
    let groups = SUBJECTS_PER_SESSION / plan.group_size;
    let k = EXPERTS_PER_DRAW / groups;
    let (mut decisions, mut correct) = (0u64, 0u64);
    let (mut sys_wins, mut mv_wins) = (0u64, 0u64);
    for _ in 0..plan.sessions {
        let session: Vec<usize> = (0..SUBJECTS_PER_SESSION)
            .map(|_| rng.random_range(0..plan.subjects.len()))
            .collect();
        for _ in 0..DRAWS_PER_SESSION {
            let experts = (0..EXPERTS_PER_DRAW)
                .map(|_| draw_choice(plan, &session, Role::Expert, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let mut nonexperts = (0..SUBJECTS_PER_SESSION - EXPERTS_PER_DRAW)
                .map(|_| draw_choice(plan, &session, Role::NonExpert, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            nonexperts.shuffle(&mut rng);
            let per_group = nonexperts.len() / groups;
            for g in 0..groups {
                let (sys, mv) = play_group(
                    plan,
                    &experts[g * k..(g + 1) * k],
                    &nonexperts[g * per_group..(g + 1) * per_group],
                    &mut rng,
                );
                decisions += 1;
                correct += u64::from(sys);
                if sys != mv {
                    if sys {
                        sys_wins += 1;
                    } else {
                        mv_wins += 1;
                    }
                }
            }
        }
    }
    Ok((correct as f64 / decisions as f64, DifferentialStat::from_counts(sys_wins, mv_wins)))
}

/// Subject-level bootstrap of group decisions for one treatment.
///
/// Each replication builds pseudo-sessions of 15 subjects drawn with
/// replacement. Within a pseudo-session, each of 20 draws picks 3 expert
/// choices and 12 non-expert choices from those subjects, redrawing subjects
/// never seen in the needed role. For groups of 15 that is one decision; for
/// groups of 5 the non-experts are split into three groups of four, each
/// joined by one expert. Groups of 5 use 4 pseudo-sessions (240 decisions),
/// groups of 15 use 6 (120 decisions).
///
/// Delegated votes go to an expert of the group chosen uniformly; abstainers
/// do not count. The universal-voting counterfactual lets withdrawn voters
/// vote their signal, flipped at the treatment's observed against-signal
/// rate. Ties are broken by a fair coin.
pub fn bootstrap_exp1(
    dataset: &SubjectDataset,
    treatment: Treatment,
    group_size: u32,
    reps: u64,
    seed: u64,
) -> Result<BootstrapResult> {
    let sessions = match group_size {
        5 => 4,
        15 => 6,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "the bootstrap layout covers groups of 5 or 15, not {group_size}"
            )))
        }
    };
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let rows = dataset.treatment_rows(treatment, group_size);
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("no rows for {treatment} with groups of {group_size}")));
    }
    let mut by_subject: BTreeMap<&str, SubjectChoices> = BTreeMap::new();
    let (mut votes, mut against_votes) = (0u64, 0u64);
    for r in &rows {
        let choice = Choice {
            withdrew: r.withdrew(),
            vote_correct: r.vote_correct().unwrap_or(false),
            signal_correct: r.signal_correct,
        };
        if r.action == SubjectAction::Vote {
            votes += 1;
            against_votes += u64::from(r.vote_matches_signal == Some(false));
        }
        let entry = by_subject.entry(r.subject_id.as_str()).or_default();
        match r.role {
            Role::Expert => {
                if choice.withdrew {
                    return Err(Error::InvalidArgument(format!(
                        "subject {} withdrew as an expert in round {}",
                        r.subject_id, r.round
                    )));
                }
                entry.expert.push(choice)
            }
            Role::NonExpert => entry.nonexpert.push(choice),
        }
    }
    for role in [Role::Expert, Role::NonExpert] {
        if by_subject.values().all(|s| s.of(role).is_empty()) {
            return Err(Error::InsufficientData(format!(
                "no subject in {treatment} with groups of {group_size} was ever observed as {role:?}"
            )));
        }
    }
    let plan = Plan {
        system: treatment,
        subjects: by_subject.values().collect(),
        group_size: group_size as usize,
        sessions,
        against: if votes > 0 { against_votes as f64 / votes as f64 } else { 0.0 },
    };
    let outcomes = (0..reps)
        .into_par_iter()
        .map(|rep| replicate(&plan, seed, rep))
        .collect::<Result<Vec<_>>>()?;
    let frequency = outcomes.iter().map(|o| o.0).collect();
    let differential: Vec<f64> = outcomes.iter().filter_map(|o| o.1.value).collect();
    let no_disagreement_reps = reps - differential.len() as u64;
    Ok(BootstrapResult {
        treatment,
        group_size,
        reps,
        decisions_per_rep: sessions * DRAWS_PER_SESSION * (SUBJECTS_PER_SESSION / group_size as usize),
        against_signal_rate: plan.against,
        frequency: BootstrapDistribution::new(frequency),
        differential: BootstrapDistribution::new(differential),
        no_disagreement_reps,
        stats: outcomes.iter().map(|o| o.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let d = BootstrapDistribution::new(vec![-0.16, -0.15, -0.17, 0.2, 0.5]);
        let s = d.summary.unwrap();
        assert!((s.mode + 0.16).abs() < 1e-12);
        assert!((s.mass_below_zero - 0.6).abs() < 1e-12);
        assert_eq!(s.quantiles[3], (0.5, -0.15));
    }

    #[test]
    fn empty_distribution_has_no_summary() {
        assert!(BootstrapDistribution::new(vec![]).summary.is_none());
    }

    #[test]
    fn unsupported_group_size() {
        let d = SubjectDataset::default();
        assert!(bootstrap_exp1(&d, Treatment::Ld, 7, 10, 1).is_err());
    }
}
