use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{draw_election, play, Behavior};
use crate::error::{Error, Result};
use crate::model::{
    Electorate, PrecisionDistribution, Role, SubjectAction, SubjectDataset, SubjectRow, Treatment, VoterAction,
};
use crate::rng::{stream, ElectionSeed, Purpose};

/// Layout of a simulated laboratory treatment.
///
/// Each session has `subjects_per_session` subjects who play `rounds`
/// rounds. Every round they are regrouped at random into groups of
/// `group_size`, and the first `n_experts` seats of each group are experts.
/// Each subject keeps one threshold for the whole session, drawn from the
/// behavior's threshold law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub treatment: Treatment,
    pub group_size: usize,
    pub n_experts: usize,
    pub expert_precision: f64,
    pub distribution: PrecisionDistribution,
    pub behavior: Behavior,
    pub n_sessions: usize,
    #[serde(default = "default_subjects")]
    pub subjects_per_session: usize,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
}

fn default_subjects() -> usize {
    15
}

fn default_rounds() -> u32 {
    20
}

impl SyntheticDesign {
    fn validate(&self) -> Result<Electorate> {
        let el = Electorate::new(self.group_size, self.n_experts, self.expert_precision)?;
        self.behavior.check_system(self.treatment.system())?;
        if self.n_sessions == 0 || self.rounds == 0 {
            return Err(Error::InvalidArgument("design needs at least one session and one round".into()));
        }
        if self.subjects_per_session == 0 || !self.subjects_per_session.is_multiple_of(self.group_size) {
            return Err(Error::InvalidArgument(format!(
                "{} subjects cannot be split into groups of {}",
                self.subjects_per_session, self.group_size
            )));
        }
        Ok(el)
    }

    fn session_id(&self, s: usize) -> String {
        format!("{}{}-{}", self.treatment, self.group_size, s + 1)
    }
}

fn threshold_for(behavior: &Behavior, rng: &mut impl rand::Rng) -> f64 {
    match behavior {
        Behavior::Ld(p) => p.threshold,
        Behavior::Mva(p) => p.threshold,
        Behavior::Behavioral(b) => b.threshold_law.sample(rng),
    }
}

/// Simulates the design and records one row per subject and round.
pub fn generate_dataset(design: &SyntheticDesign, seed: u64) -> Result<SubjectDataset> {
    let el = design.validate()?;
    let system = design.treatment.system();
    let n = design.group_size;
    let groups_per_round = design.subjects_per_session / n;
    let mut rows = Vec::new();
    for s in 0..design.n_sessions {
        let session = design.session_id(s);
        let mut session_rng = stream(seed, s as u64, Purpose::Dataset);
        let thresholds: Vec<f64> = (0..design.subjects_per_session)
            .map(|_| threshold_for(&design.behavior, &mut session_rng))
            .collect();
        let mut seats: Vec<usize> = (0..design.subjects_per_session).collect();
        for round in 1..=design.rounds {
            seats.shuffle(&mut session_rng);
            let mut round_rows = Vec::with_capacity(design.subjects_per_session);
            for (g, members) in seats.chunks(n).enumerate() {
                let election = ElectionSeed::new(seed, s as u64)
                    .child(u64::from(round) * groups_per_round as u64 + g as u64);
                let draw = draw_election(&el, &design.distribution, election);
                let group_thresholds: Vec<f64> = members
                    .iter()
                    .enumerate()
                    .map(|(seat, &subj)| match el.role_of(seat) {
                        Role::Expert => f64::NAN,
                        Role::NonExpert => thresholds[subj],
                    })
                    .collect();
                let record = play(system, &el, &design.distribution, &draw, &design.behavior, &group_thresholds, election)?;
                for (v, &subj) in record.voters.iter().zip(members) {
                    let (action, matches) = match v.action {
                        VoterAction::CastVote(a) => (SubjectAction::Vote, Some(a == v.signal)),
                        VoterAction::Delegate(_) => (SubjectAction::Delegate, None),
                        VoterAction::Abstain => (SubjectAction::Abstain, None),
                    };
                    round_rows.push((
                        subj,
                        SubjectRow {
                            session_id: session.clone(),
                            treatment: design.treatment,
                            group_size: n as u32,
                            round,
                            subject_id: format!("{session}-s{}", subj + 1),
                            role: v.role,
                            precision: v.precision,
                            signal_correct: v.signal == record.true_state,
                            action,
                            vote_matches_signal: matches,
                            state: record.true_state,
                            group_decision_correct: record.correct,
                        },
                    ));
                }
            }
            round_rows.sort_by_key(|(subj, _)| *subj);
            rows.extend(round_rows.into_iter().map(|(_, r)| r));
        }
    }
    Ok(SubjectDataset { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StrategyProfileLD;

    fn design(sessions: usize) -> SyntheticDesign {
        let dist = PrecisionDistribution::uniform(0.5, 0.7).unwrap();
        SyntheticDesign {
            treatment: Treatment::Ld,
            group_size: 5,
            n_experts: 1,
            expert_precision: 0.7,
            behavior: Behavior::Ld(StrategyProfileLD::canonical(0.543, &dist).unwrap()),
            distribution: dist,
            n_sessions: sessions,
            subjects_per_session: 15,
            rounds: 20,
        }
    }

    #[test]
    fn one_row_per_subject_round() {
        let d = generate_dataset(&design(2), 3).unwrap();
        assert_eq!(d.len(), 2 * 15 * 20);
        let experts = d.rows.iter().filter(|r| r.role == Role::Expert).count();
        assert_eq!(experts, 2 * 3 * 20);
    }

    #[test]
    fn groups_share_decision_and_state() {
        let d = generate_dataset(&design(1), 9).unwrap();
        for r in &d.rows {
            if r.role == Role::Expert {
                assert_eq!(r.action, SubjectAction::Vote);
            } else {
                assert_eq!(r.action == SubjectAction::Delegate, r.precision < 0.543);
            }
        }
    }

    #[test]
    fn bad_group_split_is_rejected() {
        let mut d = design(1);
        d.subjects_per_session = 14;
        assert!(generate_dataset(&d, 1).is_err());
    }
}
