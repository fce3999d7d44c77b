//! Seeded batches of elections and the heterogeneous-accuracy population
//! model.
//!
//! Replication `i` of a batch draws all of its randomness from streams keyed
//! by `(seed, i)`, and counters are integers, so a batch gives bitwise
//! identical results at any thread count.

mod population;
mod synthetic;

pub use population::{
    compare_systems, reversion_to_mean, select_experts_trailing, AccuracyPopulation, ComparisonReport,
    ComparisonRow, OrderingRow, PopulationBehavior, ReversionStats,
};
pub use synthetic::{generate_dataset, SyntheticDesign};

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::DifferentialStat;
use crate::engine::{counterfactual_mv, run_election, Behavior};
use crate::error::{Error, Result};
use crate::model::{ElectionRecord, Electorate, PrecisionDistribution, Role, System};
use crate::rng::ElectionSeed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counters {
    elections: u64,
    correct: u64,
    mv_correct: u64,
    nonexpert_decisions: u64,
    withdrawals: u64,
    disagree: u64,
    disagree_system_correct: u64,
    disagree_mv_correct: u64,
    coin_tosses: u64,
    all_cycles: u64,
}

impl Counters {
    fn merge(mut self, o: Self) -> Self {
        self.elections += o.elections;
        self.correct += o.correct;
        self.mv_correct += o.mv_correct;
        self.nonexpert_decisions += o.nonexpert_decisions;
        self.withdrawals += o.withdrawals;
        self.disagree += o.disagree;
        self.disagree_system_correct += o.disagree_system_correct;
        self.disagree_mv_correct += o.disagree_mv_correct;
        self.coin_tosses += o.coin_tosses;
        self.all_cycles += o.all_cycles;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub system: System,
    pub n_elections: u64,
    pub n_correct: u64,
    pub freq_correct: f64,
    pub std_error: f64,
    /// Share of non-expert decisions that were a delegation or abstention.
    pub freq_delegate_or_abstain: f64,
    /// Correctness of universal voting on the same signals.
    pub freq_mv_correct: f64,
    pub n_disagree: u64,
    pub freq_disagree_with_mv: f64,
    pub disagree_system_correct: u64,
    pub disagree_mv_correct: u64,
    /// `2 * gamma - 1` on the disagreement set; `None` without disagreements.
    pub conditional_differential: Option<f64>,
    pub coin_tosses: u64,
    pub all_cycles: u64,
}

impl BatchResult {
    fn from_counters(system: System, c: Counters) -> Self {
        let r = c.elections as f64;
        let f = c.correct as f64 / r;
        let diff = DifferentialStat::from_counts(c.disagree_system_correct, c.disagree_mv_correct);
        Self {
            system,
            n_elections: c.elections,
            n_correct: c.correct,
            freq_correct: f,
            std_error: (f * (1.0 - f) / r).sqrt(),
            freq_delegate_or_abstain: if c.nonexpert_decisions > 0 {
                c.withdrawals as f64 / c.nonexpert_decisions as f64
            } else {
                0.0
            },
            freq_mv_correct: c.mv_correct as f64 / r,
            n_disagree: c.disagree,
            freq_disagree_with_mv: c.disagree as f64 / r,
            disagree_system_correct: c.disagree_system_correct,
            disagree_mv_correct: c.disagree_mv_correct,
            conditional_differential: diff.value,
            coin_tosses: c.coin_tosses,
            all_cycles: c.all_cycles,
        }
    }
}

fn tally_record(record: &ElectionRecord, mv_correct: bool) -> Counters {
    let nonexperts = record.voters.iter().filter(|v| v.role == Role::NonExpert);
    let (decisions, withdrawals) = nonexperts.fold((0, 0), |(d, w), v| {
        (d + 1, w + u64::from(v.action.vote().is_none()))
    });
    let disagree = record.correct != mv_correct;
    Counters {
        elections: 1,
        correct: u64::from(record.correct),
        mv_correct: u64::from(mv_correct),
        nonexpert_decisions: decisions,
        withdrawals,
        disagree: u64::from(disagree),
        disagree_system_correct: u64::from(disagree && record.correct),
        disagree_mv_correct: u64::from(disagree && mv_correct),
        coin_tosses: u64::from(record.decision.is_coin_toss()),
        all_cycles: u64::from(record.all_cycle),
    }
}

/// Runs `reps` independent elections and aggregates frequencies, including
/// the same-signal comparison with universal voting.
pub fn simulate_batch(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
    behavior: &Behavior,
    reps: u64,
    seed: u64,
) -> Result<BatchResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("a batch needs at least one election".into()));
    }
    behavior.check_system(system)?;
    let against = behavior.against_signal();
    let counters = (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = ElectionSeed::new(seed, i);
            let record = run_election(system, el, dist, behavior, s)?;
            let mv = counterfactual_mv(&record, &against, s);
            Ok::<_, Error>(tally_record(&record, mv.alternative() == record.true_state))
        })
        .try_reduce(Counters::default, |a, b| Ok(a.merge(b)))?;
    Ok(BatchResult::from_counters(system, counters))
}

/// The individual records of elections `range` of a batch, for auditing.
pub fn simulate_records(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
    behavior: &Behavior,
    range: Range<u64>,
    seed: u64,
) -> Result<Vec<ElectionRecord>> {
    behavior.check_system(system)?;
    range
        .into_par_iter()
        .map(|i| run_election(system, el, dist, behavior, ElectionSeed::new(seed, i)))
        .collect()
}
