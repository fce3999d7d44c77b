use serde::{Deserialize, Serialize};

/// Comparison of a system with universal voting on the elections where their
/// decisions differ.
///
/// On a disagreement exactly one of the two is correct, so the counts always
/// sum to `disagreements`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentialStat {
    pub disagreements: u64,
    pub system_correct: u64,
    pub mv_correct: u64,
    /// `2 * gamma_system - 1`, or `None` when the two never disagree.
    pub value: Option<f64>,
}

impl DifferentialStat {
    pub fn from_counts(system_correct: u64, mv_correct: u64) -> Self {
        let disagreements = system_correct + mv_correct;
        let value = (disagreements > 0).then(|| 2.0 * system_correct as f64 / disagreements as f64 - 1.0);
        Self {
            disagreements,
            system_correct,
            mv_correct,
            value,
        }
    }

    pub fn gamma_system(&self) -> Option<f64> {
        (self.disagreements > 0).then(|| self.system_correct as f64 / self.disagreements as f64)
    }

    pub fn gamma_mv(&self) -> Option<f64> {
        (self.disagreements > 0).then(|| self.mv_correct as f64 / self.disagreements as f64)
    }
}

/// Restricts `(system_correct, mv_correct)` pairs to disagreements and
/// summarises them.
pub fn conditional_differential(outcomes: &[(bool, bool)]) -> DifferentialStat {
    let (sys, mv) = outcomes
        .iter()
        .filter(|(s, m)| s != m)
        .fold((0, 0), |(s, m), &(sc, _)| if sc { (s + 1, m) } else { (s, m + 1) });
    DifferentialStat::from_counts(sys, mv)
}
