use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Role, SubjectDataset, SubjectRow, Treatment};

/// Threshold consistent with the fewest monotonicity violations in one
/// subject's non-expert decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub subject_id: String,
    pub n_decisions: usize,
    pub min_violation_count: usize,
    /// Lowest and highest threshold among those achieving the minimum.
    pub threshold_range: (f64, f64),
    /// Mean of the midpoints of the achieving threshold intervals.
    pub threshold_mean: f64,
    /// Achieving intervals `(low, high)`; a threshold `t` inside one withdraws
    /// exactly the decisions with precision below `t`.
    pub intervals: Vec<(f64, f64)>,
}

/// Scans every cut of the precision-sorted decisions.
///
/// `decisions` pairs a precision with whether the subject withdrew (delegated
/// or abstained). A threshold `t` predicts withdrawal iff `q < t`, with
/// `t = hi` meaning everyone withdraws; `support` bounds the end intervals.
pub fn scan_thresholds(subject_id: &str, decisions: &[(f64, bool)], support: (f64, f64)) -> Result<ThresholdEstimate> {
    if decisions.is_empty() {
        return Err(Error::InsufficientData(format!("subject {subject_id} has no non-expert decisions")));
    }
    let (lo, hi) = support;
    // distinct precisions with (withdraw count, vote count)
    let mut levels: BTreeMap<u64, (f64, usize, usize)> = BTreeMap::new();
    for &(q, withdrew) in decisions {
        if !(lo..=hi).contains(&q) {
            return Err(Error::OutOfSupport { value: q, lo, hi });
        }
        let e = levels.entry(q.to_bits()).or_insert((q, 0, 0));
        if withdrew {
            e.1 += 1;
        } else {
            e.2 += 1;
        }
    }
    let levels: Vec<(f64, usize, usize)> = levels.into_values().collect();
    let total_withdraw: usize = levels.iter().map(|l| l.1).sum();
    // cut k puts the first k levels below the threshold
    let mut votes_below = 0;
    let mut withdraws_above = total_withdraw;
    let mut costs = Vec::with_capacity(levels.len() + 1);
    for k in 0..=levels.len() {
        costs.push(votes_below + withdraws_above);
        if let Some(&(_, w, v)) = levels.get(k) {
            votes_below += v;
            withdraws_above -= w;
        }
    }
    let best = *costs.iter().min().expect("at least one cut");
    let intervals: Vec<(f64, f64)> = costs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == best)
        .map(|(k, _)| {
            let low = if k == 0 { lo } else { levels[k - 1].0 };
            let high = if k == levels.len() { hi } else { levels[k].0 };
            (low, high)
        })
        .collect();
    let range = (intervals[0].0, intervals[intervals.len() - 1].1);
    let mean = intervals.iter().map(|(a, b)| 0.5 * (a + b)).sum::<f64>() / intervals.len() as f64;
    Ok(ThresholdEstimate {
        subject_id: subject_id.to_string(),
        n_decisions: decisions.len(),
        min_violation_count: best,
        threshold_range: range,
        threshold_mean: mean,
        intervals,
    })
}

/// Estimate from one subject's rows in one treatment; expert rows are
/// skipped.
pub fn count_monotonicity_violations(rows: &[&SubjectRow], support: (f64, f64)) -> Result<ThresholdEstimate> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InsufficientData("no rows".into()))?;
    if rows
        .iter()
        .any(|r| r.subject_id != first.subject_id || r.treatment != first.treatment)
    {
        return Err(Error::InvalidArgument("rows must come from one subject and one treatment".into()));
    }
    let decisions: Vec<(f64, bool)> = rows
        .iter()
        .filter(|r| r.role == Role::NonExpert)
        .map(|r| (r.precision, r.withdrew()))
        .collect();
    scan_thresholds(&first.subject_id, &decisions, support)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub estimates: Vec<ThresholdEstimate>,
    /// Subjects in the treatment who were never non-experts.
    pub flagged: Vec<String>,
}

/// Per-subject estimates for one treatment and group size, in subject order.
pub fn estimate_thresholds(
    dataset: &SubjectDataset,
    treatment: Treatment,
    group_size: u32,
    support: (f64, f64),
) -> Result<ThresholdReport> {
    let mut by_subject: BTreeMap<&str, Vec<&SubjectRow>> = BTreeMap::new();
    for r in dataset.treatment_rows(treatment, group_size) {
        by_subject.entry(r.subject_id.as_str()).or_default().push(r);
    }
    let mut report = ThresholdReport::default();
    for (subject, rows) in by_subject {
        if rows.iter().all(|r| r.role == Role::Expert) {
            report.flagged.push(subject.to_string());
            continue;
        }
        report.estimates.push(count_monotonicity_violations(&rows, support)?);
    }
    Ok(report)
}
