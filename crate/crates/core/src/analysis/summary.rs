use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Role, SubjectDataset, SubjectRow, Treatment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterLevel {
    Session,
    Subject,
    /// All decisions of one session in one round.
    Group,
}

impl ClusterLevel {
    fn key(self, r: &SubjectRow) -> String {
        match self {
            Self::Session => r.session_id.clone(),
            Self::Subject => r.subject_id.clone(),
            Self::Group => format!("{}#{}", r.session_id, r.round),
        }
    }
}

impl fmt::Display for ClusterLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Session => "session",
            Self::Subject => "subject",
            Self::Group => "group",
        })
    }
}

impl FromStr for ClusterLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "session" => Ok(Self::Session),
            "subject" => Ok(Self::Subject),
            "group" => Ok(Self::Group),
            _ => Err(Error::InvalidArgument(format!("unknown cluster level '{s}'"))),
        }
    }
}

/// Non-expert delegation (LD) or abstention (MVA) frequency for one
/// treatment and group size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub treatment: Treatment,
    pub group_size: u32,
    pub n_decisions: u64,
    pub n_clusters: usize,
    pub frequency: f64,
    pub std_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Why the interval is missing, if it is.
    pub flag: Option<String>,
}

const Z_95: f64 = 1.96;

/// Cluster-robust frequency and 95% interval. The variance of the mean is
/// `G/(G-1) * sum_g n_g^2 (ybar_g - ybar)^2 / n^2`.
pub fn frequency_summary(dataset: &SubjectDataset, cluster: ClusterLevel) -> Result<Vec<FrequencyRow>> {
    let mut cells: BTreeMap<(Treatment, u32), BTreeMap<String, (u64, u64)>> = BTreeMap::new();
    for r in dataset.rows.iter().filter(|r| r.role == Role::NonExpert) {
        let c = cells
            .entry((r.treatment, r.group_size))
            .or_default()
            .entry(cluster.key(r))
            .or_default();
        c.0 += 1;
        c.1 += u64::from(r.withdrew());
    }
    if cells.is_empty() {
        return Err(Error::InsufficientData("no non-expert decisions".into()));
    }
    Ok(cells
        .into_iter()
        .map(|((treatment, group_size), clusters)| {
            let n: u64 = clusters.values().map(|c| c.0).sum();
            let hits: u64 = clusters.values().map(|c| c.1).sum();
            let mean = hits as f64 / n as f64;
            let g = clusters.len();
            let (std_error, flag) = if g < 2 {
                (None, Some(format!("single {cluster} cluster: interval undefined")))
            } else {
                let ss: f64 = clusters
                    .values()
                    .map(|&(ng, hg)| {
                        let dev = hg as f64 / ng as f64 - mean;
                        (ng as f64 * dev).powi(2)
                    })
                    .sum();
                let var = g as f64 / (g as f64 - 1.0) * ss / (n as f64).powi(2);
                (Some(var.sqrt()), None)
            };
            FrequencyRow {
                treatment,
                group_size,
                n_decisions: n,
                n_clusters: g,
                frequency: mean,
                std_error,
                ci_low: std_error.map(|se| mean - Z_95 * se),
                ci_high: std_error.map(|se| mean + Z_95 * se),
                flag,
            }
        })
        .collect())
}
