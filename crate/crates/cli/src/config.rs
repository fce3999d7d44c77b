use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ldvote_core::analysis::ClusterLevel;
use ldvote_core::engine::Behavior;
use ldvote_core::model::{System, Treatment};
use ldvote_core::montecarlo::AccuracyPopulation;
use serde::{Deserialize, Serialize};
use serde_with::skip_serializing_none;

/// A configuration problem detected before any work starts. Maps to exit
/// code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub trait OrUsage<T> {
    fn or_usage(self) -> Result<T>;
}

impl<T, E: fmt::Display> OrUsage<T> for std::result::Result<T, E> {
    fn or_usage(self) -> Result<T> {
        self.map_err(|e| usage(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Json,
}

/// Everything a run depends on. Config files, command-line flags and the
/// `config` block of an emitted manifest all share this shape; a field left
/// out falls back to the subcommand's default.
#[skip_serializing_none]
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub system: Option<System>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    /// Precision distribution spec, e.g. `uniform:0.5:0.7`.
    pub dist: Option<String>,
    pub tol: Option<f64>,
    /// Sweep grid `lo:hi:step`.
    pub grid: Option<String>,
    pub threshold: Option<f64>,
    pub behavior: Option<Behavior>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    /// Number of leading elections written to the audit stream.
    pub audit: Option<u64>,
    pub sizes: Option<Vec<usize>>,
    pub population: Option<AccuracyPopulation>,
    pub delegate_prob: Option<f64>,
    pub abstain_prob: Option<f64>,
    pub input: Option<Vec<PathBuf>>,
    pub treatment: Option<Treatment>,
    pub group_size: Option<u32>,
    /// Precision support `lo:hi` used to validate and scan datasets.
    pub support: Option<String>,
    pub cluster: Option<ClusterLevel>,
    pub permutations: Option<u64>,
    pub sessions: Option<usize>,
    pub subjects: Option<usize>,
    pub rounds: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        RunConfig { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl RunConfig {
    /// Values set in `self` win over those in `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        let (a, b) = (self, base);
        overlay!(a, b; command, system, n, k, p, dist, tol, grid, threshold, behavior, reps, seed, audit,
            sizes, population, delegate_prob, abstain_prob, input, treatment, group_size, support,
            cluster, permutations, sessions, subjects, rounds, out, format)
    }

    /// Reads a config file. A manifest from an earlier run is accepted too;
    /// its `config` block is used.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(inner) if value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn numbers(spec: &str, what: &str, count: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("{what} '{spec}' is not of the form {}", ["lo", "hi", "step"][..count].join(":")));
    if parts.len() != count {
        return Err(bad());
    }
    parts.iter().map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect()
}

pub fn parse_support(spec: &str) -> Result<(f64, f64)> {
    let v = numbers(spec, "support", 2)?;
    if !(v[0] < v[1]) {
        return Err(usage(format!("support '{spec}' must have lo < hi")));
    }
    Ok((v[0], v[1]))
}

pub fn parse_grid(spec: &str) -> Result<(f64, f64, f64)> {
    let v = numbers(spec, "grid", 3)?;
    Ok((v[0], v[1], v[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_values() {
        let file = RunConfig {
            n: Some(5),
            k: Some(1),
            seed: Some(3),
            ..Default::default()
        };
        let flags = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = flags.over(file);
        assert_eq!((merged.n, merged.k, merged.seed), (Some(5), Some(1), Some(9)));
    }

    #[test]
    fn specs_parse_or_fail_as_usage() {
        assert_eq!(parse_grid("0.5:0.7:0.01").unwrap(), (0.5, 0.7, 0.01));
        assert_eq!(parse_support("0.5:0.7").unwrap(), (0.5, 0.7));
        for bad in ["0.5", "0.7:0.5", "a:b"] {
            let e = parse_support(bad).unwrap_err();
            assert!(e.downcast_ref::<UsageError>().is_some());
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig {
            command: Some("simulate".into()),
            system: Some(System::Mva),
            dist: Some("uniform:0.5:0.7".into()),
            input: Some(vec!["a.csv".into()]),
            ..Default::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
