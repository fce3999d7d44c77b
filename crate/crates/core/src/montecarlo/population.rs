use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{tally, DelegationGraph};
use crate::error::{Error, Result};
use crate::model::{Alternative, Role, System, VoterAction};
use crate::rng::{stream, Purpose};

/// Latent task accuracies with per-bloc noise.
///
/// Each agent's latent accuracy comes from a two-component mixture: a small
/// share of agents who are worse than random and a main component above one
/// half. Within a bloc of tasks the agent's accuracy is the latent value plus
/// Gaussian noise, and the observed bloc score is a binomial proportion over
/// the bloc's tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPopulation {
    pub below_random_share: f64,
    pub below_random_range: (f64, f64),
    pub main_range: (f64, f64),
    pub bloc_noise_sd: f64,
    pub bloc_size: u32,
    /// Trailing blocs used to pick experts.
    pub window_blocs: usize,
    pub expert_quantile: f64,
}

impl AccuracyPopulation {
    /// Mean about 0.58, one agent in ten below random, bloc scores spanning
    /// roughly 0.25 to 0.95.
    pub fn calibrated() -> Self {
        Self {
            below_random_share: 0.10,
            below_random_range: (0.35, 0.50),
            main_range: (0.50, 0.70),
            bloc_noise_sd: 0.08,
            bloc_size: 20,
            window_blocs: 2,
            expert_quantile: 0.2,
        }
    }

    /// Every agent always right.
    pub fn perfect() -> Self {
        Self {
            below_random_share: 0.0,
            below_random_range: (1.0, 1.0),
            main_range: (1.0, 1.0),
            bloc_noise_sd: 0.0,
            ..Self::calibrated()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = in_unit(self.below_random_share)
            && in_unit(self.below_random_range.0)
            && in_unit(self.below_random_range.1)
            && in_unit(self.main_range.0)
            && in_unit(self.main_range.1)
            && self.below_random_range.0 <= self.below_random_range.1
            && self.main_range.0 <= self.main_range.1
            && self.bloc_noise_sd >= 0.0
            && self.bloc_size > 0
            && self.window_blocs > 0
            && self.expert_quantile > 0.0
            && self.expert_quantile < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid accuracy population {self:?}")))
        }
    }

    pub fn mean_latent(&self) -> f64 {
        let mid = |r: (f64, f64)| 0.5 * (r.0 + r.1);
        self.below_random_share * mid(self.below_random_range)
            + (1.0 - self.below_random_share) * mid(self.main_range)
    }

    pub fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = if rng.random::<f64>() < self.below_random_share {
            self.below_random_range
        } else {
            self.main_range
        };
        lo + rng.random::<f64>() * (hi - lo)
    }

    pub fn bloc_accuracy<R: Rng + ?Sized>(&self, latent: f64, rng: &mut R) -> f64 {
        if self.bloc_noise_sd == 0.0 {
            return latent;
        }
        let noise = Normal::new(0.0, self.bloc_noise_sd).expect("finite sd");
        (latent + noise.sample(rng)).clamp(0.0, 1.0)
    }

    pub fn observed_score<R: Rng + ?Sized>(&self, accuracy: f64, rng: &mut R) -> f64 {
        let hits = Binomial::new(u64::from(self.bloc_size), accuracy)
            .expect("accuracy in [0, 1]")
            .sample(rng);
        hits as f64 / f64::from(self.bloc_size)
    }

    fn n_experts(&self, n: usize) -> usize {
        (n as f64 * self.expert_quantile).round() as usize
    }
}

/// Fixed participation propensities of non-experts, independent of accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationBehavior {
    pub delegate_prob: f64,
    pub abstain_prob: f64,
}

impl Default for PopulationBehavior {
    fn default() -> Self {
        Self {
            delegate_prob: 0.5,
            abstain_prob: 0.3,
        }
    }
}

/// Ranks agents by mean score over the last `window` blocs of their history
/// and returns the top `quantile` share, ties going to the lower index.
pub fn select_experts_trailing(history: &[Vec<f64>], window: usize, quantile: f64) -> Result<Vec<usize>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must cover at least one bloc".into()));
    }
    if let Some((agent, h)) = history.iter().enumerate().find(|(_, h)| h.len() < window) {
        return Err(Error::InsufficientData(format!(
            "agent {agent} has {} blocs of history, window needs {window}",
            h.len()
        )));
    }
    let count = (history.len() as f64 * quantile).round() as usize;
    if count == 0 || count > history.len() {
        return Err(Error::InvalidArgument(format!(
            "quantile {quantile} of {} agents selects {count} experts",
            history.len()
        )));
    }
    let trailing: Vec<f64> = history
        .iter()
        .map(|h| h[h.len() - window..].iter().sum::<f64>() / window as f64)
        .collect();
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| trailing[b].total_cmp(&trailing[a]).then(a.cmp(&b)));
    let mut experts = order[..count].to_vec();
    experts.sort_unstable();
    Ok(experts)
}

struct Group {
    roles: Vec<Role>,
    accuracy: Vec<f64>,
}

fn draw_group<R: Rng + ?Sized>(pop: &AccuracyPopulation, n: usize, rng: &mut R) -> Result<(Group, Vec<Vec<f64>>)> {
    let latent: Vec<f64> = (0..n).map(|_| pop.draw_latent(rng)).collect();
    let history: Vec<Vec<f64>> = latent
        .iter()
        .map(|&l| {
            (0..pop.window_blocs)
                .map(|_| {
                    let acc = pop.bloc_accuracy(l, rng);
                    pop.observed_score(acc, rng)
                })
                .collect()
        })
        .collect();
    let experts = select_experts_trailing(&history, pop.window_blocs, pop.expert_quantile)?;
    let mut roles = vec![Role::NonExpert; n];
    for &e in &experts {
        roles[e] = Role::Expert;
    }
    let accuracy = latent.iter().map(|&l| pop.bloc_accuracy(l, rng)).collect();
    Ok((Group { roles, accuracy }, history))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct SizeCounters {
    ld: u64,
    mva: u64,
    mv: u64,
    ordered: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub system: System,
    pub n_elections: u64,
    pub freq_correct: f64,
    pub std_error: f64,
}

/// Share of replications whose outcomes satisfy MV >= MVA >= LD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub n: usize,
    pub freq_mv_ge_mva_ge_ld: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub ordering: Vec<OrderingRow>,
}

fn play_population_round(
    pop: &AccuracyPopulation,
    behavior: &PopulationBehavior,
    n: usize,
    seed: u64,
    rep: u64,
) -> Result<SizeCounters> {
    let sub = rep.wrapping_mul(1 << 8) ^ n as u64;
    let mut rng = stream(seed, sub, Purpose::Population);
    let (group, _) = draw_group(pop, n, &mut rng)?;
    let mut sig_rng = stream(seed, sub, Purpose::Signals);
    let state = Alternative::random(&mut sig_rng);
    let signals: Vec<Alternative> = group
        .accuracy
        .iter()
        .map(|&a| if sig_rng.random::<f64>() < a { state } else { state.flip() })
        .collect();
    let mut act_rng = stream(seed, sub, Purpose::Actions);
    let propensity: Vec<f64> = (0..n).map(|_| act_rng.random()).collect();

    let mv_votes: Vec<Option<Alternative>> = signals.iter().copied().map(Some).collect();
    let mva_votes: Vec<Option<Alternative>> = (0..n)
        .map(|i| {
            let abstains = group.roles[i] == Role::NonExpert && propensity[i] < behavior.abstain_prob;
            (!abstains).then_some(signals[i])
        })
        .collect();
    let ld_actions: Vec<VoterAction> = (0..n)
        .map(|i| {
            if group.roles[i] == Role::NonExpert && propensity[i] < behavior.delegate_prob {
                VoterAction::Delegate(Role::Expert)
            } else {
                VoterAction::CastVote(signals[i])
            }
        })
        .collect();
    let mut del_rng = stream(seed, sub, Purpose::Delegation);
    let resolution = DelegationGraph::from_actions(&group.roles, &ld_actions, &mut del_rng)?.resolve(&mut del_rng);
    let ld_votes: Vec<Option<Alternative>> = ld_actions.iter().map(VoterAction::vote).collect();

    let mut tally_rng = stream(seed, sub, Purpose::Tally);
    let ones = vec![1u32; n];
    let mva_weights: Vec<u32> = mva_votes.iter().map(|v| u32::from(v.is_some())).collect();
    let ld = tally(&resolution.weights, &ld_votes, &mut tally_rng).alternative() == state;
    let mva = tally(&mva_weights, &mva_votes, &mut tally_rng).alternative() == state;
    let mv = tally(&ones, &mv_votes, &mut tally_rng).alternative() == state;
    Ok(SizeCounters {
        ld: u64::from(ld),
        mva: u64::from(mva),
        mv: u64::from(mv),
        ordered: u64::from(mv >= mva && mva >= ld),
    })
}

/// Runs liquid democracy, abstention and universal voting on identical
/// signal realisations for each group size.
pub fn compare_systems(
    pop: &AccuracyPopulation,
    sizes: &[usize],
    behavior: &PopulationBehavior,
    reps: u64,
    seed: u64,
) -> Result<ComparisonReport> {
    pop.validate()?;
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    for &n in sizes {
        if n % 2 == 0 || pop.n_experts(n) == 0 {
            return Err(Error::InvalidArgument(format!(
                "group size {n} must be odd and yield at least one expert"
            )));
        }
    }
    let mut rows = Vec::new();
    let mut ordering = Vec::new();
    for &n in sizes {
        let c = (0..reps)
            .into_par_iter()
            .map(|rep| play_population_round(pop, behavior, n, seed, rep))
            .try_reduce(SizeCounters::default, |a, b| {
                Ok(SizeCounters {
                    ld: a.ld + b.ld,
                    mva: a.mva + b.mva,
                    mv: a.mv + b.mv,
                    ordered: a.ordered + b.ordered,
                })
            })?;
        for (system, hits) in [(System::Ld, c.ld), (System::Mva, c.mva), (System::Mv, c.mv)] {
            let f = hits as f64 / reps as f64;
            rows.push(ComparisonRow {
                n,
                system,
                n_elections: reps,
                freq_correct: f,
                std_error: (f * (1.0 - f) / reps as f64).sqrt(),
            });
        }
        ordering.push(OrderingRow {
            n,
            freq_mv_ge_mva_ge_ld: c.ordered as f64 / reps as f64,
        });
    }
    Ok(ComparisonReport { rows, ordering })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReversionStats {
    /// Mean score of selected experts over the selection window.
    pub window_mean: f64,
    /// Mean score of the same experts in the following bloc.
    pub next_bloc_mean: f64,
}

/// Measures how much selected experts' scores fall back in the bloc after
/// selection.
pub fn reversion_to_mean(pop: &AccuracyPopulation, n: usize, reps: u64, seed: u64) -> Result<ReversionStats> {
    pop.validate()?;
    let pairs = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep, Purpose::Population);
            let (group, history) = draw_group(pop, n, &mut rng)?;
            let experts: Vec<usize> = (0..n).filter(|&i| group.roles[i] == Role::Expert).collect();
            let window: f64 = experts
                .iter()
                .map(|&e| history[e].iter().sum::<f64>() / history[e].len() as f64)
                .sum::<f64>()
                / experts.len() as f64;
            let next: f64 = experts
                .iter()
                .map(|&e| pop.observed_score(group.accuracy[e], &mut rng))
                .sum::<f64>()
                / experts.len() as f64;
            Ok((window, next))
        })
        .collect::<Result<Vec<_>>>()?;
    let r = pairs.len() as f64;
    Ok(ReversionStats {
        window_mean: pairs.iter().map(|p| p.0).sum::<f64>() / r,
        next_bloc_mean: pairs.iter().map(|p| p.1).sum::<f64>() / r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_expert_in_five() {
        let h: Vec<Vec<f64>> = vec![vec![0.5, 0.6], vec![0.7, 0.8], vec![0.4, 0.4], vec![0.9, 0.1], vec![0.6, 0.6]];
        assert_eq!(select_experts_trailing(&h, 2, 0.2).unwrap(), vec![1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let h = vec![vec![0.6, 0.6]; 15];
        assert_eq!(select_experts_trailing(&h, 2, 0.2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn window_longer_than_history_fails() {
        let h = vec![vec![0.6]; 5];
        assert!(select_experts_trailing(&h, 2, 0.2).is_err());
    }

    #[test]
    fn window_uses_trailing_blocs_only() {
        let h = vec![vec![1.0, 0.1, 0.1], vec![0.0, 0.5, 0.5], vec![0.2, 0.2, 0.2], vec![0.3, 0.3, 0.3], vec![0.0, 0.0, 0.0]];
        assert_eq!(select_experts_trailing(&h, 2, 0.2).unwrap(), vec![1]);
    }

    #[test]
    fn selected_experts_revert_to_the_mean() {
        let r = reversion_to_mean(&AccuracyPopulation::calibrated(), 15, 2000, 5).unwrap();
        assert!(r.window_mean > r.next_bloc_mean + 0.02, "{r:?}");
    }

    #[test]
    fn perfect_population_is_always_right() {
        let rep = compare_systems(&AccuracyPopulation::perfect(), &[5, 15], &PopulationBehavior::default(), 500, 1)
            .unwrap();
        assert!(rep.rows.iter().all(|r| r.freq_correct == 1.0));
    }

    #[test]
    fn calibrated_mean_in_band() {
        let m = AccuracyPopulation::calibrated().mean_latent();
        assert!((0.56..=0.59).contains(&m));
    }
}
