//! Threshold equilibria and threshold-robustness sweeps.
//!
//! Interior thresholds are the zeros of the indifference gap
//! `g(t) = EU(vote | q = t; t) - EU(withdraw; t)`, found by a dense grid scan
//! followed by bisection. Boundary profiles are checked by evaluating the best
//! deviation of every type; since the gain from voting is affine in precision
//! only the two support endpoints need to be examined.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{eu_mv, ld_ex_ante_at, ld_interim, mva_ex_ante_at, mva_interim};
use crate::error::{Error, Result};
use crate::model::{Electorate, PrecisionDistribution, System};

pub const DEFAULT_TOL: f64 = 1e-4;

/// Residual accepted for a boundary deviation or a refined root.
const GAIN_EPS: f64 = 1e-12;
const ROOT_RESIDUAL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorEquilibrium {
    pub threshold: f64,
    /// Ex-ante probability of withdrawing, `F(threshold)`.
    pub withdraw_probability: f64,
    pub ex_ante_eu: f64,
    pub residual: f64,
    /// Every type other than the threshold type strictly prefers its action.
    pub strict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEquilibrium {
    pub threshold: f64,
    pub withdraw_probability: f64,
    pub ex_ante_eu: f64,
    pub is_equilibrium: bool,
    /// Largest gain any type obtains by deviating.
    pub best_deviation_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub system: System,
    pub electorate: Electorate,
    pub distribution: PrecisionDistribution,
    pub interior: Vec<InteriorEquilibrium>,
    pub boundary: Vec<BoundaryEquilibrium>,
    pub eu_mv_baseline: f64,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteriorRoots {
    pub roots: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Indifference gap of the threshold type.
pub fn indifference_gap(
    system: System,
    threshold: f64,
    el: &Electorate,
    dist: &PrecisionDistribution,
) -> Result<f64> {
    match system {
        System::Ld => Ok(ld_interim(threshold, el, dist)?.gain_from_voting(threshold)),
        System::Mva => Ok(mva_interim(threshold, el, dist)?.gain_from_voting(threshold)),
        System::Mv => Err(Error::InvalidArgument(
            "majority voting has no threshold to solve for".into(),
        )),
    }
}

pub fn ex_ante_eu(system: System, threshold: f64, el: &Electorate, dist: &PrecisionDistribution) -> Result<f64> {
    match system {
        System::Ld => ld_ex_ante_at(threshold, el, dist),
        System::Mva => mva_ex_ante_at(threshold, el, dist),
        System::Mv => Ok(eu_mv(el, dist)),
    }
}

fn solve_interior(system: System, el: &Electorate, dist: &PrecisionDistribution, tol: f64) -> Result<InteriorRoots> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let (lo, hi) = (dist.lo(), dist.hi());
    if el.n_nonexperts() == 0 || hi - lo <= tol {
        return Ok(InteriorRoots {
            roots: Vec::new(),
            diagnostic: Some("support has no interior to scan".into()),
        });
    }
    let step_target = tol / 10.0;
    let cells = ((hi - lo) / step_target).ceil() as usize;
    let step = (hi - lo) / cells as f64;
    // open interval: endpoints are boundary profiles
    let grid: Vec<f64> = (1..cells).map(|i| lo + i as f64 * step).collect();
    let gaps = grid
        .par_iter()
        .map(|&t| indifference_gap(system, t, el, dist))
        .collect::<Result<Vec<f64>>>()?;

    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if gaps[i] == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if i + 1 < grid.len() && gaps[i + 1] != 0.0 && (gaps[i] < 0.0) != (gaps[i + 1] < 0.0) {
            roots.push(bisect(system, el, dist, grid[i], grid[i + 1], gaps[i])?);
        }
    }
    let diagnostic = roots.is_empty().then(|| {
        format!("no sign change of the indifference gap on ({lo}, {hi}); no interior equilibrium")
    });
    Ok(InteriorRoots { roots, diagnostic })
}

fn bisect(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
    mut a: f64,
    mut b: f64,
    gap_a: f64,
) -> Result<f64> {
    let neg_at_a = gap_a < 0.0;
    let mut mid = 0.5 * (a + b);
    for _ in 0..200 {
        mid = 0.5 * (a + b);
        let g = indifference_gap(system, mid, el, dist)?;
        if g == 0.0 || (b - a) < 1e-15 || (g.abs() < ROOT_RESIDUAL * 1e-4 && b - a < 1e-12) {
            break;
        }
        if (g < 0.0) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(mid)
}

/// Interior liquid-democracy thresholds at which the threshold type is
/// indifferent between voting and delegating.
pub fn solve_interior_ld(el: &Electorate, dist: &PrecisionDistribution, tol: f64) -> Result<InteriorRoots> {
    solve_interior(System::Ld, el, dist, tol)
}

/// Interior abstention thresholds.
pub fn solve_interior_mva(el: &Electorate, dist: &PrecisionDistribution, tol: f64) -> Result<InteriorRoots> {
    solve_interior(System::Mva, el, dist, tol)
}

fn describe_interior(system: System, t: f64, el: &Electorate, dist: &PrecisionDistribution) -> Result<InteriorEquilibrium> {
    let (slope, residual) = match system {
        System::Ld => {
            let i = ld_interim(t, el, dist)?;
            (i.vote_if_correct - i.vote_if_wrong, i.gain_from_voting(t))
        }
        System::Mva => {
            let i = mva_interim(t, el, dist)?;
            (i.vote_if_correct - i.vote_if_wrong, i.gain_from_voting(t))
        }
        System::Mv => unreachable!(),
    };
    debug_assert!(residual.abs() < ROOT_RESIDUAL, "residual {residual} at {t}");
    Ok(InteriorEquilibrium {
        threshold: t,
        withdraw_probability: dist.withdraw_mass(t),
        ex_ante_eu: ex_ante_eu(system, t, el, dist)?,
        residual,
        strict: slope > GAIN_EPS,
    })
}

/// Checks the two boundary profiles (nobody withdraws / every non-expert
/// withdraws) by best-response deviation.
pub fn check_boundary_equilibria(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
) -> Result<Vec<BoundaryEquilibrium>> {
    let (lo, hi) = (dist.lo(), dist.hi());
    let mut out = Vec::with_capacity(2);
    for (threshold, everyone_votes) in [(lo, true), (hi, false)] {
        let gain_at = |q: f64| -> Result<f64> {
            Ok(match system {
                System::Ld => ld_interim(threshold, el, dist)?.gain_from_voting(q),
                System::Mva => mva_interim(threshold, el, dist)?.gain_from_voting(q),
                System::Mv => 0.0,
            })
        };
        let best_deviation_gain = if el.n_nonexperts() == 0 || system == System::Mv {
            0.0
        } else if everyone_votes {
            // deviating means withdrawing; worst off is the lowest type
            -gain_at(lo)?
        } else {
            gain_at(hi)?
        };
        let withdraw_probability = if everyone_votes { 0.0 } else { 1.0 };
        let ex_ante = if everyone_votes {
            eu_mv(el, dist)
        } else {
            ex_ante_eu(system, hi, el, dist)?
        };
        out.push(BoundaryEquilibrium {
            threshold,
            withdraw_probability,
            ex_ante_eu: ex_ante,
            is_equilibrium: best_deviation_gain <= GAIN_EPS,
            best_deviation_gain,
        });
    }
    Ok(out)
}

/// Full report: interior roots, boundary checks and the MV baseline.
pub fn solve(system: System, el: &Electorate, dist: &PrecisionDistribution, tol: f64) -> Result<EquilibriumReport> {
    if system == System::Mv {
        return Err(Error::InvalidArgument(
            "equilibrium reports are defined for ld and mva".into(),
        ));
    }
    let roots = solve_interior(system, el, dist, tol)?;
    let interior = roots
        .roots
        .iter()
        .map(|&t| describe_interior(system, t, el, dist))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumReport {
        system,
        electorate: *el,
        distribution: dist.clone(),
        interior,
        boundary: check_boundary_equilibria(system, el, dist)?,
        eu_mv_baseline: eu_mv(el, dist),
        diagnostic: roots.diagnostic,
    })
}

impl EquilibriumReport {
    /// Plain-text table in the layout of the published tables.
    pub fn table(&self) -> String {
        use std::fmt::Write;
        let mut rows: Vec<(f64, f64, f64, &str)> = self
            .interior
            .iter()
            .map(|e| (e.threshold, e.withdraw_probability, e.ex_ante_eu, "interior"))
            .chain(
                self.boundary
                    .iter()
                    .filter(|b| b.is_equilibrium)
                    .map(|b| (b.threshold, b.withdraw_probability, b.ex_ante_eu, "boundary")),
            )
            .collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} N={} K={} p={} F={}",
            self.system.to_string().to_uppercase(),
            self.electorate.n_total(),
            self.electorate.n_experts(),
            self.electorate.expert_precision(),
            self.distribution
        );
        let _ = writeln!(s, "{:>9} {:>7} {:>7} {:>7}  kind", "threshold", "F", "EU", "EU_MV");
        for (t, f, eu, kind) in rows {
            let _ = writeln!(s, "{t:>9.3} {f:>7.3} {eu:>7.3} {:>7.3}  {kind}", self.eu_mv_baseline);
        }
        for b in self.boundary.iter().filter(|b| !b.is_equilibrium) {
            let _ = writeln!(
                s,
                "not an equilibrium: threshold {:.3} (deviation gain {:.2e})",
                b.threshold, b.best_deviation_gain
            );
        }
        if let Some(d) = &self.diagnostic {
            let _ = writeln!(s, "note: {d}");
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub eu: f64,
    pub eu_ratio: f64,
}

/// Evenly spaced grid from `lo` to `hi` inclusive; the last point is snapped
/// to `hi`.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || hi < lo {
        return Err(Error::InvalidArgument(format!("bad grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if (hi - *last).abs() < 1e-9 {
            *last = hi;
        } else {
            grid.push(hi);
        }
    }
    Ok(grid)
}

/// Ex-ante utility relative to MV along a grid of common thresholds.
pub fn robustness_sweep(
    system: System,
    el: &Electorate,
    dist: &PrecisionDistribution,
    grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    for &t in grid {
        dist.check_in_support(t)?;
    }
    let baseline = eu_mv(el, dist);
    grid.par_iter()
        .map(|&t| {
            let eu = ex_ante_eu(system, t, el, dist)?;
            Ok(SweepPoint {
                threshold: t,
                eu,
                eu_ratio: eu / baseline,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub peak_threshold: f64,
    pub max_gain: f64,
    pub max_loss: f64,
}

impl SweepSummary {
    pub fn from_points(points: &[SweepPoint]) -> Option<Self> {
        let peak = points.iter().max_by(|a, b| a.eu_ratio.total_cmp(&b.eu_ratio))?;
        let trough = points.iter().min_by(|a, b| a.eu_ratio.total_cmp(&b.eu_ratio))?;
        Some(Self {
            peak_threshold: peak.threshold,
            max_gain: (peak.eu_ratio - 1.0).max(0.0),
            max_loss: (1.0 - trough.eu_ratio).max(0.0),
        })
    }

    pub fn loss_to_gain_ratio(&self) -> f64 {
        self.max_loss / self.max_gain
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab() -> PrecisionDistribution {
        PrecisionDistribution::uniform(0.5, 0.7).unwrap()
    }

    fn el(n: usize, k: usize) -> Electorate {
        Electorate::new(n, k, 0.7).unwrap()
    }

    #[test]
    fn table_one_thresholds() {
        let r5 = solve_interior_ld(&el(5, 1), &lab(), DEFAULT_TOL).unwrap();
        assert_eq!(r5.roots.len(), 1);
        assert!((r5.roots[0] - 0.543).abs() < 1e-3);
        let r15 = solve_interior_ld(&el(15, 3), &lab(), DEFAULT_TOL).unwrap();
        assert_eq!(r15.roots.len(), 1);
        assert!((r15.roots[0] - 0.532).abs() < 1e-3);
    }

    #[test]
    fn three_voter_threshold_and_delegation_rate() {
        let d = lab();
        let r = solve_interior_ld(&el(3, 1), &d, DEFAULT_TOL).unwrap();
        assert_eq!(r.roots.len(), 1);
        let t = r.roots[0];
        assert!((t - 0.572).abs() < 1e-3);
        assert!((d.withdraw_mass(t) - 0.36).abs() < 0.01);
        // closed-form indifference for a single expert and two non-experts
        let p = 0.7;
        let mu = d.conditional_mean_above(t).unwrap();
        let lhs = p * (1.0 - t) * (1.0 - mu);
        let rhs = (1.0 - p) * t * mu;
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn table_two_thresholds() {
        for (n, k) in [(5, 1), (15, 3)] {
            let r = solve_interior_mva(&el(n, k), &lab(), DEFAULT_TOL).unwrap();
            assert_eq!(r.roots.len(), 1, "{n}/{k}: {:?}", r.roots);
            assert!((r.roots[0] - 0.580).abs() < 1e-3);
        }
    }

    #[test]
    fn point_mass_has_no_interior() {
        let d = PrecisionDistribution::point_mass(0.7).unwrap();
        let r = solve_interior_mva(&el(5, 1), &d, DEFAULT_TOL).unwrap();
        assert!(r.roots.is_empty());
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn roots_have_small_residuals() {
        for (n, k) in [(3, 1), (5, 1), (15, 3), (7, 3)] {
            for system in [System::Ld, System::Mva] {
                let rep = solve(system, &el(n, k), &lab(), DEFAULT_TOL).unwrap();
                for e in &rep.interior {
                    assert!(e.residual.abs() < 1e-8, "{system} {n}/{k}: {}", e.residual);
                    assert!(e.strict);
                }
            }
        }
    }

    #[test]
    fn boundary_flags() {
        let d = lab();
        let ld5 = check_boundary_equilibria(System::Ld, &el(5, 1), &d).unwrap();
        assert!(!ld5[0].is_equilibrium);
        assert!(ld5[1].is_equilibrium);
        assert!((ld5[1].ex_ante_eu - 0.7).abs() < 1e-12);
        let ld15 = check_boundary_equilibria(System::Ld, &el(15, 3), &d).unwrap();
        assert!(!ld15[0].is_equilibrium);
        assert!(!ld15[1].is_equilibrium);
        for (n, k) in [(5, 1), (15, 3)] {
            let mva = check_boundary_equilibria(System::Mva, &el(n, k), &d).unwrap();
            assert!(mva[0].is_equilibrium && mva[1].is_equilibrium);
        }
    }

    #[test]
    fn sweep_starts_at_one() {
        let d = lab();
        let pts = robustness_sweep(System::Ld, &el(5, 1), &d, &[0.5]).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].eu_ratio - 1.0).abs() < 1e-12);
        let at = robustness_sweep(System::Ld, &el(5, 1), &d, &[0.543]).unwrap();
        assert!((at[0].eu_ratio - 0.731 / 0.717).abs() < 0.002);
    }

    #[test]
    fn grid_construction() {
        let g = threshold_grid(0.5, 0.7, 0.002).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[100], 0.7);
        assert!(threshold_grid(0.5, 0.7, 0.0).is_err());
    }

    #[test]
    fn report_is_deterministic() {
        let a = solve(System::Ld, &el(15, 3), &lab(), DEFAULT_TOL).unwrap();
        let b = solve(System::Ld, &el(15, 3), &lab(), DEFAULT_TOL).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
