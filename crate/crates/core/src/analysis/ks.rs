use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: u64,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Largest gap between the two empirical distribution functions.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("both samples must be nonempty".into()));
    }
    Ok(sup_gap(&sorted(a), &sorted(b)))
}

/// Two-sample KS statistic with a label-permutation p-value,
/// `(1 + #{D_perm >= D}) / (1 + permutations)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], permutations: u64, seed: u64) -> Result<KsTest> {
    let observed = ks_statistic(a, b)?;
    if permutations == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    // sorting the pool first makes the result independent of input order
    let mut pool = a.to_vec();
    pool.extend_from_slice(b);
    let pool = sorted(&pool);
    let na = a.len();
    let exceed: u64 = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut perm = pool.clone();
            perm.shuffle(&mut stream(seed, i, Purpose::Permutation));
            let d = sup_gap(&sorted(&perm[..na]), &sorted(&perm[na..]));
            u64::from(d >= observed - 1e-12)
        })
        .sum();
    Ok(KsTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    })
}
