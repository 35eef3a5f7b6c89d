//! Two-sample tests, multiplicity adjustment and rank tests.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use super::effect::{mean, variance};
use crate::error::{Error, Result};

pub const DEFAULT_PERMUTATIONS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom. Two constant samples give `t = 0, p = 1` when their means agree
/// and `p = 0` otherwise.
pub fn welch(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("Welch test needs >= 2 points per sample".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return Ok(WelchResult { t, df: na + nb - 2.0, p });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(WelchResult { t, df, p })
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

/// Two-sided permutation test on the difference in means with add-one
/// smoothing.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() || a.len() + b.len() < 10 {
        return Err(Error::InvalidInput(
            "permutation test needs non-empty samples with >= 10 points combined".into(),
        ));
    }
    let na = a.len();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let n = pooled.len() as f64;
    let diff = |sa: f64| sa / na as f64 - (total - sa) / (n - na as f64);
    let obs = diff(a.iter().sum()).abs();
    // absorbs summation-order noise between identical partitions
    let tol = 1e-12 * (1.0 + obs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        let (head, _) = pooled.partial_shuffle(&mut rng, na);
        if diff(head.iter().sum()).abs() >= obs - tol {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (n_perm + 1) as f64)
}

/// Ranks with ties given their average rank; rank 1 is the largest value.
pub fn midranks_desc(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].total_cmp(&x[i]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    /// Mean rank per method (1 = best).
    pub mean_ranks: Vec<f64>,
    pub blocks: usize,
    pub critical_difference: f64,
}

/// Friedman test over `scores[block][method]` (higher is better) with the
/// Nemenyi critical difference at `alpha`.
pub fn friedman_nemenyi(scores: &[Vec<f64>], alpha: f64) -> Result<FriedmanResult> {
    let n = scores.len();
    let k = scores.first().map_or(0, |r| r.len());
    if n < 2 || k < 2 {
        return Err(Error::InvalidInput(format!(
            "Friedman test needs >= 2 blocks and >= 2 methods, got {n} x {k}"
        )));
    }
    if scores.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput("ragged score matrix".into()));
    }
    let mut sums = vec![0.0; k];
    for row in scores {
        for (s, r) in sums.iter_mut().zip(midranks_desc(row)) {
            *s += r;
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let mean_ranks: Vec<f64> = sums.iter().map(|s| s / nf).collect();
    let centre = (kf + 1.0) / 2.0;
    let chi2 = 12.0 * nf / (kf * (kf + 1.0))
        * mean_ranks.iter().map(|r| (r - centre).powi(2)).sum::<f64>();
    let dist = ChiSquared::new(kf - 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(FriedmanResult {
        chi2,
        df: k - 1,
        p: (1.0 - dist.cdf(chi2)).clamp(0.0, 1.0),
        mean_ranks,
        blocks: n,
        critical_difference: nemenyi_cd(k, n, alpha),
    })
}

/// CDF of the range of `k` independent standard normals,
/// `k * int phi(z) [Phi(z + q) - Phi(z)]^(k-1) dz`, by composite Simpson.
pub fn normal_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let std = Normal::standard();
    let (lo, hi, m) = (-9.0f64, 9.0f64, 3000usize);
    let h = (hi - lo) / m as f64;
    let f = |z: f64| {
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let inner = (std.cdf(z + q) - std.cdf(z)).max(0.0);
        phi * inner.powi(k as i32 - 1)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    (k as f64 * s * h / 3.0).clamp(0.0, 1.0)
}

/// Upper `alpha` quantile of the studentized range with infinite degrees of
/// freedom, by bisection on [`normal_range_cdf`].
pub fn studentized_range_quantile(k: usize, alpha: f64) -> f64 {
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0f64, 20.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if normal_range_cdf(mid, k) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `q_alpha sqrt(k (k + 1) / (6 n))` with `q_alpha` the studentized-range
/// quantile over `sqrt 2`.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> f64 {
    let q = studentized_range_quantile(k, alpha) / 2f64.sqrt();
    q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt()
}
