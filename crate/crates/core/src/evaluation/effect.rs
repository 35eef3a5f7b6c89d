//! Effect sizes and their block-bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::quantile_sorted;

pub const DEFAULT_BOOTSTRAP: usize = 10_000;
pub const DEFAULT_EVAL_SEED: u64 = 42;

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub(crate) fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// `(mean_c - mean_n) / s_pooled`.
///
/// `None` for samples under two points or zero pooled variance with unequal
/// means; zero pooled variance with equal means gives `0`.
pub fn cohens_d(crisis: &[f64], normal: &[f64]) -> Option<f64> {
    let (n1, n2) = (crisis.len(), normal.len());
    if n1 < 2 || n2 < 2 {
        return None;
    }
    let (m1, m2) = (mean(crisis), mean(normal));
    let pooled = ((n1 - 1) as f64 * variance(crisis) + (n2 - 1) as f64 * variance(normal))
        / (n1 + n2 - 2) as f64;
    let diff = m1 - m2;
    if pooled > 0.0 && pooled.is_finite() {
        Some(diff / pooled.sqrt())
    } else if diff == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// `(#{a_i > b_j} - #{a_i < b_j}) / (n_a n_b)`, by sorting and binary search.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("Cliff's delta needs non-empty samples".into()));
    }
    let mut sb = b.to_vec();
    sb.sort_by(|x, y| x.total_cmp(y));
    let mut balance: i128 = 0;
    for &x in a {
        let below = sb.partition_point(|v| *v < x) as i128;
        let not_above = sb.partition_point(|v| *v <= x) as i128;
        let above = sb.len() as i128 - not_above;
        balance += below - above;
    }
    Ok(balance as f64 / (a.len() as f64 * b.len() as f64))
}

/// Smallest `L` with `L^3 >= n`.
pub fn block_length(n: usize) -> usize {
    let mut l = (n as f64).cbrt().round().max(1.0) as usize;
    while l > 1 && (l - 1).pow(3) >= n {
        l -= 1;
    }
    while l.pow(3) < n {
        l += 1;
    }
    l
}

/// Circular moving-block resample of `x` with block length `l`.
pub fn circular_block_resample<R: Rng>(x: &[f64], l: usize, rng: &mut R, out: &mut Vec<f64>) {
    let n = x.len();
    out.clear();
    while out.len() < n {
        let s = rng.random_range(0..n);
        for k in 0..l {
            if out.len() == n {
                break;
            }
            out.push(x[(s + k) % n]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    /// Fraction of resamples where `d` was undefined.
    pub undefined_fraction: f64,
    /// More than 1% of resamples undefined.
    pub flagged: bool,
}

/// Percentile 95% interval for Cohen's d under independent circular
/// block resampling of each sample with block length `ceil(n^(1/3))`.
pub fn block_bootstrap_ci(crisis: &[f64], normal: &[f64], b: usize, seed: u64) -> Result<BootstrapCi> {
    if crisis.len() < 4 || normal.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs >= 4 points per sample, got {} and {}",
            crisis.len(),
            normal.len()
        )));
    }
    if b == 0 {
        return Err(Error::InvalidInput("bootstrap needs B >= 1".into()));
    }
    let (lc, ln) = (block_length(crisis.len()), block_length(normal.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rc, mut rn) = (Vec::new(), Vec::new());
    let mut ds = Vec::with_capacity(b);
    for _ in 0..b {
        circular_block_resample(crisis, lc, &mut rng, &mut rc);
        circular_block_resample(normal, ln, &mut rng, &mut rn);
        if let Some(d) = cohens_d(&rc, &rn) {
            ds.push(d);
        }
    }
    let undefined_fraction = (b - ds.len()) as f64 / b as f64;
    if ds.is_empty() {
        return Err(Error::InvalidInput("d undefined on every resample".into()));
    }
    ds.sort_by(|x, y| x.total_cmp(y));
    Ok(BootstrapCi {
        lo: quantile_sorted(&ds, 0.025),
        hi: quantile_sorted(&ds, 0.975),
        resamples: b,
        undefined_fraction,
        flagged: undefined_fraction > 0.01,
    })
}
