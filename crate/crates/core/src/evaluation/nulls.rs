//! Null distributions of the median crisis effect size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::crisis::{crisis_mask, split_samples, IndexedWindow};
use super::effect::cohens_d;
use crate::error::{Error, Result};

pub const DEFAULT_NULL_DRAWS: usize = 1000;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median over `panel` of Cohen's d of each extended window against the
/// days outside every window in `mask`.
pub fn median_d(
    z: &[Option<f64>],
    panel: &[IndexedWindow],
    mask: &[bool],
    valid_from: usize,
) -> Option<f64> {
    let ds: Vec<f64> = panel
        .iter()
        .filter_map(|w| {
            let (c, n) = split_samples(z, w, mask, valid_from);
            cohens_d(&c, &n)
        })
        .collect();
    median(ds)
}

/// Rotates the segment `z[from..]` left by `shift`.
pub fn circular_shift(z: &[Option<f64>], from: usize, shift: usize) -> Vec<Option<f64>> {
    let mut out = z.to_vec();
    let seg = &z[from..];
    let len = seg.len();
    if len == 0 {
        return out;
    }
    for i in 0..len {
        out[from + i] = seg[(i + shift) % len];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullFamily {
    pub draws: usize,
    pub median_of_nulls: f64,
    /// Percent of null draws at or below the real statistic.
    pub percentile: f64,
    /// `(1 + #{null >= real}) / (draws + 1)`.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullReport {
    pub real_median_d: f64,
    pub circular_shift: NullFamily,
    pub random_windows: NullFamily,
}

fn family(real: f64, nulls: Vec<f64>) -> Result<NullFamily> {
    if nulls.is_empty() {
        return Err(Error::InvalidInput("no null draw produced a defined statistic".into()));
    }
    let n = nulls.len();
    let below = nulls.iter().filter(|v| **v <= real).count();
    let above = nulls.iter().filter(|v| **v >= real).count();
    Ok(NullFamily {
        draws: n,
        median_of_nulls: median(nulls).expect("non-empty"),
        percentile: 100.0 * below as f64 / n as f64,
        p_value: (1 + above) as f64 / (n + 1) as f64,
    })
}

/// Non-overlapping windows of the given lengths placed uniformly in
/// `[from, len)` by rejection sampling, in the order given.
pub fn place_windows<R: Rng>(
    lengths: &[usize],
    from: usize,
    len: usize,
    rng: &mut R,
) -> Result<Vec<IndexedWindow>> {
    let mut placed: Vec<(usize, usize)> = Vec::new();
    for &l in lengths {
        if l == 0 || from + l > len {
            return Err(Error::Infeasible(format!("window of {l} days does not fit")));
        }
        let mut ok = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let s = rng.random_range(from..=len - l);
            let e = s + l - 1;
            if placed.iter().all(|&(a, b)| e < a || s > b) {
                placed.push((s, e));
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Infeasible(
                "could not place non-overlapping null windows".into(),
            ));
        }
    }
    Ok(placed
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| IndexedWindow {
            name: format!("null_{i}"),
            category: super::crisis::Category::Conventional,
            include_in_panel: true,
            start: s,
            end: e,
            ext_start: s,
            ext_end: e,
        })
        .collect())
}

/// Circular-shift and random-window nulls of the median d over `panel`,
/// with `all` (a superset of `panel`) defining the non-normal days of the
/// real statistic.
pub fn null_models(
    z: &[Option<f64>],
    panel: &[IndexedWindow],
    all: &[IndexedWindow],
    valid_from: usize,
    n_draws: usize,
    seed: u64,
) -> Result<NullReport> {
    let from = valid_from.max(z.iter().position(|v| v.is_some()).unwrap_or(z.len()));
    if panel.is_empty() || from >= z.len() {
        return Err(Error::InvalidInput("no crisis windows or no defined scores".into()));
    }
    let mask = crisis_mask(z.len(), all);
    let real = median_d(z, panel, &mask, from)
        .ok_or_else(|| Error::InvalidInput("real median d undefined".into()))?;
    let span = z.len() - from;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut shifts = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let s = rng.random_range(1..span.max(2));
        if let Some(d) = median_d(&circular_shift(z, from, s), panel, &mask, from) {
            shifts.push(d);
        }
    }

    let lengths: Vec<usize> = panel.iter().map(|w| w.ext_len()).collect();
    let mut windows = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let placed = place_windows(&lengths, from, z.len(), &mut rng)?;
        let m = crisis_mask(z.len(), &placed);
        if let Some(d) = median_d(z, &placed, &m, from) {
            windows.push(d);
        }
    }
    Ok(NullReport {
        real_median_d: real,
        circular_shift: family(real, shifts)?,
        random_windows: family(real, windows)?,
    })
}
