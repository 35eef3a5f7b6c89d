//! Classical comparators on the same calendar as the geometric channels.
//!
//! Each produces a raw statistic and passes it through [`causal_zscore`] with
//! no extra smoothing, so every method ends up with the same z semantics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{sample_std, FeatureMatrix, PricePanel};
use crate::linalg::symmetric_eigh;
use crate::scoring::{causal_zscore, ScoreSeries, DEFAULT_MIN_HISTORY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    RollingVolZ,
    Cusum,
    AbsorptionRatio,
    Turbulence,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::RollingVolZ,
        BaselineKind::Cusum,
        BaselineKind::AbsorptionRatio,
        BaselineKind::Turbulence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::RollingVolZ => "rolling_vol_z",
            BaselineKind::Cusum => "cusum",
            BaselineKind::AbsorptionRatio => "absorption_ratio",
            BaselineKind::Turbulence => "turbulence",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown baseline `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub method: BaselineKind,
    pub vol_window: usize,
    pub cusum_k: f64,
    pub burn_in: usize,
    pub corr_window: usize,
    pub turbulence_min_history: usize,
    /// Minimum history of the final causal z-score.
    pub min_history: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self::for_method(BaselineKind::RollingVolZ)
    }
}

impl BaselineConfig {
    pub fn for_method(method: BaselineKind) -> Self {
        Self {
            method,
            vol_window: 20,
            cusum_k: 0.5,
            burn_in: 60,
            corr_window: 250,
            turbulence_min_history: 60,
            min_history: DEFAULT_MIN_HISTORY,
        }
    }
}

fn finish(name: &str, raw: Vec<Option<f64>>, m: usize) -> ScoreSeries {
    let mut s = causal_zscore(&raw, 1, m);
    s.name = name.to_string();
    s
}

/// Rolling sample volatility of returns over windows with every value
/// defined.
pub fn rolling_vol(returns: &[Option<f64>], vol_window: usize) -> Vec<Option<f64>> {
    (0..returns.len())
        .map(|t| {
            if t + 1 < vol_window || vol_window < 2 {
                return None;
            }
            let w: Option<Vec<f64>> = returns[t + 1 - vol_window..=t].iter().copied().collect();
            w.map(|w| sample_std(&w))
        })
        .collect()
}

pub fn rolling_vol_z(returns: &[Option<f64>], vol_window: usize, m: usize) -> ScoreSeries {
    finish(BaselineKind::RollingVolZ.name(), rolling_vol(returns, vol_window), m)
}

/// `S(t) = max(0, S(t-1) + u(t) - k)` from `S = 0`; undefined `u` leave `S`
/// unchanged and undefined.
pub fn cusum_statistic(u: &[Option<f64>], k: f64) -> Vec<Option<f64>> {
    let mut s = 0.0f64;
    u.iter()
        .map(|v| {
            v.map(|x| {
                s = (s + x - k).max(0.0);
                s
            })
        })
        .collect()
}

/// One-sided upper CUSUM of absolute deviations.
///
/// The first `burn_in` defined values fix a reference mean `mu`; the
/// absolute deviations `a = |x - mu|` are standardized by their own burn-in
/// mean and sample deviation into `u`, and the statistic accumulates from
/// the first post-burn-in day. Raw output is `S`.
pub fn cusum(series: &[Option<f64>], k: f64, burn_in: usize, m: usize) -> Result<ScoreSeries> {
    let defined: Vec<usize> = (0..series.len()).filter(|&t| series[t].is_some()).collect();
    if burn_in < 2 || defined.len() <= burn_in {
        return Err(Error::InsufficientHistory(format!(
            "CUSUM needs more than {burn_in} defined points, got {}",
            defined.len()
        )));
    }
    let burn: Vec<f64> = defined[..burn_in].iter().map(|&t| series[t].unwrap()).collect();
    let mu = burn.iter().sum::<f64>() / burn_in as f64;
    let abs_dev: Vec<f64> = burn.iter().map(|x| (x - mu).abs()).collect();
    let a_mu = abs_dev.iter().sum::<f64>() / burn_in as f64;
    let a_sd = sample_std(&abs_dev);
    let a_sd = if a_sd > 0.0 { a_sd } else { 1.0 };
    let first = defined[burn_in];
    let u: Vec<Option<f64>> = series
        .iter()
        .enumerate()
        .map(|(t, v)| {
            if t < first {
                None
            } else {
                v.map(|x| ((x - mu).abs() - a_mu) / a_sd)
            }
        })
        .collect();
    Ok(finish(BaselineKind::Cusum.name(), cusum_statistic(&u, k), m))
}

/// Largest eigenvalue over the trace of the correlation matrix of the last
/// `window` rows; `None` if a value is missing or an asset has zero variance.
pub fn absorption_ratio_raw(returns: &[Vec<Option<f64>>], window: usize) -> Result<Vec<Option<f64>>> {
    let n_assets = returns.len();
    if n_assets < 2 {
        return Err(Error::InvalidInput("absorption ratio needs >= 2 assets".into()));
    }
    let t_len = returns[0].len();
    if returns.iter().any(|r| r.len() != t_len) {
        return Err(Error::InvalidInput("return series lengths differ".into()));
    }
    let mut out = vec![None; t_len];
    if window < 2 {
        return Ok(out);
    }
    for t in window - 1..t_len {
        let cols: Option<Vec<Vec<f64>>> = returns
            .iter()
            .map(|r| r[t + 1 - window..=t].iter().copied().collect())
            .collect();
        let Some(cols) = cols else { continue };
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / window as f64).collect();
        let ss: Vec<f64> = cols
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum())
            .collect();
        if ss.contains(&0.0) {
            continue;
        }
        let mut corr = vec![0.0; n_assets * n_assets];
        for i in 0..n_assets {
            corr[i * n_assets + i] = 1.0;
            for j in i + 1..n_assets {
                let c: f64 = cols[i]
                    .iter()
                    .zip(&cols[j])
                    .map(|(x, y)| (x - means[i]) * (y - means[j]))
                    .sum::<f64>()
                    / (ss[i] * ss[j]).sqrt();
                corr[i * n_assets + j] = c;
                corr[j * n_assets + i] = c;
            }
        }
        let eig = symmetric_eigh(n_assets, &corr)?;
        out[t] = Some(eig.values[n_assets - 1] / n_assets as f64);
    }
    Ok(out)
}

pub fn absorption_ratio(returns: &[Vec<Option<f64>>], window: usize, m: usize) -> Result<ScoreSeries> {
    Ok(finish(
        BaselineKind::AbsorptionRatio.name(),
        absorption_ratio_raw(returns, window)?,
        m,
    ))
}

/// Cholesky factor of a symmetric positive-definite row-major matrix.
fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `v^T A^{-1} v` from the Cholesky factor of `A`.
fn quad_form_inv(n: usize, l: &[f64], v: &[f64]) -> f64 {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (v[i] - s) / l[i * n + i];
    }
    y.iter().map(|x| x * x).sum()
}

/// Expanding Mahalanobis distance of each row from the rows before it.
///
/// Mean and sample covariance use every finite row before `t`; the
/// covariance gets a ridge of `1e-6 * trace / F` before inversion. Defined
/// once `min_history` past rows exist.
pub fn turbulence_raw(rows: &[Vec<f64>], min_history: usize) -> Vec<Option<f64>> {
    let t_len = rows.len();
    let mut out = vec![None; t_len];
    let Some(f) = rows.first().map(|r| r.len()) else {
        return out;
    };
    let mut n = 0usize;
    let mut sum = vec![0.0; f];
    let mut cross = vec![0.0; f * f];
    for t in 0..t_len {
        let x = &rows[t];
        let finite = x.iter().all(|v| v.is_finite());
        if finite && n >= min_history.max(2) {
            let nf = n as f64;
            let mu: Vec<f64> = sum.iter().map(|s| s / nf).collect();
            let mut cov = vec![0.0; f * f];
            for i in 0..f {
                for j in 0..f {
                    cov[i * f + j] = (cross[i * f + j] - nf * mu[i] * mu[j]) / (nf - 1.0);
                }
            }
            let trace: f64 = (0..f).map(|i| cov[i * f + i]).sum();
            let ridge = (1e-6 * trace / f as f64).max(f64::MIN_POSITIVE);
            for i in 0..f {
                cov[i * f + i] += ridge;
            }
            if let Some(l) = cholesky(f, &cov) {
                let d: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
                out[t] = Some(quad_form_inv(f, &l, &d));
            }
        }
        if finite {
            n += 1;
            for i in 0..f {
                sum[i] += x[i];
                for j in 0..f {
                    cross[i * f + j] += x[i] * x[j];
                }
            }
        }
    }
    out
}

pub fn turbulence(features: &FeatureMatrix, min_history: usize, m: usize) -> ScoreSeries {
    finish(
        BaselineKind::Turbulence.name(),
        turbulence_raw(&features.rows, min_history),
        m,
    )
}

/// Runs one baseline: volatility and CUSUM on the first asset's log returns,
/// absorption ratio on all assets' returns, turbulence on `features`.
pub fn run_baseline(
    cfg: &BaselineConfig,
    panel: &PricePanel,
    features: &FeatureMatrix,
) -> Result<ScoreSeries> {
    match cfg.method {
        BaselineKind::RollingVolZ => Ok(rolling_vol_z(
            &panel.log_returns(0),
            cfg.vol_window,
            cfg.min_history,
        )),
        BaselineKind::Cusum => cusum(&panel.log_returns(0), cfg.cusum_k, cfg.burn_in, cfg.min_history),
        BaselineKind::AbsorptionRatio => {
            let r: Vec<Vec<Option<f64>>> =
                (0..panel.assets.len()).map(|k| panel.log_returns(k)).collect();
            absorption_ratio(&r, cfg.corr_window, cfg.min_history)
        }
        BaselineKind::Turbulence => Ok(turbulence(
            features,
            cfg.turbulence_min_history,
            cfg.min_history,
        )),
    }
}
