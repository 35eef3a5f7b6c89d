//! Per-time-step observable channels over an embedded feature series.
//!
//! Input rows are `Option<Vec<f64>>`: `None` marks steps with no embedding
//! (warm-up rows). Output values are `None` wherever a channel is undefined or
//! numerically flagged; nothing is zero-filled.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{Basis, OperatorMethod, OperatorSet, DEFAULT_SEED, DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::geometry::{berry_plaquette, metric_pt, pseudo_det, DEFAULT_EPS, RANK_TOL};
use crate::linalg::{inner, partial_trace, purity, EigenSystem, HermitianMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    BerryRate,
    SpectralEntropy,
    HamSensitivity,
    ReducedPurity,
    QfiLogdet,
    MultilagFidelity,
    GroundEnergy,
}

impl ChannelId {
    pub const ALL: [ChannelId; 7] = [
        ChannelId::BerryRate,
        ChannelId::SpectralEntropy,
        ChannelId::HamSensitivity,
        ChannelId::ReducedPurity,
        ChannelId::QfiLogdet,
        ChannelId::MultilagFidelity,
        ChannelId::GroundEnergy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::BerryRate => "berry_rate",
            ChannelId::SpectralEntropy => "spectral_entropy",
            ChannelId::HamSensitivity => "ham_sensitivity",
            ChannelId::ReducedPurity => "reduced_purity",
            ChannelId::QfiLogdet => "qfi_logdet",
            ChannelId::MultilagFidelity => "multilag_fidelity",
            ChannelId::GroundEnergy => "ground_energy",
        }
    }

    /// `-1` for channels that fall under stress, so that `sign * raw` is
    /// always "high = stress".
    pub fn stress_sign(self) -> f64 {
        match self {
            ChannelId::ReducedPurity | ChannelId::MultilagFidelity => -1.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ChannelId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown channel `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub channel: ChannelId,
    pub n: usize,
    pub p: usize,
    pub method: OperatorMethod,
    pub basis: Basis,
    pub seed: u64,
    pub seed_offset: u64,
    pub eps: f64,
    /// Lag depth for multilag fidelity.
    pub lags: usize,
    /// `(dA, dB)` for reduced purity; `None` means `(2, n/2)`.
    pub bipartition: Option<(usize, usize)>,
    /// Curvature component for the Berry rate.
    pub curvature_pair: (usize, usize),
    /// Smoothing window of the causal z-score.
    pub window: usize,
    /// Minimum history before a z-score is emitted.
    pub min_history: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self::for_channel(ChannelId::SpectralEntropy)
    }
}

impl ChannelConfig {
    /// Walk-forward defaults (`n=8, p=10, w=10`); the Berry rate uses
    /// `n=6, p=8, w=15` with random operators.
    pub fn for_channel(channel: ChannelId) -> Self {
        let (n, p, window) = match channel {
            ChannelId::BerryRate => (6, 8, 15),
            _ => (8, 10, 10),
        };
        Self {
            channel,
            n,
            p,
            method: OperatorMethod::Random,
            basis: Basis::GellMann,
            seed: DEFAULT_SEED,
            seed_offset: 0,
            eps: DEFAULT_EPS,
            lags: 5,
            bipartition: None,
            curvature_pair: (0, 1),
            window,
            min_history: 60,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.bipartition.unwrap_or((2, self.n / 2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::DimensionTooSmall(self.n));
        }
        if self.p == 0 {
            return Err(Error::InvalidInput("p must be at least 1".into()));
        }
        if self.window == 0 || self.min_history < 2 {
            return Err(Error::InvalidInput(
                "smoothing window must be >= 1 and min_history >= 2".into(),
            ));
        }
        match self.channel {
            ChannelId::ReducedPurity => {
                let (da, db) = self.dims();
                if self.bipartition.is_none() && !self.n.is_multiple_of(2) || da * db != self.n {
                    return Err(Error::Bipartition {
                        len: self.n,
                        da,
                        db,
                    });
                }
            }
            ChannelId::MultilagFidelity if self.lags == 0 => {
                return Err(Error::InvalidInput("multilag depth must be >= 1".into()));
            }
            ChannelId::BerryRate => {
                let (a, b) = self.curvature_pair;
                if a >= self.p || b >= self.p || a == b {
                    return Err(Error::InvalidInput(format!(
                        "curvature pair ({a}, {b}) invalid for p = {}",
                        self.p
                    )));
                }
            }
            _ => {}
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        Ok(())
    }

    /// Builds the operator set. `pca_eigenvalues` (top-`p` preprocessing
    /// eigenvalues) are required by the PCA-inspired method only.
    pub fn operators(&self, pca_eigenvalues: Option<&[f64]>) -> Result<OperatorSet> {
        match self.method {
            OperatorMethod::Random => {
                OperatorSet::random(self.n, self.p, self.seed, self.seed_offset)
            }
            OperatorMethod::Pauli => OperatorSet::pauli(self.n, self.p, self.basis),
            OperatorMethod::PcaInspired => {
                let eig = pca_eigenvalues.ok_or_else(|| {
                    Error::InvalidInput("PCA-inspired operators need PCA eigenvalues".into())
                })?;
                if eig.len() < self.p {
                    return Err(Error::DimensionMismatch {
                        expected: self.p,
                        got: eig.len(),
                    });
                }
                let clipped: Vec<f64> = eig[..self.p].iter().map(|l| l.max(0.0)).collect();
                OperatorSet::pca_inspired(self.n, &clipped, self.basis)
            }
        }
    }
}

/// One value per time step; `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub channel: ChannelId,
    pub values: Vec<Option<f64>>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flagged(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// `stress_sign * raw`.
    pub fn oriented(&self) -> Vec<Option<f64>> {
        let s = self.channel.stress_sign();
        self.values.iter().map(|v| v.map(|x| s * x)).collect()
    }
}

fn check_rows(ops: &OperatorSet, embedded: &[Option<Vec<f64>>]) -> Result<()> {
    for row in embedded.iter().flatten() {
        if row.len() != ops.p() {
            return Err(Error::DimensionMismatch {
                expected: ops.p(),
                got: row.len(),
            });
        }
    }
    Ok(())
}

/// Full spectra of `H(x_t)`, solved in parallel.
pub fn spectra(ops: &OperatorSet, embedded: &[Option<Vec<f64>>]) -> Result<Vec<Option<EigenSystem>>> {
    check_rows(ops, embedded)?;
    embedded
        .par_iter()
        .map(|row| row.as_ref().map(|x| ops.spectrum(x)).transpose())
        .collect()
}

/// Non-degenerate ground states; `None` for missing rows and degenerate points.
fn ground_states(spec: &[Option<EigenSystem>]) -> Vec<Option<&[Complex64]>> {
    spec.iter()
        .map(|e| {
            e.as_ref()
                .filter(|e| e.gap() >= DEGENERACY_TOL)
                .map(|e| e.ground())
        })
        .collect()
}

/// `|v_t - v_{t-1}|` where both are defined; the first entry is always `None`.
pub fn abs_differences(v: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; v.len()];
    for t in 1..v.len() {
        if let (Some(a), Some(b)) = (v[t], v[t - 1]) {
            out[t] = Some((a - b).abs());
        }
    }
    out
}

/// Plaquette curvature `F_ab(x_t)` per step; ill-conditioned points are `None`.
pub fn curvature_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
    eps: f64,
    pair: (usize, usize),
) -> Result<Vec<Option<f64>>> {
    check_rows(ops, embedded)?;
    embedded
        .par_iter()
        .map(|row| match row {
            None => Ok(None),
            Some(x) => match berry_plaquette(ops, x, eps, pair.0, pair.1) {
                Ok(s) => Ok(Some(s.value)),
                Err(e) if e.is_numerical() => Ok(None),
                Err(e) => Err(e),
            },
        })
        .collect()
}

/// `|F_ab(x_t) - F_ab(x_{t-1})|`.
pub fn berry_rate_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
    cfg: &ChannelConfig,
) -> Result<RawSeries> {
    let f = curvature_series(ops, embedded, cfg.eps, cfg.curvature_pair)?;
    Ok(RawSeries {
        channel: ChannelId::BerryRate,
        values: abs_differences(&f),
    })
}

/// `-sum_m w_m ln w_m` with `w_m = (E_m - E_0) / sum_j (E_j - E_0)`.
/// `None` if every excitation gap is below `1e-12`.
pub fn spectral_entropy(eigenvalues: &[f64]) -> Option<f64> {
    let e0 = eigenvalues[0];
    let gaps: Vec<f64> = eigenvalues[1..].iter().map(|e| (e - e0).max(0.0)).collect();
    if gaps.iter().all(|&g| g < 1e-12) {
        return None;
    }
    let total: f64 = gaps.iter().sum();
    Some(
        -gaps
            .iter()
            .map(|g| g / total)
            .filter(|&w| w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>(),
    )
}

pub fn spectral_entropy_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
) -> Result<RawSeries> {
    let spec = spectra(ops, embedded)?;
    Ok(RawSeries {
        channel: ChannelId::SpectralEntropy,
        values: spec
            .iter()
            .map(|e| e.as_ref().and_then(|e| spectral_entropy(&e.values)))
            .collect(),
    })
}

/// `<psi|dH^2|psi> - <psi|dH|psi>^2`, evaluated as `||dH psi||^2 - <dH>^2`.
pub fn hamiltonian_variance(dh: &HermitianMatrix, psi: &[Complex64]) -> f64 {
    let v = dh.mul_vec(psi);
    let mean = inner(psi, &v).re;
    inner(&v, &v).re - mean * mean
}

/// Variance of `H(x_t) - H(x_{t-1})` in the ground state at `t`.
pub fn ham_sensitivity_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
) -> Result<RawSeries> {
    let spec = spectra(ops, embedded)?;
    let states = ground_states(&spec);
    let values = (0..embedded.len())
        .into_par_iter()
        .map(|t| {
            if t == 0 {
                return Ok(None);
            }
            match (&embedded[t], &embedded[t - 1], states[t]) {
                (Some(x), Some(xp), Some(psi)) => {
                    let dh = ops.error_hamiltonian(x)?.sub(&ops.error_hamiltonian(xp)?);
                    Ok(Some(hamiltonian_variance(&dh, psi)))
                }
                _ => Ok(None),
            }
        })
        .collect::<Result<_>>()?;
    Ok(RawSeries {
        channel: ChannelId::HamSensitivity,
        values,
    })
}

pub fn reduced_purity_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
    dims: (usize, usize),
) -> Result<RawSeries> {
    if dims.0 * dims.1 != ops.n() {
        return Err(Error::Bipartition {
            len: ops.n(),
            da: dims.0,
            db: dims.1,
        });
    }
    let spec = spectra(ops, embedded)?;
    let values = ground_states(&spec)
        .into_iter()
        .map(|s| s.map(|psi| partial_trace(psi, dims).map(|r| purity(&r))).transpose())
        .collect::<Result<_>>()?;
    Ok(RawSeries {
        channel: ChannelId::ReducedPurity,
        values,
    })
}

/// `ln det+(4 g)`; `None` for a rank-0 metric.
pub fn qfi_logdet_of(eigenvalues_of_g: &[f64]) -> Option<f64> {
    let scaled: Vec<f64> = eigenvalues_of_g.iter().map(|l| 4.0 * l).collect();
    let d = crate::geometry::pseudo_det_of_spectrum(&scaled, RANK_TOL);
    (!d.flagged).then_some(d.log_value)
}

pub fn qfi_logdet_series(ops: &OperatorSet, embedded: &[Option<Vec<f64>>]) -> Result<RawSeries> {
    check_rows(ops, embedded)?;
    let values = embedded
        .par_iter()
        .map(|row| match row {
            None => Ok(None),
            Some(x) => match metric_pt(ops, x) {
                Ok(g) => {
                    let d = pseudo_det(&g.scaled(4.0), RANK_TOL)?;
                    Ok((!d.flagged).then_some(d.log_value))
                }
                Err(e) if e.is_numerical() => Ok(None),
                Err(e) => Err(e),
            },
        })
        .collect::<Result<_>>()?;
    Ok(RawSeries {
        channel: ChannelId::QfiLogdet,
        values,
    })
}

/// `min_{l=1..k} |<psi_t|psi_{t-l}>|^2`; `None` until `k` lagged states exist.
pub fn min_lag_fidelity(states: &[Option<&[Complex64]>], k: usize) -> Vec<Option<f64>> {
    (0..states.len())
        .map(|t| {
            if t < k {
                return None;
            }
            let cur = states[t]?;
            let mut best = f64::INFINITY;
            for l in 1..=k {
                best = best.min(inner(cur, states[t - l]?).norm_sqr());
            }
            Some(best)
        })
        .collect()
}

pub fn multilag_fidelity_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
    k: usize,
) -> Result<RawSeries> {
    let spec = spectra(ops, embedded)?;
    Ok(RawSeries {
        channel: ChannelId::MultilagFidelity,
        values: min_lag_fidelity(&ground_states(&spec), k),
    })
}

pub fn ground_energy_series(ops: &OperatorSet, embedded: &[Option<Vec<f64>>]) -> Result<RawSeries> {
    let spec = spectra(ops, embedded)?;
    Ok(RawSeries {
        channel: ChannelId::GroundEnergy,
        values: spec.iter().map(|e| e.as_ref().map(|e| e.values[0])).collect(),
    })
}

/// Dispatches on `cfg.channel`.
pub fn channel_series(
    ops: &OperatorSet,
    embedded: &[Option<Vec<f64>>],
    cfg: &ChannelConfig,
) -> Result<RawSeries> {
    cfg.validate()?;
    match cfg.channel {
        ChannelId::BerryRate => berry_rate_series(ops, embedded, cfg),
        ChannelId::SpectralEntropy => spectral_entropy_series(ops, embedded),
        ChannelId::HamSensitivity => ham_sensitivity_series(ops, embedded),
        ChannelId::ReducedPurity => reduced_purity_series(ops, embedded, cfg.dims()),
        ChannelId::QfiLogdet => qfi_logdet_series(ops, embedded),
        ChannelId::MultilagFidelity => multilag_fidelity_series(ops, embedded, cfg.lags),
        ChannelId::GroundEnergy => ground_energy_series(ops, embedded),
    }
}
