//! Numerical checks of the geometric identities on random operator sets.

use serde::Serialize;

use qgeo_core::embedding::{Basis, OperatorSet};
use qgeo_core::geometry::{chern_integral, curvature_gap_bound_check, metric_fd, metric_pt, SurfaceMesh};
use qgeo_core::rng::SplitMix64;
use qgeo_core::synthetic::feature_stream;
use qgeo_core::Result;

use crate::config::ValidateOptions;

pub const QFI_MIN_PEARSON: f64 = 0.999999;
pub const QFI_MAX_RMSE: f64 = 1e-9;
pub const CHERN_TOL: f64 = 0.01;
pub const MIN_GAP: f64 = 1e-6;
/// Stream offsets so that each check draws its own points.
const QFI_STREAM: u64 = 1;
const BOUND_STREAM: u64 = 2;
const GAP_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiCheck {
    pub points: usize,
    pub entries: usize,
    pub pearson_r: f64,
    pub rmse: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub points: usize,
    pub satisfied: usize,
    pub satisfied_fraction: f64,
    /// Largest `|F_ab| / bound` over the sample.
    pub max_ratio: f64,
    /// Smallest `bound - |F_ab|`.
    pub min_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChernCheck {
    pub grid: usize,
    pub faces: usize,
    pub closed: bool,
    pub value: f64,
    pub reversed: f64,
    pub expected: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCheck {
    pub steps: usize,
    pub min_gap: f64,
    pub degenerate_steps: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub qfi: QfiCheck,
    pub bound: BoundSummary,
    pub chern: ChernCheck,
    pub gap: GapCheck,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&'static str> {
        [
            ("qfi_metric_identity", self.qfi.passed),
            ("curvature_gap_bound", self.bound.passed),
            ("chern_monopole", self.chern.passed),
            ("gap_positivity", self.gap.passed),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| n)
        .collect()
    }
}

/// Random unit vectors in `R^p`.
fn unit_points(p: usize, count: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..p).map(|_| rng.normal_pair().0).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Finite-difference fidelity metric against the perturbative metric,
/// entry by entry over `points` random unit vectors.
pub fn qfi_identity(ops: &OperatorSet, points: usize, eps: f64, seed: u64) -> Result<QfiCheck> {
    let mut rng = SplitMix64::substream(seed, QFI_STREAM);
    let (mut fd, mut pt) = (Vec::new(), Vec::new());
    for x in unit_points(ops.p(), points, &mut rng) {
        fd.extend(metric_fd(ops, &x, eps)?.g);
        pt.extend(metric_pt(ops, &x)?.g);
    }
    let sq: f64 = fd.iter().zip(&pt).map(|(a, b)| (a - b) * (a - b)).sum();
    let rmse = (sq / fd.len().max(1) as f64).sqrt();
    let max_abs_error = fd.iter().zip(&pt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pearson_r = pearson(&fd, &pt);
    Ok(QfiCheck {
        points,
        entries: fd.len(),
        pearson_r,
        rmse,
        max_abs_error,
        passed: pearson_r >= QFI_MIN_PEARSON && rmse <= QFI_MAX_RMSE,
    })
}

/// Plaquette curvature against the operator-norm/gap bound at random unit
/// vectors, each with a random coordinate pair.
pub fn curvature_bound(ops: &OperatorSet, points: usize, eps: f64, seed: u64) -> Result<BoundSummary> {
    let p = ops.p();
    let mut rng = SplitMix64::substream(seed, BOUND_STREAM);
    let xs = unit_points(p, points, &mut rng);
    let (mut satisfied, mut max_ratio, mut min_slack) = (0, 0.0f64, f64::INFINITY);
    for x in &xs {
        let a = (rng.next_u64() % p as u64) as usize;
        let b = (a + 1 + (rng.next_u64() % (p as u64 - 1)) as usize) % p;
        let c = curvature_gap_bound_check(ops, x, eps, a, b)?;
        satisfied += usize::from(c.satisfied);
        max_ratio = max_ratio.max(c.ratio());
        min_slack = min_slack.min(c.rhs - c.lhs);
    }
    Ok(BoundSummary {
        points,
        satisfied,
        satisfied_fraction: satisfied as f64 / points.max(1) as f64,
        max_ratio,
        min_slack,
        passed: points > 0 && satisfied == points && min_slack >= 0.0,
    })
}

/// Two-level monopole `H(x) = x . sigma` on a closed sphere around the
/// degeneracy; its Chern number is `-1`.
pub fn chern_monopole(grid: usize) -> Result<ChernCheck> {
    let ops = OperatorSet::pauli(2, 3, Basis::GellMann)?;
    let mesh = SurfaceMesh::sphere(&[0.0; 3], 1.0, grid, grid)?;
    let fwd = chern_integral(&ops, &mesh)?;
    let rev = chern_integral(&ops, &mesh.reversed())?;
    let expected = -1.0;
    Ok(ChernCheck {
        grid,
        faces: fwd.faces,
        closed: fwd.closed,
        value: fwd.value,
        reversed: rev.value,
        expected,
        passed: fwd.closed && (fwd.value - expected).abs() <= CHERN_TOL && rev.value == -fwd.value,
    })
}

/// Spectral gap of `H(x_t)` along a unit-norm random-walk feature stream.
pub fn gap_scan(ops: &OperatorSet, steps: usize, step: f64, seed: u64) -> Result<GapCheck> {
    let stream = feature_stream(ops.p(), steps, step, SplitMix64::substream(seed, GAP_STREAM).next_u64());
    let (mut min_gap, mut degenerate_steps) = (f64::INFINITY, 0);
    for x in &stream {
        let g = ops.ground_state(x)?;
        min_gap = min_gap.min(g.gap);
        degenerate_steps += usize::from(g.degenerate);
    }
    Ok(GapCheck {
        steps,
        min_gap,
        degenerate_steps,
        passed: steps > 0 && min_gap > MIN_GAP && degenerate_steps == 0,
    })
}

pub fn run_validation(opts: &ValidateOptions, seed: u64) -> Result<ValidationReport> {
    let ops = OperatorSet::random(opts.n, opts.p, seed, 0)?;
    let qfi = qfi_identity(&ops, opts.qfi_points, opts.eps, seed)?;
    let bound = curvature_bound(&ops, opts.bound_points, opts.eps, seed)?;
    let chern = chern_monopole(opts.chern_grid)?;
    let gap = gap_scan(&ops, opts.gap_steps, opts.gap_step, seed)?;
    let passed = qfi.passed && bound.passed && chern.passed && gap.passed;
    Ok(ValidationReport {
        n: opts.n,
        p: opts.p,
        seed,
        qfi,
        bound,
        chern,
        gap,
        passed,
    })
}
