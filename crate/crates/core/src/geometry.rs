//! Ground-state geometry: quantum metric, Berry curvature, Chern integrals and
//! metric spectra.
//!
//! Finite-difference quantities work on any [`StateField`]; perturbative ones
//! need the full spectrum and so take an [`OperatorSet`].

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{OperatorSet, DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::linalg::{inner, operator_norm, symmetric_eigh};

pub const DEFAULT_EPS: f64 = 1e-5;
/// Overlaps below this magnitude make a loop phase meaningless.
pub const MIN_OVERLAP: f64 = 1e-12;
/// Eigenvalues at or below `RANK_TOL * lambda_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Absolute slack in the curvature/gap bound comparison.
pub const BOUND_SLACK: f64 = 1e-8;

/// A smooth map from parameters to unit state vectors.
pub trait StateField: Sync {
    /// Number of parameters.
    fn params(&self) -> usize;

    /// The state at `x` and, if known, the gap protecting it.
    fn state_and_gap(&self, x: &[f64]) -> Result<(Vec<Complex64>, Option<f64>)>;

    fn state_at(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        Ok(self.state_and_gap(x)?.0)
    }
}

impl StateField for OperatorSet {
    fn params(&self) -> usize {
        self.p()
    }

    /// Ground state of `H(x)`; a gap below [`DEGENERACY_TOL`] is an error.
    fn state_and_gap(&self, x: &[f64]) -> Result<(Vec<Complex64>, Option<f64>)> {
        let g = self.ground_state(x)?;
        if g.degenerate {
            return Err(Error::Degenerate {
                gap: g.gap,
                context: format!("ground state at x = {x:?}"),
            });
        }
        Ok((g.state, Some(g.gap)))
    }
}

/// Adapts a closure returning unit vectors into a [`StateField`].
pub struct FnField<F> {
    params: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> Vec<Complex64> + Sync,
{
    pub fn new(params: usize, f: F) -> Self {
        Self { params, f }
    }
}

impl<F> StateField for FnField<F>
where
    F: Fn(&[f64]) -> Vec<Complex64> + Sync,
{
    fn params(&self) -> usize {
        self.params
    }

    fn state_and_gap(&self, x: &[f64]) -> Result<(Vec<Complex64>, Option<f64>)> {
        Ok(((self.f)(x), None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMethod {
    FiniteDifference,
    Perturbation,
    Given,
}

/// Real symmetric `p x p` metric at a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    pub p: usize,
    /// Row-major entries.
    pub g: Vec<f64>,
    pub x: Vec<f64>,
    pub method: MetricMethod,
}

impl MetricTensor {
    pub fn from_matrix(p: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                got: g.len(),
            });
        }
        Ok(Self {
            p,
            g,
            x: Vec::new(),
            method: MetricMethod::Given,
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let p = values.len();
        let mut g = vec![0.0; p * p];
        for (i, v) in values.iter().enumerate() {
            g[i * p + i] = *v;
        }
        Self {
            p,
            g,
            x: Vec::new(),
            method: MetricMethod::Given,
        }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.g[a * self.p + b]
    }

    /// Eigenvalues ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(symmetric_eigh(self.p, &self.g)?.values)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            g: self.g.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

fn displaced(x: &[f64], shifts: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(a, d) in shifts {
        y[a] += d;
    }
    y
}

/// Multiplies `v` by the phase that makes `<reference|v>` real positive.
fn gauge_align(reference: &[Complex64], v: &mut [Complex64]) -> Result<()> {
    let ov = inner(reference, v);
    let mag = ov.norm();
    if mag < MIN_OVERLAP {
        return Err(Error::IllConditionedLoop(mag));
    }
    let rot = ov.conj() / mag;
    v.iter_mut().for_each(|z| *z *= rot);
    Ok(())
}

fn check_params(field: &impl StateField, x: &[f64]) -> Result<()> {
    if x.len() != field.params() {
        return Err(Error::DimensionMismatch {
            expected: field.params(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Quantum metric by central differences of gauge-aligned neighbour states:
/// `g_ab = Re(<d_a psi|d_b psi> - <d_a psi|psi><psi|d_b psi>)`.
pub fn metric_fd(field: &impl StateField, x: &[f64], eps: f64) -> Result<MetricTensor> {
    check_params(field, x)?;
    let p = x.len();
    let psi = field.state_at(x)?;
    let mut derivs = Vec::with_capacity(p);
    for a in 0..p {
        let mut plus = field.state_at(&displaced(x, &[(a, eps)]))?;
        let mut minus = field.state_at(&displaced(x, &[(a, -eps)]))?;
        gauge_align(&psi, &mut plus)?;
        gauge_align(&psi, &mut minus)?;
        let d: Vec<Complex64> = plus
            .iter()
            .zip(&minus)
            .map(|(u, v)| (u - v) / (2.0 * eps))
            .collect();
        derivs.push(d);
    }
    let conn: Vec<Complex64> = derivs.iter().map(|d| inner(d, &psi)).collect();
    let mut g = vec![0.0; p * p];
    for a in 0..p {
        for b in a..p {
            let v = (inner(&derivs[a], &derivs[b]) - conn[a] * conn[b].conj()).re;
            g[a * p + b] = v;
            g[b * p + a] = v;
        }
    }
    Ok(MetricTensor {
        p,
        g,
        x: x.to_vec(),
        method: MetricMethod::FiniteDifference,
    })
}

/// Matrix elements `<psi_m| d_a H |psi_0> / (E_m - E_0)` for `m >= 1`, per `a`.
fn excitation_amplitudes(ops: &OperatorSet, x: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let eig = ops.spectrum(x)?;
    let gap = eig.gap();
    if gap < DEGENERACY_TOL {
        return Err(Error::Degenerate {
            gap,
            context: format!("perturbative geometry at x = {x:?}"),
        });
    }
    let e0 = eig.values[0];
    (0..ops.p())
        .map(|a| {
            let dh = ops.hamiltonian_derivative(x, a)?;
            let dpsi0 = dh.mul_vec(eig.ground());
            Ok((1..eig.dim())
                .map(|m| inner(&eig.vectors[m], &dpsi0) / (eig.values[m] - e0))
                .collect())
        })
        .collect()
}

/// Quantum metric from first-order perturbation theory:
/// `g_ab = Re sum_{m>=1} <0|d_a H|m><m|d_b H|0> / (E_m - E_0)^2`.
pub fn metric_pt(ops: &OperatorSet, x: &[f64]) -> Result<MetricTensor> {
    check_params(ops, x)?;
    let amps = excitation_amplitudes(ops, x)?;
    let p = x.len();
    let mut g = vec![0.0; p * p];
    for a in 0..p {
        for b in a..p {
            let v = inner(&amps[a], &amps[b]).re;
            g[a * p + b] = v;
            g[b * p + a] = v;
        }
    }
    Ok(MetricTensor {
        p,
        g,
        x: x.to_vec(),
        method: MetricMethod::Perturbation,
    })
}

/// Berry curvature from perturbation theory:
/// `F_ab = -2 Im sum_{m>=1} <0|d_a H|m><m|d_b H|0> / (E_m - E_0)^2`.
pub fn berry_pt(ops: &OperatorSet, x: &[f64], a: usize, b: usize) -> Result<f64> {
    check_params(ops, x)?;
    let amps = excitation_amplitudes(ops, x)?;
    Ok(-2.0 * inner(&amps[a], &amps[b]).im)
}

/// Phase of the closed loop of overlaps `<s_0|s_1><s_1|s_2>...<s_{m-1}|s_0>`.
///
/// Overlaps `i` and `m-1-i` are multiplied first, so traversing the same loop
/// backwards yields the exact complex conjugate and hence the exact negated
/// phase.
pub fn loop_phase(states: &[&[Complex64]]) -> Result<f64> {
    let m = states.len();
    if m < 2 {
        return Err(Error::InvalidInput("a loop needs at least two states".into()));
    }
    let mut ov = Vec::with_capacity(m);
    for i in 0..m {
        let o = inner(states[i], states[(i + 1) % m]);
        if o.norm() < MIN_OVERLAP {
            return Err(Error::IllConditionedLoop(o.norm()));
        }
        ov.push(o);
    }
    let mut prod = Complex64::new(1.0, 0.0);
    for i in 0..m / 2 {
        prod *= ov[i] * ov[m - 1 - i];
    }
    if m % 2 == 1 {
        prod *= ov[m / 2];
    }
    Ok(prod.arg())
}

/// One Berry curvature evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureSample {
    pub x: Vec<f64>,
    pub a: usize,
    pub b: usize,
    pub value: f64,
    pub gap: Option<f64>,
}

/// Plaquette Berry curvature `F_ab = -arg(W)/eps^2`, with `W` the Wilson loop
/// around `x -> x+eps e_a -> x+eps e_a+eps e_b -> x+eps e_b -> x`.
pub fn berry_plaquette(
    field: &impl StateField,
    x: &[f64],
    eps: f64,
    a: usize,
    b: usize,
) -> Result<CurvatureSample> {
    check_params(field, x)?;
    if a >= x.len() || b >= x.len() {
        return Err(Error::InvalidInput(format!(
            "curvature indices ({a}, {b}) out of range for p = {}",
            x.len()
        )));
    }
    let (s0, gap) = field.state_and_gap(x)?;
    let s1 = field.state_at(&displaced(x, &[(a, eps)]))?;
    let s2 = field.state_at(&displaced(x, &[(a, eps), (b, eps)]))?;
    let s3 = field.state_at(&displaced(x, &[(b, eps)]))?;
    let value = if a == b {
        0.0
    } else {
        -loop_phase(&[&s0, &s1, &s2, &s3])? / (eps * eps)
    };
    Ok(CurvatureSample {
        x: x.to_vec(),
        a,
        b,
        value,
        gap,
    })
}

/// Polygonal surface: vertices in parameter space, faces as vertex loops
/// oriented by the right-hand rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec<f64>>,
    pub faces: Vec<Vec<usize>>,
}

impl SurfaceMesh {
    /// Latitude-longitude sphere in coordinates `(0, 1, 2)` around `center`,
    /// outward oriented. Poles are single vertices fanned by triangles;
    /// everything else is quads. `n_theta >= 2` bands, `n_phi >= 3` sectors.
    pub fn sphere(center: &[f64], radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if center.len() < 3 {
            return Err(Error::InvalidInput("sphere needs at least 3 coordinates".into()));
        }
        if n_theta < 2 || n_phi < 3 {
            return Err(Error::InvalidInput(format!(
                "sphere grid too coarse: {n_theta} x {n_phi}"
            )));
        }
        let point = |theta: f64, phi: f64| {
            let mut v = center.to_vec();
            v[0] += radius * theta.sin() * phi.cos();
            v[1] += radius * theta.sin() * phi.sin();
            v[2] += radius * theta.cos();
            v
        };
        let mut vertices = vec![point(0.0, 0.0)];
        for i in 1..n_theta {
            let theta = PI * i as f64 / n_theta as f64;
            for j in 0..n_phi {
                vertices.push(point(theta, 2.0 * PI * j as f64 / n_phi as f64));
            }
        }
        let south = vertices.len();
        vertices.push(point(PI, 0.0));
        let ring = |i: usize, j: usize| 1 + (i - 1) * n_phi + (j % n_phi);

        let mut faces = Vec::new();
        for j in 0..n_phi {
            faces.push(vec![0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..n_theta - 1 {
            for j in 0..n_phi {
                faces.push(vec![ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        for j in 0..n_phi {
            faces.push(vec![ring(n_theta - 1, j), south, ring(n_theta - 1, j + 1)]);
        }
        Ok(Self { vertices, faces })
    }

    /// Flat `n x n` grid of quads spanning `[lo, hi]^2` in coordinates `(a, b)`.
    /// Not closed.
    pub fn square(base: &[f64], a: usize, b: usize, lo: f64, hi: f64, n: usize) -> Self {
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                let mut v = base.to_vec();
                v[a] = lo + (hi - lo) * i as f64 / n as f64;
                v[b] = lo + (hi - lo) * j as f64 / n as f64;
                vertices.push(v);
            }
        }
        let idx = |i: usize, j: usize| i * (n + 1) + j;
        let mut faces = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                faces.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        Self { vertices, faces }
    }

    /// The same surface with every face traversed backwards.
    pub fn reversed(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self
                .faces
                .iter()
                .map(|f| f.iter().rev().copied().collect())
                .collect(),
        }
    }

    /// Every directed edge is matched by exactly one opposite edge.
    pub fn is_closed(&self) -> bool {
        let mut count: HashMap<(usize, usize), i64> = HashMap::new();
        for f in &self.faces {
            for i in 0..f.len() {
                let (u, v) = (f[i], f[(i + 1) % f.len()]);
                *count.entry((u, v)).or_default() += 1;
            }
        }
        count
            .iter()
            .all(|(&(u, v), &c)| c == 1 && count.get(&(v, u)) == Some(&1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChernResult {
    pub value: f64,
    /// False when the mesh has boundary; the value is then not topological.
    pub closed: bool,
    pub faces: usize,
}

/// `C = -(1/2pi) sum_faces arg(W_face)`.
///
/// Each face loop starts at its smallest vertex index, and faces are summed in
/// mesh order, so the result is a deterministic function of the mesh and
/// reversing orientation flips the sign exactly.
pub fn chern_integral(field: &impl StateField, mesh: &SurfaceMesh) -> Result<ChernResult> {
    for v in &mesh.vertices {
        check_params(field, v)?;
    }
    let states: Vec<Vec<Complex64>> = mesh
        .vertices
        .par_iter()
        .map(|v| field.state_at(v))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for face in &mesh.faces {
        if face.iter().any(|&i| i >= states.len()) {
            return Err(Error::InvalidInput("face refers to a missing vertex".into()));
        }
        let start = (0..face.len()).min_by_key(|&i| face[i]).unwrap_or(0);
        let loop_states: Vec<&[Complex64]> = (0..face.len())
            .map(|k| states[face[(start + k) % face.len()]].as_slice())
            .collect();
        total += loop_phase(&loop_states)?;
    }
    Ok(ChernResult {
        value: -total / (2.0 * PI),
        closed: mesh.is_closed(),
        faces: mesh.faces.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub a: usize,
    pub b: usize,
    /// `|F_ab|` from the plaquette.
    pub lhs: f64,
    /// `2 ||d_a H|| ||d_b H|| / gap^2`.
    pub rhs: f64,
    pub satisfied: bool,
    pub gap: f64,
}

impl BoundCheck {
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Compares the plaquette curvature against the operator-norm/gap bound.
pub fn curvature_gap_bound_check(
    ops: &OperatorSet,
    x: &[f64],
    eps: f64,
    a: usize,
    b: usize,
) -> Result<BoundCheck> {
    let sample = berry_plaquette(ops, x, eps, a, b)?;
    let gap = sample.gap.unwrap_or(0.0);
    let na = operator_norm(&ops.hamiltonian_derivative(x, a)?)?;
    let nb = operator_norm(&ops.hamiltonian_derivative(x, b)?)?;
    let rhs = 2.0 * na * nb / (gap * gap);
    let lhs = sample.value.abs();
    Ok(BoundCheck {
        a,
        b,
        lhs,
        rhs,
        satisfied: lhs <= rhs + BOUND_SLACK,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PseudoDet {
    pub value: f64,
    pub log_value: f64,
    pub rank: usize,
    /// Set when no eigenvalue clears the tolerance (empty product).
    pub flagged: bool,
}

/// Product of the eigenvalues above `rank_tol * lambda_max`.
pub fn pseudo_det_of_spectrum(eigenvalues: &[f64], rank_tol: f64) -> PseudoDet {
    let lmax = eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = rank_tol * lmax;
    let kept: Vec<f64> = if lmax > 0.0 {
        eigenvalues.iter().copied().filter(|&l| l > cut).collect()
    } else {
        Vec::new()
    };
    let log_value: f64 = kept.iter().map(|l| l.ln()).sum();
    PseudoDet {
        value: kept.iter().product(),
        log_value,
        rank: kept.len(),
        flagged: kept.is_empty(),
    }
}

pub fn pseudo_det(g: &MetricTensor, rank_tol: f64) -> Result<PseudoDet> {
    Ok(pseudo_det_of_spectrum(&g.eigenvalues()?, rank_tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticipationRatio {
    pub value: f64,
    /// Set for an all-zero spectrum, where the ratio is undefined.
    pub flagged: bool,
}

/// `(sum lambda)^2 / sum lambda^2` with negative noise clipped to zero.
pub fn participation_ratio_of_spectrum(eigenvalues: &[f64]) -> ParticipationRatio {
    let clipped: Vec<f64> = eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    let s2: f64 = clipped.iter().map(|l| l * l).sum();
    if s2 == 0.0 {
        ParticipationRatio {
            value: 0.0,
            flagged: true,
        }
    } else {
        ParticipationRatio {
            value: s * s / s2,
            flagged: false,
        }
    }
}

pub fn participation_ratio(g: &MetricTensor) -> Result<ParticipationRatio> {
    Ok(participation_ratio_of_spectrum(&g.eigenvalues()?))
}

/// 1-based index `i` maximizing `lambda_i / lambda_{i+1}` over the descending
/// positive spectrum; ties go to the smallest index. `None` with fewer than
/// two positive eigenvalues.
pub fn spectral_gap_dimension_of_spectrum(eigenvalues: &[f64]) -> Option<usize> {
    let lmax = eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut pos: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|&l| lmax > 0.0 && l > RANK_TOL * lmax)
        .collect();
    if pos.len() < 2 {
        return None;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let mut best = 0;
    let mut best_ratio = f64::NEG_INFINITY;
    for i in 0..pos.len() - 1 {
        let r = pos[i] / pos[i + 1];
        if r > best_ratio {
            best_ratio = r;
            best = i;
        }
    }
    Some(best + 1)
}

pub fn spectral_gap_dimension(g: &MetricTensor) -> Result<Option<usize>> {
    Ok(spectral_gap_dimension_of_spectrum(&g.eigenvalues()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::OperatorMethod;
    use crate::embedding::Basis;
    use crate::linalg::HermitianMatrix;
    use crate::rng::SplitMix64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn monopole() -> OperatorSet {
        // H = const - x.sigma up to a scalar shift
        OperatorSet::pauli(2, 3, Basis::GellMann).unwrap()
    }

    fn random_point(rng: &mut SplitMix64, p: usize) -> Vec<f64> {
        (0..p).map(|_| rng.normal_pair().0 * 0.5).collect()
    }

    fn stationary() -> OperatorSet {
        let a = HermitianMatrix::diagonal(&[0.0, 1.0, 3.0]).unwrap();
        OperatorSet::from_operators(vec![a.clone(), a], OperatorMethod::Pauli).unwrap()
    }

    #[test]
    fn stationary_field_has_zero_metric_and_curvature() {
        let s = stationary();
        let x = [-0.3, 0.2];
        let fd = metric_fd(&s, &x, DEFAULT_EPS).unwrap();
        let pt = metric_pt(&s, &x).unwrap();
        assert!(fd.g.iter().all(|v| v.abs() < 1e-20));
        assert!(pt.g.iter().all(|v| *v == 0.0));
        assert_eq!(berry_plaquette(&s, &x, DEFAULT_EPS, 0, 1).unwrap().value, 0.0);
        let b = curvature_gap_bound_check(&s, &x, DEFAULT_EPS, 0, 1).unwrap();
        assert!(b.satisfied && b.lhs == 0.0);
    }

    #[test]
    fn bloch_circle_metric_is_quarter() {
        // ground state of -(cos t sigma_z + sin t sigma_x) is (cos t/2, sin t/2)
        let field = FnField::new(1, |x: &[f64]| {
            let t = x[0];
            vec![c((t / 2.0).cos(), 0.0), c((t / 2.0).sin(), 0.0)]
        });
        for t in [0.1, 0.7, 2.0] {
            let g = metric_fd(&field, &[t], DEFAULT_EPS).unwrap();
            assert!((g.get(0, 0) - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_and_pt_metric_agree() {
        let ops = OperatorSet::random(6, 4, 42, 0).unwrap();
        let mut rng = SplitMix64::new(3);
        for _ in 0..20 {
            let x = random_point(&mut rng, 4);
            let fd = metric_fd(&ops, &x, DEFAULT_EPS).unwrap();
            let pt = metric_pt(&ops, &x).unwrap();
            for (u, v) in fd.g.iter().zip(&pt.g) {
                assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()), "{u} vs {v}");
            }
            let eig = pt.eigenvalues().unwrap();
            assert!(eig[0] >= -1e-8);
        }
    }

    #[test]
    fn plaquette_matches_perturbative_curvature() {
        let ops = OperatorSet::random(6, 4, 42, 0).unwrap();
        let mut rng = SplitMix64::new(9);
        for _ in 0..20 {
            let x = random_point(&mut rng, 4);
            let f = berry_plaquette(&ops, &x, 1e-5, 0, 1).unwrap().value;
            // the plaquette sits at the loop corner; compare at its centre
            let mut mid = x.clone();
            mid[0] += 0.5e-5;
            mid[1] += 0.5e-5;
            let oracle = berry_pt(&ops, &mid, 0, 1).unwrap();
            assert!((f - oracle).abs() < 1e-5 * (1.0 + oracle.abs()), "{f} vs {oracle}");
        }
    }

    #[test]
    fn plaquette_antisymmetry_is_exact() {
        let ops = OperatorSet::random(8, 8, 42, 0).unwrap();
        let mut rng = SplitMix64::new(4);
        for _ in 0..20 {
            let x = random_point(&mut rng, 8);
            let fab = berry_plaquette(&ops, &x, DEFAULT_EPS, 2, 5).unwrap().value;
            let fba = berry_plaquette(&ops, &x, DEFAULT_EPS, 5, 2).unwrap().value;
            assert_eq!(fab, -fba);
        }
    }

    #[test]
    fn plaquette_gauge_invariance() {
        let ops = OperatorSet::random(4, 3, 42, 0).unwrap();
        let rephased = FnField::new(3, |x: &[f64]| {
            let phase = (17.0 * x[0] + 29.0 * x[1] - 7.0 * x[2]).sin() * 3.0;
            let rot = Complex64::from_polar(1.0, phase);
            ops.state_at(x).unwrap().into_iter().map(|z| z * rot).collect()
        });
        let x = [0.3, -0.1, 0.2];
        let f0 = berry_plaquette(&ops, &x, DEFAULT_EPS, 0, 1).unwrap().value;
        let f1 = berry_plaquette(&rephased, &x, DEFAULT_EPS, 0, 1).unwrap().value;
        // the loop phase itself is unchanged to rounding
        assert!((f0 - f1).abs() * DEFAULT_EPS * DEFAULT_EPS < 1e-12);
    }

    #[test]
    fn plaquette_stable_across_eps() {
        let ops = OperatorSet::random(6, 4, 42, 0).unwrap();
        let x = [0.2, -0.4, 0.1, 0.3];
        let vals: Vec<f64> = [1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&e| berry_plaquette(&ops, &x, e, 0, 1).unwrap().value)
            .collect();
        for v in &vals {
            assert!((v - vals[1]).abs() <= 0.05 * vals[1].abs(), "{vals:?}");
        }
    }

    #[test]
    fn degenerate_point_is_an_error() {
        let a = HermitianMatrix::identity(2);
        let ops = OperatorSet::from_operators(vec![a.clone(), a], OperatorMethod::Pauli).unwrap();
        assert!(matches!(metric_fd(&ops, &[0.0, 0.0], 1e-5), Err(Error::Degenerate { .. })));
        assert!(matches!(metric_pt(&ops, &[0.0, 0.0]), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn orthogonal_loop_is_ill_conditioned() {
        let e0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let e1 = [c(0.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(loop_phase(&[&e0, &e1]), Err(Error::IllConditionedLoop(_))));
    }

    #[test]
    fn monopole_chern_number() {
        let ops = monopole();
        let mesh = SurfaceMesh::sphere(&[0.0, 0.0, 0.0], 1.0, 40, 40).unwrap();
        assert!(mesh.is_closed());
        let c = chern_integral(&ops, &mesh).unwrap();
        assert!(c.closed);
        assert!((c.value + 1.0).abs() <= 0.01, "C = {}", c.value);
        let r = chern_integral(&ops, &mesh.reversed()).unwrap();
        assert_eq!(r.value, -c.value);
    }

    #[test]
    fn sphere_not_enclosing_monopole_has_zero_chern() {
        let ops = monopole();
        let mesh = SurfaceMesh::sphere(&[3.0, 0.0, 0.0], 1.0, 16, 16).unwrap();
        let c = chern_integral(&ops, &mesh).unwrap();
        assert!(c.value.abs() < 1e-10);
    }

    #[test]
    fn constant_bundle_and_open_mesh() {
        let field = FnField::new(3, |_: &[f64]| vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let mesh = SurfaceMesh::sphere(&[0.0; 3], 1.0, 8, 8).unwrap();
        assert_eq!(chern_integral(&field, &mesh).unwrap().value, 0.0);
        let open = SurfaceMesh::square(&[0.0; 3], 0, 1, -1.0, 1.0, 4);
        let r = chern_integral(&field, &open).unwrap();
        assert!(!r.closed);
    }

    #[test]
    fn two_level_bound_is_analytic() {
        // For H = const - x.sigma: |F_xy| = |z|/(2 r^3), gap = 2r and
        // ||d_a H|| = ||sigma_a - x_a I|| = 1 + |x_a|.
        let ops = monopole();
        let r: f64 = 0.8;
        let x = [0.3, 0.2, (r * r - 0.13).sqrt()];
        let b = curvature_gap_bound_check(&ops, &x, 1e-5, 0, 1).unwrap();
        assert!((b.gap - 2.0 * r).abs() < 1e-12);
        let rhs = 2.0 * 1.3 * 1.2 / (4.0 * r * r);
        assert!((b.rhs - rhs).abs() < 1e-12);
        assert!((b.lhs - x[2].abs() / (2.0 * r.powi(3))).abs() < 1e-4);
        assert!(b.satisfied);
    }

    #[test]
    fn bound_holds_on_random_points() {
        let ops = OperatorSet::random(8, 8, 42, 0).unwrap();
        let mut rng = SplitMix64::new(12);
        for _ in 0..30 {
            let x = random_point(&mut rng, 8);
            assert!(curvature_gap_bound_check(&ops, &x, DEFAULT_EPS, 0, 1).unwrap().satisfied);
        }
    }

    #[test]
    fn pseudo_det_examples() {
        let id = MetricTensor::diagonal(&[1.0, 1.0, 1.0]);
        let d = pseudo_det(&id, RANK_TOL).unwrap();
        assert_eq!((d.value, d.rank), (1.0, 3));
        let d = pseudo_det(&MetricTensor::diagonal(&[2.0, 0.0]), RANK_TOL).unwrap();
        assert_eq!((d.value, d.rank), (2.0, 1));
        let z = pseudo_det(&MetricTensor::diagonal(&[0.0, 0.0]), RANK_TOL).unwrap();
        assert!(z.flagged && z.rank == 0 && z.value == 1.0);
    }

    #[test]
    fn pseudo_det_rank_r_oracle() {
        // G = B B^T with B 5x2 has rank 2
        let mut rng = SplitMix64::new(21);
        let bm: Vec<f64> = (0..10).map(|_| rng.normal_pair().0).collect();
        let mut g = vec![0.0; 25];
        for i in 0..5 {
            for j in 0..5 {
                g[i * 5 + j] = (0..2).map(|k| bm[i * 2 + k] * bm[j * 2 + k]).sum();
            }
        }
        // nonzero eigenvalues of B B^T equal those of the 2x2 B^T B
        let mut s = [0.0; 4];
        for a in 0..2 {
            for b in 0..2 {
                s[a * 2 + b] = (0..5).map(|i| bm[i * 2 + a] * bm[i * 2 + b]).sum();
            }
        }
        let oracle = s[0] * s[3] - s[1] * s[2];
        let d = pseudo_det(&MetricTensor::from_matrix(5, g).unwrap(), RANK_TOL).unwrap();
        assert_eq!(d.rank, 2);
        assert!((d.value - oracle).abs() <= 1e-10 * oracle);
    }

    #[test]
    fn participation_ratio_examples() {
        assert!((participation_ratio_of_spectrum(&[2.0, 2.0, 2.0]).value - 3.0).abs() < 1e-15);
        assert_eq!(participation_ratio_of_spectrum(&[0.0, 5.0, 0.0]).value, 1.0);
        let v = participation_ratio_of_spectrum(&[1.0, 1.0, 1e-4]).value;
        let oracle = (2.0001f64).powi(2) / (2.0 + 1e-8);
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 2.0002).abs() < 1e-4);
        assert!(participation_ratio_of_spectrum(&[0.0, -1e-15]).flagged);
    }

    #[test]
    fn spectral_gap_dimension_examples() {
        assert_eq!(spectral_gap_dimension_of_spectrum(&[10.0, 9.0, 0.1, 0.09]), Some(2));
        let geo: Vec<f64> = (1..=6).map(|i| 2f64.powi(-i)).collect();
        assert_eq!(spectral_gap_dimension_of_spectrum(&geo), Some(1));
        assert_eq!(spectral_gap_dimension_of_spectrum(&[1.0, 0.0]), None);
    }

    #[test]
    fn planted_two_factor_pullback() {
        // metric of a 2-factor loading plus small isotropic noise
        let mut rng = SplitMix64::new(8);
        let p = 6;
        let l: Vec<f64> = (0..p * 2).map(|_| rng.normal_pair().0).collect();
        let mut g = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                g[i * p + j] = (0..2).map(|k| l[i * 2 + k] * l[j * 2 + k]).sum::<f64>()
                    + if i == j { 1e-3 } else { 0.0 };
            }
        }
        let m = MetricTensor::from_matrix(p, g).unwrap();
        assert_eq!(spectral_gap_dimension(&m).unwrap(), Some(2));
    }
}
