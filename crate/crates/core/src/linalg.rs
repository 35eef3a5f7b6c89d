//! Dense complex Hermitian linear algebra for small dimensions (n <= ~64).
//!
//! Eigendecompositions use cyclic Jacobi rotations. For the dimensions this
//! crate works at (n <= 16 for states, ~52 for feature covariances) Jacobi is
//! fast enough, deterministic, and delivers eigenvectors accurate to a few
//! ulps, which the finite-difference geometry relies on.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum `|a_ij - conj(a_ji)|` accepted by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Jacobi stops once the off-diagonal Frobenius norm falls below this
/// fraction of the full Frobenius norm.
pub const EIGH_TOL: f64 = 1e-14;
pub const MAX_SWEEPS: usize = 100;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major `n x n` Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Validates dimension (`>= 2`) and Hermiticity within [`HERMITIAN_TOL`].
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        let dev = hermitian_deviation(dim, &data);
        if dev > HERMITIAN_TOL || !dev.is_finite() {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::new(dim, data)
    }

    /// Builds from a real symmetric row-major array.
    pub fn from_real(dim: usize, data: &[f64]) -> Result<Self> {
        Self::new(dim, data.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 2, "dimension must be at least 2");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(value, 0.0);
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let dim = values.len();
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        let mut m = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = Complex64::new(v, 0.0);
        }
        Ok(m)
    }

    /// `(M + M^dagger) / 2` for an arbitrary square row-major `M`.
    pub fn hermitian_part(dim: usize, m: &[Complex64]) -> Result<Self> {
        if m.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: m.len(),
            });
        }
        Self::from_fn(dim, |i, j| (m[i * dim + j] + m[j * dim + i].conj()) * 0.5)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self - s * I`.
    pub fn shift(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] -= s;
        }
        out
    }

    /// `self * self`, which is Hermitian bit-for-bit: the `(j, i)` entry is
    /// accumulated from the conjugates of the `(i, j)` terms in the same order.
    pub fn square(&self) -> Self {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += self.data[i * n + k] * self.data[k * n + j];
                }
                data[i * n + j] = acc;
            }
        }
        Self { dim: n, data }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        assert_eq!(v.len(), n);
        (0..n)
            .map(|i| {
                let row = &self.data[i * n..(i + 1) * n];
                row.iter().zip(v).fold(ZERO, |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// `<u| self |v>`.
    pub fn sandwich(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        inner(u, &self.mul_vec(v))
    }

    /// Real part of `<v| self |v>`.
    pub fn expectation(&self, v: &[Complex64]) -> f64 {
        self.sandwich(v, v).re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }
}

/// Largest `|a_ij - conj(a_ji)|` of a square row-major matrix.
pub fn hermitian_deviation(dim: usize, data: &[Complex64]) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..dim {
        for j in i..dim {
            let d = (data[i * dim + j] - data[j * dim + i].conj()).norm();
            if d.is_nan() {
                return f64::NAN;
            }
            dev = dev.max(d);
        }
    }
    dev
}

/// `<u|v> = sum_k conj(u_k) v_k`.
#[inline]
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Full spectrum of a Hermitian matrix, eigenvalues ascending.
///
/// `vectors[k]` is the unit eigenvector for `values[k]`, rotated so that its
/// largest-magnitude entry (first one on ties) is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn ground(&self) -> &[Complex64] {
        &self.vectors[0]
    }

    /// `E_1 - E_0`.
    pub fn gap(&self) -> f64 {
        (self.values[1] - self.values[0]).max(0.0)
    }

    /// `V diag(values) V^dagger` as a row-major array.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        let n = self.dim();
        let mut out = vec![ZERO; n * n];
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            for i in 0..n {
                let vi = v[i] * *lambda;
                for j in 0..n {
                    out[i * n + j] += vi * v[j].conj();
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(n: usize, a: &[Complex64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Jacobi rotation parameters `(t, c, s)` annihilating a real off-diagonal
/// element of magnitude `apq` between diagonals `app` and `aqq`.
#[inline]
fn rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    (t, c, t * c)
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi.
///
/// Each rotation acts on the `(p, q)` plane with the unitary
/// `[[c, s e^{i phi}], [-s e^{-i phi}, c]]`, where `e^{i phi}` is the phase of
/// `a_pq`. Output is a pure function of the input bits.
pub fn eigh(h: &HermitianMatrix) -> Result<EigenSystem> {
    let n = h.dim;
    let mut a = h.data.clone();
    let mut v = vec![ZERO; n * n];
    for i in 0..n {
        v[i * n + i] = ONE;
        a[i * n + i].im = 0.0;
    }
    let scale = h.frobenius_norm();
    let tol = EIGH_TOL * scale;

    let mut converged = scale == 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged || off_diagonal_norm(n, &a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let (t, c, s) = rotation(app, aqq, mag);
                let phase = apq / mag;
                let u_pq = phase * s;
                let u_qp = -phase.conj() * s;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let nkp = akp * c + akq * u_qp;
                    let nkq = akp * u_pq + akq * c;
                    a[k * n + p] = nkp;
                    a[k * n + q] = nkq;
                    a[p * n + k] = nkp.conj();
                    a[q * n + k] = nkq.conj();
                }
                a[p * n + p] = Complex64::new(app - t * mag, 0.0);
                a[q * n + q] = Complex64::new(aqq + t * mag, 0.0);
                a[p * n + q] = ZERO;
                a[q * n + p] = ZERO;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c + vkq * u_qp;
                    v[k * n + q] = vkp * u_pq + vkq * c;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(n, &a) > tol {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut vec: Vec<Complex64> = (0..n).map(|k| v[k * n + col]).collect();
            fix_phase(&mut vec);
            vec
        })
        .collect();
    Ok(EigenSystem { values, vectors })
}

/// Rotates `v` so its largest-magnitude entry is real positive.
pub fn fix_phase(v: &mut [Complex64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag <= 0.0 {
        return;
    }
    let rot = v[best].conj() / best_mag;
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[best] = Complex64::new(best_mag, 0.0);
}

/// Spectrum of a real symmetric matrix, eigenvalues ascending; each
/// eigenvector's largest-magnitude component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi for real symmetric row-major `n x n` input. The input is
/// symmetrised as `(A + A^T)/2` first.
pub fn symmetric_eigh(n: usize, data: &[f64]) -> Result<SymmetricEigen> {
    if data.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: data.len(),
        });
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: vec![],
        });
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (data[i * n + j] + data[j * n + i]);
        }
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = EIGH_TOL * scale;
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0 || n == 1;
    for _ in 0..MAX_SWEEPS {
        if converged || off(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let (t, c, s) = rotation(app, aqq, apq);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let nkp = c * akp - s * akq;
                    let nkq = s * akp + c * akq;
                    a[k * n + p] = nkp;
                    a[k * n + q] = nkq;
                    a[p * n + k] = nkp;
                    a[q * n + k] = nkq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off(&a) > tol {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut vec: Vec<f64> = (0..n).map(|k| v[k * n + col]).collect();
            let mut best = 0;
            for (i, x) in vec.iter().enumerate() {
                if x.abs() > vec[best].abs() {
                    best = i;
                }
            }
            if vec[best] < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
            vec
        })
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

/// Reduced density matrix of a pure bipartite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), unit trace (1e-10) and positivity
    /// (eigenvalues >= -1e-10).
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        let dev = hermitian_deviation(dim, &data);
        if !(dev <= HERMITIAN_TOL) {
            return Err(Error::InvalidDensityMatrix(format!(
                "Hermitian deviation {dev:e}"
            )));
        }
        let tr: f64 = (0..dim).map(|i| data[i * dim + i].re).sum();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        if dim >= 2 {
            let herm = HermitianMatrix { dim, data: data.clone() };
            let eig = eigh(&herm)?;
            if eig.values[0] < -1e-10 {
                return Err(Error::InvalidDensityMatrix(format!(
                    "negative eigenvalue {}",
                    eig.values[0]
                )));
            }
        } else if data[0].re < -1e-10 {
            return Err(Error::InvalidDensityMatrix("negative weight".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }
}

/// `rho_A[i][j] = sum_b psi[i*dB + b] conj(psi[j*dB + b])`.
pub fn partial_trace(psi: &[Complex64], dims: (usize, usize)) -> Result<DensityMatrix> {
    let (da, db) = dims;
    if da == 0 || db == 0 || psi.len() != da * db {
        return Err(Error::Bipartition {
            len: psi.len(),
            da,
            db,
        });
    }
    let nrm = norm(psi);
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(nrm));
    }
    let mut rho = vec![ZERO; da * da];
    for i in 0..da {
        for j in 0..da {
            let mut acc = ZERO;
            for b in 0..db {
                acc += psi[i * db + b] * psi[j * db + b].conj();
            }
            rho[i * da + j] = acc;
        }
    }
    DensityMatrix::new(da, rho)
}

/// `tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let n = rho.dim;
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += rho.data[i * n + k] * rho.data[k * n + i];
        }
    }
    acc.re
}

/// Largest absolute eigenvalue.
pub fn operator_norm(a: &HermitianMatrix) -> Result<f64> {
    let eig = eigh(a)?;
    Ok(eig.values[0].abs().max(eig.values[eig.dim() - 1].abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = SplitMix64::substream(seed, 0);
        let m: Vec<Complex64> = (0..n * n).map(|_| rng.complex_normal()).collect();
        HermitianMatrix::hermitian_part(n, &m).unwrap()
    }

    fn frob_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    fn orthonormality_error(e: &EigenSystem) -> f64 {
        let n = e.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((inner(&e.vectors[i], &e.vectors[j]) - target).norm());
            }
        }
        worst
    }

    #[test]
    fn diagonal_input() {
        let h = HermitianMatrix::diagonal(&[0.0, 0.5]).unwrap();
        let e = eigh(&h).unwrap();
        assert_eq!(e.values, vec![0.0, 0.5]);
        assert_eq!(e.vectors[0], vec![ONE, ZERO]);
    }

    #[test]
    fn pauli_x_spectrum() {
        let h = HermitianMatrix::new(2, vec![ZERO, ONE, ONE, ZERO]).unwrap();
        let e = eigh(&h).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        assert!((e.gap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pauli_y_spectrum_and_vectors() {
        let h = HermitianMatrix::new(2, vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).unwrap();
        let e = eigh(&h).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        let hv = h.mul_vec(&e.vectors[0]);
        for k in 0..2 {
            assert!((hv[k] + e.vectors[0][k]).norm() < 1e-15);
        }
    }

    #[test]
    fn random_8x8_reconstructs() {
        let h = random_hermitian(8, 42);
        let e = eigh(&h).unwrap();
        assert!(frob_diff(&e.reconstruct(), h.data()) <= 1e-12);
        assert!(orthonormality_error(&e) <= 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let err = HermitianMatrix::new(2, vec![ZERO, ONE, c(2.0, 0.0), ZERO]).unwrap_err();
        assert!(matches!(err, Error::NotHermitian(d) if (d - 1.0).abs() < 1e-15));
        assert!(matches!(
            HermitianMatrix::new(1, vec![ONE]),
            Err(Error::DimensionTooSmall(1))
        ));
    }

    #[test]
    fn many_seeds_many_dims() {
        for &n in &[2usize, 4, 6, 8, 16] {
            let seeds = if n == 16 { 200 } else { 1000 };
            for seed in 0..seeds {
                let h = random_hermitian(n, seed);
                let e = eigh(&h).unwrap();
                assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
                let rel = frob_diff(&e.reconstruct(), h.data()) / h.frobenius_norm();
                assert!(rel <= 1e-10, "n={n} seed={seed} rel={rel}");
                assert!(orthonormality_error(&e) <= 1e-10);
            }
        }
    }

    #[test]
    fn phase_convention() {
        let e = eigh(&random_hermitian(6, 3)).unwrap();
        for v in &e.vectors {
            let (idx, _) = v
                .iter()
                .enumerate()
                .fold((0, -1.0), |b, (i, z)| if z.norm() > b.1 { (i, z.norm()) } else { b });
            assert_eq!(v[idx].im, 0.0);
            assert!(v[idx].re > 0.0);
        }
    }

    #[test]
    fn deterministic_bits() {
        let h = random_hermitian(8, 11);
        assert_eq!(eigh(&h).unwrap(), eigh(&h.clone()).unwrap());
    }

    #[test]
    fn symmetric_matches_hermitian_on_real_input() {
        let mut rng = SplitMix64::new(5);
        let n = 7;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x = rng.normal_pair().0;
                m[i * n + j] = x;
                m[j * n + i] = x;
            }
        }
        let s = symmetric_eigh(n, &m).unwrap();
        let h = eigh(&HermitianMatrix::from_real(n, &m).unwrap()).unwrap();
        for (a, b) in s.values.iter().zip(&h.values) {
            assert!((a - b).abs() < 1e-12);
        }
        for (k, vec) in s.vectors.iter().enumerate() {
            let mv: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| m[i * n + j] * vec[j]).sum())
                .collect();
            for i in 0..n {
                assert!((mv[i] - s.values[k] * vec[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_product_state() {
        let mut psi = vec![ZERO; 8];
        psi[0] = ONE;
        let rho = partial_trace(&psi, (2, 4)).unwrap();
        assert_eq!(rho.get(0, 0), ONE);
        assert_eq!(rho.get(1, 1), ZERO);
        assert_eq!(purity(&rho), 1.0);
    }

    #[test]
    fn partial_trace_bell_state() {
        let mut psi = vec![ZERO; 8];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        psi[0] = c(r, 0.0); // |0>|0>
        psi[4 + 1] = c(r, 0.0); // |1>|1>
        let rho = partial_trace(&psi, (2, 4)).unwrap();
        assert!((rho.get(0, 0).re - 0.5).abs() < 1e-15);
        assert!((rho.get(1, 1).re - 0.5).abs() < 1e-15);
        assert!(rho.get(0, 1).norm() < 1e-15);
        assert!((purity(&rho) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_random_matches_full_outer_product() {
        let mut rng = SplitMix64::new(99);
        let mut psi: Vec<Complex64> = (0..8).map(|_| rng.complex_normal()).collect();
        let nrm = norm(&psi);
        psi.iter_mut().for_each(|z| *z /= nrm);
        // oracle: full |psi><psi| on 2x4, then trace out B by index arithmetic
        let full: Vec<Complex64> = (0..64).map(|k| psi[k / 8] * psi[k % 8].conj()).collect();
        let mut oracle = vec![ZERO; 4];
        for i in 0..2 {
            for j in 0..2 {
                for b in 0..4 {
                    oracle[i * 2 + j] += full[(i * 4 + b) * 8 + (j * 4 + b)];
                }
            }
        }
        let rho = partial_trace(&psi, (2, 4)).unwrap();
        assert!(frob_diff(rho.data(), &oracle) < 1e-15);
        assert!((rho.trace() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn partial_trace_errors() {
        let psi = vec![ONE, ZERO, ZERO];
        assert!(matches!(
            partial_trace(&psi, (2, 2)),
            Err(Error::Bipartition { len: 3, .. })
        ));
        let psi = vec![ONE, ONE, ZERO, ZERO];
        assert!(matches!(partial_trace(&psi, (2, 2)), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn purity_examples() {
        let mk = |d: Vec<f64>| {
            let n = d.len();
            let mut data = vec![ZERO; n * n];
            for (i, v) in d.iter().enumerate() {
                data[i * n + i] = c(*v, 0.0);
            }
            DensityMatrix::new(n, data).unwrap()
        };
        assert_eq!(purity(&mk(vec![1.0, 0.0])), 1.0);
        assert_eq!(purity(&mk(vec![0.5, 0.5])), 0.5);
        assert_eq!(purity(&mk(vec![0.75, 0.25])), 0.625);
    }

    #[test]
    fn operator_norm_examples() {
        for n in [2, 3, 5] {
            assert!((operator_norm(&HermitianMatrix::identity(n)).unwrap() - 1.0).abs() < 1e-15);
        }
        let d = HermitianMatrix::diagonal(&[-3.0, 2.0]).unwrap();
        assert_eq!(operator_norm(&d).unwrap(), 3.0);
        let h = random_hermitian(6, 8);
        let e = eigh(&h).unwrap();
        let oracle = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((operator_norm(&h).unwrap() - oracle).abs() <= 1e-12);
    }

    #[test]
    fn square_is_exactly_hermitian() {
        let h = random_hermitian(8, 1);
        let sq = h.square();
        assert_eq!(hermitian_deviation(8, sq.data()), 0.0);
    }

    proptest! {
        #[test]
        fn purity_bounds_for_pure_states(seed in any::<u64>(), split in 0usize..3) {
            let dims = [(2usize, 4usize), (4, 2), (2, 3)][split];
            let mut rng = SplitMix64::new(seed);
            let n = dims.0 * dims.1;
            let mut psi: Vec<Complex64> = (0..n).map(|_| rng.complex_normal()).collect();
            let nrm = norm(&psi);
            psi.iter_mut().for_each(|z| *z /= nrm);
            let rho = partial_trace(&psi, dims).unwrap();
            let p = purity(&rho);
            let dmin = dims.0.min(dims.1) as f64;
            prop_assert!(p >= 1.0 / dmin - 1e-12 && p <= 1.0 + 1e-12);
            prop_assert!((rho.trace() - 1.0).abs() <= 1e-12);
        }
    }
}
