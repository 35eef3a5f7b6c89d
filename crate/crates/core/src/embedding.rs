//! Operator sets and the error Hamiltonian `H(x) = 1/2 sum_k (A_k - x_k I)^2`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, EigenSystem, HermitianMatrix};
use crate::rng::SplitMix64;

/// Default operator seed.
pub const DEFAULT_SEED: u64 = 42;
/// Ground states with `E1 - E0` below this are flagged degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMethod {
    Random,
    PcaInspired,
    Pauli,
}

impl fmt::Display for OperatorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorMethod::Random => "random",
            OperatorMethod::PcaInspired => "pca_inspired",
            OperatorMethod::Pauli => "pauli",
        })
    }
}

impl FromStr for OperatorMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "rnd" => Ok(OperatorMethod::Random),
            "pca_inspired" | "pca" => Ok(OperatorMethod::PcaInspired),
            "pauli" => Ok(OperatorMethod::Pauli),
            other => Err(Error::InvalidInput(format!("unknown operator method `{other}`"))),
        }
    }
}

/// Enumeration of traceless Hermitian basis matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Generalized Gell-Mann matrices: symmetric pairs, antisymmetric pairs,
    /// then diagonals. Defined for every `n >= 2`.
    #[default]
    GellMann,
    /// Tensor products of Pauli matrices excluding the identity string.
    /// Only for `n = 2^m`.
    PauliTensor,
}

impl FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gell_mann" | "gellmann" => Ok(Basis::GellMann),
            "pauli_tensor" => Ok(Basis::PauliTensor),
            other => Err(Error::InvalidInput(format!("unknown basis `{other}`"))),
        }
    }
}

/// The first `count` generalized Gell-Mann matrices of dimension `n`.
///
/// Order: for each pair `j < k` (lexicographic) the symmetric `E_jk + E_kj`;
/// then for each pair the antisymmetric `-i E_jk + i E_kj`; then for
/// `l = 1..n-1` the diagonal `sqrt(2/(l(l+1))) (sum_{j<l} E_jj - l E_ll)`.
/// For `n = 2` this is `sigma_x, sigma_y, sigma_z`.
pub fn gell_mann_basis(n: usize, count: usize) -> Result<Vec<HermitianMatrix>> {
    if n < 2 {
        return Err(Error::DimensionTooSmall(n));
    }
    let available = n * n - 1;
    if count > available {
        return Err(Error::BasisExhausted {
            requested: count,
            available,
            n,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .collect();
    let mut out = Vec::with_capacity(count);
    for &(j, k) in &pairs {
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        m[j * n + k] = Complex64::new(1.0, 0.0);
        m[k * n + j] = Complex64::new(1.0, 0.0);
        out.push(m);
    }
    for &(j, k) in &pairs {
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        m[j * n + k] = Complex64::new(0.0, -1.0);
        m[k * n + j] = Complex64::new(0.0, 1.0);
        out.push(m);
    }
    for l in 1..n {
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        let c = (2.0 / (l * (l + 1)) as f64).sqrt();
        for j in 0..l {
            m[j * n + j] = Complex64::new(c, 0.0);
        }
        m[l * n + l] = Complex64::new(-(l as f64) * c, 0.0);
        out.push(m);
    }
    out.truncate(count);
    out.into_iter().map(|m| HermitianMatrix::new(n, m)).collect()
}

/// The first `count` non-identity Pauli strings on `m = log2(n)` qubits.
///
/// String index `s` in `1..4^m` is read in base 4, most significant digit
/// on the first qubit, with digits `0..3 = I, X, Y, Z`.
pub fn pauli_tensor_basis(n: usize, count: usize) -> Result<Vec<HermitianMatrix>> {
    if n < 2 {
        return Err(Error::DimensionTooSmall(n));
    }
    if !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "Pauli tensor basis needs a power-of-two dimension, got {n}"
        )));
    }
    let available = n * n - 1;
    if count > available {
        return Err(Error::BasisExhausted {
            requested: count,
            available,
            n,
        });
    }
    let qubits = n.trailing_zeros() as usize;
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let paulis = [
        [one, o, o, one],
        [o, one, one, o],
        [o, -i, i, o],
        [one, o, o, -one],
    ];
    let mut out = Vec::with_capacity(count);
    for s in 1..=count {
        let mut digits = vec![0usize; qubits];
        let mut rest = s;
        for q in (0..qubits).rev() {
            digits[q] = rest % 4;
            rest /= 4;
        }
        let m = HermitianMatrix::from_fn(n, |r, c| {
            let mut v = one;
            for (q, &d) in digits.iter().enumerate() {
                let shift = qubits - 1 - q;
                let (br, bc) = ((r >> shift) & 1, (c >> shift) & 1);
                v *= paulis[d][br * 2 + bc];
            }
            v
        })?;
        out.push(m);
    }
    Ok(out)
}

fn basis(kind: Basis, n: usize, count: usize) -> Result<Vec<HermitianMatrix>> {
    match kind {
        Basis::GellMann => gell_mann_basis(n, count),
        Basis::PauliTensor => pauli_tensor_basis(n, count),
    }
}

/// `p` Hermitian `n x n` feature operators.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    n: usize,
    operators: Vec<HermitianMatrix>,
    method: OperatorMethod,
    basis: Basis,
    seed: u64,
    seed_offset: u64,
}

impl OperatorSet {
    /// Wraps explicit operators. All must share dimension `n >= 2`.
    pub fn from_operators(operators: Vec<HermitianMatrix>, method: OperatorMethod) -> Result<Self> {
        let n = operators.first().map(|a| a.dim()).ok_or_else(|| {
            Error::InvalidInput("an operator set needs at least one operator".into())
        })?;
        if let Some(bad) = operators.iter().find(|a| a.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.dim(),
            });
        }
        Ok(Self {
            n,
            operators,
            method,
            basis: Basis::GellMann,
            seed: DEFAULT_SEED,
            seed_offset: 0,
        })
    }

    /// `A_k = (M_k + M_k^dagger)/2` with `M_k` i.i.d. standard complex normal
    /// entries drawn row-major from substream `(seed, k + seed_offset)`.
    pub fn random(n: usize, p: usize, seed: u64, seed_offset: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall(n));
        }
        if p == 0 {
            return Err(Error::InvalidInput("p must be at least 1".into()));
        }
        let operators = (0..p)
            .map(|k| {
                let mut rng = SplitMix64::substream(seed, k as u64 + seed_offset);
                let m: Vec<Complex64> = (0..n * n).map(|_| rng.complex_normal()).collect();
                HermitianMatrix::hermitian_part(n, &m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            operators,
            method: OperatorMethod::Random,
            basis: Basis::GellMann,
            seed,
            seed_offset,
        })
    }

    /// `A_k = sqrt(lambda_k) B_k` with `B_k` the `k`-th basis element.
    pub fn pca_inspired(n: usize, eigenvalues: &[f64], kind: Basis) -> Result<Self> {
        if let Some(bad) = eigenvalues.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "PCA eigenvalues must be finite and nonnegative, got {bad}"
            )));
        }
        let b = basis(kind, n, eigenvalues.len())?;
        let operators = b
            .iter()
            .zip(eigenvalues)
            .map(|(m, &l)| m.scale(l.sqrt()))
            .collect();
        Ok(Self {
            n,
            operators,
            method: OperatorMethod::PcaInspired,
            basis: kind,
            seed: DEFAULT_SEED,
            seed_offset: 0,
        })
    }

    /// Unscaled basis elements.
    pub fn pauli(n: usize, p: usize, kind: Basis) -> Result<Self> {
        let operators = basis(kind, n, p)?;
        Ok(Self {
            n,
            operators,
            method: OperatorMethod::Pauli,
            basis: kind,
            seed: DEFAULT_SEED,
            seed_offset: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.operators.len()
    }

    pub fn operators(&self) -> &[HermitianMatrix] {
        &self.operators
    }

    pub fn method(&self) -> OperatorMethod {
        self.method
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn seed_offset(&self) -> u64 {
        self.seed_offset
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `H(x) = 1/2 sum_k (A_k - x_k I)^2`.
    pub fn error_hamiltonian(&self, x: &[f64]) -> Result<HermitianMatrix> {
        self.check_len(x)?;
        let mut h = HermitianMatrix::zeros(self.n);
        for (a, &xk) in self.operators.iter().zip(x) {
            h = h.add(&a.shift(xk).square());
        }
        Ok(h.scale(0.5))
    }

    /// `dH/dx_a = -(A_a - x_a I)`.
    pub fn hamiltonian_derivative(&self, x: &[f64], a: usize) -> Result<HermitianMatrix> {
        self.check_len(x)?;
        Ok(self.operators[a].shift(x[a]).scale(-1.0))
    }

    /// Full spectrum of `H(x)`.
    pub fn spectrum(&self, x: &[f64]) -> Result<EigenSystem> {
        eigh(&self.error_hamiltonian(x)?)
    }

    pub fn ground_state(&self, x: &[f64]) -> Result<GroundStateRecord> {
        Ok(GroundStateRecord::from_spectrum(0, &self.spectrum(x)?))
    }
}

/// Lowest eigenpair of `H(x_t)` with its gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateRecord {
    pub t: usize,
    pub e0: f64,
    pub gap: f64,
    pub state: Vec<Complex64>,
    pub degenerate: bool,
}

impl GroundStateRecord {
    pub fn from_spectrum(t: usize, eig: &EigenSystem) -> Self {
        let gap = eig.gap();
        Self {
            t,
            e0: eig.values[0],
            gap,
            state: eig.vectors[0].clone(),
            degenerate: gap < DEGENERACY_TOL,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_deviation, inner, norm};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn random_is_deterministic_and_seed_sensitive() {
        let a = OperatorSet::random(4, 2, 42, 0).unwrap();
        let b = OperatorSet::random(4, 2, 42, 0).unwrap();
        let d = OperatorSet::random(4, 2, 43, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.operators(), d.operators());
        for op in a.operators() {
            assert_eq!(hermitian_deviation(4, op.data()), 0.0);
        }
    }

    #[test]
    fn seed_offset_shifts_substreams() {
        let base = OperatorSet::random(3, 4, 7, 0).unwrap();
        let shifted = OperatorSet::random(3, 3, 7, 1).unwrap();
        assert_eq!(&base.operators()[1..], shifted.operators());
    }

    #[test]
    fn gell_mann_n2_is_pauli() {
        let b = gell_mann_basis(2, 3).unwrap();
        assert_eq!(b[0].data(), &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        assert_eq!(b[1].data(), &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        assert_eq!(b[2].data(), &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
    }

    #[test]
    fn gell_mann_orthogonality() {
        // tr(B_i B_j) = 2 delta_ij for the whole basis
        for n in 2..=5 {
            let b = gell_mann_basis(n, n * n - 1).unwrap();
            for i in 0..b.len() {
                for j in 0..b.len() {
                    let mut tr = c(0.0, 0.0);
                    for r in 0..n {
                        for k in 0..n {
                            tr += b[i].get(r, k) * b[j].get(k, r);
                        }
                    }
                    let want = if i == j { 2.0 } else { 0.0 };
                    assert!((tr - want).norm() < 1e-12, "n={n} i={i} j={j}");
                }
                assert!(b[i].trace().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_inspired_examples() {
        let s = OperatorSet::pca_inspired(2, &[4.0], Basis::GellMann).unwrap();
        assert_eq!(s.operators()[0].data(), &[c(0., 0.), c(2., 0.), c(2., 0.), c(0., 0.)]);
        let z = OperatorSet::pca_inspired(3, &[1.0, 0.0], Basis::GellMann).unwrap();
        assert!(z.operators()[1].data().iter().all(|v| *v == c(0.0, 0.0)));
        let s = OperatorSet::pca_inspired(4, &[1.0; 10], Basis::GellMann).unwrap();
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(s.operators()[i], s.operators()[j]);
            }
        }
        assert!(matches!(
            OperatorSet::pca_inspired(2, &[1.0; 4], Basis::GellMann),
            Err(Error::BasisExhausted { requested: 4, available: 3, n: 2 })
        ));
    }

    #[test]
    fn pauli_tensor_two_qubits() {
        let b = pauli_tensor_basis(4, 15).unwrap();
        // index 1 = I (x) X, index 4 = X (x) I
        let ix = &b[0];
        assert_eq!(ix.get(0, 1), c(1.0, 0.0));
        assert_eq!(ix.get(2, 3), c(1.0, 0.0));
        assert_eq!(ix.get(0, 2), c(0.0, 0.0));
        let xi = &b[3];
        assert_eq!(xi.get(0, 2), c(1.0, 0.0));
        assert_eq!(xi.get(0, 1), c(0.0, 0.0));
        assert!(pauli_tensor_basis(6, 2).is_err());
    }

    #[test]
    fn hamiltonian_examples() {
        let a = HermitianMatrix::diagonal(&[0.0, 1.0]).unwrap();
        let s = OperatorSet::from_operators(vec![a], OperatorMethod::Pauli).unwrap();
        let h = s.error_hamiltonian(&[0.0]).unwrap();
        assert_eq!(h, HermitianMatrix::diagonal(&[0.0, 0.5]).unwrap());
        let g = s.ground_state(&[0.0]).unwrap();
        assert_eq!(g.e0, 0.0);
        assert_eq!(g.gap, 0.5);
        assert_eq!(g.state, vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(!g.degenerate);

        let ai = HermitianMatrix::scalar(3, 2.0);
        let s = OperatorSet::from_operators(vec![ai.clone(), ai], OperatorMethod::Pauli).unwrap();
        let h = s.error_hamiltonian(&[1.0, 0.5]).unwrap();
        let want = 0.5 * (1.0 + 2.25);
        assert_eq!(h, HermitianMatrix::scalar(3, want));
        let g = s.ground_state(&[1.0, 0.5]).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.gap, 0.0);

        assert!(matches!(
            s.error_hamiltonian(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn hamiltonian_is_psd_and_quadratic() {
        let s = OperatorSet::random(6, 5, 42, 0).unwrap();
        let mut rng = SplitMix64::new(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.normal_pair().0).collect();
            let e = s.spectrum(&x).unwrap();
            assert!(e.values[0] >= -1e-10);
            let g = s.ground_state(&x).unwrap();
            assert!((norm(&g.state) - 1.0).abs() < 1e-10);
            assert!(g.e0 >= -1e-10);
        }
        let x = vec![0.3, -0.2, 0.1, 0.0, 0.7];
        let d = 0.25;
        for a in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += d;
            xm[a] -= d;
            let hp = s.error_hamiltonian(&xp).unwrap();
            let h0 = s.error_hamiltonian(&x).unwrap();
            let hm = s.error_hamiltonian(&xm).unwrap();
            let second = hp.sub(&h0.scale(2.0)).add(&hm);
            let target = HermitianMatrix::scalar(6, d * d);
            let err = second.sub(&target).frobenius_norm();
            assert!(err < 1e-12, "a={a} err={err}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = OperatorSet::random(4, 3, 42, 0).unwrap();
        let x = vec![0.2, -0.4, 0.9];
        let eps = 1e-5;
        for a in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += eps;
            xm[a] -= eps;
            let fd = s
                .error_hamiltonian(&xp)
                .unwrap()
                .sub(&s.error_hamiltonian(&xm).unwrap())
                .scale(1.0 / (2.0 * eps));
            let exact = s.hamiltonian_derivative(&x, a).unwrap();
            let worst = fd
                .data()
                .iter()
                .zip(exact.data())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "a={a} worst={worst}");
        }
    }

    #[test]
    fn ground_state_is_lowest_eigenvector() {
        let s = OperatorSet::random(8, 8, 42, 0).unwrap();
        let x = vec![0.1; 8];
        let h = s.error_hamiltonian(&x).unwrap();
        let g = s.ground_state(&x).unwrap();
        let hv = h.mul_vec(&g.state);
        let e = inner(&g.state, &hv).re;
        assert!((e - g.e0).abs() < 1e-12);
        assert!(g.gap > 0.0);
        assert_eq!(g, s.ground_state(&x).unwrap());
    }
}
