// SPDX-License-Identifier: Apache-2.0

//! Pure and mixed states of up to three qubits, Hermitian observables, and
//! the basic operations on them: tensor products, partial trace, partial
//! transpose, spectra, expectations and fidelity.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Deserialize;

use crate::linalg::{self, pauli, CMatrix, CVector, ONE, ZERO};
use crate::tolerances::{
    EIGEN_RESIDUAL_TOL, EXPECTATION_IMAG_TOL, HERM_TOL, NORM_TOL, PSD_TOL, TRACE_TOL,
};
use crate::{Error, Result};

/// Largest supported Hilbert-space dimension (three qubits).
pub const MAX_DIM: usize = 8;

fn qubits_for_dim(dim: usize) -> Result<usize> {
    match dim {
        2 => Ok(1),
        4 => Ok(2),
        8 => Ok(3),
        d => Err(Error::InvalidDimension(d)),
    }
}

/// Bit position (from the least significant end) of 1-based `qubit` among `n`.
#[inline]
pub(crate) fn bit_of(qubit: usize, n: usize) -> usize {
    n - qubit
}

/// A normalized pure state on 1 to 3 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: CVector,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        qubits_for_dim(amplitudes.len())?;
        let amps = DVector::from_vec(amplitudes);
        let norm2 = amps.norm_squared();
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm2));
        }
        Ok(Self { amps })
    }

    /// Builds a state from unnormalized amplitudes, normalizing them.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::NotNormalized(0.0));
        }
        Self::new(amplitudes.into_iter().map(|a| a / norm).collect())
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| Complex64::from(a)).collect())
    }

    /// Computational basis state `|k>` on `n_qubits` qubits.
    pub fn basis(n_qubits: usize, k: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if !(1..=3).contains(&n_qubits) || k >= dim {
            return Err(Error::OutOfRange(format!("basis state {k} on {n_qubits} qubits")));
        }
        let mut amps = vec![ZERO; dim];
        amps[k] = ONE;
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    /// Applies a unitary. The caller guarantees unitarity.
    pub(crate) fn transformed(&self, u: &CMatrix) -> StateVector {
        StateVector { amps: u * &self.amps }
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix {
            m: &self.amps * self.amps.adjoint(),
        }
    }

    /// `|<self|other>|`, the global-phase-insensitive overlap.
    pub fn overlap(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<Complex64> = self.amps.iter().copied().collect();
        write_json("state_vector", self.dim(), &entries)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawJson = serde_json::from_str(text)?;
        if raw.entries.len() != raw.dim {
            return Err(Error::Parse(format!(
                "state vector with dim {} has {} entries",
                raw.dim,
                raw.entries.len()
            )));
        }
        Self::new(raw.complex())
    }
}

/// A density matrix on 1 to 3 qubits: Hermitian, unit trace, PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    /// Validates and wraps a matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                left: m.nrows(),
                right: m.ncols(),
            });
        }
        qubits_for_dim(m.nrows())?;
        let herm = linalg::hermiticity_error(&m);
        if herm > HERM_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = linalg::trace(&m).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace(tr));
        }
        let min = linalg::eigh(&m).values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix already known to be a valid state. Hermiticity is
    /// re-imposed exactly.
    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        let m = (&m + m.adjoint()) * Complex64::from(0.5);
        Self { m }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        Self {
            m: CMatrix::identity(d, d) * Complex64::from(1.0 / d as f64),
        }
    }

    /// Convex mixture `(1 - p) self + p other`.
    pub fn mix(&self, other: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("mixing weight {p}")));
        }
        Ok(Self::from_trusted(
            &self.m * Complex64::from(1.0 - p) + &other.m * Complex64::from(p),
        ))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigh(&self.m).values
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.m, &self.m).re
    }

    /// `U rho U^dagger`. The caller guarantees unitarity.
    pub(crate) fn conjugated(&self, u: &CMatrix) -> DensityMatrix {
        Self::from_trusted(u * &self.m * u.adjoint())
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.m - &other.m;
        0.5 * linalg::eigh(&diff).values.iter().map(|l| l.abs()).sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<Complex64> = (0..self.dim())
            .flat_map(|i| (0..self.dim()).map(move |j| (i, j)))
            .map(|(i, j)| self.m[(i, j)])
            .collect();
        write_json("density_matrix", self.dim(), &entries)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawJson = serde_json::from_str(text)?;
        if raw.entries.len() != raw.dim * raw.dim {
            return Err(Error::Parse(format!(
                "density matrix with dim {} has {} entries",
                raw.dim,
                raw.entries.len()
            )));
        }
        Self::new(CMatrix::from_row_slice(raw.dim, raw.dim, &raw.complex()))
    }
}

/// A Hermitian operator on 1 to 3 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
    label: Option<String>,
}

impl HermitianOperator {
    pub fn new(m: CMatrix, label: Option<String>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                left: m.nrows(),
                right: m.ncols(),
            });
        }
        qubits_for_dim(m.nrows())?;
        let herm = linalg::hermiticity_error(&m);
        if herm > HERM_TOL {
            return Err(Error::NotHermitian(herm));
        }
        Ok(Self { m, label })
    }

    pub(crate) fn from_trusted(m: CMatrix, label: Option<String>) -> Self {
        Self { m, label }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        qubits_for_dim(dim)?;
        Ok(Self::from_trusted(CMatrix::identity(dim, dim), Some("I".into())))
    }

    pub fn sigma_x() -> Self {
        Self::from_trusted(pauli::x(), Some("X".into()))
    }

    pub fn sigma_y() -> Self {
        Self::from_trusted(pauli::y(), Some("Y".into()))
    }

    pub fn sigma_z() -> Self {
        Self::from_trusted(pauli::z(), Some("Z".into()))
    }

    /// `n . sigma` for a real 3-vector `n` (not necessarily unit length).
    pub fn bloch(n: [f64; 3]) -> Self {
        let m = pauli::x() * Complex64::from(n[0])
            + pauli::y() * Complex64::from(n[1])
            + pauli::z() * Complex64::from(n[2]);
        Self::from_trusted(m, None)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Max entrywise |O^2 - I|; zero for a +/-1-valued observable.
    pub fn dichotomy_error(&self) -> f64 {
        let d = self.dim();
        linalg::max_abs_diff(&(&self.m * &self.m), &CMatrix::identity(d, d))
    }
}

/// Types that combine under the Kronecker product.
pub trait Tensor: Sized {
    fn dimension(&self) -> usize;
    fn kron(&self, other: &Self) -> Self;
}

impl Tensor for StateVector {
    fn dimension(&self) -> usize {
        self.dim()
    }
    fn kron(&self, other: &Self) -> Self {
        StateVector {
            amps: self.amps.kronecker(&other.amps),
        }
    }
}

impl Tensor for DensityMatrix {
    fn dimension(&self) -> usize {
        self.dim()
    }
    fn kron(&self, other: &Self) -> Self {
        DensityMatrix {
            m: self.m.kronecker(&other.m),
        }
    }
}

impl Tensor for HermitianOperator {
    fn dimension(&self) -> usize {
        self.dim()
    }
    fn kron(&self, other: &Self) -> Self {
        let label = match (&self.label, &other.label) {
            (Some(a), Some(b)) => Some(format!("{a}{b}")),
            _ => None,
        };
        HermitianOperator {
            m: self.m.kronecker(&other.m),
            label,
        }
    }
}

/// Kronecker product of 1 to 3 factors, leftmost factor on qubit 1.
pub fn tensor<T: Tensor + Clone>(factors: &[T]) -> Result<T> {
    let Some(first) = factors.first() else {
        return Err(Error::OutOfRange("tensor of zero factors".into()));
    };
    if factors.len() > 3 {
        return Err(Error::DimensionOverflow);
    }
    let dim: usize = factors.iter().map(Tensor::dimension).product();
    if dim > MAX_DIM {
        return Err(Error::DimensionOverflow);
    }
    Ok(factors[1..].iter().fold(first.clone(), |acc, f| acc.kron(f)))
}

/// Reduced state on the qubits in `keep` (1-based, any order; the result
/// keeps them in ascending order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits();
    if keep.is_empty() {
        return Err(Error::OutOfRange("partial trace must keep at least one qubit".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() {
        return Err(Error::OutOfRange(format!("duplicate qubit in {keep:?}")));
    }
    if let Some(&bad) = kept.iter().find(|&&q| q == 0 || q > n) {
        return Err(Error::InvalidQubit(bad));
    }
    let traced: Vec<usize> = (1..=n).filter(|q| !kept.contains(q)).collect();
    let k = kept.len();
    let dk = 1usize << k;
    let dt = 1usize << traced.len();

    // Full index from (kept bits, traced bits).
    let compose = |a: usize, t: usize| -> usize {
        let mut idx = 0;
        for (pos, &q) in kept.iter().enumerate() {
            if (a >> (k - 1 - pos)) & 1 == 1 {
                idx |= 1 << bit_of(q, n);
            }
        }
        for (pos, &q) in traced.iter().enumerate() {
            if (t >> (traced.len() - 1 - pos)) & 1 == 1 {
                idx |= 1 << bit_of(q, n);
            }
        }
        idx
    };

    let mut out = CMatrix::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = ZERO;
            for t in 0..dt {
                acc += rho.m[(compose(a, t), compose(b, t))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// Transposes the indices of one qubit of an `n`-qubit operator.
pub fn partial_transpose_matrix(m: &CMatrix, n_qubits: usize, party: usize) -> Result<CMatrix> {
    if party == 0 || party > n_qubits {
        return Err(Error::InvalidQubit(party));
    }
    let mask = 1usize << bit_of(party, n_qubits);
    let d = m.nrows();
    Ok(CMatrix::from_fn(d, d, |i, j| {
        // Swap the party's bit between row and column index.
        let (bi, bj) = (i & mask, j & mask);
        m[((i & !mask) | bj, (j & !mask) | bi)]
    }))
}

/// `rho^{T_party}`: Hermitian with unit trace, but possibly indefinite.
pub fn partial_transpose(rho: &DensityMatrix, party: usize) -> Result<HermitianOperator> {
    let m = partial_transpose_matrix(&rho.m, rho.n_qubits(), party)?;
    Ok(HermitianOperator::from_trusted(m, Some(format!("T_{party}"))))
}

/// Real eigenvalues sorted descending, with a per-pair residual check.
pub fn hermitian_eigenvalues(m: &HermitianOperator) -> Result<Vec<f64>> {
    eigenvalues_checked(&m.m)
}

/// Like [`hermitian_eigenvalues`] on a raw matrix, validating Hermiticity first.
pub fn eigenvalues_checked(m: &CMatrix) -> Result<Vec<f64>> {
    let herm = linalg::hermiticity_error(m);
    if herm > HERM_TOL {
        return Err(Error::NotHermitian(herm));
    }
    let e = linalg::eigh(m);
    let residual = e.max_residual(m);
    if residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::EigenResidual(residual));
    }
    Ok(e.values)
}

/// `Tr(rho O)`.
pub fn expectation(rho: &DensityMatrix, o: &HermitianOperator) -> Result<f64> {
    expectation_matrix(rho, &o.m)
}

pub(crate) fn expectation_matrix(rho: &DensityMatrix, o: &CMatrix) -> Result<f64> {
    if rho.dim() != o.nrows() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: o.nrows(),
        });
    }
    let v = linalg::trace_product(&rho.m, o);
    if v.im.abs() > EXPECTATION_IMAG_TOL {
        return Err(Error::ComplexExpectation(v.im));
    }
    Ok(v.re)
}

/// How a fidelity number is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityConvention {
    /// `Tr sqrt(sqrt(rho) sigma sqrt(rho))`; equals `|<psi|phi>|` on pure states.
    #[default]
    Uhlmann,
    /// The square of the above.
    Squared,
}

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))` (not squared).
///
/// The square root is taken on the support of whichever argument has lower
/// numerical rank, so pure-state inputs never pass eigenvalue round-off
/// through a square root.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    use linalg::SUPPORT_TOL;
    let er = linalg::eigh(&rho.m);
    let es = linalg::eigh(&sigma.m);
    let rank = |e: &linalg::Eigh| e.values.iter().filter(|&&l| l > SUPPORT_TOL).count();
    let (e, other) = if rank(&es) < rank(&er) { (&es, &rho.m) } else { (&er, &sigma.m) };
    let r = rank(e);
    if r == 0 {
        return 0.0;
    }
    let support = e.vectors.columns(0, r).into_owned();
    let roots: Vec<f64> = e.values[..r].iter().map(|l| l.sqrt()).collect();
    let projected = support.adjoint() * other * &support;
    let m = CMatrix::from_fn(r, r, |i, j| projected[(i, j)] * (roots[i] * roots[j]));
    let f: f64 = linalg::eigh(&m).values.iter().map(|l| l.max(0.0).sqrt()).sum();
    f.clamp(0.0, 1.0)
}

pub fn state_fidelity_squared(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    state_fidelity(rho, sigma).powi(2)
}

pub fn fidelity_with(convention: FidelityConvention, rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    match convention {
        FidelityConvention::Uhlmann => state_fidelity(rho, sigma),
        FidelityConvention::Squared => state_fidelity_squared(rho, sigma),
    }
}

/// Embeds a single-qubit matrix on `qubit` of an `n`-qubit register.
pub fn single_qubit_operator(m: &CMatrix, qubit: usize, n_qubits: usize) -> CMatrix {
    let factors: Vec<CMatrix> = (1..=n_qubits)
        .map(|q| if q == qubit { m.clone() } else { pauli::identity() })
        .collect();
    linalg::kron_all(&factors)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJson {
    #[allow(dead_code)]
    kind: Option<String>,
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl RawJson {
    fn complex(&self) -> Vec<Complex64> {
        self.entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
    }
}

/// Writes `{"kind", "dim", "entries"}` with 17 significant digits per number.
fn write_json(kind: &str, dim: usize, entries: &[Complex64]) -> String {
    let body: Vec<String> = entries
        .iter()
        .map(|z| format!("[{:.16e}, {:.16e}]", z.re, z.im))
        .collect();
    format!(
        "{{\n  \"kind\": \"{kind}\",\n  \"dim\": {dim},\n  \"entries\": [\n    {}\n  ]\n}}\n",
        body.join(",\n    ")
    )
}
