// SPDX-License-Identifier: Apache-2.0

//! Small dense complex linear algebra.
//!
//! Matrices here are at most 8x8, so everything is plain `DMatrix` arithmetic
//! plus a cyclic Jacobi eigensolver for Hermitian matrices. Jacobi is slow
//! asymptotically but at this size it is fast, accurate to machine precision,
//! and fully deterministic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `M = V diag(values) V^dagger` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigh {
    /// Real eigenvalues, sorted descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the same order as `values`.
    pub vectors: CMatrix,
}

impl Eigh {
    /// Rebuilds `V f(Lambda) V^dagger`.
    pub fn map<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Largest `||M v - lambda v||` over all eigenpairs.
    pub fn max_residual(&self, m: &CMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (j, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.column(j);
            let r = m * v - v * Complex64::from(lambda);
            worst = worst.max(r.norm());
        }
        worst
    }
}

/// Cyclic Jacobi eigensolver for a Hermitian matrix.
///
/// Only the Hermitian part `(M + M^dagger)/2` is used; callers are expected to
/// have validated Hermiticity.
pub fn eigh(m: &CMatrix) -> Eigh {
    assert!(m.is_square(), "eigh needs a square matrix");
    let n = m.nrows();
    let mut a = (m + m.adjoint()) * Complex64::from(0.5);
    let mut v = CMatrix::identity(n, n);

    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let threshold = (f64::EPSILON * f64::EPSILON) * total.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a[(i, i)].re, i)).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let values = pairs.iter().map(|&(l, _)| l).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, pairs[j].1)]);
    Eigh { values, vectors }
}

/// One complex Jacobi rotation zeroing `a[p][q]`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r < 1e-300 {
        return;
    }
    let n = a.nrows();
    // Phase e^{-i phi} that makes the (p,q) element real, then a real rotation.
    let phase = (apq / r).conj();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // Column update: A <- A U, V <- V U with
    // U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on (p, q).
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * phase * s;
        a[(k, q)] = akp * s + akq * phase * c;
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * phase * s;
        v[(k, q)] = vkp * s + vkq * phase * c;
    }
    // Row update: A <- U^dagger A.
    let pc = phase.conj();
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * pc * s;
        a[(q, k)] = apk * s + aqk * pc * c;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = Complex64::from(a[(p, p)].re);
    a[(q, q)] = Complex64::from(a[(q, q)].re);
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    if is_diagonal(h) {
        let n = h.nrows();
        return CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, -h[(i, i)].re * t)
            } else {
                ZERO
            }
        });
    }
    eigh(h).map(|l| Complex64::from_polar(1.0, -l * t))
}

/// Eigenvalues at or below this are treated as exact zeros by [`sqrt_psd`].
pub const SUPPORT_TOL: f64 = 1e-13;

/// Principal square root of a positive semidefinite matrix. Eigenvalues at or
/// below [`SUPPORT_TOL`] (including round-off negatives) map to zero, so a
/// rank-deficient input keeps an exactly rank-deficient root.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    eigh(m).map(|l| Complex64::from(if l > SUPPORT_TOL { l.sqrt() } else { 0.0 }))
}

pub fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == ZERO))
}

/// Max entrywise |M - M^dagger|.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Max entrywise |U^dagger U - I|.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &CMatrix::identity(n, n))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Kronecker product of a list of matrices, leftmost factor most significant.
pub fn kron_all(factors: &[CMatrix]) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for f in factors {
        acc = acc.kronecker(f);
    }
    acc
}

/// `|Tr(A^dagger B)| / d`, the phase-insensitive overlap of two unitaries.
pub fn process_overlap(a: &CMatrix, b: &CMatrix) -> f64 {
    trace_product(&a.adjoint(), b).norm() / a.nrows() as f64
}

pub mod pauli {
    //! Single-qubit Pauli matrices and rotations, `R_n(theta) = exp(-i theta n.sigma / 2)`.

    use super::{CMatrix, I, ONE, ZERO};
    use num_complex::Complex64;

    pub fn identity() -> CMatrix {
        CMatrix::identity(2, 2)
    }

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    /// Rotation about the equatorial axis at azimuth `phase` (0 = x, pi/2 = y).
    pub fn rotation_xy(angle: f64, phase: f64) -> CMatrix {
        let (s, c) = (angle / 2.0).sin_cos();
        let e = Complex64::from_polar(1.0, phase);
        CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::from(c),
                -I * s * e.conj(),
                -I * s * e,
                Complex64::from(c),
            ],
        )
    }

    pub fn rx(angle: f64) -> CMatrix {
        rotation_xy(angle, 0.0)
    }

    pub fn ry(angle: f64) -> CMatrix {
        rotation_xy(angle, std::f64::consts::FRAC_PI_2)
    }

    pub fn rz(angle: f64) -> CMatrix {
        let e = Complex64::from_polar(1.0, -angle / 2.0);
        CMatrix::from_row_slice(2, 2, &[e, ZERO, ZERO, e.conj()])
    }
}
