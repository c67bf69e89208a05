// SPDX-License-Identifier: Apache-2.0

//! Negativity (bipartite and tripartite) and two-qubit concurrence.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, pauli};
use crate::qstate::{self, partial_trace, partial_transpose, DensityMatrix};
use crate::tolerances::CONCURRENCE_NEG_TOL;
use crate::{Error, Result};

/// Scaling applied to the sum of negative partial-transpose eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativityConvention {
    /// `|sum of negative eigenvalues|`, at most 1/2 for qubit bipartitions.
    Plain,
    /// Twice the plain value, normalized to 1 for maximal entanglement.
    #[default]
    Doubled,
}

impl NegativityConvention {
    /// The convention under which `|S>` has tripartite negativity 0.943.
    /// Pinned by `calibrated_convention_reproduces_reference` below.
    pub const CALIBRATED: NegativityConvention = NegativityConvention::Doubled;

    fn scale(self) -> f64 {
        match self {
            NegativityConvention::Plain => 1.0,
            NegativityConvention::Doubled => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityReport {
    pub n_a_bc: f64,
    pub n_b_ac: f64,
    pub n_c_ab: f64,
    pub tripartite: f64,
    pub convention: NegativityConvention,
}

/// Negativity of the bipartition `party | rest`.
pub fn bipartite_negativity(rho: &DensityMatrix, party: usize, convention: NegativityConvention) -> Result<f64> {
    let pt = partial_transpose(rho, party)?;
    let negative: f64 = qstate::hermitian_eigenvalues(&pt)?
        .into_iter()
        .filter(|&l| l < 0.0)
        .sum();
    Ok(convention.scale() * negative.abs())
}

/// Geometric mean of the three one-versus-rest negativities of a three-qubit state.
pub fn tripartite_negativity(rho: &DensityMatrix, convention: NegativityConvention) -> Result<NegativityReport> {
    if rho.n_qubits() != 3 {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: 8 });
    }
    let n_a_bc = bipartite_negativity(rho, 1, convention)?;
    let n_b_ac = bipartite_negativity(rho, 2, convention)?;
    let n_c_ab = bipartite_negativity(rho, 3, convention)?;
    Ok(NegativityReport {
        n_a_bc,
        n_b_ac,
        n_c_ab,
        tripartite: (n_a_bc * n_b_ac * n_c_ab).cbrt(),
        convention,
    })
}

/// Wootters concurrence of a two-qubit state.
///
/// The square roots of the eigenvalues of `R = rho (Y x Y) rho* (Y x Y)` are
/// the singular values of `sqrt(rho) (Y x Y) sqrt(rho)* (Y x Y)`, which is how
/// they are computed here: no square root of a round-off eigenvalue is ever
/// taken, so `R`'s spectrum needs no clipping.
pub fn concurrence(rho2: &DensityMatrix) -> Result<f64> {
    if rho2.dim() != 4 {
        return Err(Error::DimensionMismatch { left: rho2.dim(), right: 4 });
    }
    let m = rho2.matrix();
    if let Some(&min) = linalg::eigh(m).values.last() {
        if min < -CONCURRENCE_NEG_TOL {
            return Err(Error::NotPositive(min));
        }
    }
    let root = linalg::sqrt_psd(m);
    let yy = pauli::y().kronecker(&pauli::y());
    let flipped_root = &yy * root.map(|z| z.conj()) * &yy;
    let mut s: Vec<f64> = (root * flipped_root).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok((s[0] - s[1] - s[2] - s[3]).clamp(0.0, 1.0))
}

/// Concurrences of the reduced states on pairs (1,2), (1,3), (2,3).
pub fn pairwise_concurrences(rho: &DensityMatrix) -> Result<[f64; 3]> {
    if rho.n_qubits() != 3 {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: 8 });
    }
    let c = |a, b| concurrence(&partial_trace(rho, &[a, b])?);
    Ok([c(1, 2)?, c(1, 3)?, c(2, 3)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{reference_state, ReferenceState};
    use crate::linalg::CMatrix;
    use crate::qstate::StateVector;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn state(id: ReferenceState) -> DensityMatrix {
        reference_state(id).unwrap().projector()
    }

    /// Closed form for X-shaped two-qubit states:
    /// `2 max(0, |rho_{03}| - sqrt(rho_11 rho_22), |rho_{12}| - sqrt(rho_00 rho_33))`.
    fn x_state_concurrence(m: &CMatrix) -> f64 {
        let a = m[(0, 3)].norm() - (m[(1, 1)].re * m[(2, 2)].re).sqrt();
        let b = m[(1, 2)].norm() - (m[(0, 0)].re * m[(3, 3)].re).sqrt();
        2.0 * a.max(b).max(0.0)
    }

    #[test]
    fn calibrated_convention_reproduces_reference() {
        let s = state(ReferenceState::S);
        let plain = tripartite_negativity(&s, NegativityConvention::Plain).unwrap().tripartite;
        let doubled = tripartite_negativity(&s, NegativityConvention::Doubled).unwrap().tripartite;
        assert!((plain - 0.943).abs() > 1e-3);
        assert!((doubled - 0.943).abs() < 1e-3);
        assert_eq!(NegativityConvention::CALIBRATED, NegativityConvention::Doubled);
        // Exact value 2 sqrt(2)/3.
        assert!((doubled - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn negativity_examples() {
        let p000 = state(ReferenceState::Basis(0));
        let ghz = state(ReferenceState::Ghz);
        let mixed = DensityMatrix::maximally_mixed(3);
        for party in 1..=3 {
            assert!(bipartite_negativity(&p000, party, NegativityConvention::Doubled).unwrap() < 1e-15);
            assert!(bipartite_negativity(&mixed, party, NegativityConvention::Doubled).unwrap() < 1e-15);
            let g = bipartite_negativity(&ghz, party, NegativityConvention::Doubled).unwrap();
            assert!((g - 1.0).abs() < 1e-12);
        }
        let r = tripartite_negativity(&p000, NegativityConvention::Doubled).unwrap();
        assert_eq!(r.tripartite, 0.0);
    }

    #[test]
    fn negativity_decreases_under_white_noise() {
        let s = state(ReferenceState::S);
        let mixed = DensityMatrix::maximally_mixed(3);
        let values: Vec<f64> = (0..=10)
            .map(|i| {
                let rho = s.mix(&mixed, i as f64 / 10.0).unwrap();
                tripartite_negativity(&rho, NegativityConvention::Doubled).unwrap().tripartite
            })
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{values:?}");
        assert!(values[10] < 1e-12);
    }

    #[test]
    fn concurrence_examples() {
        let bell = StateVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap().projector();
        assert!((concurrence(&bell).unwrap() - 1.0).abs() < 1e-7);
        let prod = StateVector::from_real(&[0.6, 0.8, 0.0, 0.0]).unwrap().projector();
        assert!(concurrence(&prod).unwrap() < 1e-7);
        assert!(concurrence(&DensityMatrix::maximally_mixed(2)).unwrap() < 1e-12);

        let s = state(ReferenceState::S);
        let oracle = 2.0 * (1.0 / 12f64.sqrt() - 1.0 / 6.0);
        assert!((oracle - 0.2440).abs() < 1e-4);
        for (a, b) in [(1, 2), (1, 3), (2, 3)] {
            let m = partial_trace(&s, &[a, b]).unwrap();
            assert!((x_state_concurrence(m.matrix()) - oracle).abs() < 1e-12);
            assert!((concurrence(&m).unwrap() - oracle).abs() < 1e-9);
        }
        assert!(concurrence(&s).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let w = pairwise_concurrences(&state(ReferenceState::W)).unwrap();
        assert!(w.iter().all(|&c| (c - 2.0 / 3.0).abs() < 1e-9), "{w:?}");
        let g = pairwise_concurrences(&state(ReferenceState::Ghz)).unwrap();
        assert!(g.iter().all(|&c| c < 1e-9), "{g:?}");
        let s = pairwise_concurrences(&state(ReferenceState::S)).unwrap();
        assert!(s.iter().all(|&c| (c - 0.244).abs() < 1e-3));
        assert!((s[0] - s[1]).abs() < 1e-9 && (s[1] - s[2]).abs() < 1e-9);
    }

    fn su2(a: f64, b: f64, c: f64) -> CMatrix {
        pauli::rz(a) * pauli::ry(b) * pauli::rz(c)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn negativity_invariant_under_local_unitaries(angles in proptest::collection::vec(-3.2f64..3.2, 9), p in 0.0f64..0.5) {
            let rho = state(ReferenceState::S).mix(&DensityMatrix::maximally_mixed(3), p).unwrap();
            let u = linalg::kron_all(&[
                su2(angles[0], angles[1], angles[2]),
                su2(angles[3], angles[4], angles[5]),
                su2(angles[6], angles[7], angles[8]),
            ]);
            let rotated = rho.conjugated(&u);
            for party in 1..=3 {
                let a = bipartite_negativity(&rho, party, NegativityConvention::Doubled).unwrap();
                let b = bipartite_negativity(&rotated, party, NegativityConvention::Doubled).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
            }
            let t = tripartite_negativity(&rotated, NegativityConvention::Doubled).unwrap();
            prop_assert!((0.0..=1.0).contains(&t.tripartite));
            prop_assert!((t.tripartite - (t.n_a_bc * t.n_b_ac * t.n_c_ab).cbrt()).abs() < 1e-12);
        }

        #[test]
        fn concurrence_conjugation_symmetric(angles in proptest::collection::vec(-3.2f64..3.2, 6), p in 0.0f64..1.0) {
            let rho3 = state(ReferenceState::S).mix(&DensityMatrix::maximally_mixed(3), p).unwrap();
            let u = linalg::kron_all(&[su2(angles[0], angles[1], angles[2]), su2(angles[3], angles[4], angles[5]), pauli::identity()]);
            let rho = partial_trace(&rho3.conjugated(&u), &[1, 2]).unwrap();
            let conj = DensityMatrix::new(rho.matrix().map(|z| z.conj())).unwrap();
            let c = concurrence(&rho).unwrap();
            prop_assert!((c - concurrence(&conj).unwrap()).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&c));
        }

        #[test]
        fn partial_transpose_of_complement_has_same_spectrum(p in 0.0f64..1.0, angles in proptest::collection::vec(-3.2f64..3.2, 3)) {
            // (rho^{T_1})^T = rho^{T_23}: global transposition keeps the spectrum.
            let u = linalg::kron_all(&[su2(angles[0], angles[1], angles[2]), pauli::identity(), pauli::identity()]);
            let rho = state(ReferenceState::S).mix(&DensityMatrix::maximally_mixed(3), p).unwrap().conjugated(&u);
            let t1 = qstate::partial_transpose_matrix(rho.matrix(), 3, 1).unwrap();
            let t23 = qstate::partial_transpose_matrix(&qstate::partial_transpose_matrix(rho.matrix(), 3, 2).unwrap(), 3, 3).unwrap();
            let a = linalg::eigh(&t1).values;
            let b = linalg::eigh(&t23).values;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
