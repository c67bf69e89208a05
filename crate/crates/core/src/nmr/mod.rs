// SPDX-License-Identifier: Apache-2.0

//! Rotating-frame three-spin NMR model and a pulse-sequence simulator.
//!
//! `H = -sum_i w_i I_iz + sum_{i<j} 2 pi J_ij I_iz I_jz` with `I = sigma/2`,
//! offsets `w_i` in rad/s and couplings `J_ij` in Hz.

mod grape;
mod program;

pub use grape::{
    grape_fidelity, grape_gradient, grape_multistart, grape_optimize, grape_propagator, read_controls_csv,
    write_controls_csv, GradientMode, GrapeProblem, GrapeResult,
};
pub use program::{cnot_pulse_program, lower_circuit, LoweringOptions, PulseProgram};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuits::CircuitInput;
use crate::linalg::{self, pauli, CMatrix};
use crate::qstate::{bit_of, single_qubit_operator};
use crate::{Error, Result};

pub const N_SPINS: usize = 3;
const DIM: usize = 1 << N_SPINS;

/// Scalar couplings of the reference sample, Hz.
pub const DEFAULT_J12: f64 = 69.65;
pub const DEFAULT_J13: f64 = 47.67;
pub const DEFAULT_J23: f64 = -128.23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystem {
    /// `w_i - w_rf`, rad/s.
    pub offsets: [f64; 3],
    /// `[J12, J13, J23]`, Hz.
    pub couplings: [f64; 3],
}

impl Default for SpinSystem {
    fn default() -> Self {
        Self {
            offsets: [0.0; 3],
            couplings: [DEFAULT_J12, DEFAULT_J13, DEFAULT_J23],
        }
    }
}

fn pair_index(i: usize, j: usize) -> Option<usize> {
    match (i.min(j), i.max(j)) {
        (1, 2) => Some(0),
        (1, 3) => Some(1),
        (2, 3) => Some(2),
        _ => None,
    }
}

impl SpinSystem {
    pub fn zero() -> Self {
        Self {
            offsets: [0.0; 3],
            couplings: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.offsets.iter().chain(&self.couplings).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::OutOfRange("spin system parameters must be finite".into()))
        }
    }

    /// `J_ij` in Hz for 1-based spins.
    pub fn coupling(&self, i: usize, j: usize) -> Result<f64> {
        pair_index(i, j)
            .map(|k| self.couplings[k])
            .ok_or_else(|| Error::OutOfRange(format!("spin pair ({i}, {j})")))
    }

    /// `1 / (2 |J_ij|)`, the delay that accumulates a `pi I_iz I_jz` phase.
    pub fn tau(&self, i: usize, j: usize) -> Result<f64> {
        let j_hz = self.coupling(i, j)?;
        if j_hz == 0.0 || !j_hz.is_finite() {
            return Err(Error::ZeroCoupling(i, j));
        }
        Ok(1.0 / (2.0 * j_hz.abs()))
    }

    /// Diagonal of the free Hamiltonian in the computational basis, rad/s.
    pub fn diagonal(&self) -> [f64; DIM] {
        let mut d = [0.0; DIM];
        for (k, e) in d.iter_mut().enumerate() {
            // I_z eigenvalue +1/2 for bit 0, -1/2 for bit 1.
            let iz = |spin: usize| if (k >> bit_of(spin, N_SPINS)) & 1 == 0 { 0.5 } else { -0.5 };
            for spin in 1..=N_SPINS {
                *e -= self.offsets[spin - 1] * iz(spin);
            }
            for (idx, (a, b)) in [(1, 2), (1, 3), (2, 3)].into_iter().enumerate() {
                *e += 2.0 * std::f64::consts::PI * self.couplings[idx] * iz(a) * iz(b);
            }
        }
        d
    }
}

pub fn hamiltonian(sys: &SpinSystem) -> CMatrix {
    let d = sys.diagonal();
    CMatrix::from_fn(DIM, DIM, |i, j| if i == j { Complex64::from(d[i]) } else { linalg::ZERO })
}

/// Free evolution `exp(-i H t)` (diagonal).
pub fn delay_unitary(sys: &SpinSystem, t: f64) -> CMatrix {
    let d = sys.diagonal();
    CMatrix::from_fn(DIM, DIM, |i, j| {
        if i == j {
            Complex64::from_polar(1.0, -d[i] * t)
        } else {
            linalg::ZERO
        }
    })
}

/// `sum_{i in targets} (cos(phase) I_ix + sin(phase) I_iy)`.
pub fn rf_generator(targets: &[usize], phase: f64) -> CMatrix {
    let single = (pauli::x() * Complex64::from(phase.cos()) + pauli::y() * Complex64::from(phase.sin())) * Complex64::from(0.5);
    targets
        .iter()
        .fold(CMatrix::zeros(DIM, DIM), |acc, &t| acc + single_qubit_operator(&single, t, N_SPINS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseModel {
    /// Hard pulse: the rotation happens in zero time and `duration` is ignored.
    #[default]
    Instantaneous,
    /// Constant-amplitude pulse of length `duration`, evolving jointly with
    /// the free Hamiltonian.
    Finite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseEvent {
    Rf {
        targets: Vec<usize>,
        angle: f64,
        phase: f64,
        #[serde(default)]
        duration: f64,
        #[serde(default)]
        model: PulseModel,
    },
    Delay {
        duration: f64,
    },
}

impl PulseEvent {
    pub fn hard(targets: &[usize], angle: f64, phase: f64) -> Self {
        PulseEvent::Rf {
            targets: targets.to_vec(),
            angle,
            phase,
            duration: 0.0,
            model: PulseModel::Instantaneous,
        }
    }

    pub fn delay(duration: f64) -> Self {
        PulseEvent::Delay { duration }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PulseEvent::Rf {
                targets,
                angle,
                phase,
                duration,
                model,
            } => {
                if targets.is_empty() {
                    return Err(Error::OutOfRange("rf pulse with no targets".into()));
                }
                let mut seen = [false; N_SPINS];
                for &t in targets {
                    if !(1..=N_SPINS).contains(&t) || std::mem::replace(&mut seen[t - 1], true) {
                        return Err(Error::InvalidQubit(t));
                    }
                }
                if !angle.is_finite() || !phase.is_finite() {
                    return Err(Error::OutOfRange("rf angle and phase must be finite".into()));
                }
                check_duration(*duration)?;
                if *model == PulseModel::Finite && *duration == 0.0 && *angle != 0.0 {
                    return Err(Error::OutOfRange("finite pulse needs a positive duration".into()));
                }
                Ok(())
            }
            PulseEvent::Delay { duration } => check_duration(*duration),
        }
    }

    /// The propagator of this event alone.
    pub fn unitary(&self, sys: &SpinSystem) -> Result<CMatrix> {
        self.validate()?;
        Ok(match self {
            PulseEvent::Rf {
                targets,
                angle,
                phase,
                duration,
                model,
            } => match model {
                PulseModel::Instantaneous => {
                    let r = pauli::rotation_xy(*angle, *phase);
                    targets
                        .iter()
                        .fold(CMatrix::identity(DIM, DIM), |acc, &t| single_qubit_operator(&r, t, N_SPINS) * acc)
                }
                PulseModel::Finite => {
                    let amp = angle / duration;
                    let h = hamiltonian(sys) + rf_generator(targets, *phase) * Complex64::from(amp);
                    linalg::expm_hermitian(&h, *duration)
                }
            },
            PulseEvent::Delay { duration } => delay_unitary(sys, *duration),
        })
    }

    pub fn duration(&self) -> f64 {
        match self {
            PulseEvent::Rf {
                duration,
                model: PulseModel::Finite,
                ..
            } => *duration,
            PulseEvent::Rf { .. } => 0.0,
            PulseEvent::Delay { duration } => *duration,
        }
    }
}

fn check_duration(d: f64) -> Result<()> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("duration {d} must be finite and non-negative")))
    }
}

/// Product of event propagators, last event leftmost.
pub fn sequence_unitary(events: &[PulseEvent], sys: &SpinSystem) -> Result<CMatrix> {
    sys.validate()?;
    events
        .iter()
        .try_fold(CMatrix::identity(DIM, DIM), |acc, e| Ok(e.unitary(sys)? * acc))
}

/// Evolve a state vector or density matrix through an event list.
pub fn evolve<T: CircuitInput>(events: &[PulseEvent], sys: &SpinSystem, input: &T) -> Result<T> {
    if input.dimension() != DIM {
        return Err(Error::DimensionMismatch { left: input.dimension(), right: DIM });
    }
    Ok(input.evolve(&sequence_unitary(events, sys)?))
}

pub fn events_to_json(events: &[PulseEvent]) -> Result<String> {
    Ok(serde_json::to_string_pretty(events)?)
}

pub fn events_from_json(text: &str) -> Result<Vec<PulseEvent>> {
    let events: Vec<PulseEvent> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    events.iter().try_for_each(PulseEvent::validate)?;
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{DensityMatrix, StateVector};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn hamiltonian_examples() {
        let only12 = SpinSystem {
            offsets: [0.0; 3],
            couplings: [DEFAULT_J12, 0.0, 0.0],
        };
        let h = hamiltonian(&only12);
        let e = 2.0 * PI * DEFAULT_J12 / 4.0;
        let signs = [1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0];
        for (k, s) in signs.iter().enumerate() {
            assert!((h[(k, k)].re - s * e).abs() < 1e-12);
        }
        assert!(linalg::is_diagonal(&h));
        assert!(hamiltonian(&SpinSystem::zero()).iter().all(|z| *z == linalg::ZERO));

        // Operator-level oracle: build the sum from Kronecker products.
        let sys = SpinSystem {
            offsets: [100.0, -250.0, 30.0],
            ..SpinSystem::default()
        };
        let iz = |s| single_qubit_operator(&(pauli::z() * Complex64::from(0.5)), s, 3);
        let mut oracle = CMatrix::zeros(8, 8);
        for s in 1..=3 {
            oracle -= iz(s) * Complex64::from(sys.offsets[s - 1]);
        }
        for (k, (a, b)) in [(1, 2), (1, 3), (2, 3)].into_iter().enumerate() {
            oracle += iz(a) * iz(b) * Complex64::from(2.0 * PI * sys.couplings[k]);
        }
        assert!(linalg::max_abs_diff(&hamiltonian(&sys), &oracle) < 1e-9);
    }

    #[test]
    fn tau_delay_gives_quarter_turn_zz_phase() {
        let only12 = SpinSystem {
            offsets: [0.0; 3],
            couplings: [DEFAULT_J12, 0.0, 0.0],
        };
        let tau = only12.tau(1, 2).unwrap();
        assert!((tau - 1.0 / (2.0 * 69.65)).abs() < 1e-15);
        let u = sequence_unitary(&[PulseEvent::delay(tau)], &only12).unwrap();
        // exp(-i pi I1z I2z) = diag over basis of exp(-i pi/4 z1 z2).
        for k in 0..8 {
            let z1z2 = if ((k >> 2) ^ (k >> 1)) & 1 == 0 { 1.0 } else { -1.0 };
            let expected = Complex64::from_polar(1.0, -PI / 4.0 * z1z2);
            assert!((u[(k, k)] - expected).norm() < 1e-12);
        }
        assert!(matches!(SpinSystem::zero().tau(1, 3), Err(Error::ZeroCoupling(1, 3))));
    }

    #[test]
    fn two_pi_rotation_is_global_phase() {
        let pulse = PulseEvent::hard(&[1, 2, 3], PI, 0.0);
        let u = sequence_unitary(&[pulse.clone(), pulse], &SpinSystem::default()).unwrap();
        assert!((linalg::process_overlap(&u, &CMatrix::identity(8, 8)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_pulse_without_couplings_matches_hard_pulse() {
        let sys = SpinSystem::zero();
        let hard = PulseEvent::hard(&[2], PI / 3.0, 0.4);
        let soft = PulseEvent::Rf {
            targets: vec![2],
            angle: PI / 3.0,
            phase: 0.4,
            duration: 1e-4,
            model: PulseModel::Finite,
        };
        let a = hard.unitary(&sys).unwrap();
        let b = soft.unitary(&sys).unwrap();
        assert!(linalg::max_abs_diff(&a, &b) < 1e-12);
        // With couplings on, the finite pulse deviates but stays unitary.
        let c = soft.unitary(&SpinSystem::default()).unwrap();
        assert!(linalg::unitarity_error(&c) < 1e-12);
        assert!(linalg::max_abs_diff(&a, &c) > 1e-6);
    }

    #[test]
    fn evolve_preserves_density_matrix() {
        let rho = crate::circuits::reference_state(crate::circuits::ReferenceState::S).unwrap().projector();
        let events = vec![
            PulseEvent::hard(&[1], 0.3, 0.1),
            PulseEvent::delay(1e-3),
            PulseEvent::hard(&[2, 3], 1.1, 2.0),
        ];
        let out = evolve(&events, &SpinSystem::default(), &rho).unwrap();
        assert!(DensityMatrix::new(out.into_matrix()).is_ok());
        let psi = StateVector::basis(2, 0).unwrap();
        assert!(evolve(&events, &SpinSystem::default(), &psi).is_err());
    }

    #[test]
    fn event_json() {
        let events = vec![PulseEvent::hard(&[1, 3], 0.5, 1.0), PulseEvent::delay(2e-3)];
        let text = events_to_json(&events).unwrap();
        assert_eq!(events_from_json(&text).unwrap(), events);
        let minimal = r#"[{"kind":"rf","targets":[2],"angle":1.0,"phase":0.0},{"kind":"delay","duration":0.01}]"#;
        assert_eq!(events_from_json(minimal).unwrap().len(), 2);
        for bad in [
            r#"[{"kind":"shaped","duration":1}]"#,
            r#"[{"kind":"delay","duration":-1}]"#,
            r#"[{"kind":"rf","targets":[4],"angle":1.0,"phase":0.0}]"#,
            r#"[{"kind":"rf","targets":[1,1],"angle":1.0,"phase":0.0}]"#,
        ] {
            assert!(events_from_json(bad).is_err(), "{bad}");
        }
    }

    fn arb_event() -> impl Strategy<Value = PulseEvent> {
        prop_oneof![
            (1usize..=3, -PI..PI, -PI..PI).prop_map(|(t, a, p)| PulseEvent::hard(&[t], a, p)),
            (0.0f64..0.02).prop_map(PulseEvent::delay),
        ]
    }

    proptest! {
        #[test]
        fn composition_law(a in proptest::collection::vec(arb_event(), 0..6), b in proptest::collection::vec(arb_event(), 0..6)) {
            let sys = SpinSystem { offsets: [50.0, -20.0, 10.0], ..SpinSystem::default() };
            let joined: Vec<PulseEvent> = a.iter().chain(&b).cloned().collect();
            let whole = sequence_unitary(&joined, &sys).unwrap();
            let parts = sequence_unitary(&b, &sys).unwrap() * sequence_unitary(&a, &sys).unwrap();
            prop_assert!(linalg::max_abs_diff(&whole, &parts) < 1e-10);
        }

        #[test]
        fn delay_commutes_with_z_rotations(t in 0.0f64..0.05, angle in -PI..PI, spin in 1usize..=3) {
            let sys = SpinSystem::default();
            let d = delay_unitary(&sys, t);
            let rz = single_qubit_operator(&pauli::rz(angle), spin, 3);
            prop_assert!(linalg::max_abs_diff(&(&d * &rz), &(&rz * &d)) < 1e-12);
        }
    }
}
