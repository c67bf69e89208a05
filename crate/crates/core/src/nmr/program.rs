// SPDX-License-Identifier: Apache-2.0

//! Gate-to-pulse lowering with J-coupling CNOTs and virtual z rotations.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::{sequence_unitary, PulseEvent, PulseModel, SpinSystem, DIM, N_SPINS};
use crate::circuits::{Axis, Circuit, Gate};
use crate::linalg::{pauli, CMatrix};
use crate::qstate::single_qubit_operator;
use crate::{Error, Result};

/// Events plus the z rotations that must follow them.
///
/// z rotations are never pulsed: they are folded into the phases of later
/// pulses, and whatever is left at the end is reported in `z_corrections`.
/// The logical operation is `Rz(z_corrections) * sequence_unitary(events)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseProgram {
    pub events: Vec<PulseEvent>,
    /// Angle of `Rz` still owed on each spin, rad.
    pub z_corrections: [f64; 3],
}

impl PulseProgram {
    pub fn physical_unitary(&self, sys: &SpinSystem) -> Result<CMatrix> {
        sequence_unitary(&self.events, sys)
    }

    pub fn correction_unitary(&self) -> CMatrix {
        (1..=N_SPINS).fold(CMatrix::identity(DIM, DIM), |acc, s| {
            single_qubit_operator(&pauli::rz(self.z_corrections[s - 1]), s, N_SPINS) * acc
        })
    }

    pub fn corrected_unitary(&self, sys: &SpinSystem) -> Result<CMatrix> {
        Ok(self.correction_unitary() * self.physical_unitary(sys)?)
    }

    pub fn total_duration(&self) -> f64 {
        self.events.iter().map(PulseEvent::duration).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Accepts a program object or a bare event array (no pending corrections).
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Program(PulseProgram),
            Events(Vec<PulseEvent>),
        }
        let p = match serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))? {
            Either::Program(p) => p,
            Either::Events(events) => PulseProgram {
                events,
                z_corrections: [0.0; 3],
            },
        };
        p.events.iter().try_for_each(PulseEvent::validate)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoweringOptions {
    pub model: PulseModel,
    /// Nutation rate of finite pulses, rad/s.
    pub rf_amplitude: f64,
}

impl Default for LoweringOptions {
    fn default() -> Self {
        Self {
            model: PulseModel::Instantaneous,
            rf_amplitude: 2.0 * PI * 25e3,
        }
    }
}

struct Builder {
    events: Vec<PulseEvent>,
    frame: [f64; 3],
    opts: LoweringOptions,
}

impl Builder {
    fn new(opts: LoweringOptions) -> Self {
        Self {
            events: vec![],
            frame: [0.0; 3],
            opts,
        }
    }

    /// Logical rotation by `angle` about the equatorial axis at `phase`.
    fn pulse(&mut self, spin: usize, angle: f64, phase: f64) {
        let duration = match self.opts.model {
            PulseModel::Instantaneous => 0.0,
            PulseModel::Finite => angle.abs() / self.opts.rf_amplitude,
        };
        self.events.push(PulseEvent::Rf {
            targets: vec![spin],
            angle,
            phase: phase - self.frame[spin - 1],
            duration,
            model: self.opts.model,
        });
    }

    fn virtual_z(&mut self, spin: usize, angle: f64) {
        self.frame[spin - 1] += angle;
    }

    fn delay(&mut self, t: f64) {
        self.events.push(PulseEvent::delay(t));
    }

    /// `CNOT = Ry_t(pi/2) CZ Ry_t(-pi/2)`, with `CZ` from a `1/(2|J|)` delay whose
    /// couplings to the third spin are refocused by two pi pulses on it.
    fn cnot(&mut self, sys: &SpinSystem, c: usize, t: usize) -> Result<()> {
        if c == t {
            return Err(Error::InvalidQubit(t));
        }
        let tau = sys.tau(c, t)?;
        let s = sys.coupling(c, t)?.signum();
        let k = 6 - c - t;
        self.pulse(t, FRAC_PI_2, -FRAC_PI_2);
        self.delay(tau / 2.0);
        self.pulse(k, PI, 0.0);
        self.delay(tau / 2.0);
        self.pulse(k, PI, 0.0);
        // The delay applied exp(-i s pi/4 Z_c Z_t) and Rz(-w tau) on c and t.
        self.virtual_z(c, -s * FRAC_PI_2 + sys.offsets[c - 1] * tau);
        self.virtual_z(t, -s * FRAC_PI_2 + sys.offsets[t - 1] * tau);
        self.pulse(t, FRAC_PI_2, FRAC_PI_2);
        Ok(())
    }

    fn finish(self) -> PulseProgram {
        PulseProgram {
            events: self.events,
            z_corrections: self.frame,
        }
    }
}

fn check_spin(s: usize) -> Result<()> {
    if (1..=N_SPINS).contains(&s) {
        Ok(())
    } else {
        Err(Error::InvalidQubit(s))
    }
}

/// Pulse program for `CNOT(control, target)`, equal to the gate after the
/// reported z corrections.
pub fn cnot_pulse_program(control: usize, target: usize, sys: &SpinSystem) -> Result<PulseProgram> {
    check_spin(control)?;
    check_spin(target)?;
    let mut b = Builder::new(LoweringOptions::default());
    b.cnot(sys, control, target)?;
    Ok(b.finish())
}

/// Lower a rotation/CNOT circuit to pulses.
pub fn lower_circuit(circuit: &Circuit, sys: &SpinSystem, opts: LoweringOptions) -> Result<PulseProgram> {
    sys.validate()?;
    let mut b = Builder::new(opts);
    for g in circuit.gates() {
        match g {
            Gate::Rotation { axis, qubit, angle } => match axis {
                Axis::X => b.pulse(*qubit, *angle, 0.0),
                Axis::Y => b.pulse(*qubit, *angle, FRAC_PI_2),
                Axis::Z => b.virtual_z(*qubit, *angle),
            },
            Gate::Cnot { control, target } => b.cnot(sys, *control, *target)?,
            Gate::Custom { .. } => return Err(Error::Unsupported("custom gates have no pulse lowering".into())),
        }
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{apply_circuit, reference_state, s_prep_circuit, ReferenceState};
    use crate::linalg;
    use crate::qstate::{state_fidelity, StateVector};
    use proptest::prelude::*;

    fn cnot_oracle(c: usize, t: usize) -> CMatrix {
        Gate::cnot(c, t).matrix()
    }

    #[test]
    fn cnot_programs_for_every_ordered_pair() {
        let systems = [
            SpinSystem::default(),
            SpinSystem {
                offsets: [2.0 * PI * 120.0, -2.0 * PI * 45.0, 2.0 * PI * 300.0],
                ..SpinSystem::default()
            },
        ];
        for sys in systems {
            for c in 1..=3 {
                for t in 1..=3 {
                    if c == t {
                        assert!(cnot_pulse_program(c, t, &sys).is_err());
                        continue;
                    }
                    let p = cnot_pulse_program(c, t, &sys).unwrap();
                    let u = p.corrected_unitary(&sys).unwrap();
                    let f = linalg::process_overlap(&cnot_oracle(c, t), &u);
                    assert!(f >= 1.0 - 1e-9, "CNOT({c},{t}): {f}");
                }
            }
        }
    }

    #[test]
    fn cnot_truth_table_and_spectator() {
        let sys = SpinSystem::default();
        let u = cnot_pulse_program(1, 2, &sys).unwrap().corrected_unitary(&sys).unwrap();
        // Align global phase on |000>.
        let phase = u[(0, 0)] / u[(0, 0)].norm();
        let aligned = &u * phase.conj();
        assert!(linalg::max_abs_diff(&aligned, &cnot_oracle(1, 2)) < 1e-9);
        // |10>|psi3> -> |11>|psi3> for a superposed spectator.
        let mut amps = vec![linalg::ZERO; 8];
        amps[4] = 0.6.into();
        amps[5] = num_complex::Complex64::new(0.0, 0.8);
        let psi = StateVector::new(amps).unwrap();
        let out = psi.transformed(&aligned);
        assert!((out.amplitudes()[6] - psi.amplitudes()[4]).norm() < 1e-9);
        assert!((out.amplitudes()[7] - psi.amplitudes()[5]).norm() < 1e-9);
    }

    #[test]
    fn zero_coupling_is_an_error() {
        let sys = SpinSystem {
            couplings: [0.0, 47.67, -128.23],
            ..SpinSystem::default()
        };
        assert!(matches!(cnot_pulse_program(1, 2, &sys), Err(Error::ZeroCoupling(1, 2))));
    }

    #[test]
    fn pulse_level_s_preparation() {
        let sys = SpinSystem::default();
        let prog = lower_circuit(&s_prep_circuit(), &sys, LoweringOptions::default()).unwrap();
        assert!(prog.z_corrections.iter().any(|z| z.abs() > 1e-3));
        let start = StateVector::basis(3, 0).unwrap();
        let out = start.transformed(&prog.corrected_unitary(&sys).unwrap());
        let s = reference_state(ReferenceState::S).unwrap();
        let f = state_fidelity(&out.projector(), &s.projector());
        assert!(f >= 1.0 - 1e-6, "{f}");
        // Without the correction the state is off.
        let raw = start.transformed(&prog.physical_unitary(&sys).unwrap());
        assert!(state_fidelity(&raw.projector(), &s.projector()) < 0.999);
    }

    #[test]
    fn finite_pulses_are_close_but_not_exact() {
        let sys = SpinSystem::default();
        let opts = LoweringOptions {
            model: PulseModel::Finite,
            ..LoweringOptions::default()
        };
        let prog = lower_circuit(&s_prep_circuit(), &sys, opts).unwrap();
        assert!(prog.total_duration() > 0.0);
        let out = StateVector::basis(3, 0).unwrap().transformed(&prog.corrected_unitary(&sys).unwrap());
        let s = reference_state(ReferenceState::S).unwrap();
        let f = state_fidelity(&out.projector(), &s.projector());
        assert!(f > 0.99 && f < 1.0 - 1e-9, "{f}");
    }

    #[test]
    fn program_json_round_trip() {
        let sys = SpinSystem::default();
        let p = lower_circuit(&s_prep_circuit(), &sys, LoweringOptions::default()).unwrap();
        assert_eq!(PulseProgram::from_json(&p.to_json().unwrap()).unwrap(), p);
        let bare = super::super::events_to_json(&p.events).unwrap();
        assert_eq!(PulseProgram::from_json(&bare).unwrap().z_corrections, [0.0; 3]);
    }

    #[test]
    fn custom_gates_do_not_lower() {
        let c = Circuit::new(vec![Gate::Custom {
            unitary: CMatrix::identity(2, 2),
            qubits: vec![1],
        }])
        .unwrap();
        assert!(matches!(lower_circuit(&c, &SpinSystem::default(), LoweringOptions::default()), Err(Error::Unsupported(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lowering_matches_gate_unitary(
            gates in proptest::collection::vec((0usize..4, 1usize..=3, 1usize..=3, -PI..PI), 1..8),
            offsets in proptest::array::uniform3(-1000.0f64..1000.0),
        ) {
            let gates: Vec<Gate> = gates
                .into_iter()
                .filter_map(|(kind, a, b, angle)| match kind {
                    0 => Some(Gate::rx(a, angle)),
                    1 => Some(Gate::ry(a, angle)),
                    2 => Some(Gate::rz(a, angle)),
                    _ if a != b => Some(Gate::cnot(a, b)),
                    _ => None,
                })
                .collect();
            prop_assume!(!gates.is_empty());
            let circuit = Circuit::new(gates).unwrap();
            let sys = SpinSystem { offsets, ..SpinSystem::default() };
            let prog = lower_circuit(&circuit, &sys, LoweringOptions::default()).unwrap();
            let f = linalg::process_overlap(&circuit.unitary(), &prog.corrected_unitary(&sys).unwrap());
            prop_assert!(f >= 1.0 - 1e-9, "{}", f);
            let start = StateVector::basis(3, 5).unwrap();
            let via_gates = apply_circuit(&circuit, &start).unwrap();
            let via_pulses = start.transformed(&prog.corrected_unitary(&sys).unwrap());
            prop_assert!(crate::circuits::phase_aligned_distance(&via_pulses, &via_gates) < 1e-8);
        }
    }
}
