// SPDX-License-Identifier: Apache-2.0

//! Gate-level state preparation on three qubits.
//!
//! Qubits are 1-based. Rotations follow `R_n(theta) = exp(-i theta n.sigma/2)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, pauli, CMatrix, ZERO};
use crate::qstate::{bit_of, DensityMatrix, StateVector};
use crate::tolerances::UNITARY_TOL;
use crate::{Error, Result};

pub const N_QUBITS: usize = 3;
const DIM: usize = 1 << N_QUBITS;

/// Rotation angles quoted alongside the experimental preparation pulse
/// sequence: `1.216 pi/2`, `11 pi/12`, `5 pi/12`. Kept as reference metadata;
/// [`s_prep_circuit`] derives its own angles.
pub const PREP_REFERENCE_ANGLES: [f64; 3] = [1.216 * PI / 2.0, 11.0 * PI / 12.0, 5.0 * PI / 12.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Rotation { axis: Axis, qubit: usize, angle: f64 },
    Cnot { control: usize, target: usize },
    /// An arbitrary unitary on the listed qubits (first listed = most significant).
    Custom { unitary: CMatrix, qubits: Vec<usize> },
}

impl Gate {
    pub fn rx(qubit: usize, angle: f64) -> Gate {
        Gate::Rotation { axis: Axis::X, qubit, angle }
    }

    pub fn ry(qubit: usize, angle: f64) -> Gate {
        Gate::Rotation { axis: Axis::Y, qubit, angle }
    }

    pub fn rz(qubit: usize, angle: f64) -> Gate {
        Gate::Rotation { axis: Axis::Z, qubit, angle }
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        Gate::Cnot { control, target }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Rotation { qubit, .. } => vec![*qubit],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Custom { qubits, .. } => qubits.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let qs = self.qubits();
        if let Some(&bad) = qs.iter().find(|&&q| q == 0 || q > N_QUBITS) {
            return Err(Error::InvalidQubit(bad));
        }
        let mut sorted = qs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != qs.len() {
            return Err(Error::OutOfRange(format!("gate acts twice on a qubit: {qs:?}")));
        }
        if let Gate::Custom { unitary, qubits } = self {
            let d = 1usize << qubits.len();
            if unitary.nrows() != d || unitary.ncols() != d {
                return Err(Error::DimensionMismatch { left: unitary.nrows(), right: d });
            }
            let err = linalg::unitarity_error(unitary);
            if err > UNITARY_TOL {
                return Err(Error::NotUnitary(err));
            }
        }
        Ok(())
    }

    /// The gate as an 8x8 unitary on the full register.
    pub fn matrix(&self) -> CMatrix {
        match self {
            Gate::Rotation { axis, qubit, angle } => {
                let u = match axis {
                    Axis::X => pauli::rx(*angle),
                    Axis::Y => pauli::ry(*angle),
                    Axis::Z => pauli::rz(*angle),
                };
                embed(&u, &[*qubit])
            }
            Gate::Cnot { control, target } => {
                let (cb, tb) = (bit_of(*control, N_QUBITS), bit_of(*target, N_QUBITS));
                let mut m = CMatrix::zeros(DIM, DIM);
                for k in 0..DIM {
                    let out = if (k >> cb) & 1 == 1 { k ^ (1 << tb) } else { k };
                    m[(out, k)] = linalg::ONE;
                }
                m
            }
            Gate::Custom { unitary, qubits } => embed(unitary, qubits),
        }
    }
}

/// Lifts a `2^k x 2^k` matrix acting on `qubits` to the full register.
fn embed(u: &CMatrix, qubits: &[usize]) -> CMatrix {
    let k = qubits.len();
    let sub = |idx: usize| -> usize {
        qubits
            .iter()
            .enumerate()
            .fold(0, |acc, (pos, &q)| acc | (((idx >> bit_of(q, N_QUBITS)) & 1) << (k - 1 - pos)))
    };
    let mask: usize = qubits.iter().map(|&q| 1 << bit_of(q, N_QUBITS)).sum();
    CMatrix::from_fn(DIM, DIM, |i, j| {
        if i & !mask == j & !mask {
            u[(sub(i), sub(j))]
        } else {
            ZERO
        }
    })
}

/// An ordered gate list on three qubits; gates apply first to last.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            g.validate()?;
        }
        Ok(Self { gates })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn qubit_count(&self) -> usize {
        N_QUBITS
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count()
    }

    pub fn rotation_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Rotation { .. })).count()
    }

    /// Composite unitary `U = G_n ... G_1`.
    pub fn unitary(&self) -> CMatrix {
        self.gates
            .iter()
            .fold(CMatrix::identity(DIM, DIM), |acc, g| g.matrix() * acc)
    }

    pub fn to_json(&self) -> Result<String> {
        let items = self
            .gates
            .iter()
            .map(GateJson::try_from)
            .collect::<Result<Vec<_>>>()?;
        Ok(serde_json::to_string_pretty(&items)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let items: Vec<GateJson> = serde_json::from_str(text)?;
        Circuit::new(items.into_iter().map(Gate::try_from).collect::<Result<_>>()?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateJson {
    gate: String,
    targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
}

impl TryFrom<&Gate> for GateJson {
    type Error = Error;

    fn try_from(g: &Gate) -> Result<Self> {
        Ok(match g {
            Gate::Rotation { axis, qubit, angle } => GateJson {
                gate: match axis {
                    Axis::X => "rx",
                    Axis::Y => "ry",
                    Axis::Z => "rz",
                }
                .into(),
                targets: vec![*qubit],
                angle: Some(*angle),
            },
            Gate::Cnot { control, target } => GateJson {
                gate: "cnot".into(),
                targets: vec![*control, *target],
                angle: None,
            },
            Gate::Custom { .. } => {
                return Err(Error::Unsupported("custom gates have no JSON form".into()))
            }
        })
    }
}

impl TryFrom<GateJson> for Gate {
    type Error = Error;

    fn try_from(j: GateJson) -> Result<Self> {
        let angle = || j.angle.ok_or_else(|| Error::Parse(format!("gate {} needs an angle", j.gate)));
        let one = || match j.targets.as_slice() {
            [q] => Ok(*q),
            _ => Err(Error::Parse(format!("gate {} takes one target", j.gate))),
        };
        match j.gate.as_str() {
            "rx" => Ok(Gate::rx(one()?, angle()?)),
            "ry" => Ok(Gate::ry(one()?, angle()?)),
            "rz" => Ok(Gate::rz(one()?, angle()?)),
            "cnot" => match j.targets.as_slice() {
                [c, t] => Ok(Gate::cnot(*c, *t)),
                _ => Err(Error::Parse("cnot takes [control, target]".into())),
            },
            other => Err(Error::Parse(format!("unknown gate `{other}`"))),
        }
    }
}

/// Things a circuit can act on.
pub trait CircuitInput: Sized {
    fn evolve(&self, u: &CMatrix) -> Self;
    fn dimension(&self) -> usize;
}

impl CircuitInput for StateVector {
    fn evolve(&self, u: &CMatrix) -> Self {
        self.transformed(u)
    }
    fn dimension(&self) -> usize {
        self.dim()
    }
}

impl CircuitInput for DensityMatrix {
    fn evolve(&self, u: &CMatrix) -> Self {
        self.conjugated(u)
    }
    fn dimension(&self) -> usize {
        self.dim()
    }
}

pub fn apply_circuit<T: CircuitInput>(c: &Circuit, input: &T) -> Result<T> {
    if input.dimension() != DIM {
        return Err(Error::DimensionMismatch { left: input.dimension(), right: DIM });
    }
    Ok(input.evolve(&c.unitary()))
}

/// Three-CNOT circuit taking `|000>` to `|S>` (up to a global phase).
///
/// Qubit 1 is rotated to `sqrt(1/3)|0> + sqrt(2/3)|1>`. A controlled
/// preparation on qubit 2 then gives `|+>` on the `|0>` branch and
/// `(-|0> + sqrt(3)|1>)/2` on the `|1>` branch. The `CNOT(2,3)` copies
/// qubit 2 into qubit 3, and `CNOT(1,3)` followed by `X` on qubit 3 flips
/// qubit 3 on the `|0>` branch only. `R_x(pi) = -iX` contributes only a
/// global phase.
pub fn s_prep_circuit() -> Circuit {
    let theta1 = 2.0 * (1.0 / 3f64.sqrt()).acos();
    Circuit::new(vec![
        Gate::ry(1, theta1),
        Gate::ry(2, PI / 12.0),
        Gate::cnot(1, 2),
        Gate::ry(2, 5.0 * PI / 12.0),
        Gate::cnot(2, 3),
        Gate::cnot(1, 3),
        Gate::rx(3, PI),
    ])
    .expect("static circuit is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceState {
    Ghz,
    W,
    S,
    Basis(usize),
}

impl FromStr for ReferenceState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "ghz" => Ok(ReferenceState::Ghz),
            "w" => Ok(ReferenceState::W),
            "s" => Ok(ReferenceState::S),
            _ => {
                let k = lower
                    .strip_prefix("basis:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k < DIM)
                    .ok_or_else(|| Error::Parse(format!("unknown reference state `{s}`")))?;
                Ok(ReferenceState::Basis(k))
            }
        }
    }
}

impl fmt::Display for ReferenceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceState::Ghz => write!(f, "ghz"),
            ReferenceState::W => write!(f, "w"),
            ReferenceState::S => write!(f, "s"),
            ReferenceState::Basis(k) => write!(f, "basis:{k}"),
        }
    }
}

pub fn reference_state(id: ReferenceState) -> Result<StateVector> {
    match id {
        ReferenceState::Ghz => StateVector::from_real(&[FRAC_1_SQRT_2, 0., 0., 0., 0., 0., 0., FRAC_1_SQRT_2]),
        ReferenceState::W => {
            let a = 1.0 / 3f64.sqrt();
            StateVector::from_real(&[0., a, a, 0., a, 0., 0., 0.])
        }
        ReferenceState::S => {
            let a = 1.0 / 6f64.sqrt();
            StateVector::from_real(&[0., a, a, 0., -a, 0., 0., FRAC_1_SQRT_2])
        }
        ReferenceState::Basis(k) => StateVector::basis(N_QUBITS, k),
    }
}

/// `rho = (1 - epsilon)/8 I + epsilon |core><core|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudopureSpec {
    pub epsilon: f64,
    pub core: StateVector,
}

/// Typical room-temperature polarization scale.
pub const DEFAULT_POLARIZATION: f64 = 1e-5;

impl PseudopureSpec {
    pub fn new(epsilon: f64, core: StateVector) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::OutOfRange(format!("polarization epsilon {epsilon} not in (0, 1]")));
        }
        if core.dim() != DIM {
            return Err(Error::DimensionMismatch { left: core.dim(), right: DIM });
        }
        Ok(Self { epsilon, core })
    }
}

pub fn pseudopure_density(spec: &PseudopureSpec) -> Result<DensityMatrix> {
    let spec = PseudopureSpec::new(spec.epsilon, spec.core.clone())?;
    spec.core.projector().mix(&DensityMatrix::maximally_mixed(N_QUBITS), 1.0 - spec.epsilon)
}

/// Global-phase-insensitive check that two state vectors agree.
pub fn phase_aligned_distance(a: &StateVector, b: &StateVector) -> f64 {
    let ov = a.inner(b);
    if ov.norm() == 0.0 {
        return (a.amplitudes() - b.amplitudes()).norm();
    }
    let phase = ov / ov.norm();
    (a.amplitudes() * phase - b.amplitudes()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{expectation, single_qubit_operator, HermitianOperator};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn ket000() -> StateVector {
        StateVector::basis(3, 0).unwrap()
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(vec![]).unwrap();
        assert_eq!(apply_circuit(&c, &ket000()).unwrap(), ket000());
    }

    #[test]
    fn ghz_from_hadamard_equivalent() {
        // Rz(pi) then Ry(pi/2) is a Hadamard up to phase.
        let c = Circuit::new(vec![
            Gate::rz(1, PI),
            Gate::ry(1, PI / 2.0),
            Gate::cnot(1, 2),
            Gate::cnot(1, 3),
        ])
        .unwrap();
        let out = apply_circuit(&c, &ket000()).unwrap();
        let ghz = reference_state(ReferenceState::Ghz).unwrap();
        assert!((out.overlap(&ghz) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn s_prep_reproduces_target_amplitudes() {
        let c = s_prep_circuit();
        let out = apply_circuit(&c, &ket000()).unwrap();
        let a = 1.0 / 6f64.sqrt();
        let literal = StateVector::from_real(&[0., a, a, 0., -a, 0., 0., FRAC_1_SQRT_2]).unwrap();
        assert!(phase_aligned_distance(&out, &literal) < 1e-10);
        assert!(1.0 - out.overlap(&literal) <= 1e-10);
        assert!(c.cnot_count() <= 4);
        // First angle reproduces the quoted 1.216 pi/2 to the quoted precision.
        if let Gate::Rotation { angle, .. } = c.gates()[0] {
            assert!((angle / (PI / 2.0) - 1.216).abs() < 5e-4);
        }
    }

    #[test]
    fn s_state_single_qubit_z_marginals() {
        // P(qubit = 1) = 1/6 + 1/2 = 2/3 for every qubit, so <Z> = 1/3 - 2/3.
        let s = reference_state(ReferenceState::S).unwrap();
        let brute: Vec<f64> = (1..=3)
            .map(|q| {
                s.amplitudes()
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a.norm_sqr() * if (k >> bit_of(q, 3)) & 1 == 0 { 1.0 } else { -1.0 })
                    .sum()
            })
            .collect();
        let rho = apply_circuit(&s_prep_circuit(), &ket000()).unwrap().projector();
        for q in 1..=3 {
            let z = HermitianOperator::new(single_qubit_operator(&pauli::z(), q, 3), None).unwrap();
            let v = expectation(&rho, &z).unwrap();
            assert!((v - brute[q - 1]).abs() < 1e-12);
            assert!((v + 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_states() {
        assert_eq!(reference_state(ReferenceState::Basis(0)).unwrap(), ket000());
        let w = reference_state(ReferenceState::W).unwrap();
        assert!((w.amplitudes()[4].re - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!("basis:9".parse::<ReferenceState>().is_err());
        assert!("bogus".parse::<ReferenceState>().is_err());
        assert_eq!("basis:3".parse::<ReferenceState>().unwrap(), ReferenceState::Basis(3));
        assert_eq!("GHZ".parse::<ReferenceState>().unwrap(), ReferenceState::Ghz);
    }

    #[test]
    fn s_state_literal_permutation_structure() {
        let s = reference_state(ReferenceState::S).unwrap();
        let amp = |k: usize| s.amplitudes()[k];
        let swap = |k: usize, a: usize, b: usize| {
            let (ba, bb) = (bit_of(a, 3), bit_of(b, 3));
            let (x, y) = ((k >> ba) & 1, (k >> bb) & 1);
            (k & !(1 << ba) & !(1 << bb)) | (y << ba) | (x << bb)
        };
        // 2 <-> 3 swap leaves every amplitude unchanged.
        for k in 0..8 {
            assert_eq!(amp(k), amp(swap(k, 2, 3)));
        }
        // 1 <-> 2 swap exchanges |010> and |100>, which carry opposite signs.
        assert_eq!(amp(swap(2, 1, 2)), -amp(2));
        assert_eq!(amp(swap(4, 1, 2)), -amp(4));
        assert_eq!(amp(swap(1, 1, 2)), amp(1));
        assert_eq!(amp(swap(7, 1, 2)), amp(7));
    }

    #[test]
    fn pseudopure_examples() {
        let core = ket000();
        let pure = pseudopure_density(&PseudopureSpec::new(1.0, core.clone()).unwrap()).unwrap();
        assert!(linalg::max_abs_diff(pure.matrix(), core.projector().matrix()) < 1e-15);

        let rho = pseudopure_density(&PseudopureSpec::new(DEFAULT_POLARIZATION, core.clone()).unwrap()).unwrap();
        let z1 = HermitianOperator::new(single_qubit_operator(&pauli::z(), 1, 3), None).unwrap();
        assert!((expectation(&rho, &z1).unwrap() - 1e-5).abs() < 1e-12);

        assert!(PseudopureSpec::new(0.0, core.clone()).is_err());
        assert!(PseudopureSpec::new(1.5, core).is_err());
    }

    #[test]
    fn pseudopure_fidelity_matches_depolarized_closed_form() {
        let s = reference_state(ReferenceState::S).unwrap();
        let eps = 0.0583;
        let rho = pseudopure_density(&PseudopureSpec::new(eps, s.clone()).unwrap()).unwrap();
        let closed = (1.0 - 7.0 * (1.0 - eps) / 8.0).sqrt();
        let numeric = crate::qstate::state_fidelity(&rho, &s.projector());
        assert!((numeric - closed).abs() < 1e-10);
    }

    #[test]
    fn invalid_gates() {
        assert!(matches!(Circuit::new(vec![Gate::rx(4, 1.0)]), Err(Error::InvalidQubit(4))));
        assert!(Circuit::new(vec![Gate::cnot(2, 2)]).is_err());
        let bad = Gate::Custom { unitary: CMatrix::identity(2, 2) * Complex64::from(2.0), qubits: vec![1] };
        assert!(matches!(Circuit::new(vec![bad]), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = s_prep_circuit();
        let text = c.to_json().unwrap();
        assert!(text.contains("\"gate\": \"cnot\""));
        let back = Circuit::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(Circuit::from_json(r#"[{"gate":"h","targets":[1]}]"#).is_err());
        assert!(Circuit::from_json(r#"[{"gate":"rx","targets":[1]}]"#).is_err());
    }

    fn gate_strategy() -> impl Strategy<Value = Gate> {
        prop_oneof![
            (0usize..3, 1usize..=3, -PI..PI).prop_map(|(a, q, t)| match a {
                0 => Gate::rx(q, t),
                1 => Gate::ry(q, t),
                _ => Gate::rz(q, t),
            }),
            (1usize..=3, 1usize..=2).prop_map(|(c, off)| Gate::cnot(c, (c - 1 + off) % 3 + 1)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn circuits_are_unitary_and_consistent(
            gates in proptest::collection::vec(gate_strategy(), 0..12),
            re in proptest::collection::vec(-1.0f64..1.0, 8),
            im in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let c = Circuit::new(gates).unwrap();
            prop_assert!(linalg::unitarity_error(&c.unitary()) < 1e-9);
            let psi = StateVector::normalized(re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect()).unwrap();
            let via_vec = apply_circuit(&c, &psi).unwrap().projector();
            let via_rho = apply_circuit(&c, &psi.projector()).unwrap();
            prop_assert!(linalg::max_abs_diff(via_vec.matrix(), via_rho.matrix()) < 1e-10);
        }

        #[test]
        fn pseudopure_scales_traceless_expectations(
            vals in proptest::collection::vec(-1.0f64..1.0, 3),
            q in 1usize..=3,
            eps in 1e-6f64..1.0,
        ) {
            let o = single_qubit_operator(&HermitianOperator::bloch([vals[0], vals[1], vals[2]]).matrix().clone(), q, 3);
            let o = HermitianOperator::new(o, None).unwrap();
            let core = reference_state(ReferenceState::S).unwrap();
            let rho = pseudopure_density(&PseudopureSpec::new(eps, core.clone()).unwrap()).unwrap();
            let lhs = expectation(&rho, &o).unwrap();
            let rhs = eps * expectation(&core.projector(), &o).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
