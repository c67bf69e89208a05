// SPDX-License-Identifier: Apache-2.0

//! Parametric CPTP channels applied to a prepared state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, pauli, CMatrix};
use crate::qstate::{fidelity_with, single_qubit_operator, DensityMatrix, FidelityConvention, StateVector};
use crate::tolerances::{CALIBRATION_TOL, UNITARY_TOL};
use crate::{Error, Result};

const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseChannel {
    /// `(1 - p) rho + p I/d`.
    Depolarizing { p: f64 },
    /// Independent phase flips: qubit `i` gets `Z` with probability `q[i]/2`.
    Dephasing { q: [f64; 3] },
    /// Applied left to right.
    Composite { channels: Vec<NoiseChannel> },
}

/// One-parameter families used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Depolarizing,
    /// The same `q` on every qubit.
    UniformDephasing,
}

impl ChannelKind {
    pub fn channel(self, parameter: f64) -> Result<NoiseChannel> {
        match self {
            ChannelKind::Depolarizing => NoiseChannel::depolarizing(parameter),
            ChannelKind::UniformDephasing => NoiseChannel::dephasing([parameter; 3]),
        }
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("{name} = {v} not in [0, 1]")))
    }
}

impl NoiseChannel {
    pub fn identity() -> Self {
        NoiseChannel::Composite { channels: vec![] }
    }

    pub fn depolarizing(p: f64) -> Result<Self> {
        Self::checked(NoiseChannel::Depolarizing { p })
    }

    pub fn dephasing(q: [f64; 3]) -> Result<Self> {
        Self::checked(NoiseChannel::Dephasing { q })
    }

    pub fn composite(channels: Vec<NoiseChannel>) -> Result<Self> {
        Self::checked(NoiseChannel::Composite { channels })
    }

    fn checked(ch: NoiseChannel) -> Result<Self> {
        ch.validate()?;
        Ok(ch)
    }

    /// Parameter ranges, then Kraus completeness `sum K^dagger K = I`.
    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        let err = self.completeness_error(3);
        if err > UNITARY_TOL {
            return Err(Error::NotUnitary(err));
        }
        Ok(())
    }

    fn validate_ranges(&self) -> Result<()> {
        match self {
            NoiseChannel::Depolarizing { p } => check_probability("p", *p),
            NoiseChannel::Dephasing { q } => q.iter().try_for_each(|&v| check_probability("q", v)),
            NoiseChannel::Composite { channels } => channels.iter().try_for_each(Self::validate_ranges),
        }
    }

    /// Kraus operators on `n_qubits` qubits (dephasing needs all three).
    pub fn kraus_operators(&self, n_qubits: usize) -> Vec<CMatrix> {
        let d = 1usize << n_qubits;
        match self {
            NoiseChannel::Depolarizing { p } => {
                let paulis = pauli_basis(n_qubits);
                let d2 = (d * d) as f64;
                paulis
                    .into_iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let w = if k == 0 { 1.0 - p + p / d2 } else { p / d2 };
                        m * Complex64::from(w.sqrt())
                    })
                    .collect()
            }
            NoiseChannel::Dephasing { q } => {
                let mut ops = vec![CMatrix::identity(d, d)];
                for (i, &qi) in q.iter().enumerate().take(n_qubits) {
                    let z = single_qubit_operator(&pauli::z(), i + 1, n_qubits);
                    let keep = Complex64::from((1.0 - qi / 2.0).sqrt());
                    let flip = Complex64::from((qi / 2.0).sqrt());
                    ops = ops
                        .into_iter()
                        .flat_map(|k| [&k * keep, &z * &k * flip])
                        .collect();
                }
                ops
            }
            NoiseChannel::Composite { channels } => {
                let mut ops = vec![CMatrix::identity(d, d)];
                for ch in channels {
                    let next = ch.kraus_operators(n_qubits);
                    ops = next.iter().flat_map(|k| ops.iter().map(move |prev| k * prev)).collect();
                }
                ops
            }
        }
    }

    pub fn completeness_error(&self, n_qubits: usize) -> f64 {
        let d = 1usize << n_qubits;
        let sum = self
            .kraus_operators(n_qubits)
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        linalg::max_abs_diff(&sum, &CMatrix::identity(d, d))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.validate_ranges()?;
        match self {
            NoiseChannel::Depolarizing { p } => rho.mix(&DensityMatrix::maximally_mixed(rho.n_qubits()), *p),
            NoiseChannel::Dephasing { q } => {
                if rho.n_qubits() != 3 {
                    return Err(Error::DimensionMismatch { left: rho.dim(), right: 8 });
                }
                // Each qubit's dephasing scales coherences across that qubit by 1 - q.
                let n = rho.n_qubits();
                let m = rho.matrix();
                let out = CMatrix::from_fn(rho.dim(), rho.dim(), |r, c| {
                    let mut scale = 1.0;
                    for (i, &qi) in q.iter().enumerate() {
                        let bit = crate::qstate::bit_of(i + 1, n);
                        if (r >> bit) & 1 != (c >> bit) & 1 {
                            scale *= 1.0 - qi;
                        }
                    }
                    m[(r, c)] * scale
                });
                Ok(DensityMatrix::from_trusted(out))
            }
            NoiseChannel::Composite { channels } => {
                let mut out = rho.clone();
                for ch in channels {
                    out = ch.apply(&out)?;
                }
                Ok(out)
            }
        }
    }
}

/// All `4^n` Pauli strings, identity first.
fn pauli_basis(n_qubits: usize) -> Vec<CMatrix> {
    let singles = [pauli::identity(), pauli::x(), pauli::y(), pauli::z()];
    let mut out = vec![CMatrix::identity(1, 1)];
    for _ in 0..n_qubits {
        out = out.iter().flat_map(|a| singles.iter().map(move |s| a.kronecker(s))).collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kind: ChannelKind,
    pub convention: FidelityConvention,
    pub target: f64,
    pub parameter: f64,
    pub achieved: f64,
    pub iterations: usize,
}

/// Fidelity of the noisy core state to the core, as a function of the parameter.
pub fn fidelity_after(core: &StateVector, kind: ChannelKind, parameter: f64, convention: FidelityConvention) -> Result<f64> {
    let pure = core.projector();
    let noisy = kind.channel(parameter)?.apply(&pure)?;
    Ok(fidelity_with(convention, &pure, &noisy))
}

/// Bisection on the channel parameter until the fidelity is within 1e-6 of `target`.
pub fn calibrate_to_fidelity(
    target: f64,
    core: &StateVector,
    kind: ChannelKind,
    convention: FidelityConvention,
) -> Result<Calibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::OutOfRange(format!("target fidelity {target} not in (0, 1]")));
    }
    let f = |x: f64| fidelity_after(core, kind, x, convention);
    let done = |parameter, achieved, iterations| Calibration {
        kind,
        convention,
        target,
        parameter,
        achieved,
        iterations,
    };
    let top = f(0.0)?;
    if (top - target).abs() <= CALIBRATION_TOL {
        return Ok(done(0.0, top, 0));
    }
    let floor = f(1.0)?;
    if target < floor - CALIBRATION_TOL {
        return Err(Error::Unreachable(format!(
            "fidelity {target} below the family minimum {floor:.6}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for it in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if (v - target).abs() <= CALIBRATION_TOL {
            return Ok(done(mid, v, it));
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence(format!("calibration to fidelity {target}")))
}
