// SPDX-License-Identifier: Apache-2.0

//! Seven-setting state tomography: simulated single-quantum readout and
//! PSD-constrained least-squares reconstruction.
//!
//! After a setting's rotation `U`, each spin `i` is read on its four lines,
//! one per configuration `s` of the other two spins:
//! `a_{i,s} = Tr(U rho U^dagger (|0><1|)_i (x) |s><s|)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{self, pauli, CMatrix};
use crate::qstate::{bit_of, DensityMatrix};
use crate::tolerances::{RANK_REL_TOL, RECONSTRUCT_STEP_TOL};
use crate::{par, Error, Result};

const N: usize = 3;
const DIM: usize = 8;
/// Complex amplitudes per record.
pub const AMPLITUDES: usize = 12;
/// Real parameters of a traceless Hermitian 8x8 matrix.
pub const TRACELESS_DOF: usize = DIM * DIM - 1;

pub const CANONICAL_LABELS: [&str; 7] = ["III", "IIY", "IYY", "YII", "XYX", "XXY", "XXX"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pulse {
    I,
    X,
    Y,
}

/// Per-spin pi/2 pulses applied before readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TomographySetting(pub [Pulse; 3]);

impl TomographySetting {
    pub fn canonical() -> Vec<TomographySetting> {
        CANONICAL_LABELS.iter().map(|l| l.parse().expect("static label")).collect()
    }

    pub fn is_canonical(&self) -> bool {
        CANONICAL_LABELS.contains(&self.to_string().as_str())
    }

    pub fn rotation(&self) -> CMatrix {
        let factors: Vec<CMatrix> = self
            .0
            .iter()
            .map(|p| match p {
                Pulse::I => pauli::identity(),
                Pulse::X => pauli::rx(FRAC_PI_2),
                Pulse::Y => pauli::ry(FRAC_PI_2),
            })
            .collect();
        linalg::kron_all(&factors)
    }
}

impl fmt::Display for TomographySetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.0 {
            let c = match p {
                Pulse::I => 'I',
                Pulse::X => 'X',
                Pulse::Y => 'Y',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for TomographySetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let pulses: Vec<Pulse> = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Pulse::I),
                'X' => Ok(Pulse::X),
                'Y' => Ok(Pulse::Y),
                _ => Err(Error::Parse(format!("bad tomography label `{s}`"))),
            })
            .collect::<Result<_>>()?;
        let arr: [Pulse; 3] = pulses
            .try_into()
            .map_err(|_| Error::Parse(format!("tomography label `{s}` must have 3 letters")))?;
        Ok(TomographySetting(arr))
    }
}

impl Serialize for TomographySetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TomographySetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Readout operators `(|0><1|)_i (x) |s><s|`, in record order.
fn readout_operators() -> Vec<CMatrix> {
    let mut ops = Vec::with_capacity(AMPLITUDES);
    for spin in 1..=N {
        let others: Vec<usize> = (1..=N).filter(|&q| q != spin).collect();
        for s in 0..4usize {
            let mut e = CMatrix::zeros(DIM, DIM);
            for row in 0..DIM {
                let config_ok = others
                    .iter()
                    .enumerate()
                    .all(|(j, &q)| (row >> bit_of(q, N)) & 1 == (s >> (1 - j)) & 1);
                if config_ok && (row >> bit_of(spin, N)) & 1 == 0 {
                    // |0>_i <1|_i: column has the spin bit set.
                    e[(row, row | (1 << bit_of(spin, N)))] = linalg::ONE;
                }
            }
            ops.push(e);
        }
    }
    ops
}

/// `M_j = U^dagger E_j U`, so that `a_j = Tr(M_j rho)`.
fn measurement_operators(setting: &TomographySetting) -> Vec<CMatrix> {
    let u = setting.rotation();
    readout_operators().iter().map(|e| u.adjoint() * e * &u).collect()
}

fn amplitudes_of(ops: &[CMatrix], rho: &CMatrix) -> Vec<Complex64> {
    ops.iter().map(|m| linalg::trace_product(m, rho)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    pub setting: TomographySetting,
    #[serde(with = "complex_pairs")]
    pub amplitudes: Vec<Complex64>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|z| [z.re, z.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.len() != AMPLITUDES {
            return Err(Error::DimensionMismatch { left: self.amplitudes.len(), right: AMPLITUDES });
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::OutOfRange(format!("noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

pub fn records_to_json(records: &[MeasurementRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn records_from_json(text: &str) -> Result<Vec<MeasurementRecord>> {
    let records: Vec<MeasurementRecord> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    records.iter().try_for_each(MeasurementRecord::validate)?;
    Ok(records)
}

/// Exact readout plus i.i.d. Gaussian noise of std `noise_sigma` on every
/// real and imaginary part.
pub fn simulate_readout(rho: &DensityMatrix, setting: &TomographySetting, noise_sigma: f64, seed: u64) -> Result<MeasurementRecord> {
    if rho.dim() != DIM {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: DIM });
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::OutOfRange(format!("noise sigma {noise_sigma}")));
    }
    let mut amplitudes = amplitudes_of(&measurement_operators(setting), rho.matrix());
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::OutOfRange(e.to_string()))?;
        for a in amplitudes.iter_mut() {
            *a += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(MeasurementRecord {
        setting: *setting,
        amplitudes,
        noise_sigma,
        seed: Some(seed),
    })
}

/// One record per setting; per-record seeds are drawn from a generator seeded
/// with `seed`.
pub fn simulate_records(rho: &DensityMatrix, settings: &[TomographySetting], noise_sigma: f64, seed: u64) -> Result<Vec<MeasurementRecord>> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    settings
        .iter()
        .map(|s| simulate_readout(rho, s, noise_sigma, master.random()))
        .collect()
}

/// Mean of records sharing a setting, in first-appearance order. The noise
/// level of an average of `k` records is `sigma / sqrt(k)`.
pub fn average_records(records: &[MeasurementRecord]) -> Vec<MeasurementRecord> {
    let mut groups: Vec<(TomographySetting, Vec<&MeasurementRecord>)> = vec![];
    for r in records {
        match groups.iter_mut().find(|(s, _)| *s == r.setting) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.setting, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(setting, g)| {
            let k = g.len() as f64;
            let amplitudes = (0..AMPLITUDES)
                .map(|j| g.iter().map(|r| r.amplitudes[j]).sum::<Complex64>() / k)
                .collect();
            let sigma = (g.iter().map(|r| r.noise_sigma.powi(2)).sum::<f64>()).sqrt() / k;
            MeasurementRecord {
                setting,
                amplitudes,
                noise_sigma: sigma,
                seed: None,
            }
        })
        .collect()
}

/// Orthonormal Hermitian basis `P / sqrt(8)` over all 64 Pauli strings, identity first.
fn pauli_basis() -> Vec<CMatrix> {
    let singles = [pauli::identity(), pauli::x(), pauli::y(), pauli::z()];
    let norm = Complex64::from(1.0 / (DIM as f64).sqrt());
    let mut out = vec![CMatrix::identity(1, 1)];
    for _ in 0..N {
        out = out.iter().flat_map(|a| singles.iter().map(move |s| a.kronecker(s))).collect();
    }
    out.into_iter().map(|m| m * norm).collect()
}

#[derive(Debug, Clone)]
pub struct SensingMatrix {
    /// Rows: real and imaginary parts of every amplitude of every setting.
    /// Columns: coordinates in the orthonormal Pauli basis, identity first.
    pub matrix: DMatrix<f64>,
    /// Numerical rank on the traceless subspace.
    pub rank: usize,
    /// Rank with the trace functional adjoined as an extra row.
    pub rank_with_trace: usize,
    pub singular_values: Vec<f64>,
}

fn numerical_rank(m: &DMatrix<f64>) -> (usize, Vec<f64>) {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_REL_TOL * top).count();
    (rank, sv)
}

pub fn sensing_matrix(settings: &[TomographySetting]) -> Result<SensingMatrix> {
    if settings.is_empty() {
        return Err(Error::OutOfRange("no tomography settings".into()));
    }
    let basis = pauli_basis();
    let rows = settings.len() * 2 * AMPLITUDES;
    let mut a = DMatrix::<f64>::zeros(rows, basis.len());
    for (si, s) in settings.iter().enumerate() {
        let ops = measurement_operators(s);
        for (col, b) in basis.iter().enumerate() {
            for (j, v) in amplitudes_of(&ops, b).into_iter().enumerate() {
                let r = si * 2 * AMPLITUDES + 2 * j;
                a[(r, col)] = v.re;
                a[(r + 1, col)] = v.im;
            }
        }
    }
    let traceless = a.columns(1, basis.len() - 1).into_owned();
    let (rank, singular_values) = numerical_rank(&traceless);
    let mut with_trace = a.clone().insert_row(rows, 0.0);
    with_trace[(rows, 0)] = (DIM as f64).sqrt();
    let (rank_with_trace, _) = numerical_rank(&with_trace);
    Ok(SensingMatrix {
        matrix: a,
        rank,
        rank_with_trace,
        singular_values,
    })
}

/// Euclidean projection of a Hermitian matrix onto unit-trace PSD matrices.
pub fn project_to_density(m: &CMatrix) -> CMatrix {
    let e = linalg::eigh(m);
    let values = simplex_projection(&e.values);
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for (j, &l) in values.iter().enumerate() {
        if l > 0.0 {
            let v = e.vectors.column(j);
            out += v * v.adjoint() * Complex64::from(l);
        }
    }
    out
}

/// Projection of `v` (sorted descending) onto the probability simplex.
fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in v.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub max_iters: usize,
    /// Stop when `||rho_{k+1} - rho_k||_F` falls below this.
    pub step_tol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            step_tol: RECONSTRUCT_STEP_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho_hat: DensityMatrix,
    /// `||predicted - recorded||_2` over all real and imaginary parts.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Readout model for a fixed list of records.
struct Problem {
    ops: Vec<CMatrix>,
    data: Vec<Complex64>,
    step: f64,
}

impl Problem {
    fn new(records: &[MeasurementRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InformationallyIncomplete { rank: 0, needed: TRACELESS_DOF });
        }
        records.iter().try_for_each(MeasurementRecord::validate)?;
        let settings: Vec<TomographySetting> = records.iter().map(|r| r.setting).collect();
        let sm = sensing_matrix(&settings)?;
        if sm.rank < TRACELESS_DOF {
            return Err(Error::InformationallyIncomplete { rank: sm.rank, needed: TRACELESS_DOF });
        }
        let mut ops = Vec::with_capacity(records.len() * AMPLITUDES);
        let mut data = Vec::with_capacity(records.len() * AMPLITUDES);
        for r in records {
            ops.extend(measurement_operators(&r.setting));
            data.extend(r.amplitudes.iter().copied());
        }
        // The loss is ||A x - b||^2 in orthonormal coordinates, so its gradient
        // is Lipschitz with constant 2 sigma_max(A)^2.
        let smax = sm.singular_values[0];
        Ok(Self {
            ops,
            data,
            step: 1.0 / (2.0 * smax * smax),
        })
    }

    fn residuals(&self, rho: &CMatrix) -> Vec<Complex64> {
        amplitudes_of(&self.ops, rho)
            .into_iter()
            .zip(&self.data)
            .map(|(p, b)| p - b)
            .collect()
    }

    fn residual_norm(&self, rho: &CMatrix) -> f64 {
        self.residuals(rho).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian gradient of `sum |Tr(M_j rho) - b_j|^2`.
    fn gradient(&self, rho: &CMatrix) -> CMatrix {
        let mut g = CMatrix::zeros(DIM, DIM);
        for (m, r) in self.ops.iter().zip(self.residuals(rho)) {
            g += m * r.conj();
        }
        &g + g.adjoint()
    }
}

/// Projected gradient descent on the squared readout residual over unit-trace
/// PSD matrices, started from `I/8`.
pub fn reconstruct(records: &[MeasurementRecord], opts: &ReconstructOptions) -> Result<Reconstruction> {
    let problem = Problem::new(records)?;
    let mut rho = CMatrix::identity(DIM, DIM) * Complex64::from(1.0 / DIM as f64);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let g = problem.gradient(&rho);
        let next = project_to_density(&(&rho - g * Complex64::from(problem.step)));
        let moved = (&next - &rho).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        rho = next;
        if moved < opts.step_tol {
            converged = true;
            break;
        }
    }
    let residual = problem.residual_norm(&rho);
    Ok(Reconstruction {
        rho_hat: DensityMatrix::new(rho)?,
        residual,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Row-major `[re, im]` entries of the estimate.
    pub rho_hat: Vec<Vec<[f64; 2]>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&Reconstruction> for ReconstructionReport {
    fn from(r: &Reconstruction) -> Self {
        let m = r.rho_hat.matrix();
        Self {
            rho_hat: (0..DIM).map(|i| (0..DIM).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

/// Trace distance of the reconstruction to `rho` for each seed, run in parallel.
pub fn monte_carlo_errors(
    rho: &DensityMatrix,
    settings: &[TomographySetting],
    noise_sigma: f64,
    seeds: &[u64],
    opts: &ReconstructOptions,
) -> Result<Vec<f64>> {
    par::map_slice(seeds, |&seed| {
        let records = simulate_records(rho, settings, noise_sigma, seed)?;
        Ok(reconstruct(&records, opts)?.rho_hat.trace_distance(rho))
    })
    .into_iter()
    .collect()
}
