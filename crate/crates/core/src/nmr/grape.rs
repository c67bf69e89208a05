// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant pulse optimization by gradient ascent on
//! `Phi = |Tr(W^dagger U_N ... U_1)|^2 / 64`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hamiltonian, SpinSystem, DIM, N_SPINS};
use crate::linalg::{self, pauli, CMatrix, ZERO};
use crate::qstate::single_qubit_operator;
use crate::tolerances::UNITARY_TOL;
use crate::{par, Error, Result};

const CHANNELS: usize = 2 * N_SPINS;
const CSV_HEADER: [&str; CHANNELS] = ["x1", "y1", "x2", "y2", "x3", "y3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Exact derivative of each segment propagator.
    #[default]
    Exact,
    /// `dU_k ~ -i dt C U_k`, accurate to first order in the segment length.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrapeProblem {
    pub target: CMatrix,
    pub segments: usize,
    /// Seconds.
    pub total_duration: f64,
    /// Bound on each x/y amplitude, rad/s.
    pub max_amplitude: f64,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once `Phi` reaches this.
    pub target_fidelity: f64,
    pub gradient: GradientMode,
    /// Backtracking keeps the history non-decreasing; without it every step is taken.
    pub line_search: bool,
    /// Random initial amplitudes are uniform in `+/- init_scale * max_amplitude`.
    pub init_scale: f64,
    /// Overrides the random start, rad/s per segment.
    pub initial_controls: Option<Vec<[f64; CHANNELS]>>,
}

impl GrapeProblem {
    pub fn new(target: CMatrix, segments: usize, total_duration: f64, max_amplitude: f64, seed: u64) -> Self {
        Self {
            target,
            segments,
            total_duration,
            max_amplitude,
            seed,
            max_iters: 2000,
            target_fidelity: 0.99,
            gradient: GradientMode::Exact,
            line_search: true,
            init_scale: 0.5,
            initial_controls: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.shape() != (DIM, DIM) {
            return Err(Error::DimensionMismatch { left: self.target.nrows(), right: DIM });
        }
        let e = linalg::unitarity_error(&self.target);
        if e > UNITARY_TOL {
            return Err(Error::NotUnitary(e));
        }
        if self.segments == 0 {
            return Err(Error::OutOfRange("segments must be at least 1".into()));
        }
        if !(self.total_duration > 0.0 && self.total_duration.is_finite()) {
            return Err(Error::OutOfRange("total duration must be positive".into()));
        }
        if !(self.max_amplitude > 0.0 && self.max_amplitude.is_finite()) {
            return Err(Error::OutOfRange("max amplitude must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.init_scale) {
            return Err(Error::OutOfRange("init_scale must be in [0, 1]".into()));
        }
        if let Some(c) = &self.initial_controls {
            if c.len() != self.segments {
                return Err(Error::DimensionMismatch { left: c.len(), right: self.segments });
            }
            if c.iter().flatten().any(|v| !(v.abs() <= self.max_amplitude)) {
                return Err(Error::OutOfRange("initial control exceeds max amplitude".into()));
            }
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.total_duration / self.segments as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrapeResult {
    /// rad/s, one row per segment: `x1, y1, x2, y2, x3, y3`.
    pub controls: Vec<[f64; CHANNELS]>,
    /// `Phi` of the accepted iterate at each iteration, starting with the initial guess.
    pub fidelity_history: Vec<f64>,
    pub fidelity: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

/// Control operators `I_x`, `I_y` on each spin, in channel order.
fn control_operators() -> Vec<CMatrix> {
    let half = Complex64::from(0.5);
    (1..=N_SPINS)
        .flat_map(|s| {
            [
                single_qubit_operator(&(pauli::x() * half), s, N_SPINS),
                single_qubit_operator(&(pauli::y() * half), s, N_SPINS),
            ]
        })
        .collect()
}

/// Precomputed pieces shared by every evaluation of one problem.
struct Model {
    h0: CMatrix,
    controls: Vec<CMatrix>,
    target_adj: CMatrix,
    dt: f64,
    scale: f64,
    mode: GradientMode,
}

struct Segment {
    u: CMatrix,
    eig: linalg::Eigh,
}

impl Model {
    fn new(p: &GrapeProblem, sys: &SpinSystem) -> Self {
        Self {
            h0: hamiltonian(sys),
            controls: control_operators(),
            target_adj: p.target.adjoint(),
            dt: p.dt(),
            scale: p.max_amplitude,
            mode: p.gradient,
        }
    }

    /// `x` holds amplitudes normalized by `max_amplitude`.
    fn segment(&self, x: &[f64]) -> Segment {
        let mut h = self.h0.clone();
        for (c, &v) in self.controls.iter().zip(x) {
            h += c * Complex64::from(v * self.scale);
        }
        let eig = linalg::eigh(&h);
        let dt = self.dt;
        let u = eig.map(|l| Complex64::from_polar(1.0, -l * dt));
        Segment { u, eig }
    }

    fn propagator(&self, x: &[f64]) -> CMatrix {
        x.chunks(CHANNELS)
            .fold(CMatrix::identity(DIM, DIM), |acc, seg| self.segment(seg).u * acc)
    }

    fn fidelity(&self, x: &[f64]) -> f64 {
        let g = linalg::trace_product(&self.target_adj, &self.propagator(x));
        g.norm_sqr() / (DIM * DIM) as f64
    }

    /// `Phi` and its gradient with respect to the normalized controls.
    fn fidelity_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let segs: Vec<Segment> = x.chunks(CHANNELS).map(|s| self.segment(s)).collect();
        let n = segs.len();
        let id = CMatrix::identity(DIM, DIM);
        // forward[k] = U_k ... U_1 (forward[0] = I); backward[k] = U_N ... U_{k+1}.
        let mut forward = Vec::with_capacity(n + 1);
        forward.push(id.clone());
        for s in &segs {
            let next = &s.u * forward.last().expect("non-empty");
            forward.push(next);
        }
        let mut backward = vec![id; n + 1];
        for k in (0..n).rev() {
            backward[k] = &backward[k + 1] * &segs[k].u;
        }
        let g = linalg::trace_product(&self.target_adj, &forward[n]);
        let phi = g.norm_sqr() / (DIM * DIM) as f64;

        let mut grad = vec![0.0; x.len()];
        for (k, seg) in segs.iter().enumerate() {
            // d g = Tr(M dU_k) with M = (U_{k-1}..U_1) W^dagger (U_N..U_{k+1}).
            let m = &forward[k] * &self.target_adj * &backward[k + 1];
            let dg: Vec<Complex64> = match self.mode {
                GradientMode::Exact => self.exact_directional(&m, seg),
                GradientMode::FirstOrder => {
                    let um = &seg.u * &m;
                    self.controls
                        .iter()
                        .map(|c| linalg::trace_product(&um, c) * Complex64::new(0.0, -self.dt))
                        .collect()
                }
            };
            for (j, d) in dg.into_iter().enumerate() {
                grad[k * CHANNELS + j] = 2.0 * (g.conj() * d).re / (DIM * DIM) as f64 * self.scale;
            }
        }
        (phi, grad)
    }

    /// `Tr(M D exp(-i H dt)[C])` for each control `C`, using the divided
    /// differences of `f(l) = exp(-i l dt)` in the eigenbasis of `H`.
    fn exact_directional(&self, m: &CMatrix, seg: &Segment) -> Vec<Complex64> {
        let v = &seg.eig.vectors;
        let l = &seg.eig.values;
        let dt = self.dt;
        let gamma = CMatrix::from_fn(DIM, DIM, |a, b| {
            let half = 0.5 * dt * (l[a] - l[b]);
            let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
            Complex64::new(0.0, -dt) * Complex64::from_polar(1.0, -0.5 * dt * (l[a] + l[b])) * sinc
        });
        let m_eig = v.adjoint() * m * v;
        self.controls
            .iter()
            .map(|c| {
                let c_eig = v.adjoint() * c * v;
                let mut acc = ZERO;
                for a in 0..DIM {
                    for b in 0..DIM {
                        acc += m_eig[(b, a)] * gamma[(a, b)] * c_eig[(a, b)];
                    }
                }
                acc
            })
            .collect()
    }
}

fn initial_point(p: &GrapeProblem) -> Vec<f64> {
    match &p.initial_controls {
        Some(c) => c.iter().flatten().map(|v| v / p.max_amplitude).collect(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            (0..p.segments * CHANNELS)
                .map(|_| if p.init_scale > 0.0 { rng.random_range(-p.init_scale..=p.init_scale) } else { 0.0 })
                .collect()
        }
    }
}

fn to_controls(x: &[f64], scale: f64) -> Vec<[f64; CHANNELS]> {
    x.chunks(CHANNELS)
        .map(|c| std::array::from_fn(|j| c[j] * scale))
        .collect()
}

/// `Phi` for explicit controls in rad/s.
pub fn grape_fidelity(p: &GrapeProblem, sys: &SpinSystem, controls: &[[f64; CHANNELS]]) -> Result<f64> {
    p.validate()?;
    if controls.len() != p.segments {
        return Err(Error::DimensionMismatch { left: controls.len(), right: p.segments });
    }
    let x: Vec<f64> = controls.iter().flatten().map(|v| v / p.max_amplitude).collect();
    Ok(Model::new(p, sys).fidelity(&x))
}

/// Propagator `U_N ... U_1` for explicit controls in rad/s.
pub fn grape_propagator(p: &GrapeProblem, sys: &SpinSystem, controls: &[[f64; CHANNELS]]) -> Result<CMatrix> {
    p.validate()?;
    let x: Vec<f64> = controls.iter().flatten().map(|v| v / p.max_amplitude).collect();
    Ok(Model::new(p, sys).propagator(&x))
}

/// Gradient of `Phi` with respect to amplitudes normalized by `max_amplitude`.
pub fn grape_gradient(p: &GrapeProblem, sys: &SpinSystem, controls: &[[f64; CHANNELS]]) -> Result<(f64, Vec<f64>)> {
    p.validate()?;
    let x: Vec<f64> = controls.iter().flatten().map(|v| v / p.max_amplitude).collect();
    Ok(Model::new(p, sys).fidelity_and_gradient(&x))
}

const MIN_STEP: f64 = 1e-12;

/// Projected gradient ascent inside the amplitude box, with an adaptive step.
///
/// Running out of iterations is not an error: the best controls are returned
/// with `converged = false`.
pub fn grape_optimize(p: &GrapeProblem, sys: &SpinSystem) -> Result<GrapeResult> {
    p.validate()?;
    sys.validate()?;
    let model = Model::new(p, sys);
    let mut x = initial_point(p);
    let (mut phi, mut grad) = model.fidelity_and_gradient(&x);
    let mut history = vec![phi];
    let mut step = 1.0;
    let mut iterations = 0;
    while phi < p.target_fidelity && iterations < p.max_iters {
        iterations += 1;
        let mut accepted = false;
        while step > MIN_STEP {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| (v + step * g).clamp(-1.0, 1.0)).collect();
            let (tphi, tgrad) = model.fidelity_and_gradient(&trial);
            if !p.line_search || tphi >= phi {
                x = trial;
                phi = tphi;
                grad = tgrad;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(phi);
        if !accepted {
            break;
        }
    }
    Ok(GrapeResult {
        controls: to_controls(&x, p.max_amplitude),
        fidelity: phi,
        converged: phi >= p.target_fidelity,
        fidelity_history: history,
        iterations,
        seed: p.seed,
    })
}

/// Independent restarts over `seeds`; the best final fidelity wins, ties going
/// to the earliest seed.
pub fn grape_multistart(p: &GrapeProblem, sys: &SpinSystem, seeds: &[u64]) -> Result<GrapeResult> {
    if seeds.is_empty() {
        return Err(Error::OutOfRange("no seeds".into()));
    }
    let runs = par::map_slice(seeds, |&seed| {
        let q = GrapeProblem { seed, ..p.clone() };
        grape_optimize(&q, sys)
    });
    let mut best: Option<GrapeResult> = None;
    for r in runs {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.fidelity > b.fidelity) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one seed"))
}

pub fn write_controls_csv<W: std::io::Write>(controls: &[[f64; CHANNELS]], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for row in controls {
        wr.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_controls_csv<R: std::io::Read>(r: R) -> Result<Vec<[f64; CHANNELS]>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Parse(format!("controls header must be {}", CSV_HEADER.join(","))));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let mut row = [0.0; CHANNELS];
            for (j, f) in rec.iter().enumerate() {
                row[j] = f.trim().parse().map_err(|_| Error::Parse(format!("bad control value `{f}`")))?;
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::Gate;

    fn cnot12() -> CMatrix {
        Gate::cnot(1, 2).matrix()
    }

    fn small_problem(seed: u64) -> GrapeProblem {
        let mut p = GrapeProblem::new(cnot12(), 8, 1.5 / super::super::DEFAULT_J12, 2.0 * std::f64::consts::PI * 200.0, seed);
        p.init_scale = 1.0;
        p
    }

    #[test]
    fn identity_target_at_rest() {
        let mut p = GrapeProblem::new(CMatrix::identity(8, 8), 4, 1e-3, 1000.0, 0);
        p.initial_controls = Some(vec![[0.0; 6]; 4]);
        let r = grape_optimize(&p, &SpinSystem::zero()).unwrap();
        assert!((r.fidelity_history[0] - 1.0).abs() < 1e-14);
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn propagator_is_product_of_segments() {
        let p = small_problem(3);
        let sys = SpinSystem::default();
        let controls = to_controls(&initial_point(&p), p.max_amplitude);
        let u = grape_propagator(&p, &sys, &controls).unwrap();
        let dt = p.dt();
        let ops = control_operators();
        let mut oracle = CMatrix::identity(8, 8);
        for row in &controls {
            let mut h = hamiltonian(&sys);
            for (c, v) in ops.iter().zip(row) {
                h += c * Complex64::from(*v);
            }
            // Independent exponential: scaling and squaring of a Taylor series.
            oracle = taylor_expm(&(h * Complex64::new(0.0, -dt))) * oracle;
        }
        assert!(linalg::max_abs_diff(&u, &oracle) < 1e-10);
    }

    fn taylor_expm(a: &CMatrix) -> CMatrix {
        let norm: f64 = a.iter().map(|z| z.norm()).sum();
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scaled = a * Complex64::from(0.5f64.powi(squarings));
        let mut term = CMatrix::identity(8, 8);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled * Complex64::from(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let sys = SpinSystem::default();
        for seed in 0..10 {
            let p = small_problem(seed);
            let model = Model::new(&p, &sys);
            let x = initial_point(&p);
            let (_, grad) = model.fidelity_and_gradient(&x);
            let h = 1e-6;
            let fd: Vec<f64> = (0..x.len())
                .map(|i| {
                    let mut a = x.clone();
                    let mut b = x.clone();
                    a[i] += h;
                    b[i] -= h;
                    (model.fidelity(&a) - model.fidelity(&b)) / (2.0 * h)
                })
                .collect();
            let diff: f64 = grad.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
            assert!(diff / norm <= 1e-4, "seed {seed}: {}", diff / norm);
        }
    }

    #[test]
    fn first_order_gradient_error_shrinks_with_segment_length() {
        // The first-order error is O(dt): refining the same pulse shape by a
        // factor of 4 should cut the relative error by roughly that factor.
        let sys = SpinSystem::default();
        let errs: Vec<f64> = [8usize, 32]
            .iter()
            .map(|&n| {
                let mut p = small_problem(1);
                p.segments = n;
                let coarse = initial_point(&small_problem(1));
                let x: Vec<f64> = (0..n * CHANNELS).map(|i| coarse[(i / CHANNELS) * 8 / n * CHANNELS + i % CHANNELS]).collect();
                let exact = Model::new(&p, &sys).fidelity_and_gradient(&x).1;
                p.gradient = GradientMode::FirstOrder;
                let approx = Model::new(&p, &sys).fidelity_and_gradient(&x).1;
                let d: f64 = exact.iter().zip(&approx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                d / exact.iter().map(|a| a * a).sum::<f64>().sqrt()
            })
            .collect();
        assert!(errs[1] < errs[0] / 2.0, "{errs:?}");
    }

    #[test]
    fn history_is_monotone_with_line_search() {
        let mut p = small_problem(7);
        p.max_iters = 60;
        let r = grape_optimize(&p, &SpinSystem::default()).unwrap();
        assert!(r.fidelity_history.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.controls.iter().flatten().all(|v| v.abs() <= p.max_amplitude));
        assert!(r.fidelity > r.fidelity_history[0]);
    }

    #[test]
    fn deterministic_and_multistart() {
        let mut p = small_problem(11);
        p.max_iters = 20;
        let sys = SpinSystem::default();
        let a = grape_optimize(&p, &sys).unwrap();
        let b = grape_optimize(&p, &sys).unwrap();
        assert_eq!(a, b);
        let best = grape_multistart(&p, &sys, &[11, 12, 13]).unwrap();
        assert!(best.fidelity >= a.fidelity);
    }

    #[test]
    fn controls_csv_round_trip() {
        let rows = vec![[1.0, -2.5, 3.0, 0.0, 1e-3, 7.25]; 3];
        let mut buf = Vec::new();
        write_controls_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,y1,x2,y2,x3,y3\n"));
        assert_eq!(read_controls_csv(text.as_bytes()).unwrap(), rows);
        assert!(read_controls_csv("1,2,3,4,5,6\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_bad_problems() {
        let sys = SpinSystem::default();
        let mut p = small_problem(0);
        p.segments = 0;
        assert!(grape_optimize(&p, &sys).is_err());
        let mut p = small_problem(0);
        p.target = CMatrix::identity(8, 8) * Complex64::from(2.0);
        assert!(grape_optimize(&p, &sys).is_err());
    }
}
