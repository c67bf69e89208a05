// SPDX-License-Identifier: Apache-2.0

//! Three-party, two-setting, two-outcome Bell functionals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuits::{pseudopure_density, PseudopureSpec};
use crate::linalg::{self, pauli, CMatrix};
use crate::qstate::{self, DensityMatrix, HermitianOperator};
use crate::tolerances::UNITARY_TOL;
use crate::{par, Error, Result};

const PARTIES: [char; 3] = ['A', 'B', 'C'];

/// Which setting (0 or 1) each party measures; `None` means the party is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Correlator(pub [Option<u8>; 3]);

impl Correlator {
    pub fn new(a: Option<u8>, b: Option<u8>, c: Option<u8>) -> Result<Self> {
        let s = [a, b, c];
        if s.iter().all(Option::is_none) {
            return Err(Error::Parse("correlator with no parties".into()));
        }
        if s.iter().flatten().any(|&k| k > 1) {
            return Err(Error::Parse("setting index must be 0 or 1".into()));
        }
        Ok(Correlator(s))
    }
}

impl fmt::Display for Correlator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .zip(PARTIES)
            .filter_map(|(s, p)| s.map(|k| format!("{p}{k}")))
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

impl FromStr for Correlator {
    type Err = Error;

    /// Accepts `A0*B1*C1`, `A_0*C_1`, and so on; each party at most once.
    fn from_str(s: &str) -> Result<Self> {
        let mut settings = [None; 3];
        for factor in s.split('*') {
            let factor = factor.trim();
            let mut chars = factor.chars();
            let party = chars.next().ok_or_else(|| Error::Parse(format!("empty factor in `{s}`")))?;
            let idx = PARTIES
                .iter()
                .position(|&p| p == party)
                .ok_or_else(|| Error::Parse(format!("unknown party `{party}` in `{s}`")))?;
            let rest = chars.as_str();
            let digit = rest.strip_prefix('_').unwrap_or(rest);
            let k = match digit {
                "0" => 0,
                "1" => 1,
                _ => return Err(Error::Parse(format!("bad setting label `{factor}`"))),
            };
            if settings[idx].replace(k).is_some() {
                return Err(Error::Parse(format!("party {party} repeated in `{s}`")));
            }
        }
        Correlator::new(settings[0], settings[1], settings[2])
    }
}

/// Integer-weighted sum of correlators with its local (classical) bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BellFunctional {
    pub name: String,
    pub terms: BTreeMap<Correlator, i64>,
    pub classical_bound: f64,
}

impl BellFunctional {
    pub fn new(name: impl Into<String>, terms: BTreeMap<Correlator, i64>, classical_bound: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Parse("functional has no terms".into()));
        }
        Ok(Self {
            name: name.into(),
            terms,
            classical_bound,
        })
    }

    pub fn coefficient(&self, c: &str) -> Option<i64> {
        self.terms.get(&c.parse().ok()?).copied()
    }

    /// Text form: optional `name <text>`, one `coeff label` line per term, and
    /// a `bound <value>` line. `#` starts a comment.
    pub fn to_text(&self) -> String {
        let mut out = format!("name {}\n", self.name);
        for (c, k) in &self.terms {
            out.push_str(&format!("{k:+} {c}\n"));
        }
        out.push_str(&format!("bound {}\n", self.classical_bound));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut bound = None;
        let mut terms = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse(format!("line {}: {msg}: `{raw}`", lineno + 1));
            let (head, rest) = line.split_once(char::is_whitespace).ok_or_else(|| bad("expected two fields"))?;
            let rest = rest.trim();
            match head {
                "name" => name = rest.to_string(),
                "bound" => bound = Some(rest.parse::<f64>().map_err(|_| bad("bad bound"))?),
                _ => {
                    let coeff: i64 = head.parse().map_err(|_| bad("bad coefficient"))?;
                    let c: Correlator = rest.parse()?;
                    if terms.insert(c, coeff).is_some() {
                        return Err(bad("duplicate correlator"));
                    }
                }
            }
        }
        let bound = bound.ok_or_else(|| Error::Parse("missing `bound` line".into()))?;
        Self::new(name, terms, bound)
    }
}

/// The 13-term tight inequality maximally violated by `|S>`.
pub fn t26() -> BellFunctional {
    let table: [(&str, i64); 13] = [
        ("A0", 1),
        ("B0", 1),
        ("A0*B0", 1),
        ("A1*B1", 2),
        ("C0", 1),
        ("A0*C0", 1),
        ("B0*C0", 1),
        ("A0*B0*C0", -1),
        ("A1*B1*C0", -2),
        ("A1*C1", 2),
        ("A1*B0*C1", -2),
        ("B1*C1", -2),
        ("A0*B1*C1", 2),
    ];
    let terms = table.iter().map(|&(c, k)| (c.parse().expect("static label"), k)).collect();
    BellFunctional::new("T26", terms, 5.0).expect("non-empty")
}

/// Six dichotomous single-qubit observables, `[A0, A1, B0, B1, C0, C1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSettings {
    observables: [HermitianOperator; 6],
}

impl MeasurementSettings {
    pub fn new(observables: [HermitianOperator; 6]) -> Result<Self> {
        for o in &observables {
            if o.dim() != 2 {
                return Err(Error::DimensionMismatch { left: o.dim(), right: 2 });
            }
            let e = o.dichotomy_error();
            if e > UNITARY_TOL {
                return Err(Error::NotDichotomous(e));
            }
        }
        Ok(Self { observables })
    }

    /// `sigma_z` for setting 0 and `sigma_x` for setting 1 on every party.
    pub fn maximal() -> Self {
        let z = HermitianOperator::sigma_z;
        let x = HermitianOperator::sigma_x;
        Self {
            observables: [z(), x(), z(), x(), z(), x()],
        }
    }

    pub fn get(&self, party: usize, which: usize) -> &HermitianOperator {
        &self.observables[2 * party + which]
    }

    /// Copy with one observable replaced. `party` is 0, 1, 2 for A, B, C.
    pub fn replaced(&self, party: usize, which: usize, o: HermitianOperator) -> Result<Self> {
        if party > 2 || which > 1 {
            return Err(Error::OutOfRange(format!("setting ({party}, {which})")));
        }
        let mut obs = self.observables.clone();
        obs[2 * party + which] = o;
        Self::new(obs)
    }

    pub fn observables(&self) -> &[HermitianOperator; 6] {
        &self.observables
    }
}

fn correlator_operator(c: &Correlator, m: &MeasurementSettings) -> CMatrix {
    let factors: Vec<CMatrix> = c
        .0
        .iter()
        .enumerate()
        .map(|(p, s)| match s {
            Some(k) => m.get(p, *k as usize).matrix().clone(),
            None => pauli::identity(),
        })
        .collect();
    linalg::kron_all(&factors)
}

/// The Bell operator `sum coeff * O_a x O_b x O_c`.
pub fn bell_operator(f: &BellFunctional, m: &MeasurementSettings) -> HermitianOperator {
    let mut acc = CMatrix::zeros(8, 8);
    for (c, &k) in &f.terms {
        acc += correlator_operator(c, m) * Complex64::from(k as f64);
    }
    HermitianOperator::from_trusted(acc, Some(f.name.clone()))
}

/// Quantum value `Tr(rho B)` of the functional under the given settings.
/// Dichotomy of the settings is checked when they are constructed.
pub fn evaluate(f: &BellFunctional, rho: &DensityMatrix, m: &MeasurementSettings) -> Result<f64> {
    if rho.dim() != 8 {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: 8 });
    }
    qstate::expectation(rho, &bell_operator(f, m))
}

/// Deterministic local strategy: bit `2p + k` set means party `p`'s setting `k`
/// outputs -1.
pub type Strategy = u8;

pub fn strategy_value(f: &BellFunctional, s: Strategy) -> i64 {
    let out = |p: usize, k: u8| if s >> (2 * p + k as usize) & 1 == 1 { -1 } else { 1 };
    f.terms
        .iter()
        .map(|(c, &coeff)| {
            c.0.iter()
                .enumerate()
                .filter_map(|(p, k)| k.map(|k| out(p, k)))
                .product::<i64>()
                * coeff
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalBound {
    pub bound: i64,
    /// All maximizing strategies, ascending.
    pub argmax: Vec<Strategy>,
}

/// Maximum over all 64 deterministic local strategies.
pub fn classical_bound_bruteforce(f: &BellFunctional) -> ClassicalBound {
    let values = par::map_range(64, |s| strategy_value(f, s as Strategy));
    let bound = *values.iter().max().expect("64 strategies");
    let argmax = (0..64u8).filter(|&s| values[s as usize] == bound).collect();
    ClassicalBound { bound, argmax }
}

/// `cos(theta) sigma_z + sin(theta) sigma_x`.
pub fn xz_observable(theta: f64) -> HermitianOperator {
    HermitianOperator::bloch([theta.sin(), 0.0, theta.cos()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta_rad: f64,
    pub t26_value: f64,
}

/// Replace one of the six observables by [`xz_observable`] over a grid of
/// angles and evaluate the functional at each.
pub fn incompatibility_sweep(
    f: &BellFunctional,
    rho: &DensityMatrix,
    base: &MeasurementSettings,
    party: usize,
    which: usize,
    thetas: &[f64],
) -> Result<Vec<SweepPoint>> {
    par::map_slice(thetas, |&theta| {
        let m = base.replaced(party, which, xz_observable(theta))?;
        Ok(SweepPoint {
            theta_rad: theta,
            t26_value: evaluate(f, rho, &m)?,
        })
    })
    .into_iter()
    .collect()
}

/// `n` evenly spaced angles from `lo` to `hi` inclusive.
pub fn angle_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn write_sweep_csv<W: std::io::Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpsValue {
    /// Value on the full pseudopure density matrix.
    pub raw: f64,
    /// Value on the pure core state.
    pub renormalized: f64,
}

pub fn pps_scaled_evaluate(f: &BellFunctional, spec: &PseudopureSpec, m: &MeasurementSettings) -> Result<PpsValue> {
    Ok(PpsValue {
        raw: evaluate(f, &pseudopure_density(spec)?, m)?,
        renormalized: evaluate(f, &spec.core.projector(), m)?,
    })
}
