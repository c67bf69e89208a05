// SPDX-License-Identifier: Apache-2.0

//! End-to-end run: prepare, add noise, tomograph, then certify entanglement
//! and Bell violation, with a side-by-side against the experimental numbers.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bell::{self, BellFunctional, MeasurementSettings, PpsValue};
use crate::circuits::{self, reference_state, Circuit, PseudopureSpec, ReferenceState};
use crate::entanglement::{pairwise_concurrences, tripartite_negativity, NegativityConvention, NegativityReport};
use crate::nmr::{self, LoweringOptions, SpinSystem};
use crate::noise::{calibrate_to_fidelity, Calibration, ChannelKind, NoiseChannel};
use crate::qstate::{fidelity_with, DensityMatrix, FidelityConvention, HermitianOperator, StateVector};
use crate::tomography::{self, MeasurementRecord, ReconstructOptions, TomographySetting};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Values reported for the experimental `|S>` preparation.
pub mod reference {
    pub const FIDELITY: (f64, f64) = (0.949, 0.003);
    pub const NEGATIVITY: (f64, f64) = (0.794, 0.015);
    /// Range spanned by the three measured pairwise concurrences.
    pub const CONCURRENCE_RANGE: (f64, f64) = (0.094, 0.32);
    pub const T26: (f64, f64) = (6.531, 0.125);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Gate-level preparation from `|000>`; the built-in `|S>` circuit unless a file is given.
    Circuit {
        #[serde(default)]
        circuit_file: Option<PathBuf>,
    },
    /// The same circuit lowered to NMR pulses, simulated, then z-corrected.
    Pulse {
        #[serde(default)]
        circuit_file: Option<PathBuf>,
        #[serde(default)]
        spin_system: SpinSystem,
        #[serde(default)]
        lowering: LoweringOptions,
    },
    /// A state or density-matrix JSON file.
    File { path: PathBuf },
    /// A named state: `s`, `w`, `ghz`, or `basis:k`.
    Reference { state: String },
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Circuit { circuit_file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    #[serde(default = "TomographySetting::canonical")]
    pub settings: Vec<TomographySetting>,
    #[serde(default)]
    pub sigma: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            settings: TomographySetting::canonical(),
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellConfig {
    /// Functional in the text format; `T26` when absent.
    #[serde(default)]
    pub functional_file: Option<PathBuf>,
    /// Bloch vectors of `A0, A1, B0, B1, C0, C1`; `Z, X` per party when absent.
    #[serde(default)]
    pub settings: Option<[[f64; 3]; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// `A`, `B` or `C`.
    #[serde(default = "default_party")]
    pub party: char,
    #[serde(default = "default_which")]
    pub which: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn yes() -> bool {
    true
}
fn default_party() -> char {
    'A'
}
fn default_which() -> usize {
    1
}
fn default_points() -> usize {
    181
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            party: default_party(),
            which: default_which(),
            points: default_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzedState {
    /// The tomographic estimate, as in the experiment.
    #[default]
    Reconstructed,
    /// The simulated state itself.
    Prepared,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub negativity_convention: NegativityConvention,
    #[serde(default)]
    pub fidelity_convention: FidelityConvention,
    /// Also report the Bell value on the pseudopure state at this polarization.
    #[serde(default)]
    pub pps_epsilon: Option<f64>,
    #[serde(default)]
    pub analyze: AnalyzedState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_target")]
    pub target_fidelity: f64,
    #[serde(default = "default_kind")]
    pub kind: ChannelKind,
}

fn default_target() -> f64 {
    reference::FIDELITY.0
}
fn default_kind() -> ChannelKind {
    ChannelKind::Depolarizing
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            target_fidelity: default_target(),
            kind: default_kind(),
        }
    }
}

/// Every section is optional; absent sections take the documented defaults
/// and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub noise: Option<NoiseChannel>,
    /// `null` skips tomography.
    #[serde(default = "some_tomography")]
    pub tomography: Option<TomographyConfig>,
    #[serde(default)]
    pub bell: BellConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn some_tomography() -> Option<TomographyConfig> {
    Some(TomographyConfig::default())
}

impl PipelineConfig {
    /// The defaults: ideal circuit preparation, noiseless canonical tomography.
    pub fn ideal() -> Self {
        Self {
            tomography: some_tomography(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.source {
            SourceConfig::Circuit { circuit_file: Some(p) } | SourceConfig::Pulse { circuit_file: Some(p), .. } => fix(p),
            SourceConfig::File { path } => fix(path),
            _ => {}
        }
        if let Some(p) = &mut self.bell.functional_file {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut files: Vec<&PathBuf> = vec![];
        match &self.source {
            SourceConfig::Circuit { circuit_file } | SourceConfig::Pulse { circuit_file, .. } => files.extend(circuit_file),
            SourceConfig::File { path } => files.push(path),
            SourceConfig::Reference { state } => {
                state.parse::<ReferenceState>()?;
            }
        }
        files.extend(&self.bell.functional_file);
        for f in files {
            if !f.is_file() {
                return Err(Error::Config(format!("file not found: {}", f.display())));
            }
        }
        if let Some(t) = &self.tomography {
            if !(t.sigma >= 0.0 && t.sigma.is_finite()) {
                return Err(Error::Config(format!("tomography sigma {} must be >= 0", t.sigma)));
            }
            if t.sigma > 0.0 && self.seed.is_none() {
                return Err(Error::Config("a seed is required when tomography sigma > 0".into()));
            }
            if t.settings.is_empty() {
                return Err(Error::Config("tomography needs at least one setting".into()));
            }
        }
        if let Some(n) = &self.noise {
            n.validate().map_err(|e| Error::Config(format!("noise: {e}")))?;
        }
        if self.sweep.enabled {
            party_index(self.sweep.party)?;
            if self.sweep.which > 1 || self.sweep.points < 2 {
                return Err(Error::Config("sweep needs which in {0, 1} and at least 2 points".into()));
            }
        }
        if let Some(eps) = self.analysis.pps_epsilon {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::Config(format!("pps_epsilon {eps} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// 0-based index of party `A`, `B` or `C`.
pub fn party_index(p: char) -> Result<usize> {
    match p {
        'A' => Ok(0),
        'B' => Ok(1),
        'C' => Ok(2),
        _ => Err(Error::Config(format!("unknown party `{p}`"))),
    }
}

/// A state file holds either a state vector or a density matrix.
pub fn load_state(text: &str) -> Result<(DensityMatrix, Option<StateVector>)> {
    match StateVector::from_json(text) {
        Ok(psi) => Ok((psi.projector(), Some(psi))),
        Err(_) => Ok((DensityMatrix::from_json(text)?, None)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSummary {
    pub events: usize,
    pub total_duration_s: f64,
    pub z_corrections: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationReport {
    pub source: String,
    pub pulse: Option<PulseSummary>,
    pub noise: Option<NoiseChannel>,
    pub fidelity_to_s: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub settings: Vec<TomographySetting>,
    pub sigma: f64,
    pub record_seeds: Vec<u64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fidelity_to_prepared: f64,
    pub fidelity_to_s: f64,
    pub trace_distance_to_prepared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concurrences {
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
}

impl From<[f64; 3]> for Concurrences {
    fn from(c: [f64; 3]) -> Self {
        Self {
            c12: c[0],
            c13: c[1],
            c23: c[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    pub functional: String,
    pub value: f64,
    pub classical_bound: f64,
    pub enumerated_bound: i64,
    pub violated: bool,
    pub pps: Option<PpsValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub party: char,
    pub which: usize,
    pub points: usize,
    pub argmax_theta_rad: f64,
    pub max_value: f64,
    pub min_value: f64,
    pub value_at_zero: f64,
    pub value_at_half_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub quantity: String,
    /// Central value, or the low end of a range.
    pub experimental: f64,
    /// Uncertainty, or the high end of a range when `is_range`.
    pub experimental_spread: f64,
    pub is_range: bool,
    pub this_run: f64,
    pub calibrated: Option<f64>,
    pub residual_this_run: f64,
    pub residual_calibrated: Option<f64>,
}

fn residual(value: f64, exp: f64, spread: f64, is_range: bool) -> f64 {
    if !is_range {
        value - exp
    } else if value < exp {
        value - exp
    } else if value > spread {
        value - spread
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub calibration: Calibration,
    pub t26: f64,
    pub violated: bool,
    pub negativity: f64,
    pub concurrence: Concurrences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub calibrated: Option<CalibratedModel>,
    pub rows: Vec<ReferenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub fidelity_convention: FidelityConvention,
    pub preparation: PreparationReport,
    pub tomography: Option<TomographyReport>,
    pub analyzed_state: AnalyzedState,
    pub negativity: NegativityReport,
    pub concurrence: Concurrences,
    pub bell: BellReport,
    pub sweep: Option<SweepSummary>,
    pub reference: ReferenceComparison,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Everything a run produces, kept for writing output files.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub prepared: DensityMatrix,
    pub reconstructed: Option<DensityMatrix>,
    pub records: Vec<MeasurementRecord>,
    pub sweep: Vec<bell::SweepPoint>,
}

fn read_circuit(file: &Option<PathBuf>) -> Result<Circuit> {
    match file {
        Some(p) => Circuit::from_json(&fs::read_to_string(p)?),
        None => Ok(circuits::s_prep_circuit()),
    }
}

fn prepare(cfg: &PipelineConfig) -> Result<(DensityMatrix, Option<StateVector>, String, Option<PulseSummary>)> {
    let zero = StateVector::basis(3, 0)?;
    Ok(match &cfg.source {
        SourceConfig::Circuit { circuit_file } => {
            let psi = circuits::apply_circuit(&read_circuit(circuit_file)?, &zero)?;
            (psi.projector(), Some(psi), "circuit".into(), None)
        }
        SourceConfig::Pulse {
            circuit_file,
            spin_system,
            lowering,
        } => {
            let prog = nmr::lower_circuit(&read_circuit(circuit_file)?, spin_system, *lowering)?;
            let psi = StateVector::normalized(
                (prog.corrected_unitary(spin_system)? * zero.amplitudes()).iter().copied().collect(),
            )?;
            let summary = PulseSummary {
                events: prog.events.len(),
                total_duration_s: prog.total_duration(),
                z_corrections: prog.z_corrections,
            };
            (psi.projector(), Some(psi), "pulse".into(), Some(summary))
        }
        SourceConfig::File { path } => {
            let (rho, psi) = load_state(&fs::read_to_string(path)?)?;
            if rho.dim() != 8 {
                return Err(Error::DimensionMismatch { left: rho.dim(), right: 8 });
            }
            (rho, psi, format!("file:{}", path.display()), None)
        }
        SourceConfig::Reference { state } => {
            let psi = reference_state(state.parse()?)?;
            (psi.projector(), Some(psi), format!("reference:{state}"), None)
        }
    })
}

/// The functional and settings named by a `bell` section.
pub fn bell_inputs(cfg: &BellConfig) -> Result<(BellFunctional, MeasurementSettings)> {
    let f = match &cfg.functional_file {
        Some(p) => BellFunctional::from_text(&fs::read_to_string(p)?)?,
        None => bell::t26(),
    };
    let m = match cfg.settings {
        Some(vs) => MeasurementSettings::new(vs.map(HermitianOperator::bloch))?,
        None => MeasurementSettings::maximal(),
    };
    Ok((f, m))
}

/// The source state after the configured noise, as the pipeline sees it.
pub fn prepared_state(cfg: &PipelineConfig) -> Result<DensityMatrix> {
    staged("config", cfg.validate())?;
    let (rho, ..) = staged("prepare", prepare(cfg))?;
    match &cfg.noise {
        Some(ch) => staged("noise", ch.apply(&rho)),
        None => Ok(rho),
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    staged("config", cfg.validate())?;
    let conv = cfg.analysis.fidelity_convention;
    let s_rho = reference_state(ReferenceState::S)?.projector();

    let (pure, pure_vec, source, pulse) = staged("prepare", prepare(cfg))?;
    let prepared = match &cfg.noise {
        Some(ch) => staged("noise", ch.apply(&pure))?,
        None => pure,
    };
    let preparation = PreparationReport {
        source,
        pulse,
        noise: cfg.noise.clone(),
        fidelity_to_s: fidelity_with(conv, &prepared, &s_rho),
        purity: prepared.purity(),
    };

    let mut records = vec![];
    let mut reconstructed = None;
    let tomography = match &cfg.tomography {
        None => None,
        Some(t) => {
            let seed = cfg.seed.unwrap_or(0);
            let (rec, r) = staged("tomography", (|| {
                let rec = tomography::simulate_records(&prepared, &t.settings, t.sigma, seed)?;
                let r = tomography::reconstruct(&rec, &ReconstructOptions::default())?;
                if !r.converged {
                    return Err(Error::NonConvergence("tomographic reconstruction".into()));
                }
                Ok((rec, r))
            })())?;
            let report = TomographyReport {
                settings: t.settings.clone(),
                sigma: t.sigma,
                record_seeds: rec.iter().filter_map(|r| r.seed).collect(),
                residual: r.residual,
                iterations: r.iterations,
                converged: r.converged,
                fidelity_to_prepared: fidelity_with(conv, &r.rho_hat, &prepared),
                fidelity_to_s: fidelity_with(conv, &r.rho_hat, &s_rho),
                trace_distance_to_prepared: r.rho_hat.trace_distance(&prepared),
            };
            records = rec;
            reconstructed = Some(r.rho_hat);
            Some(report)
        }
    };

    let (analyzed_state, rho) = match (&reconstructed, cfg.analysis.analyze) {
        (Some(r), AnalyzedState::Reconstructed) => (AnalyzedState::Reconstructed, r.clone()),
        _ => (AnalyzedState::Prepared, prepared.clone()),
    };

    let (negativity, concurrence) = staged("entanglement", (|| {
        Ok((
            tripartite_negativity(&rho, cfg.analysis.negativity_convention)?,
            Concurrences::from(pairwise_concurrences(&rho)?),
        ))
    })())?;

    let (functional, settings) = staged("bell", bell_inputs(&cfg.bell))?;
    let bell_report = staged("bell", (|| {
        let value = bell::evaluate(&functional, &rho, &settings)?;
        let pps = match cfg.analysis.pps_epsilon {
            None => None,
            Some(eps) => {
                let core = pure_vec
                    .clone()
                    .ok_or_else(|| Error::Config("pps analysis needs a pure source state".into()))?;
                Some(bell::pps_scaled_evaluate(&functional, &PseudopureSpec::new(eps, core)?, &settings)?)
            }
        };
        Ok(BellReport {
            functional: functional.name.clone(),
            value,
            classical_bound: functional.classical_bound,
            enumerated_bound: bell::classical_bound_bruteforce(&functional).bound,
            violated: value > functional.classical_bound,
            pps,
        })
    })())?;

    let mut sweep_points = vec![];
    let sweep = if cfg.sweep.enabled {
        let party = party_index(cfg.sweep.party)?;
        let grid = bell::angle_grid(0.0, PI, cfg.sweep.points);
        sweep_points = staged(
            "sweep",
            bell::incompatibility_sweep(&functional, &rho, &settings, party, cfg.sweep.which, &grid),
        )?;
        let best = sweep_points
            .iter()
            .fold(sweep_points[0], |b, p| if p.t26_value > b.t26_value { *p } else { b });
        let at_half_pi = bell::incompatibility_sweep(&functional, &rho, &settings, party, cfg.sweep.which, &[PI / 2.0])?[0];
        Some(SweepSummary {
            party: cfg.sweep.party,
            which: cfg.sweep.which,
            points: cfg.sweep.points,
            argmax_theta_rad: best.theta_rad,
            max_value: best.t26_value,
            min_value: sweep_points.iter().map(|p| p.t26_value).fold(f64::INFINITY, f64::min),
            value_at_zero: sweep_points[0].t26_value,
            value_at_half_pi: at_half_pi.t26_value,
        })
    } else {
        None
    };

    let calibrated = if cfg.calibration.enabled {
        Some(staged("calibration", calibrated_model(&cfg.calibration, conv, &functional, &settings, cfg.analysis.negativity_convention))?)
    } else {
        None
    };

    let fidelity_now = tomography.as_ref().map_or(preparation.fidelity_to_s, |t| t.fidelity_to_s);
    let rows = reference_rows(fidelity_now, &negativity, &concurrence, bell_report.value, calibrated.as_ref());

    let report = PipelineReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        fidelity_convention: conv,
        preparation,
        tomography,
        analyzed_state,
        negativity,
        concurrence,
        bell: bell_report,
        sweep,
        reference: ReferenceComparison { calibrated, rows },
    };
    Ok(PipelineRun {
        report,
        prepared,
        reconstructed,
        records,
        sweep: sweep_points,
    })
}

fn calibrated_model(
    cfg: &CalibrationConfig,
    conv: FidelityConvention,
    f: &BellFunctional,
    m: &MeasurementSettings,
    neg: NegativityConvention,
) -> Result<CalibratedModel> {
    let core = reference_state(ReferenceState::S)?;
    let calibration = calibrate_to_fidelity(cfg.target_fidelity, &core, cfg.kind, conv)?;
    let rho = cfg.kind.channel(calibration.parameter)?.apply(&core.projector())?;
    let t26 = bell::evaluate(f, &rho, m)?;
    Ok(CalibratedModel {
        calibration,
        t26,
        violated: t26 > f.classical_bound,
        negativity: tripartite_negativity(&rho, neg)?.tripartite,
        concurrence: pairwise_concurrences(&rho)?.into(),
    })
}

fn reference_rows(
    fidelity: f64,
    negativity: &NegativityReport,
    c: &Concurrences,
    t26: f64,
    cal: Option<&CalibratedModel>,
) -> Vec<ReferenceRow> {
    let row = |quantity: &str, (exp, spread): (f64, f64), is_range: bool, now: f64, calibrated: Option<f64>| ReferenceRow {
        quantity: quantity.into(),
        experimental: exp,
        experimental_spread: spread,
        is_range,
        this_run: now,
        calibrated,
        residual_this_run: residual(now, exp, spread, is_range),
        residual_calibrated: calibrated.map(|v| residual(v, exp, spread, is_range)),
    };
    vec![
        row("fidelity", reference::FIDELITY, false, fidelity, cal.map(|m| m.calibration.achieved)),
        row("negativity", reference::NEGATIVITY, false, negativity.tripartite, cal.map(|m| m.negativity)),
        row("concurrence_12", reference::CONCURRENCE_RANGE, true, c.c12, cal.map(|m| m.concurrence.c12)),
        row("concurrence_13", reference::CONCURRENCE_RANGE, true, c.c13, cal.map(|m| m.concurrence.c13)),
        row("concurrence_23", reference::CONCURRENCE_RANGE, true, c.c23, cal.map(|m| m.concurrence.c23)),
        row("t26", reference::T26, false, t26, cal.map(|m| m.t26)),
    ]
}

/// `Re rho` and `Im rho` as 8x8 CSV tables with basis labels 1..8.
pub fn tomograph_tables(rho: &DensityMatrix) -> Result<[String; 2]> {
    let m = rho.matrix();
    let n = rho.dim();
    let table = |part: fn(Complex64) -> f64| -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        let mut header = vec![String::new()];
        header.extend((1..=n).map(|k| k.to_string()));
        w.write_record(&header)?;
        for i in 0..n {
            let mut row = vec![(i + 1).to_string()];
            row.extend((0..n).map(|j| format!("{:.12e}", part(m[(i, j)]))));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
    };
    Ok([table(|z| z.re)?, table(|z| z.im)?])
}

/// Writes the tables of [`tomograph_tables`] to `<stem>_re.csv` and `<stem>_im.csv`.
pub fn emit_tomograph(rho: &DensityMatrix, dir: &Path, stem: &str) -> Result<[PathBuf; 2]> {
    fs::create_dir_all(dir)?;
    let [re_t, im_t] = tomograph_tables(rho)?;
    let re = dir.join(format!("{stem}_re.csv"));
    let im = dir.join(format!("{stem}_im.csv"));
    fs::write(&re, re_t)?;
    fs::write(&im, im_t)?;
    Ok([re, im])
}

/// `report.json`, `records.json`, tomograph tables and the sweep curve.
/// File names carry the seed when there is one.
pub fn write_outputs(run: &PipelineRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let tag = run.report.seed.map_or(String::new(), |s| format!("_seed{s}"));
    let mut written = vec![];
    let report = dir.join(format!("report{tag}.json"));
    fs::write(&report, run.report.to_json()?)?;
    written.push(report);
    if !run.records.is_empty() {
        let p = dir.join(format!("records{tag}.json"));
        fs::write(&p, tomography::records_to_json(&run.records)?)?;
        written.push(p);
    }
    written.extend(emit_tomograph(&run.prepared, dir, &format!("prepared{tag}"))?);
    if let Some(r) = &run.reconstructed {
        written.extend(emit_tomograph(r, dir, &format!("reconstructed{tag}"))?);
    }
    if !run.sweep.is_empty() {
        let p = dir.join(format!("sweep{tag}.csv"));
        bell::write_sweep_csv(&run.sweep, fs::File::create(&p)?)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUANTUM_MAX: f64 = 7.928203230275509;

    #[test]
    fn ideal_pipeline() {
        let run = run_pipeline(&PipelineConfig::ideal()).unwrap();
        let r = &run.report;
        assert!((r.preparation.fidelity_to_s - 1.0).abs() < 1e-10);
        assert_eq!(r.analyzed_state, AnalyzedState::Reconstructed);
        assert!((r.negativity.tripartite - 0.943).abs() < 1e-3);
        for c in [r.concurrence.c12, r.concurrence.c13, r.concurrence.c23] {
            assert!((c - 0.244).abs() < 1e-3);
        }
        assert!((r.bell.value - QUANTUM_MAX).abs() < 1e-5);
        assert!(r.bell.violated);
        assert_eq!(r.bell.enumerated_bound, 5);
        let sw = r.sweep.as_ref().unwrap();
        assert!((sw.argmax_theta_rad - PI / 2.0).abs() < 1e-12);
        assert!(sw.value_at_zero < sw.max_value);
        let cal = r.reference.calibrated.as_ref().unwrap();
        assert!(cal.violated && cal.t26 > 5.0);
        assert_eq!(r.reference.rows.len(), 6);
    }

    #[test]
    fn pulse_source_matches_circuit_source() {
        let cfg = PipelineConfig {
            source: SourceConfig::Pulse {
                circuit_file: None,
                spin_system: SpinSystem::default(),
                lowering: LoweringOptions::default(),
            },
            tomography: None,
            ..PipelineConfig::ideal()
        };
        let r = run_pipeline(&cfg).unwrap().report;
        assert!(r.preparation.fidelity_to_s >= 1.0 - 1e-6);
        assert!(r.preparation.pulse.is_some());
        assert_eq!(r.analyzed_state, AnalyzedState::Prepared);
        assert!((r.bell.value - QUANTUM_MAX).abs() < 1e-5);
    }

    #[test]
    fn depolarized_half_loses_violation() {
        let cfg = PipelineConfig {
            noise: Some(NoiseChannel::depolarizing(0.5).unwrap()),
            tomography: None,
            ..PipelineConfig::ideal()
        };
        let r = run_pipeline(&cfg).unwrap().report;
        assert!((r.bell.value - 0.5 * QUANTUM_MAX).abs() < 1e-9);
        assert!((r.bell.value - 3.964).abs() < 1e-3);
        assert!(!r.bell.violated);
    }

    #[test]
    fn mixed_file_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.json");
        fs::write(&path, DensityMatrix::maximally_mixed(3).to_json()).unwrap();
        let cfg = PipelineConfig {
            source: SourceConfig::File { path },
            ..PipelineConfig::ideal()
        };
        let r = run_pipeline(&cfg).unwrap().report;
        assert!(r.bell.value.abs() < 1e-8);
        assert!(!r.bell.violated);
        assert!(r.negativity.tripartite < 1e-8);
    }

    #[test]
    fn seed_rules_and_unknown_keys() {
        let cfg = PipelineConfig {
            tomography: Some(TomographyConfig {
                sigma: 0.01,
                ..TomographyConfig::default()
            }),
            ..PipelineConfig::ideal()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err.root(), Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "colour": "red"}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"tomography": {"sigma": 0.1, "extra": 1}}"#).is_err());
        let missing = PipelineConfig::from_json(r#"{"source": {"kind": "file", "path": "/nonexistent/x.json"}}"#).unwrap();
        assert!(matches!(run_pipeline(&missing).unwrap_err().root(), Error::Config(_)));
    }

    #[test]
    fn config_defaults_from_empty_json() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::ideal());
        let none = PipelineConfig::from_json(r#"{"tomography": null}"#).unwrap();
        assert!(none.tomography.is_none());
    }

    #[test]
    fn reports_are_byte_identical() {
        let cfg = PipelineConfig::from_json(
            r#"{"seed": 42, "tomography": {"sigma": 0.01}, "noise": {"kind": "dephasing", "q": [0.02, 0.03, 0.04]}}"#,
        )
        .unwrap();
        let a = run_pipeline(&cfg).unwrap().report.to_json().unwrap();
        let b = run_pipeline(&cfg).unwrap().report.to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"seed\": 42"));
        assert!(a.contains("\"negativity\"") && a.contains("\"concurrence\""));
        assert!(a.contains("\"schema_version\": 1"));
    }

    #[test]
    fn pps_reporting() {
        let cfg = PipelineConfig {
            analysis: AnalysisConfig {
                pps_epsilon: Some(1e-5),
                ..AnalysisConfig::default()
            },
            tomography: None,
            ..PipelineConfig::ideal()
        };
        let pps = run_pipeline(&cfg).unwrap().report.bell.pps.unwrap();
        assert!((pps.raw - 1e-5 * QUANTUM_MAX).abs() < 1e-12);
    }

    #[test]
    fn tomograph_files() {
        let dir = tempfile::tempdir().unwrap();
        let zero = StateVector::basis(3, 0).unwrap().projector();
        let [re, im] = emit_tomograph(&zero, dir.path(), "zero").unwrap();
        let read = |p: &Path| -> Vec<Vec<f64>> {
            let mut rd = csv::Reader::from_path(p).unwrap();
            assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ["", "1", "2", "3", "4", "5", "6", "7", "8"]);
            rd.records()
                .map(|r| r.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect())
                .collect()
        };
        let r = read(&re);
        assert_eq!(r[0][0], 1.0);
        assert_eq!(r.iter().flatten().filter(|&&v| v != 0.0).count(), 1);
        assert!(read(&im).iter().flatten().all(|&v| v == 0.0));

        let s = reference_state(ReferenceState::S).unwrap().projector();
        let [re, im] = emit_tomograph(&s, dir.path(), "s").unwrap();
        let r = read(&re);
        let i = read(&im);
        assert!((r[7][7] - 0.5).abs() < 1e-12);
        assert!((r[1][4] + 1.0 / 6.0).abs() < 1e-12 && (r[4][1] + 1.0 / 6.0).abs() < 1e-12);
        for a in 0..8 {
            for b in 0..8 {
                assert_eq!(r[a][b], r[b][a]);
                assert_eq!(i[a][b], -i[b][a]);
            }
        }
    }

    #[test]
    fn stage_names_in_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\"kind\": \"density_matrix\", \"dim\": 2, \"entries\": [[1,0],[0,0],[0,0],[0,0]]}").unwrap();
        let cfg = PipelineConfig {
            source: SourceConfig::File { path },
            ..PipelineConfig::ideal()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("stage `prepare` failed"), "{err}");
    }
}
