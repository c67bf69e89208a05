// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tribell::bell;
use tribell::entanglement::{pairwise_concurrences, tripartite_negativity};
use tribell::nmr::{self, GrapeProblem, SpinSystem};
use tribell::pipeline::{self, PipelineConfig};
use tribell::qstate::{fidelity_with, DensityMatrix};
use tribell::tomography::{self, ReconstructOptions, ReconstructionReport};
use tribell::{Error, Result};

#[derive(Parser)]
#[command(name = "tribell", version, about = "Three-qubit |S> state: preparation, tomography and Bell certification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON); stage commands read the sections they need.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare the source state and apply the configured noise.
    Prepare,
    /// Simulate readout records and reconstruct the density matrix.
    Tomo {
        /// Input state; the prepared state when absent.
        #[arg(long, conflicts_with = "records")]
        state: Option<PathBuf>,
        /// Reconstruct from existing records instead of simulating.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Tripartite negativity and pairwise concurrences.
    Entangle {
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Bell functional value against its classical bound.
    Bell {
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Bell value while rotating one observable from z towards x.
    Sweep {
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        party: Option<char>,
        #[arg(long)]
        which: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Optimize a CNOT pulse by gradient ascent.
    Grape(GrapeArgs),
    /// Run every stage and write the report.
    Pipeline,
}

#[derive(Args)]
struct GrapeArgs {
    #[arg(long, default_value_t = 1)]
    control: usize,
    #[arg(long, default_value_t = 2)]
    target: usize,
    #[arg(long, default_value_t = 100)]
    segments: usize,
    /// Seconds; 1.5 / J12 when absent.
    #[arg(long)]
    duration: Option<f64>,
    /// Per-channel amplitude bound in Hz.
    #[arg(long, default_value_t = 200.0)]
    amplitude_hz: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.99)]
    target_fidelity: f64,
    /// Restarts with seeds `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    starts: u64,
    /// Spin system JSON; the default couplings when absent.
    #[arg(long)]
    spin_system: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::ideal(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    let out = Output::new(c.out.clone().or_else(|| cfg.output_dir.clone()), c.format, cfg.seed);
    match cli.command {
        Command::Prepare => {
            let rho = pipeline::prepared_state(&cfg)?;
            out.state("prepared", &rho)
        }
        Command::Tomo { state, records, sigma } => tomo(&mut cfg, &out, state, records, sigma),
        Command::Entangle { state } => {
            let rho = input_state(&cfg, state)?;
            let n = tripartite_negativity(&rho, cfg.analysis.negativity_convention)?;
            let [c12, c13, c23] = pairwise_concurrences(&rho)?;
            out.table(
                "entanglement",
                &[
                    ("negativity_a_bc", n.n_a_bc),
                    ("negativity_b_ac", n.n_b_ac),
                    ("negativity_c_ab", n.n_c_ab),
                    ("negativity", n.tripartite),
                    ("concurrence_12", c12),
                    ("concurrence_13", c13),
                    ("concurrence_23", c23),
                ],
                json!({"negativity": n, "concurrence": {"c12": c12, "c13": c13, "c23": c23}}),
            )
        }
        Command::Bell { state } => {
            let rho = input_state(&cfg, state)?;
            let (f, m) = pipeline::bell_inputs(&cfg.bell)?;
            let value = bell::evaluate(&f, &rho, &m)?;
            let enumerated = bell::classical_bound_bruteforce(&f);
            let violated = value > f.classical_bound;
            out.table(
                "bell",
                &[
                    ("value", value),
                    ("classical_bound", f.classical_bound),
                    ("enumerated_bound", enumerated.bound as f64),
                    ("violated", f64::from(u8::from(violated))),
                ],
                json!({
                    "functional": f.name,
                    "value": value,
                    "classical_bound": f.classical_bound,
                    "enumerated_bound": enumerated,
                    "violated": violated,
                }),
            )
        }
        Command::Sweep { state, party, which, points } => {
            let rho = input_state(&cfg, state)?;
            let (f, m) = pipeline::bell_inputs(&cfg.bell)?;
            let party = pipeline::party_index(party.unwrap_or(cfg.sweep.party))?;
            let which = which.unwrap_or(cfg.sweep.which);
            let points = points.unwrap_or(cfg.sweep.points);
            if which > 1 || points < 2 {
                return Err(Error::Config("sweep needs which in {0, 1} and at least 2 points".into()));
            }
            let curve = bell::incompatibility_sweep(&f, &rho, &m, party, which, &bell::angle_grid(0.0, PI, points))?;
            match out.format {
                Format::Csv => {
                    let mut buf = vec![];
                    bell::write_sweep_csv(&curve, &mut buf)?;
                    out.text("sweep", "csv", &String::from_utf8_lossy(&buf))
                }
                Format::Json => out.json("sweep", &json!({"seed": out.seed, "points": curve})),
            }
        }
        Command::Grape(args) => grape(&cfg, &out, args),
        Command::Pipeline => {
            let run = pipeline::run_pipeline(&cfg)?;
            match &out.dir {
                Some(dir) => {
                    for p in pipeline::write_outputs(&run, dir)? {
                        println!("{}", p.display());
                    }
                    Ok(())
                }
                None => {
                    print!("{}", run.report.to_json()?);
                    Ok(())
                }
            }
        }
    }
}

fn input_state(cfg: &PipelineConfig, path: Option<PathBuf>) -> Result<DensityMatrix> {
    match path {
        Some(p) => Ok(pipeline::load_state(&fs::read_to_string(p)?)?.0),
        None => pipeline::prepared_state(cfg),
    }
}

fn tomo(
    cfg: &mut PipelineConfig,
    out: &Output,
    state: Option<PathBuf>,
    records: Option<PathBuf>,
    sigma: Option<f64>,
) -> Result<()> {
    let t = cfg.tomography.get_or_insert_with(Default::default);
    if let Some(s) = sigma {
        t.sigma = s;
    }
    let (sigma, settings) = (t.sigma, t.settings.clone());
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma {sigma} must be >= 0")));
    }
    if sigma > 0.0 && cfg.seed.is_none() && records.is_none() {
        return Err(Error::Config("a seed is required when sigma > 0".into()));
    }
    let (recs, truth) = match records {
        Some(p) => (tomography::records_from_json(&fs::read_to_string(p)?)?, None),
        None => {
            let rho = input_state(cfg, state)?;
            let recs = tomography::simulate_records(&rho, &settings, sigma, cfg.seed.unwrap_or(0))?;
            (recs, Some(rho))
        }
    };
    let r = tomography::reconstruct(&recs, &ReconstructOptions::default())?;
    if !r.converged {
        return Err(Error::NonConvergence("tomographic reconstruction".into()));
    }
    if out.dir.is_some() {
        out.text("records", "json", &tomography::records_to_json(&recs)?)?;
    }
    match out.format {
        Format::Csv => out.state("reconstructed", &r.rho_hat),
        Format::Json => {
            let fid = truth.map(|t| fidelity_with(cfg.analysis.fidelity_convention, &r.rho_hat, &t));
            if out.dir.is_some() {
                out.text("reconstructed", "json", &r.rho_hat.to_json())?;
            }
            let mut report = serde_json::to_value(ReconstructionReport::from(&r))?;
            report["seed"] = json!(out.seed);
            report["sigma"] = json!(sigma);
            report["fidelity_to_input"] = json!(fid);
            out.json("tomography", &report)
        }
    }
}

fn grape(cfg: &PipelineConfig, out: &Output, a: GrapeArgs) -> Result<()> {
    let sys = match &a.spin_system {
        Some(p) => serde_json::from_str::<SpinSystem>(&fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => SpinSystem::default(),
    };
    if a.starts == 0 {
        return Err(Error::Config("--starts must be at least 1".into()));
    }
    let target = tribell::circuits::Gate::cnot(a.control, a.target).matrix();
    let duration = a.duration.unwrap_or(1.5 / nmr::DEFAULT_J12);
    let seed = cfg.seed.unwrap_or(0);
    let mut p = GrapeProblem::new(target, a.segments, duration, 2.0 * PI * a.amplitude_hz, seed);
    p.max_iters = a.max_iters;
    p.target_fidelity = a.target_fidelity;
    p.validate().map_err(|e| Error::Config(e.to_string()))?;
    let seeds: Vec<u64> = (seed..seed + a.starts).collect();
    let r = nmr::grape_multistart(&p, &sys, &seeds)?;
    match out.format {
        Format::Csv => {
            let mut buf = vec![];
            nmr::write_controls_csv(&r.controls, &mut buf)?;
            out.text("controls", "csv", &String::from_utf8_lossy(&buf))?;
        }
        Format::Json => out.json("grape", &serde_json::to_value(&r)?)?,
    }
    if !r.converged {
        return Err(Error::NonConvergence(format!(
            "GRAPE reached {:.6} after {} iterations, target {}",
            r.fidelity, r.iterations, a.target_fidelity
        )));
    }
    Ok(())
}

/// Where results go: files named `<stem>[_seed<k>].<ext>` under `dir`, or stdout.
struct Output {
    dir: Option<PathBuf>,
    format: Format,
    seed: Option<u64>,
}

impl Output {
    fn new(dir: Option<PathBuf>, format: Format, seed: Option<u64>) -> Self {
        Self { dir, format, seed }
    }

    fn stem(&self, name: &str) -> String {
        match self.seed {
            Some(s) => format!("{name}_seed{s}"),
            None => name.to_string(),
        }
    }

    fn text(&self, name: &str, ext: &str, body: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}.{ext}", self.stem(name)));
                fs::write(&path, body)?;
                println!("{}", path.display());
            }
            None => {
                let mut so = std::io::stdout().lock();
                so.write_all(body.as_bytes())?;
                so.flush()?;
            }
        }
        Ok(())
    }

    fn json(&self, name: &str, v: &Value) -> Result<()> {
        self.text(name, "json", &(serde_json::to_string_pretty(v)? + "\n"))
    }

    /// JSON state file, or the Re/Im tomograph tables for csv.
    fn state(&self, name: &str, rho: &DensityMatrix) -> Result<()> {
        match (self.format, &self.dir) {
            (Format::Json, _) => self.text(name, "json", &rho.to_json()),
            (Format::Csv, Some(dir)) => {
                for p in pipeline::emit_tomograph(rho, dir, &self.stem(name))? {
                    println!("{}", p.display());
                }
                Ok(())
            }
            (Format::Csv, None) => {
                let [re, im] = pipeline::tomograph_tables(rho)?;
                self.text(name, "csv", &format!("{re}\n{im}"))
            }
        }
    }

    /// `quantity,value` rows for csv, the given document for json.
    fn table(&self, name: &str, rows: &[(&str, f64)], doc: Value) -> Result<()> {
        match self.format {
            Format::Csv => {
                let mut body = String::from("quantity,value\n");
                if let Some(s) = self.seed {
                    body += &format!("seed,{s}\n");
                }
                for (k, v) in rows {
                    body += &format!("{k},{v}\n");
                }
                self.text(name, "csv", &body)
            }
            Format::Json => {
                let mut doc = doc;
                doc["seed"] = json!(self.seed);
                self.json(name, &doc)
            }
        }
    }
}
