//! Command-line front end.
//!
//! Exit codes: 0 certified stable (or plain success), 1 error, 2 certified
//! unstable, 3 inconclusive or certificate precondition not met.

mod problem;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closedloop::internal_stability;
use crate::examples;
use crate::lti::{simulate, Disturbances, StateSpaceModel};
use crate::param::{BlockSet, ParameterizationKind, DEFAULT_FEASIBILITY_TOL};
use crate::realize::{realize, recover_controller_tf, RecoveryFormula};
use crate::record::{coefficients_csv, format_real, model_from_text, model_to_text, synthesis_record, trajectory_csv};
use crate::robust::{certify, compute_residuals, perturb_blocks, prestabilize, Certificate, Verdict};
use crate::synth::{synthesize_with, H2Problem, SynthesisResult};
use crate::{Error, Result};

pub use problem::{
    to_matrix, to_rows, ControllerSpec, Discretization, MatrixRows, Options, PlantSpec, ProblemFile,
    Weights,
};

/// Overrides the default feasibility tolerance when neither the command line
/// nor the problem file sets one.
pub const TOLERANCE_ENV: &str = "CLPARAM_FEASIBILITY_TOL";

/// Horizons of the reference table.
pub const TABLE_HORIZONS: [usize; 7] = [10, 15, 20, 25, 30, 50, 75];

pub const EXAMPLE_NAMES: [&str; 4] = ["car-following", "uncontrollable-mode", "slp-counterexample", "random-integer"];

#[derive(Debug, Parser)]
#[command(name = "clparam", version, about = "Closed-loop parameterizations of stabilizing controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the FIR H2 program and recover a controller.
    Synth(SynthArgs),
    /// CSV of optimal H2 norms over kinds and horizons.
    Table(TableArgs),
    /// Internal-stability report for a plant and a controller record.
    Verify(VerifyArgs),
    /// Closed-loop trajectory CSV.
    Simulate(SimulateArgs),
    /// Print a built-in problem file.
    Example(ExampleArgs),
    /// Residuals and stability certificate of fixture or synthesized responses.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<usize>,
    /// Controller form; defaults to the kind's shift-register form.
    #[arg(long)]
    pub formula: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Directory for result.txt, controller.txt and coefficients.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    pub problem: PathBuf,
    /// Comma-separated kinds (default: slp,iop,mixed-i,mixed-ii).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    /// Comma-separated horizons (default: 10,15,20,25,30,50,75).
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub problem: PathBuf,
    pub controller: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub problem: PathBuf,
    pub controller: PathBuf,
    /// Comma-separated initial plant state (default: zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Enables uniform state noise with this seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    /// Half-width of the uniform state noise.
    #[arg(long, default_value_t = 0.01)]
    pub noise_level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    /// car-following, uncontrollable-mode, slp-counterexample or random-integer.
    pub name: String,
    /// Seed of the random-integer generator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub formula: Option<String>,
    /// Half-width of uniform noise added to the free coefficients.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

/// What a successful command reports through its exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Stable,
    Unstable,
    Inconclusive,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Self::Done | Self::Stable => 0,
            Self::Unstable => 2,
            Self::Inconclusive => 3,
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::CertifiedStable => Self::Stable,
            Verdict::CertifiedUnstable => Self::Unstable,
            Verdict::Inconclusive => Self::Inconclusive,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli.command, stdout) {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<Outcome> {
    match command {
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Table(a) => cmd_table(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Example(a) => cmd_example(a, stdout),
        Command::Audit(a) => cmd_audit(a, stdout),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::Parse(format!("stdout: {e}"))),
    }
}

pub fn load_problem(path: &Path) -> Result<ProblemFile> {
    ProblemFile::from_json(&read(path)?)
}

pub fn load_controller(path: &Path) -> Result<StateSpaceModel> {
    model_from_text(&read(path)?)
}

/// Command-line value, then the problem file, then the environment, then the default.
pub fn feasibility_tolerance(flag: Option<f64>, file: &ProblemFile) -> Result<f64> {
    if let Some(t) = flag.or(file.options().feasibility_tol) {
        return Ok(t);
    }
    match std::env::var(TOLERANCE_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{TOLERANCE_ENV}='{v}' is not a number"))),
        Err(_) => Ok(DEFAULT_FEASIBILITY_TOL),
    }
}

fn resolve_kind(flag: Option<&str>, file: &ProblemFile, default: ParameterizationKind) -> Result<ParameterizationKind> {
    match flag {
        Some(k) => k.parse(),
        None => Ok(file.kind()?.unwrap_or(default)),
    }
}

fn resolve_horizon(flag: Option<usize>, file: &ProblemFile) -> Result<usize> {
    flag.or(file.horizon)
        .ok_or_else(|| Error::Parse("no horizon: pass --T or set 'horizon' in the problem file".into()))
}

/// A synthesized design on the (possibly pre-stabilized) plant.
struct Design {
    design_plant: StateSpaceModel,
    result: SynthesisResult,
    controller: StateSpaceModel,
    formula: RecoveryFormula,
}

fn design(
    file: &ProblemFile,
    kind: ParameterizationKind,
    horizon: usize,
    formula: Option<RecoveryFormula>,
    tol: f64,
) -> Result<Design> {
    let plant = file.plant()?;
    let wrapper = file
        .initial_controller(&plant)?
        .map(|k0| prestabilize(&plant, &k0))
        .transpose()?;
    let design_plant = wrapper.as_ref().map_or_else(|| plant.clone(), |w| w.plant.clone());
    let (q, r) = file.weights(&design_plant, kind)?;
    let problem = H2Problem::new(design_plant.clone(), kind, horizon).with_weights(q, r)?;
    let result = synthesize_with(&problem, tol)?;
    let (k1, formula) = match formula {
        Some(f) => (recover_controller_tf(f, &result.blocks, &design_plant)?, f),
        None => {
            let r = realize(kind, &result.blocks, &design_plant)?;
            (r.model, r.formula)
        }
    };
    let controller = match &wrapper {
        Some(w) => w.compose(&k1)?,
        None => k1,
    };
    Ok(Design {
        design_plant,
        result,
        controller,
        formula,
    })
}

fn parse_formula(s: Option<&str>) -> Result<Option<RecoveryFormula>> {
    s.map(str::parse).transpose()
}

/// Certificate text plus the exit outcome; an unmet precondition is reported
/// and treated as inconclusive.
fn certificate_section(
    kind: ParameterizationKind,
    plant: &StateSpaceModel,
    blocks: &BlockSet,
    formula: RecoveryFormula,
) -> Result<(String, Outcome)> {
    let report = compute_residuals(kind, plant, blocks)?;
    match certify(kind, plant, blocks, &report, formula) {
        Ok(cert) => {
            let outcome = Outcome::from_verdict(cert.verdict);
            Ok((report.with_certificate(cert).to_text(), outcome))
        }
        Err(Error::PreconditionViolated(msg)) => {
            let mut text = report.to_text();
            let _ = writeln!(text, "certificate verdict=precondition-violated reason=\"{msg}\"");
            Ok((text, Outcome::Inconclusive))
        }
        Err(e) => Err(e),
    }
}

fn stability_lines(plant: &StateSpaceModel, controller: &StateSpaceModel) -> Result<String> {
    let v = internal_stability(plant, controller)?;
    let mut s = String::new();
    let _ = writeln!(s, "%%StabilityVerdict");
    let _ = writeln!(s, "internally_stable={}", v.internally_stable);
    let _ = writeln!(s, "spectral_radius={}", format_real(v.spectral_radius));
    let _ = writeln!(s, "controller_states={}", controller.states());
    for g in &v.per_group {
        let _ = writeln!(
            s,
            "group \"{}\" stable={} certifying={}",
            g.group, g.stable, g.certifying
        );
    }
    Ok(s)
}

pub fn cmd_synth(args: &SynthArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    let kind = resolve_kind(args.kind.as_deref(), &file, ParameterizationKind::Iop)?;
    let horizon = resolve_horizon(args.horizon, &file)?;
    let tol = feasibility_tolerance(args.tol, &file)?;
    let d = design(&file, kind, horizon, parse_formula(args.formula.as_deref())?, tol)?;
    let (cert_text, outcome) = certificate_section(kind, &d.design_plant, &d.result.blocks, d.formula)?;
    let mut text = synthesis_record(&d.result);
    let _ = writeln!(text, "formula=\"{}\"", d.formula);
    text.push_str(&cert_text);
    text.push_str(&stability_lines(&file.plant()?, &d.controller)?);
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            emit(&text, Some(&dir.join("result.txt")), stdout)?;
            emit(&model_to_text(&d.controller), Some(&dir.join("controller.txt")), stdout)?;
            emit(&coefficients_csv(&d.result.blocks), Some(&dir.join("coefficients.csv")), stdout)?;
            emit(&text, None, stdout)?;
        }
        None => {
            text.push_str(&model_to_text(&d.controller));
            emit(&text, None, stdout)?;
        }
    }
    Ok(outcome)
}

/// One cell of the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub kind: ParameterizationKind,
    pub horizon: usize,
    pub h2_norm: Result<f64>,
}

/// Solves every `(kind, horizon)` cell, several at a time; the output order
/// follows `horizons` then `kinds`.
pub fn table_cells(
    file: &ProblemFile,
    kinds: &[ParameterizationKind],
    horizons: &[usize],
    tol: f64,
) -> Result<Vec<TableCell>> {
    let plant = file.plant()?;
    let jobs: Vec<(ParameterizationKind, usize)> = horizons
        .iter()
        .flat_map(|&t| kinds.iter().map(move |&k| (k, t)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<f64>>> = vec![None; jobs.len()];
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(&(kind, horizon)) = jobs.get(i) else { break };
                let value = file.weights(&plant, kind).and_then(|(q, r)| {
                    let problem = H2Problem::new(plant.clone(), kind, horizon).with_weights(q, r)?;
                    synthesize_with(&problem, tol).map(|s| s.h2_norm)
                });
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(value);
            });
        }
    });
    Ok(jobs
        .into_iter()
        .zip(results)
        .map(|((kind, horizon), v)| TableCell {
            kind,
            horizon,
            h2_norm: v.expect("every job ran"),
        })
        .collect())
}

/// `(max − min) / min` over the successful cells of one horizon.
pub fn relative_spread(values: &[f64]) -> Option<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (!values.is_empty()).then(|| (max - min) / min)
}

fn error_tag(e: &Error) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}

pub fn table_csv(cells: &[TableCell]) -> String {
    let mut by_horizon: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for c in cells {
        if let Ok(v) = c.h2_norm {
            by_horizon.entry(c.horizon).or_default().push(v);
        }
    }
    let mut out = String::from("kind,horizon,status,h2_norm,max_rel_deviation\n");
    for c in cells {
        let spread = by_horizon
            .get(&c.horizon)
            .and_then(|v| relative_spread(v))
            .map_or_else(String::new, format_real);
        let (status, value) = match &c.h2_norm {
            Ok(v) => ("ok".to_string(), format_real(*v)),
            Err(e) => (error_tag(e), String::new()),
        };
        let _ = writeln!(out, "{},{},{status},{value},{spread}", c.kind, c.horizon);
    }
    out
}

pub fn cmd_table(args: &TableArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    let kinds = match &args.kinds {
        Some(list) => list.iter().map(|k| k.parse()).collect::<Result<Vec<_>>>()?,
        None => ParameterizationKind::PRIMARY.to_vec(),
    };
    let horizons = args.horizons.clone().unwrap_or_else(|| TABLE_HORIZONS.to_vec());
    let tol = feasibility_tolerance(args.tol, &file)?;
    let cells = table_cells(&file, &kinds, &horizons, tol)?;
    emit(&table_csv(&cells), args.out.as_deref(), stdout)?;
    Ok(Outcome::Done)
}

pub fn cmd_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    let plant = file.plant()?;
    let controller = load_controller(&args.controller)?;
    let text = stability_lines(&plant, &controller)?;
    emit(&text, None, stdout)?;
    let stable = internal_stability(&plant, &controller)?.internally_stable;
    Ok(if stable { Outcome::Stable } else { Outcome::Unstable })
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    let plant = file.plant()?;
    let controller = load_controller(&args.controller)?;
    let n = plant.states();
    let x0 = match &args.x0 {
        Some(v) if v.len() != n => {
            return Err(Error::DimensionMismatch(format!("x0 has {} entries, plant has {n} states", v.len())))
        }
        Some(v) => DVector::from_vec(v.clone()),
        None => DVector::zeros(n),
    };
    let mut disturbances = Disturbances::default();
    if let Some(seed) = args.noise_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let level = args.noise_level;
        disturbances.state = (0..=args.steps)
            .map(|_| DVector::from_fn(n, |_, _| if level > 0.0 { rng.gen_range(-level..=level) } else { 0.0 }))
            .collect();
    }
    let traj = simulate(&plant, &controller, &x0, args.steps, &disturbances)?;
    emit(&trajectory_csv(&traj, file.sample_time()), args.out.as_deref(), stdout)?;
    Ok(Outcome::Done)
}

/// Built-in problem files.
pub fn example_problem(name: &str, seed: u64) -> Result<ProblemFile> {
    let plant_spec = |g: &StateSpaceModel| PlantSpec {
        a: to_rows(g.a()),
        b: to_rows(g.b()),
        c: to_rows(g.c()),
    };
    match name {
        "car-following" => {
            let (a, b, c) = examples::car_following_continuous(examples::CAR_FOLLOWING_ALPHA);
            Ok(ProblemFile {
                name: Some(name.into()),
                discretization: Some(Discretization {
                    a: to_rows(&a),
                    b: to_rows(&b),
                    c: to_rows(&c),
                    method: "forward-euler".into(),
                    dt: examples::CAR_FOLLOWING_DT,
                }),
                horizon: Some(30),
                kind: Some("iop".into()),
                ..ProblemFile::default()
            })
        }
        "uncontrollable-mode" => Ok(ProblemFile {
            name: Some(name.into()),
            plant: Some(plant_spec(&examples::uncontrollable_mode())),
            horizon: Some(10),
            kind: Some("iop".into()),
            ..ProblemFile::default()
        }),
        "slp-counterexample" => {
            let blocks = examples::slp_counterexample_blocks();
            let fixture = blocks
                .iter()
                .map(|(name, h)| (name.label().to_string(), h.coeffs().iter().map(to_rows).collect()))
                .collect();
            Ok(ProblemFile {
                name: Some(name.into()),
                plant: Some(plant_spec(&examples::slp_counterexample_plant())),
                horizon: Some(5),
                kind: Some("slp".into()),
                fixture: Some(fixture),
                ..ProblemFile::default()
            })
        }
        "random-integer" => Ok(ProblemFile {
            name: Some(format!("{name}-{seed}")),
            plant: Some(plant_spec(&examples::random_integer(seed))),
            horizon: Some(6),
            kind: Some("iop".into()),
            options: Some(Options {
                seed: Some(seed),
                ..Options::default()
            }),
            ..ProblemFile::default()
        }),
        other => Err(Error::Parse(format!(
            "unknown example '{other}' (expected one of {})",
            EXAMPLE_NAMES.join(", ")
        ))),
    }
}

pub fn cmd_example(args: &ExampleArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let file = example_problem(&args.name, args.seed)?;
    emit(&file.to_json(), args.out.as_deref(), stdout)?;
    Ok(Outcome::Done)
}

pub fn cmd_audit(args: &AuditArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    let plant = file.plant()?;
    let kind = resolve_kind(args.kind.as_deref(), &file, ParameterizationKind::Slp)?;
    let formula = parse_formula(args.formula.as_deref())?;
    let (design_plant, blocks) = match file.fixture_blocks(&plant)? {
        Some(blocks) => {
            if file.k0.is_some() {
                return Err(Error::Parse("fixture blocks cannot be combined with k0".into()));
            }
            (plant.clone(), blocks)
        }
        None => {
            let horizon = resolve_horizon(args.horizon, &file)?;
            let tol = feasibility_tolerance(args.tol, &file)?;
            let d = design(&file, kind, horizon, formula, tol)?;
            (d.design_plant, d.result.blocks)
        }
    };
    let blocks = match args.perturb {
        Some(level) if level > 0.0 => {
            let seed = args.seed.or(file.options().seed).unwrap_or(0);
            perturb_blocks(&blocks, level, &mut ChaCha8Rng::seed_from_u64(seed))
        }
        _ => blocks,
    };
    let formula = formula.unwrap_or_else(|| RecoveryFormula::default_for(kind));
    let (cert_text, outcome) = certificate_section(kind, &design_plant, &blocks, formula)?;
    let mut text = cert_text;
    let k1 = recover_controller_tf(formula, &blocks, &design_plant)?;
    let controller = match file.initial_controller(&plant)? {
        Some(k0) => k0.parallel_add(&k1)?,
        None => k1,
    };
    text.push_str(&stability_lines(&plant, &controller)?);
    emit(&text, None, stdout)?;
    Ok(outcome)
}

/// Verdict of a certificate as an exit outcome, for callers outside the CLI.
pub fn outcome_of(cert: &Certificate) -> Outcome {
    Outcome::from_verdict(cert.verdict)
}
