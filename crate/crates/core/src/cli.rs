//! Command-line front end. Each subcommand validates its parameters, runs
//! one experiment and emits an [`ExperimentReport`].

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::algebra::{gns_construct, state_from_projector, two_spin, FiniteAlgebra};
use crate::contextprob::joint_measure_feasible;
use crate::error::{Error, Result};
use crate::essengine::DecisionTime;
use crate::experiments::{
    self, chsh_axes, chsh_estimate, count_optical_teleport, degrees_to_radians, double_slit_spectrum,
    proportion_estimate, rho_statistic_with, run_delayed_choice_sharded,
    run_epr_sweep_sharded, run_teleport_ideal_with, sample_double_slit, sign_changes, DoubleSlitModel, Engine,
    Estimate, TeleportApparatus, DEFAULT_RESIDUAL_DISTINGUISHABILITY,
};
use crate::linalg::{c, Complex};
use crate::qmengine::MzConfig;
use crate::report::ExperimentReport;
use crate::rng::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "epistate", version, about = "Quantum vs. elementary-state experiment simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Momentum spectrum behind a lattice double slit.
    DoubleSlit(DoubleSlitArgs),
    /// Delayed-choice Mach-Zehnder interferometer.
    Mzi(MziArgs),
    /// Singlet spin correlations for a list of axis pairs.
    Epr(EprArgs),
    /// CHSH correlations and joint-measure feasibility.
    Chsh(ChshArgs),
    /// Teleportation circuit with Bell measurement and correction.
    TeleportIdeal(TeleportIdealArgs),
    /// Optical teleportation apparatus with coincidence counting.
    TeleportOptical(TeleportOpticalArgs),
    /// The N₋(45)/N₋(90) discriminator at matched coincidence counts.
    Rho(RhoArgs),
    /// Expectation values of the product state from its GNS representation.
    GnsDemo(GnsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Qm,
    Ess,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Qm => Engine::Qm,
            EngineArg::Ess => Engine::Ess,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConfigArg {
    Open,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecisionArg {
    Before,
    After,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker shards (results do not depend on it).
    #[arg(long)]
    pub shards: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DoubleSlitArgs {
    #[arg(long, default_value_t = 64)]
    pub sites: usize,
    /// Sites of slit a, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [24usize, 25])]
    pub slit_a: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [40usize, 41])]
    pub slit_b: Vec<usize>,
    /// Use the classical mixture of single-slit runs instead of both slits open.
    #[arg(long)]
    pub single_slit: bool,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct MziArgs {
    #[arg(long, value_enum, default_value_t = ConfigArg::Closed)]
    pub config: ConfigArg,
    /// When the exit splitter is decided on.
    #[arg(long, value_enum, default_value_t = DecisionArg::Before)]
    pub decision: DecisionArg,
    #[arg(long, value_enum, default_value_t = EngineArg::Qm)]
    pub engine: EngineArg,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EprArgs {
    /// Axis pair `alice:bob` in degrees (x–z plane); repeatable.
    #[arg(long = "pair", value_parser = parse_pair, default_values = ["0:0", "0:45", "0:90"])]
    pub pairs: Vec<(f64, f64)>,
    #[arg(long, value_enum, default_value_t = EngineArg::Qm)]
    pub engine: EngineArg,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ChshArgs {
    #[arg(long, value_enum, default_value_t = EngineArg::Qm)]
    pub engine: EngineArg,
    /// Shots per setting pair.
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TeleportIdealArgs {
    /// Amplitude of |+⟩ as `re,im`.
    #[arg(long, value_parser = parse_complex, default_value = "0.6,0")]
    pub alpha: Complex,
    /// Amplitude of |−⟩ as `re,im`.
    #[arg(long, value_parser = parse_complex, default_value = "0,0.8")]
    pub beta: Complex,
    /// Skip Bob's correction.
    #[arg(long)]
    pub no_corrections: bool,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TeleportOpticalArgs {
    /// Encoder polarization angle in degrees.
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    pub encoder: f64,
    /// PBS angle in degrees.
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    pub pbs: f64,
    /// Photons 1 and 2 reach the splitter at different times.
    #[arg(long)]
    pub misaligned: bool,
    /// Probability that aligned photons are still distinguishable.
    #[arg(long, default_value_t = 0.0)]
    pub residual: f64,
    #[arg(long, value_enum, default_value_t = EngineArg::Qm)]
    pub engine: EngineArg,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct RhoArgs {
    #[arg(long, value_enum, default_value_t = EngineArg::Ess)]
    pub engine: EngineArg,
    /// Matched N₋+N₊ per configuration.
    #[arg(long, default_value_t = 1_000_000)]
    pub target: u64,
    /// Probability that aligned photons are still distinguishable.
    #[arg(long, default_value_t = DEFAULT_RESIDUAL_DISTINGUISHABILITY)]
    pub residual: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct GnsArgs {
    /// Emit a report in this format instead of the plain table.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected alice:bob, got '{s}'"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    let (a, b) = (parse(a)?, parse(b)?);
    if !a.is_finite() || !b.is_finite() {
        return Err("angles must be finite".into());
    }
    Ok((a, b))
}

fn parse_complex(s: &str) -> std::result::Result<Complex, String> {
    let (re, im) = s.split_once(',').unwrap_or((s, "0"));
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    Ok(c(parse(re)?, parse(im)?))
}

/// Failure while running a command, tagged with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: msg.into() }
    }

    fn runtime(e: Error) -> Self {
        Self { code: EXIT_RUNTIME, message: e.to_string() }
    }
}

fn positive(name: &str, n: u64) -> std::result::Result<(), Failure> {
    if n == 0 {
        Err(Failure::usage(format!("--{name} must be positive")))
    } else {
        Ok(())
    }
}

fn shards(common: &Common) -> std::result::Result<usize, Failure> {
    match common.shards {
        Some(0) => Err(Failure::usage("--shards must be positive")),
        Some(n) => Ok(n),
        None => Ok(experiments::default_shards()),
    }
}

fn run_err(e: Error) -> Failure {
    Failure::runtime(e)
}

fn mz_config(c: ConfigArg) -> MzConfig {
    match c {
        ConfigArg::Open => MzConfig::Open,
        ConfigArg::Closed => MzConfig::Closed,
    }
}

fn decision(d: DecisionArg) -> DecisionTime {
    match d {
        DecisionArg::Before => DecisionTime::BeforeEntry,
        DecisionArg::After => DecisionTime::AfterEntry,
    }
}

/// Expectation values of the up-up product state read off its GNS
/// representation: `[S1z, S2z, Sz, S²]`.
pub fn gns_demo_values() -> Result<[(&'static str, f64); 4]> {
    let algebra = FiniteAlgebra::spins(2);
    let psi = state_from_projector(&two_spin::p_up_up(), &algebra)?;
    let rep = gns_construct(&psi)?;
    let v = |m| rep.vacuum_expectation(&m).map(|z| z.re);
    Ok([
        ("S1z", v(two_spin::s1z())?),
        ("S2z", v(two_spin::s2z())?),
        ("Sz", v(two_spin::sz_total())?),
        ("S^2", v(two_spin::s_squared())?),
    ])
}

/// Runs a parsed command.
pub fn execute(command: &Command) -> std::result::Result<Output, Failure> {
    let start = Instant::now();
    let mut out = match command {
        Command::DoubleSlit(a) => Output::report(double_slit(a)?, &a.common),
        Command::Mzi(a) => Output::report(mzi(a)?, &a.common),
        Command::Epr(a) => Output::report(epr(a)?, &a.common),
        Command::Chsh(a) => Output::report(chsh(a)?, &a.common),
        Command::TeleportIdeal(a) => Output::report(teleport_ideal(a)?, &a.common),
        Command::TeleportOptical(a) => Output::report(teleport_optical(a)?, &a.common),
        Command::Rho(a) => Output::report(rho(a)?, &a.common),
        Command::GnsDemo(a) => gns_demo(a)?,
    };
    if let Some(r) = out.report.as_mut() {
        r.elapsed = start.elapsed();
    }
    Ok(out)
}

/// What a command produced and where it goes.
#[derive(Debug)]
pub struct Output {
    pub report: Option<ExperimentReport>,
    pub format: Option<Format>,
    pub text: String,
    pub path: Option<PathBuf>,
}

impl Output {
    fn report(r: ExperimentReport, common: &Common) -> Self {
        Self { report: Some(r), format: Some(common.format), text: String::new(), path: common.output.clone() }
    }

    /// Serialized body.
    pub fn render(&self) -> Result<String> {
        match (&self.report, self.format) {
            (Some(r), Some(Format::Json)) => r.to_json(),
            (Some(r), Some(Format::Csv)) => Ok(r.to_csv()),
            _ => Ok(self.text.clone()),
        }
    }
}

fn double_slit(a: &DoubleSlitArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("shots", a.shots)?;
    let shards = shards(&a.common)?;
    let model = DoubleSlitModel::new(a.sites, a.slit_a.clone(), a.slit_b.clone())
        .map_err(|e| Failure::usage(e.to_string()))?;
    let both_open = !a.single_slit;
    let spectrum = double_slit_spectrum(&model, both_open).map_err(run_err)?;
    let counts = sample_double_slit(&model, both_open, a.shots, a.common.seed, shards).map_err(run_err)?;
    let mut r = ExperimentReport::new("double-slit", "qm", a.common.seed, a.shots)
        .param("sites", a.sites)
        .param("slit_a", &a.slit_a)
        .param("slit_b", &a.slit_b)
        .param("both_open", both_open);
    for (k, n) in counts {
        r.count(format!("k={k}"), n);
    }
    r.derive("distribution_sum", Estimate::exact(spectrum.total().iter().sum()));
    r.derive("interference_sign_changes", Estimate::exact(sign_changes(&spectrum.interference, 1e-12) as f64));
    r.derive(
        "interference_weight",
        Estimate::exact(spectrum.interference.iter().map(|x| x.abs()).sum()),
    );
    Ok(r)
}

fn mzi(a: &MziArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("shots", a.shots)?;
    let shards = shards(&a.common)?;
    let engine: Engine = a.engine.into();
    let config = mz_config(a.config);
    let time = decision(a.decision);
    let res = run_delayed_choice_sharded(&[(config, time)], a.shots, engine, a.common.seed, shards);
    let row = &res.rows[0];
    let mut r = ExperimentReport::new("mzi", engine.label(), a.common.seed, a.shots)
        .param("config", config.label())
        .param("decision_time", time.label());
    r.count("Da", row.da);
    r.count("Db", row.db);
    let p = proportion_estimate(row.db, a.shots, derive_seed(a.common.seed, 0)).map_err(run_err)?;
    r.derive("p_db", p);
    Ok(r)
}

fn epr(a: &EprArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("shots", a.shots)?;
    if a.pairs.is_empty() {
        return Err(Failure::usage("at least one --pair is required"));
    }
    let shards = shards(&a.common)?;
    let engine: Engine = a.engine.into();
    let axes: Vec<(f64, f64)> =
        a.pairs.iter().map(|&(x, y)| (degrees_to_radians(x), degrees_to_radians(y))).collect();
    let sweep = run_epr_sweep_sharded(&axes, a.shots, engine, a.common.seed, shards).map_err(run_err)?;
    let labels: Vec<String> = a.pairs.iter().map(|(x, y)| format!("{x}:{y}")).collect();
    let mut r = ExperimentReport::new("epr", engine.label(), a.common.seed, a.shots * a.pairs.len() as u64)
        .param("pairs_deg", &labels)
        .param("shots_per_pair", a.shots);
    for (label, row) in labels.iter().zip(&sweep.rows) {
        r.count(format!("{label}/agree"), row.agree);
        r.count(format!("{label}/disagree"), row.shots - row.agree);
        r.derive(format!("E({label})"), row.correlation);
    }
    Ok(r)
}

fn chsh(a: &ChshArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("shots", a.shots)?;
    let shards = shards(&a.common)?;
    let engine: Engine = a.engine.into();
    let axes = chsh_axes();
    let sweep = run_epr_sweep_sharded(&axes, a.shots, engine, a.common.seed, shards).map_err(run_err)?;
    let feasible = joint_measure_feasible(&sweep.table, None).map_err(run_err)?;
    let names = ["a0:b0", "a0:b1", "a1:b0", "a1:b1"];
    let mut r = ExperimentReport::new("chsh", engine.label(), a.common.seed, a.shots * 4)
        .param("alice_deg", [0.0, 90.0])
        .param("bob_deg", [45.0, 135.0])
        .param("shots_per_setting", a.shots);
    for (name, row) in names.iter().zip(&sweep.rows) {
        r.count(format!("{name}/agree"), row.agree);
        r.count(format!("{name}/disagree"), row.shots - row.agree);
        r.derive(format!("E({name})"), row.correlation);
    }
    r.derive("chsh", chsh_estimate(&sweep, a.common.seed).map_err(run_err)?);
    r.derive("joint_measure_feasible", Estimate::exact(if feasible.feasible { 1.0 } else { 0.0 }));
    Ok(r)
}

fn teleport_ideal(a: &TeleportIdealArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("shots", a.shots)?;
    let shards = shards(&a.common)?;
    let norm = a.alpha.norm_sqr() + a.beta.norm_sqr();
    if (norm - 1.0).abs() > crate::linalg::ANALYTIC_TOL {
        return Err(Failure::usage(format!("|alpha|^2 + |beta|^2 = {norm}, expected 1")));
    }
    let res = run_teleport_ideal_with(a.alpha, a.beta, !a.no_corrections, a.shots, a.common.seed, shards)
        .map_err(run_err)?;
    let mut r = ExperimentReport::new("teleport-ideal", "qm", a.common.seed, a.shots)
        .param("alpha", [a.alpha.re, a.alpha.im])
        .param("beta", [a.beta.re, a.beta.im])
        .param("corrections", !a.no_corrections);
    for (k, n) in &res.histogram {
        r.count(k.label(), *n);
    }
    r.derive("mean_fidelity", Estimate::exact(res.mean_fidelity));
    for (k, f) in &res.branch_fidelity {
        r.derive(format!("fidelity_{}", k.label()), Estimate::exact(*f));
    }
    Ok(r)
}

fn teleport_optical(a: &TeleportOpticalArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("shots", a.shots)?;
    let shards = shards(&a.common)?;
    let engine: Engine = a.engine.into();
    let app = TeleportApparatus::new(a.encoder, a.pbs, !a.misaligned, a.shots, engine)
        .and_then(|x| x.with_residual_distinguishability(a.residual))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let counts = count_optical_teleport(&app, a.common.seed, shards).map_err(run_err)?;
    let mut r = ExperimentReport::new("teleport-optical", engine.label(), a.common.seed, a.shots)
        .param("encoder_deg", app.encoder_angle())
        .param("pbs_deg", app.pbs_angle())
        .param("mirror_aligned", app.mirror_aligned)
        .param("residual_distinguishability", app.residual_distinguishability());
    r.count("minus_coincidence", counts.n_minus);
    r.count("plus_coincidence", counts.n_plus);
    r.count("no_coincidence", counts.n_other);
    if counts.coincidences() > 0 {
        let share = proportion_estimate(counts.n_minus, counts.coincidences(), derive_seed(a.common.seed, 0))
            .map_err(run_err)?;
        r.derive("minus_share", share);
        let plus = Estimate { value: 1.0 - share.value, ci_low: 1.0 - share.ci_high, ci_high: 1.0 - share.ci_low };
        r.derive("teleported_fraction", plus);
    }
    Ok(r)
}

fn rho(a: &RhoArgs) -> std::result::Result<ExperimentReport, Failure> {
    positive("target", a.target)?;
    if !(0.0..=1.0).contains(&a.residual) {
        return Err(Failure::usage("--residual must lie in [0, 1]"));
    }
    let shards = shards(&a.common)?;
    let engine: Engine = a.engine.into();
    let res = rho_statistic_with(a.target, a.common.seed, engine, a.residual, shards).map_err(run_err)?;
    let mut r = ExperimentReport::new("rho", engine.label(), a.common.seed, a.target)
        .param("target", a.target)
        .param("residual_distinguishability", a.residual)
        .param("shots_45", res.at_45.shots)
        .param("shots_90", res.at_90.shots);
    r.count("45/minus_coincidence", res.at_45.counts.n_minus);
    r.count("45/plus_coincidence", res.at_45.counts.n_plus);
    r.count("90/minus_coincidence", res.at_90.counts.n_minus);
    r.count("90/plus_coincidence", res.at_90.counts.n_plus);
    r.derive("rho", res.rho);
    Ok(r)
}

fn gns_demo(a: &GnsArgs) -> std::result::Result<Output, Failure> {
    let values = gns_demo_values().map_err(run_err)?;
    if let Some(format) = a.format {
        let mut r = ExperimentReport::new("gns-demo", "qm", 0, 0);
        for (name, v) in values {
            r.derive(format!("Psi({name})"), Estimate::exact(v));
        }
        return Ok(Output { report: Some(r), format: Some(format), text: String::new(), path: a.output.clone() });
    }
    let mut text = String::from("observable  Psi\n");
    for (name, v) in values {
        text.push_str(&format!("{name:<10}  {v}\n"));
    }
    Ok(Output { report: None, format: None, text, path: a.output.clone() })
}

/// Parses `argv` (including the program name), runs the command and writes
/// the result. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(rendered.as_bytes()) } else { stdout.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let out = match execute(&cli.command) {
        Ok(o) => o,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            return f.code;
        }
    };
    let body = match out.render() {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let written = match &out.path {
        Some(p) => std::fs::write(p, body.as_bytes()).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => stdout.write_all(body.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        let _ = writeln!(stderr, "error: {msg}");
        return EXIT_RUNTIME;
    }
    if let Some(r) = &out.report {
        let _ = writeln!(stderr, "elapsed: {:.3} s", r.elapsed.as_secs_f64());
    }
    EXIT_OK
}
