//! Batch command-line front end.
//!
//! Each command resolves a [`RunConfig`] from an optional `--config` file
//! (any JSON config, or any file this tool wrote) overlaid with flags. The
//! resolved config is echoed into every output, so re-running a command
//! with `--config <output>` rebuilds that output byte for byte. Output
//! locations and `--threads` are not part of the echo.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decomposer::{DecomposerConfig, Decomposition, Threshold};
use crate::error::{Error, Result};
use crate::features::{HdmFeatureSpec, WindowSpec};
use crate::harness::recording::{load_recording, load_signals, write_recording, Recording};
use crate::harness::scenario::{self, run_scenario, ScenarioConfig, ScenarioReport, Scheme};
use crate::harness::swtt::SwttConfig;
use crate::harness::synth::{self, AtomRateConfig, GlmSimConfig, HdmSimConfig};
use crate::hrf::{BaseKernel, KernelAtom};
use crate::VERSION;

#[derive(Debug, Parser)]
#[command(name = "hdm", version = VERSION, about = "Hemodynamic decomposition and workload classification")]
pub struct Cli {
    /// Worker threads for the parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// JSON config, or an output file whose embedded config should be reused.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic recording and its ground truth.
    Simulate(SimulateArgs),
    /// Decompose every channel of a signal file into kernel atoms.
    Decompose(DecomposeArgs),
    /// Window a recording into a feature matrix.
    Features(FeaturesArgs),
    /// Walk-forward evaluation of feature schemes and models.
    Eval(EvalArgs),
    /// Render the results table of an eval report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimModel {
    #[default]
    Hdm,
    Glm,
    AtomRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Six-channel montage.
    #[default]
    A,
    /// AFpz only.
    B,
    /// AFpz with the settings of the synthetic atom-rate benchmark.
    AtomRate,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<SimModel>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Atoms per channel (hdm).
    #[arg(long)]
    pub atoms: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// AR(1) coefficient of the GLM error.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Lag-one coefficient of the HDM observation.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Record length in seconds (hdm, glm).
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Signal CSV (`time,<channel>,...`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    /// Absolute convergence radius.
    #[arg(long, conflicts_with = "xi_rel")]
    pub xi: Option<f64>,
    /// Convergence radius as a fraction of the centred input energy.
    #[arg(long)]
    pub xi_rel: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub markers: Option<PathBuf>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    #[arg(long, default_value = "features.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Signal CSV; repeat once per subject.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Marker CSV; one per `--input`, same order.
    #[arg(long)]
    pub markers: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feature schemes, e.g. `raw,tfd,hdm`.
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    pub features: Option<Vec<Scheme>>,
    /// Model presets, e.g. `svm-l,rf-50`.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    #[arg(long)]
    pub retrain_every: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` written by `eval`.
    #[arg(long)]
    pub report: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    Scheme::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimulateConfig {
    pub model: SimModel,
    pub seed: Option<u64>,
    pub hdm: HdmSimConfig,
    pub glm: GlmSimConfig,
    pub atom_rate: AtomRateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DecomposeConfig {
    pub input: PathBuf,
    /// All channels when empty.
    pub channels: Vec<String>,
    pub decomposer: DecomposerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturesConfig {
    pub input: PathBuf,
    pub markers: PathBuf,
    pub scheme: Scheme,
    pub channels: Vec<String>,
    pub window: WindowSpec,
    pub decomposer: DecomposerConfig,
    pub hdm: HdmFeatureSpec,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let sc = ScenarioConfig::scenario_a(0);
        Self {
            input: PathBuf::new(),
            markers: PathBuf::new(),
            scheme: Scheme::Raw,
            channels: sc.channels,
            window: sc.window,
            decomposer: sc.decomposer,
            hdm: sc.hdm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFiles {
    pub subject: String,
    pub signals: PathBuf,
    pub markers: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvalConfig {
    pub recordings: Vec<SubjectFiles>,
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Decompose(DecomposeConfig),
    Features(FeaturesConfig),
    Eval(EvalConfig),
}

impl RunConfig {
    fn echo(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// `# `-prefixed header lines for text outputs.
    fn comments(&self) -> Result<Vec<String>> {
        Ok(vec![format!("hdm {VERSION}"), format!("run: {}", self.echo()?)])
    }

    fn json_header(&self) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("hdm_version".into(), Value::String(VERSION.into()));
        m.insert("run".into(), serde_json::to_value(self).expect("config serialises"));
        m
    }
}

/// The run config embedded in `path`, or the bare config it holds.
fn load_config(path: &Path, command: &str) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse { path: path.display().to_string(), line, message };
    let mut v: Value = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e.to_string()))?
    } else {
        let (n, line) = text
            .lines()
            .enumerate()
            .find(|(_, l)| l.starts_with("# run: "))
            .ok_or_else(|| parse_err(1, "no embedded `# run:` line".into()))?;
        serde_json::from_str(&line["# run: ".len()..]).map_err(|e| parse_err(n + 1, e.to_string()))?
    };
    if let Some(run) = v.get("run") {
        v = run.clone();
    }
    if let Some(c) = v.get("command") {
        if c.as_str() != Some(command) {
            return Err(Error::config(format!("config file is for `{c}`, not `{command}`")));
        }
        v = v.get("config").cloned().unwrap_or(Value::Null);
    }
    Ok(v)
}

fn base_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>, command: &str) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let v = load_config(p, command)?;
            serde_json::from_value(v).map_err(|e| Error::config(format!("{}: {e}", p.display())))
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::config("--seed is required for this command"))
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, header: serde_json::Map<String, Value>, payload: Value) -> Result<()> {
    let mut m = header;
    if let Value::Object(p) = payload {
        m.extend(p);
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(m))?;
    s.push('\n');
    write(path, &s)
}

fn with_comments(comments: &[String], body: &str) -> String {
    let mut s: String = comments.iter().map(|c| format!("# {c}\n")).collect();
    s.push_str(body);
    s
}

pub fn resolve_simulate(args: &SimulateArgs, config: Option<&Path>) -> Result<SimulateConfig> {
    let mut c: SimulateConfig = base_config(config, "simulate")?;
    if let Some(m) = args.model {
        c.model = m;
    }
    if args.seed.is_some() {
        c.seed = args.seed;
    }
    if let Some(k) = args.atoms {
        c.hdm.atoms = k;
    }
    if let Some(v) = args.sigma2 {
        c.hdm.sigma2 = v;
        c.glm.sigma2 = v;
    }
    if let Some(v) = args.theta {
        c.hdm.theta_eps = v;
        c.atom_rate.theta_eps = v;
    }
    if let Some(v) = args.rho {
        c.glm.rho = v;
    }
    if let Some(v) = args.beta {
        c.glm.beta = v;
    }
    if let Some(v) = args.duration {
        c.hdm.duration = v;
        c.glm.duration = v;
    }
    if let Some(v) = args.fs {
        c.hdm.fs = v;
        c.glm.fs = v;
        c.atom_rate.fs = v;
    }
    if let Some(ch) = &args.channels {
        c.hdm.channels = ch.clone();
        c.glm.channels = ch.clone();
        c.atom_rate.channels = ch.clone();
    }
    require_seed(c.seed)?;
    Ok(c)
}

fn atoms_json(truth: &[Vec<KernelAtom>], rec: &Recording) -> Value {
    let base = BaseKernel::default();
    Value::Array(
        rec.channels
            .iter()
            .map(|(name, _)| name)
            .zip(truth)
            .map(|(name, atoms)| {
                let list: Vec<Value> = atoms
                    .iter()
                    .map(|a| {
                        serde_json::json!({
                            "a": a.a, "omega": a.omega, "tau": a.tau,
                            "peak_time": a.peak_time(&base),
                        })
                    })
                    .collect();
                serde_json::json!({ "channel": name, "atoms": list })
            })
            .collect(),
    )
}

pub fn cmd_simulate(c: &SimulateConfig, out_dir: &Path) -> Result<()> {
    let seed = require_seed(c.seed)?;
    let run = RunConfig::Simulate(c.clone());
    let truth = match c.model {
        SimModel::Hdm => {
            let (rec, atoms) = synth::hdm_recording(&c.hdm, seed)?;
            let v = serde_json::json!({ "channels": atoms_json(&atoms, &rec) });
            (rec, v)
        }
        SimModel::AtomRate => {
            let (rec, atoms) = synth::atom_rate_recording(&c.atom_rate, seed)?;
            let v = serde_json::json!({ "channels": atoms_json(&atoms, &rec) });
            (rec, v)
        }
        SimModel::Glm => {
            let (rec, x) = synth::glm_recording(&c.glm, seed)?;
            (rec, serde_json::json!({ "beta": c.glm.beta, "regressor": x.samples() }))
        }
    };
    let (rec, payload) = truth;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let comments = run.comments()?;
    write_recording(&rec, &out_dir.join("signals.csv"), &out_dir.join("markers.csv"), &comments)?;
    write_json(&out_dir.join("truth.json"), run.json_header(), payload)
}

pub fn resolve_decompose(args: &DecomposeArgs, config: Option<&Path>) -> Result<DecomposeConfig> {
    let mut c: DecomposeConfig = base_config(config, "decompose")?;
    if let Some(p) = &args.input {
        c.input = p.clone();
    }
    if let Some(ch) = &args.channels {
        c.channels = ch.clone();
    }
    if let Some(x) = args.xi {
        c.decomposer.xi = Threshold::Absolute(x);
    }
    if let Some(x) = args.xi_rel {
        c.decomposer.xi = Threshold::Relative(x);
    }
    if let Some(m) = args.max_iter {
        c.decomposer.max_iter = m;
    }
    if c.input.as_os_str().is_empty() {
        return Err(Error::config("--input is required"));
    }
    c.decomposer.validate()?;
    Ok(c)
}

pub fn cmd_decompose(c: &DecomposeConfig, out_dir: &Path) -> Result<()> {
    let run = RunConfig::Decompose(c.clone());
    let mut signals = load_signals(&c.input)?;
    if !c.channels.is_empty() {
        let mut picked = Vec::new();
        for name in &c.channels {
            let s = signals.iter().find(|(n, _)| n == name).ok_or_else(|| Error::MissingChannel(name.clone()))?;
            picked.push(s.clone());
        }
        signals = picked;
    }
    let decs: Vec<(String, Decomposition)> = scenario::decompose_channels(&signals, &c.decomposer)?;
    let mut curve = String::from("channel,iteration,residual\n");
    for (name, d) in &decs {
        for (i, r) in d.residual_curve.iter().enumerate() {
            curve.push_str(&format!("{name},{i},{r}\n"));
        }
    }
    let channels: Vec<Value> = decs
        .iter()
        .map(|(n, d)| serde_json::json!({ "channel": n, "decomposition": d }))
        .collect();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("residual_curve.csv"), &with_comments(&run.comments()?, &curve))?;
    write_json(&out_dir.join("decomposition.json"), run.json_header(), serde_json::json!({ "channels": channels }))
}

pub fn resolve_features(args: &FeaturesArgs, config: Option<&Path>) -> Result<FeaturesConfig> {
    let mut c: FeaturesConfig = base_config(config, "features")?;
    if let Some(p) = &args.input {
        c.input = p.clone();
    }
    if let Some(p) = &args.markers {
        c.markers = p.clone();
    }
    if let Some(s) = args.scheme {
        c.scheme = s;
    }
    if let Some(ch) = &args.channels {
        c.channels = ch.clone();
    }
    if c.input.as_os_str().is_empty() || c.markers.as_os_str().is_empty() {
        return Err(Error::config("--input and --markers are required"));
    }
    Ok(c)
}

pub fn cmd_features(c: &FeaturesConfig, out: &Path) -> Result<()> {
    let run = RunConfig::Features(c.clone());
    let rec = load_recording(&c.input, &c.markers, "input")?;
    let sc = ScenarioConfig {
        channels: c.channels.clone(),
        window: c.window,
        decomposer: c.decomposer.clone(),
        hdm: c.hdm,
        ..ScenarioConfig::scenario_a(0)
    };
    c.window.validate()?;
    c.decomposer.validate()?;
    let fm = scenario::scheme_features(&rec, &sc, c.scheme)?;
    let mut buf = Vec::new();
    fm.write_csv(&mut buf, &run.comments()?)?;
    write(out, std::str::from_utf8(&buf).expect("csv is utf-8"))
}

pub fn resolve_eval(args: &EvalArgs, config: Option<&Path>) -> Result<EvalConfig> {
    let mut c: EvalConfig = base_config(config, "eval")?;
    if args.input.len() != args.markers.len() {
        return Err(Error::config("give one --markers per --input"));
    }
    if !args.input.is_empty() {
        c.recordings = args
            .input
            .iter()
            .zip(&args.markers)
            .enumerate()
            .map(|(i, (s, m))| SubjectFiles { subject: format!("S{:02}", i + 1), signals: s.clone(), markers: m.clone() })
            .collect();
    }
    if args.seed.is_some() {
        c.seed = args.seed;
    }
    let seed = require_seed(c.seed)?;
    if let Some(p) = args.preset {
        c.scenario = match p {
            Preset::A => ScenarioConfig::scenario_a(seed),
            Preset::B => ScenarioConfig::scenario_b(seed),
            Preset::AtomRate => ScenarioConfig::atom_rate_benchmark(seed),
        };
    }
    c.scenario.seed = seed;
    if let Some(f) = &args.features {
        c.scenario.schemes = f.clone();
    }
    if let Some(m) = &args.models {
        c.scenario.models = m.clone();
    }
    if let Some(ch) = &args.channels {
        c.scenario.channels = ch.clone();
    }
    if let Some(r) = args.retrain_every {
        c.scenario.swtt = SwttConfig { retrain_every: r, ..c.scenario.swtt };
    }
    if c.recordings.is_empty() {
        return Err(Error::config("--input/--markers are required"));
    }
    c.scenario.validate()?;
    Ok(c)
}

pub fn cmd_eval(c: &EvalConfig, out_dir: &Path) -> Result<ScenarioReport> {
    let run = RunConfig::Eval(c.clone());
    let recs = c
        .recordings
        .iter()
        .map(|f| load_recording(&f.signals, &f.markers, &f.subject))
        .collect::<Result<Vec<_>>>()?;
    let report = run_scenario(&recs, &c.scenario)?;
    let comments = run.comments()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&out_dir.join("report.json"), run.json_header(), serde_json::json!({ "report": report }))?;
    write(&out_dir.join("table.txt"), &with_comments(&comments, &scenario::render_table(&report)))?;
    write(&out_dir.join("confusion.csv"), &with_comments(&comments, &scenario::confusion_csv(&report)))?;
    write(&out_dir.join("folds.csv"), &with_comments(&comments, &scenario::folds_csv(&report)))?;
    Ok(report)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let path = &args.report;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: path.display().to_string(), line: e.line(), message: e.to_string() })?;
    let report: ScenarioReport = v
        .get("report")
        .cloned()
        .ok_or_else(|| Error::Parse { path: path.display().to_string(), line: 1, message: "no `report` field".into() })
        .and_then(|r| serde_json::from_value(r).map_err(Error::from))?;
    let mut comments = vec![format!("hdm {VERSION}")];
    if let Some(run) = v.get("run") {
        comments.push(format!("run: {}", serde_json::to_string(run)?));
    }
    let body = with_comments(&comments, &scenario::render_table(&report));
    match &args.out {
        Some(p) => write(p, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = cli.config.as_deref();
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&resolve_simulate(a, cfg)?, &a.out_dir),
        Command::Decompose(a) => cmd_decompose(&resolve_decompose(a, cfg)?, &a.out_dir),
        Command::Features(a) => cmd_features(&resolve_features(a, cfg)?, &a.out),
        Command::Eval(a) => cmd_eval(&resolve_eval(a, cfg)?, &a.out_dir).map(|_| ()),
        Command::Report(a) => cmd_report(a),
    }
}

/// Runs the parsed command on a pool of `--threads` workers.
pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::config("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli))
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main_with_args() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hdm: {e}");
            e.exit_code()
        }
    }
}
