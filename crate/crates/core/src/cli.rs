//! Command-line front end. Every subcommand reads the same `key = value`
//! config grammar; flags override file entries. Outputs carry the full
//! effective configuration and are byte-identical across reruns (wall time
//! goes to stderr only).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::entropy::{
    build_witness_tree, count_curve, default_power, default_seeds, find_unstable_continuum,
    verify_separated, CurveOptions, EntropyError, Method,
};
use crate::expansivity::{
    cw_search, discrete_cw_check, interval_seeds, suspension_seeds, ExpansivityError,
    SearchOptions, Seed,
};
use crate::sections::{
    build_pair, build_pair_with, build_triple, Layout, PairOptions, SectionError,
};
use crate::spaces::{Arc, TorusPoint};
use crate::systems::{
    suspension_distance, FlowHandle, IntervalFlow, SuspensionFlow, SuspensionPoint, SystemError,
    SystemKind,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_UNSTABLE: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn system_code(e: &SystemError) -> i32 {
    match e {
        SystemError::Parameter(_)
        | SystemError::Unsupported(_)
        | SystemError::KindMismatch { .. } => EXIT_CONFIG,
        SystemError::Space(_) => EXIT_VALIDATION,
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        CliError {
            code: system_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<SectionError> for CliError {
    fn from(e: SectionError) -> Self {
        let code = match &e {
            SectionError::System(s) => system_code(s),
            SectionError::Unsupported(_) | SectionError::Parameter(_) => EXIT_CONFIG,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EntropyError> for CliError {
    fn from(e: EntropyError) -> Self {
        let code = match &e {
            EntropyError::System(s) => system_code(s),
            EntropyError::Section(s) => return s.clone().into(),
            EntropyError::Parameter(_) => EXIT_CONFIG,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExpansivityError> for CliError {
    fn from(e: ExpansivityError) -> Self {
        let code = match &e {
            ExpansivityError::System(s) => system_code(s),
            ExpansivityError::Parameter(_) | ExpansivityError::Unsupported(_) => EXIT_CONFIG,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Parsed config file: key -> (value, 1-based line).
pub type ConfigMap = BTreeMap<String, (String, usize)>;

fn norm_key(k: &str) -> String {
    k.trim().replace('_', "-")
}

/// `key = value` lines with `#` comments. Rejects malformed lines and
/// duplicate keys (citing both lines).
pub fn parse_config(text: &str) -> Result<ConfigMap, CliError> {
    let mut out = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!(
                "line {line_no}: expected `key = value`, got `{line}`"
            ))
        })?;
        let key = norm_key(k);
        if key.is_empty() {
            return Err(CliError::config(format!("line {line_no}: empty key")));
        }
        if let Some((_, first)) = out.get(&key) {
            return Err(CliError::config(format!(
                "duplicate key `{key}` on lines {first} and {line_no}"
            )));
        }
        out.insert(key, (v.trim().to_string(), line_no));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Positive,
    Count { min: usize },
    Flag,
    Choice(&'static [&'static str]),
    System,
    Triple,
    Path,
}

#[derive(Debug, Clone, Copy)]
struct KeySpec {
    name: &'static str,
    kind: Kind,
    /// `None`: required. `Some("")`: optional without default.
    default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>) -> KeySpec {
    KeySpec {
        name,
        kind,
        default,
    }
}

const COMMON: [KeySpec; 5] = [
    key("system", Kind::System, None),
    key("seed", Kind::Count { min: 0 }, Some("0")),
    key("threads", Kind::Count { min: 0 }, Some("0")),
    key("out", Kind::Path, Some("")),
    key("strict", Kind::Flag, Some("false")),
];

const METHODS: &[&str] = &[
    "bowen-span",
    "bowen-sep",
    "weak-span",
    "section-span",
    "section-sep",
];

fn schema(command: &str) -> Vec<KeySpec> {
    let mut v = COMMON.to_vec();
    let extra: &[KeySpec] = match command {
        "entropy" => &[
            key("method", Kind::Choice(METHODS), None),
            key("gamma", Kind::Positive, None),
            key("n-min", Kind::Count { min: 0 }, Some("2")),
            key("n-max", Kind::Count { min: 0 }, Some("")),
            key("t-max", Kind::Count { min: 1 }, Some("")),
            key("grid", Kind::Count { min: 1 }, Some("")),
            key("delta", Kind::Positive, Some("")),
            key("heights", Kind::Count { min: 1 }, Some("2")),
            key("dt", Kind::Positive, Some("0.125")),
        ],
        "expansivity" => &[
            key("delta", Kind::Positive, None),
            key("eps", Kind::Positive, Some("0.5")),
            key("window", Kind::Positive, Some("50")),
            key("budget", Kind::Count { min: 1 }, Some("10000")),
            key(
                "seed-set",
                Kind::Choice(&["default", "singletons"]),
                Some("default"),
            ),
            key("mode", Kind::Choice(&["flow", "discrete"]), Some("flow")),
            key("dt", Kind::Positive, Some("0.5")),
            key("n-max", Kind::Count { min: 1 }, Some("20")),
        ],
        "sections-validate" => &[
            key("delta", Kind::Positive, None),
            key("resolution", Kind::Count { min: 1 }, Some("9")),
        ],
        "witness" => &[
            key("delta", Kind::Positive, Some("0.32")),
            key("m", Kind::Count { min: 1 }, None),
            key("delta1", Kind::Positive, None),
            key("N", Kind::Count { min: 1 }, Some("")),
        ],
        "suspend-metric" => &[key("x", Kind::Triple, None), key("y", Kind::Triple, None)],
        _ => &[],
    };
    v.extend_from_slice(extra);
    v
}

fn check_value(spec: &KeySpec, v: &str) -> Result<(), String> {
    let bad = |what: &str| Err(format!("`{}` {what}, got `{v}`", spec.name));
    match spec.kind {
        Kind::Positive => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(()),
            _ => bad("must be a positive number"),
        },
        Kind::Count { min } => match v.parse::<usize>() {
            Ok(x) if x >= min => Ok(()),
            _ => bad(&format!("must be an integer ≥ {min}")),
        },
        Kind::Flag => match v {
            "true" | "false" => Ok(()),
            _ => bad("must be true or false"),
        },
        Kind::Choice(opts) => {
            if opts.contains(&v) {
                Ok(())
            } else {
                bad(&format!("must be one of {}", opts.join(" | ")))
            }
        }
        Kind::System => v.parse::<SystemKind>().map(|_| ()).or_else(|_| {
            bad(&format!(
                "must be one of {}",
                SystemKind::ALL.map(|k| k.as_str()).join(" | ")
            ))
        }),
        Kind::Triple => match parse_triple(v) {
            Some(_) => Ok(()),
            None => bad("must be `x,y,height` with x, y, height in [0,1)"),
        },
        Kind::Path => Ok(()),
    }
}

fn parse_triple(v: &str) -> Option<(f64, f64, f64)> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .ok()?;
    match parts[..] {
        [x, y, h] if [x, y, h].iter().all(|c| (0.0..1.0).contains(c)) => Some((x, y, h)),
        _ => None,
    }
}

/// Effective configuration of one run: every schema key with its value
/// (empty for unset optional keys).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    fn get(&self, k: &str) -> &str {
        self.values.get(k).map(String::as_str).unwrap_or("")
    }

    fn is_set(&self, k: &str) -> bool {
        !self.get(k).is_empty()
    }

    fn f64(&self, k: &str) -> f64 {
        self.get(k).parse().expect("validated")
    }

    fn usize(&self, k: &str) -> usize {
        self.get(k).parse().expect("validated")
    }

    fn system(&self) -> SystemKind {
        self.get("system").parse().expect("validated")
    }

    fn strict(&self) -> bool {
        self.get("strict") == "true"
    }

    fn set(&mut self, k: &str, v: String) {
        self.values.insert(k.to_string(), v);
    }
}

/// Merge file entries and flag overrides against the command's schema.
pub fn resolve(
    command: &str,
    file: &ConfigMap,
    flags: &[(String, String)],
) -> Result<RunConfig, CliError> {
    let spec = schema(command);
    if spec.len() == COMMON.len() {
        return Err(CliError::config(format!("unknown command `{command}`")));
    }
    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for (k, (v, line)) in file {
        if !spec.iter().any(|s| s.name == k) {
            return Err(CliError::config(format!(
                "line {line}: unknown key `{k}` for `{command}`"
            )));
        }
        raw.insert(k.clone(), v.clone());
    }
    for (k, v) in flags {
        raw.insert(norm_key(k), v.clone());
    }
    let mut values = BTreeMap::new();
    let mut missing = Vec::new();
    let mut errors = Vec::new();
    for s in &spec {
        match (raw.get(s.name), s.default) {
            (Some(v), _) => {
                if let Err(e) = check_value(s, v) {
                    errors.push(e);
                }
                values.insert(s.name.to_string(), v.clone());
            }
            (None, Some(d)) => {
                values.insert(s.name.to_string(), d.to_string());
            }
            (None, None) => missing.push(s.name),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::config(format!(
            "missing required keys: {}",
            missing.join(", ")
        )));
    }
    if !errors.is_empty() {
        return Err(CliError::config(errors.join("; ")));
    }
    Ok(RunConfig {
        command: command.to_string(),
        values,
    })
}

#[derive(Parser, Debug)]
#[command(
    name = "ergoflow",
    version,
    about = "Entropy and cw-expansivity experiments for suspension flows"
)]
struct Cli {
    /// Config file of `key = value` lines; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Treat unstable growth fits as failures (exit 4).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count curves and growth fits.
    Entropy(EntropyArgs),
    /// Search for cw-expansivity violations.
    Expansivity(ExpansivityArgs),
    /// Cross-section pairs.
    Sections {
        #[command(subcommand)]
        command: SectionsCommand,
    },
    /// Binary tree of separated points and the resulting lower bound.
    Witness(WitnessArgs),
    /// Suspension utilities.
    Suspend {
        #[command(subcommand)]
        command: SuspendCommand,
    },
}

#[derive(Subcommand, Debug)]
enum SectionsCommand {
    /// Build a pair and report its constants and checks.
    Validate(ValidateArgs),
}

#[derive(Subcommand, Debug)]
enum SuspendCommand {
    /// Chain-metric distance between two suspension points.
    Metric(MetricArgs),
}

#[derive(Args, Debug)]
struct EntropyArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long = "n-min")]
    n_min: Option<String>,
    #[arg(long = "n-max")]
    n_max: Option<String>,
    #[arg(long = "t-max")]
    t_max: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    heights: Option<String>,
    #[arg(long)]
    dt: Option<String>,
}

#[derive(Args, Debug)]
struct ExpansivityArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long = "seed-set")]
    seed_set: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long = "n-max")]
    n_max: Option<String>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
}

#[derive(Args, Debug)]
struct WitnessArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    delta1: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
}

#[derive(Args, Debug)]
struct MetricArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
}

fn push(flags: &mut Vec<(String, String)>, k: &str, v: &Option<String>) {
    if let Some(v) = v {
        flags.push((k.to_string(), v.clone()));
    }
}

fn command_flags(cli: &Cli) -> (&'static str, Vec<(String, String)>) {
    let mut f = Vec::new();
    push(&mut f, "out", &cli.out);
    push(&mut f, "seed", &cli.seed);
    push(&mut f, "threads", &cli.threads);
    if cli.strict {
        f.push(("strict".into(), "true".into()));
    }
    let name = match &cli.command {
        Command::Entropy(a) => {
            push(&mut f, "system", &a.system);
            push(&mut f, "method", &a.method);
            push(&mut f, "gamma", &a.gamma);
            push(&mut f, "n-min", &a.n_min);
            push(&mut f, "n-max", &a.n_max);
            push(&mut f, "t-max", &a.t_max);
            push(&mut f, "grid", &a.grid);
            push(&mut f, "delta", &a.delta);
            push(&mut f, "heights", &a.heights);
            push(&mut f, "dt", &a.dt);
            "entropy"
        }
        Command::Expansivity(a) => {
            push(&mut f, "system", &a.system);
            push(&mut f, "delta", &a.delta);
            push(&mut f, "eps", &a.eps);
            push(&mut f, "window", &a.window);
            push(&mut f, "budget", &a.budget);
            push(&mut f, "seed-set", &a.seed_set);
            push(&mut f, "mode", &a.mode);
            push(&mut f, "dt", &a.dt);
            push(&mut f, "n-max", &a.n_max);
            "expansivity"
        }
        Command::Sections {
            command: SectionsCommand::Validate(a),
        } => {
            push(&mut f, "system", &a.system);
            push(&mut f, "delta", &a.delta);
            push(&mut f, "resolution", &a.resolution);
            "sections-validate"
        }
        Command::Witness(a) => {
            push(&mut f, "system", &a.system);
            push(&mut f, "delta", &a.delta);
            push(&mut f, "m", &a.m);
            push(&mut f, "delta1", &a.delta1);
            push(&mut f, "N", &a.n);
            "witness"
        }
        Command::Suspend {
            command: SuspendCommand::Metric(a),
        } => {
            push(&mut f, "system", &a.system);
            push(&mut f, "x", &a.x);
            push(&mut f, "y", &a.y);
            "suspend-metric"
        }
    };
    (name, f)
}

/// Result of a run: files written plus what goes to stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub code: i32,
    pub stdout: String,
    pub written: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Parses arguments, runs, and returns the exit code. Errors and notes go to
/// stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let start = Instant::now();
    match run_cli(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            for n in &out.notes {
                eprintln!("{n}");
            }
            eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn run_cli(cli: &Cli) -> Result<RunOutput, CliError> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::config(format!("cannot read config {}: {e}", p.display()))
            })?;
            parse_config(&text)?
        }
        None => ConfigMap::new(),
    };
    let (name, flags) = command_flags(cli);
    let cfg = resolve(name, &file, &flags)?;
    run(cfg)
}

fn thread_count(cfg: &RunConfig) -> Result<usize, CliError> {
    if let Ok(v) = std::env::var("ERGOFLOW_THREADS") {
        return v.trim().parse::<usize>().map_err(|_| {
            CliError::config(format!(
                "ERGOFLOW_THREADS must be a non-negative integer, got `{v}`"
            ))
        });
    }
    Ok(cfg.usize("threads"))
}

/// Runs a resolved configuration inside a pool of the configured size.
pub fn run(cfg: RunConfig) -> Result<RunOutput, CliError> {
    let threads = thread_count(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.command.as_str() {
        "entropy" => run_entropy(cfg),
        "expansivity" => run_expansivity(cfg),
        "sections-validate" => run_validate(cfg),
        "witness" => run_witness(cfg),
        "suspend-metric" => run_metric(cfg),
        other => Err(CliError::config(format!("unknown command `{other}`"))),
    })
}

fn envelope(cfg: &RunConfig, result: Value) -> Value {
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command,
        "config": cfg.values,
        "result": result,
    })
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Writes to `out` or returns the text for stdout.
fn emit(path: &str, text: String, out: &mut RunOutput) -> Result<(), CliError> {
    if path.is_empty() || path == "-" {
        out.stdout.push_str(&text);
        return Ok(());
    }
    let p = Path::new(path);
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(p, text).map_err(|e| CliError::config(format!("cannot write {path}: {e}")))?;
    out.written.push(p.to_path_buf());
    Ok(())
}

fn new_output() -> RunOutput {
    RunOutput {
        code: EXIT_OK,
        stdout: String::new(),
        written: Vec::new(),
        notes: Vec::new(),
    }
}

fn default_delta(kind: SystemKind) -> &'static str {
    match kind {
        SystemKind::Shift2Suspension => "0.2",
        _ => "0.32",
    }
}

fn run_entropy(mut cfg: RunConfig) -> Result<RunOutput, CliError> {
    let kind = cfg.system();
    let method = Method::parse(cfg.get("method")).expect("validated");
    if !cfg.is_set("delta") {
        cfg.set("delta", default_delta(kind).to_string());
    }
    if !cfg.is_set("grid") {
        let g = if kind == SystemKind::Shift2Suspension {
            "9"
        } else {
            "16"
        };
        cfg.set("grid", g.to_string());
    }
    let upper = match (cfg.is_set("n-max"), cfg.is_set("t-max")) {
        (true, false) => cfg.usize("n-max"),
        (false, true) if !method.is_section() => cfg.usize("t-max"),
        (false, true) => {
            return Err(CliError::config(
                "section methods count returns: use `n-max`, not `t-max`",
            ))
        }
        (true, true) => return Err(CliError::config("give only one of `n-max` and `t-max`")),
        (false, false) => return Err(CliError::config("missing required keys: n-max (or t-max)")),
    };
    let lower = cfg.usize("n-min");
    if lower >= upper {
        return Err(CliError::config(format!(
            "`n-min` = {lower} must be below the upper bound {upper}"
        )));
    }
    let pair = build_pair(&FlowHandle::new(kind), cfg.f64("delta"))?;
    let opts = CurveOptions {
        grid: cfg.usize("grid"),
        heights: cfg.usize("heights"),
        dt: cfg.f64("dt"),
    };
    let ns: Vec<usize> = (lower..=upper).collect();
    let curve = count_curve(method, &pair, cfg.f64("gamma"), &ns, &opts)?;

    let mut out = new_output();
    let mut csv_text = String::new();
    let _ = writeln!(csv_text, "# ergoflow {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(csv_text, "# command = entropy");
    for (k, v) in &cfg.values {
        let _ = writeln!(csv_text, "# {k} = {v}");
    }
    let _ = writeln!(csv_text, "# eps0 = {}", pair.eps0);
    let _ = writeln!(
        csv_text,
        "# lattice-points = {}",
        curve.resolution.lattice_points
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "count", "log_count"])
        .map_err(|e| CliError::config(e.to_string()))?;
    for e in &curve.entries {
        w.write_record([
            e.n.to_string(),
            e.count.to_string(),
            (e.count as f64).ln().to_string(),
        ])
        .map_err(|e| CliError::config(e.to_string()))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| CliError::config(e.to_string()))?;
    csv_text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));

    let summary = envelope(
        &cfg,
        json!({
            "method": method.as_str(),
            "gamma": curve.gamma,
            "slope": curve.slope,
            "endpoint_rate": curve.endpoint_rate,
            "stable": curve.stable,
            "fit_window": [curve.fit_window.0, curve.fit_window.1],
            "resolution": curve.resolution,
            "eps0": pair.eps0,
        }),
    );
    let out_path = cfg.get("out").to_string();
    if out_path.is_empty() || out_path == "-" {
        let _ = writeln!(
            csv_text,
            "# summary = {}",
            serde_json::to_string(&summary).expect("json")
        );
        emit("", csv_text, &mut out)?;
    } else {
        emit(&out_path, csv_text, &mut out)?;
        let json_path = Path::new(&out_path).with_extension("json");
        emit(&json_path.to_string_lossy(), to_json(&summary), &mut out)?;
    }
    if !curve.stable {
        out.notes.push(format!(
            "warning: growth fit unstable (slope {:.4}, endpoint rate {:.4})",
            curve.slope, curve.endpoint_rate
        ));
        if cfg.strict() {
            out.code = EXIT_UNSTABLE;
        }
    }
    Ok(out)
}

fn run_expansivity(cfg: RunConfig) -> Result<RunOutput, CliError> {
    let kind = cfg.system();
    let (delta, eps, window) = (cfg.f64("delta"), cfg.f64("eps"), cfg.f64("window"));
    let budget = cfg.usize("budget");
    let singletons = cfg.get("seed-set") == "singletons";
    let opts = SearchOptions {
        dt: cfg.f64("dt"),
        rng_seed: cfg.usize("seed") as u64,
        ..Default::default()
    };
    let verdict: Value = match (cfg.get("mode"), kind) {
        ("discrete", _) => {
            let map = kind.base_map().ok_or_else(|| {
                CliError::config(format!(
                    "{kind} is a flow with fixed points, not a suspension"
                ))
            })?;
            let seeds: Vec<Arc<TorusPoint>> = suspension_seeds(9)?
                .into_iter()
                .map(|s| {
                    let pts: Vec<TorusPoint> = s
                        .arc
                        .samples()
                        .iter()
                        .map(|p| {
                            if singletons {
                                s.arc.samples()[0].base
                            } else {
                                p.base
                            }
                        })
                        .collect();
                    Arc::new(pts).map_err(|e| CliError::from(SystemError::from(e)))
                })
                .collect::<Result<_, _>>()?;
            serde_json::to_value(discrete_cw_check(&map, delta, cfg.usize("n-max"), &seeds)?)
                .expect("json")
        }
        (_, SystemKind::IntervalLogistic) => {
            let mut seeds = interval_seeds(delta, window, opts.dt)?;
            if singletons {
                seeds = seeds
                    .into_iter()
                    .map(|s| Seed::plain(Arc::singleton(s.arc.samples()[0]), 0))
                    .collect();
            }
            serde_json::to_value(cw_search(
                &IntervalFlow,
                &seeds,
                eps,
                delta,
                window,
                budget,
                &opts,
            )?)
            .expect("json")
        }
        (_, SystemKind::Shift2Suspension) => {
            return Err(CliError::config(
                "flow search needs a torus suspension or the interval flow",
            ))
        }
        (_, _) => {
            let map = kind.base_map().expect("suspension");
            let mut seeds = suspension_seeds(9)?;
            if singletons {
                seeds = seeds
                    .into_iter()
                    .map(|s| Seed::plain(Arc::singleton(s.arc.samples()[0].clone()), 0))
                    .collect();
            }
            serde_json::to_value(cw_search(
                &SuspensionFlow { map },
                &seeds,
                eps,
                delta,
                window,
                budget,
                &opts,
            )?)
            .expect("json")
        }
    };
    let mut out = new_output();
    emit(cfg.get("out"), to_json(&envelope(&cfg, verdict)), &mut out)?;
    Ok(out)
}

fn run_validate(cfg: RunConfig) -> Result<RunOutput, CliError> {
    let kind = cfg.system();
    let opts = PairOptions {
        resolution: cfg.usize("resolution"),
        ..Default::default()
    };
    let mut out = new_output();
    let result = match build_pair_with(&FlowHandle::new(kind), cfg.f64("delta"), &opts) {
        Ok(pair) => {
            let layout = match pair.layout {
                Layout::TorusGrid { k, t_half, s_half } => {
                    json!({"kind": "torus-grid", "k": k, "t_half": t_half, "s_half": s_half})
                }
                Layout::Cylinders { p, k } => json!({"kind": "cylinders", "p": p, "alphabet": k}),
            };
            json!({
                "passed": pair.report.passed(),
                "constants": {"eps": pair.eps, "delta": pair.delta, "theta": pair.theta, "rho": pair.rho, "eps0": pair.eps0},
                "layout": layout,
                "patches": pair.layout.patch_count(),
                "report": pair.report,
            })
        }
        Err(SectionError::Validation(msg)) => {
            out.code = EXIT_VALIDATION;
            json!({"passed": false, "error": msg})
        }
        Err(e) => return Err(e.into()),
    };
    emit(cfg.get("out"), to_json(&envelope(&cfg, result)), &mut out)?;
    Ok(out)
}

fn run_witness(mut cfg: RunConfig) -> Result<RunOutput, CliError> {
    let kind = cfg.system();
    let triple = build_triple(&FlowHandle::new(kind), cfg.f64("delta"))?;
    if !cfg.is_set("N") {
        let n = default_power(&triple.first.map)
            .ok_or_else(|| CliError::config(format!("no default power for {kind}; set `N`")))?;
        cfg.set("N", n.to_string());
    }
    let (m, power, delta1) = (cfg.usize("m"), cfg.usize("N"), cfg.f64("delta1"));
    let pair = &triple.first;
    let root = find_unstable_continuum(pair, &default_seeds(pair), delta1 / 3.0, pair.eps0, 8)?;
    let tree = build_witness_tree(&triple, &root.arc, root.anchor, m, power, delta1)?;
    let report = verify_separated(&tree, &triple.third)?;
    let mut out = new_output();
    if !report.passed {
        out.code = EXIT_VALIDATION;
        out.notes
            .push(format!("verification failed: {:?}", report.failure));
    }
    let result = json!({
        "eps0": [triple.first.eps0, triple.second.eps0, triple.third.eps0],
        "hop": triple.hop_bound(),
        "root_seed": root.seed,
        "verification": report,
        "lower_bound": report.lower_bound,
        "tree": tree,
    });
    emit(cfg.get("out"), to_json(&envelope(&cfg, result)), &mut out)?;
    Ok(out)
}

fn run_metric(cfg: RunConfig) -> Result<RunOutput, CliError> {
    let kind = cfg.system();
    let map = kind
        .base_map()
        .filter(|m| m.acts_on_torus())
        .ok_or_else(|| CliError::config(format!("{kind} is not a torus suspension")))?;
    let pt = |k: &str| {
        let (x, y, h) = parse_triple(cfg.get(k)).expect("validated");
        SuspensionPoint {
            base: TorusPoint::new(x, y),
            height: h,
        }
    };
    let (x, y) = (pt("x"), pt("y"));
    let d = suspension_distance(&map, &x, &y)?;
    let mut out = new_output();
    emit(
        cfg.get("out"),
        to_json(&envelope(&cfg, json!({"x": x, "y": y, "distance": d}))),
        &mut out,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_grammar() {
        let m =
            parse_config("# comment\nsystem = cat-suspension  # trailing\n\nn_max = 8\n").unwrap();
        assert_eq!(m["system"], ("cat-suspension".to_string(), 2));
        assert_eq!(m["n-max"].0, "8");
        let e = parse_config("gamma = 1\n\ngamma = 2\n").unwrap_err();
        assert_eq!(e.code, EXIT_CONFIG);
        assert!(e.message.contains("lines 1 and 3"), "{}", e.message);
        assert!(parse_config("just words\n").is_err());
    }

    #[test]
    fn flags_alone_suffice() {
        let flags: Vec<(String, String)> = [
            ("system", "cat-suspension"),
            ("method", "section-sep"),
            ("gamma", "0.05"),
            ("n-max", "4"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let cfg = resolve("entropy", &ConfigMap::new(), &flags).unwrap();
        assert_eq!(cfg.get("n-min"), "2");
        assert_eq!(cfg.get("heights"), "2");
    }

    #[test]
    fn rejections() {
        let file =
            parse_config("system = cat-suspension\nmethod = section-sep\ngamma = -1\n").unwrap();
        let e = resolve("entropy", &file, &[]).unwrap_err();
        assert!(
            e.message.contains("gamma") && e.message.contains("positive"),
            "{}",
            e.message
        );
        let e = resolve("entropy", &ConfigMap::new(), &[]).unwrap_err();
        assert!(
            e.message.contains("system")
                && e.message.contains("method")
                && e.message.contains("gamma")
        );
        let file = parse_config("system = cat-suspension\nbogus = 1\n").unwrap();
        let e = resolve("entropy", &file, &[]).unwrap_err();
        assert!(e.message.contains("line 2") && e.message.contains("bogus"));
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config("system = cat-suspension\ndelta = 0.5\n").unwrap();
        let cfg = resolve(
            "sections-validate",
            &file,
            &[("delta".into(), "0.32".into())],
        )
        .unwrap();
        assert_eq!(cfg.get("delta"), "0.32");
    }

    #[test]
    fn metric_runs() {
        let flags: Vec<(String, String)> = [
            ("system", "cat-suspension"),
            ("x", "0.1,0.2,0.3"),
            ("y", "0.1,0.2,0.3"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let out = run(resolve("suspend-metric", &ConfigMap::new(), &flags).unwrap()).unwrap();
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["result"]["distance"], 0.0);
    }
}
