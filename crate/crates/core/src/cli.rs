//! On-disk system specs and the `tc-sizer` command line.
//!
//! A spec is a JSON document:
//!
//! ```json
//! {
//!   "analytics": [{
//!     "id": "TC2", "deadline": "1h",
//!     "stages": [{"id": "TC2", "cost": "1h", "inter_arrival": "inf", "deadline": "1h"}],
//!     "topology": "TC2"
//!   }],
//!   "cluster": [{"id": "core0", "capacity": "1"}],
//!   "priorities": {"TC2": 1},
//!   "allocation": {"TC2": "core0"},
//!   "options": {"u_max": "1"}
//! }
//! ```
//!
//! Durations are strings with a unit suffix (`ns`, `us`, `ms`, `s`, `min`,
//! `h`), parsed exactly; `"inf"` marks a one-shot stage. A topology is a
//! stage id, `{"seq": [...]}` or `{"par": [...]}`. Rationals (capacities,
//! `u_max`, frequencies) are strings or JSON numbers such as `"0.9"` or
//! `"3/4"`. Unknown keys are errors.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{solve_system, total_utilization, Response, ResponseReport};
use crate::model::{
    allocate_first_fit, assign_priorities_dm, validate_cluster, validate_system, Analytic, Cluster, CompositionExpr,
    Core, Priority, Stage, System,
};
use crate::sim::{simulate, verify_conservative, worst_observed, BlockingPolicy, ReleasePolicy, SimConfig, Subject};
use crate::sizing::{
    baseline_comparison, baseline_overhead, decimation_csv, decimation_sweep, frequency_sweep, sweep_csv,
    DEFAULT_K_MAX,
};
use crate::time::{Duration, InterArrival};
use crate::{format_rational_exact, format_sig9, parse_rational, ratio, Rational};

/// Environment variable consulted for the simulation seed when `--seed`
/// is not given.
pub const SEED_ENV: &str = "TC_SIZER_SEED";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ParseError {
    /// JSON pointer to the offending value (`""` for the document).
    pub path: String,
    pub message: String,
}

impl ParseError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        ParseError {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

/// Analysis options carried in a spec's `"options"` object. Command-line
/// flags take precedence over these.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpecOptions {
    pub u_max: Option<Rational>,
    pub frequencies: Option<Vec<Rational>>,
    pub input_frequency: Option<Rational>,
    pub factors: Option<Vec<u64>>,
    pub k_max: Option<u64>,
    pub seed: Option<u64>,
    pub horizon: Option<Duration>,
    pub blocking_policy: Option<BlockingPolicy>,
    pub release_policy: Option<ReleasePolicy>,
}

/// A parsed spec. Explicit priorities and allocations live on the stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSpec {
    pub system: System,
    pub cluster: Cluster,
    pub options: SpecOptions,
}

fn blocking_name(p: BlockingPolicy) -> &'static str {
    match p {
        BlockingPolicy::Adversarial => "adversarial",
        BlockingPolicy::Uniform => "uniform",
    }
}

fn release_name(p: ReleasePolicy) -> &'static str {
    match p {
        ReleasePolicy::Synchronous => "synchronous",
        ReleasePolicy::Jittered => "jittered",
    }
}

/// Object accessor that tracks its JSON pointer and rejects unknown keys.
struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: String,
}

impl<'a> Obj<'a> {
    fn new(value: &'a Value, path: &str, allowed: &[&str]) -> Result<Self, ParseError> {
        let map = value
            .as_object()
            .ok_or_else(|| ParseError::new(path, "expected an object"))?;
        if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(ParseError::new(&child(path, key), "unknown key"));
        }
        Ok(Obj {
            map,
            path: path.to_string(),
        })
    }

    fn at(&self, key: &str) -> String {
        child(&self.path, key)
    }

    fn required(&self, key: &str) -> Result<&'a Value, ParseError> {
        self.map
            .get(key)
            .ok_or_else(|| ParseError::new(&self.at(key), "missing required field"))
    }

    fn optional(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn string(&self, key: &str) -> Result<&'a str, ParseError> {
        as_str(self.required(key)?, &self.at(key))
    }

    fn duration(&self, key: &str) -> Result<Duration, ParseError> {
        parse_duration(self.required(key)?, &self.at(key))
    }
}

fn child(path: &str, key: &str) -> String {
    format!("{path}/{}", key.replace('~', "~0").replace('/', "~1"))
}

fn as_str<'a>(value: &'a Value, path: &str) -> Result<&'a str, ParseError> {
    value.as_str().ok_or_else(|| ParseError::new(path, "expected a string"))
}

fn as_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, ParseError> {
    value.as_array().ok_or_else(|| ParseError::new(path, "expected an array"))
}

fn as_u64(value: &Value, path: &str) -> Result<u64, ParseError> {
    value
        .as_u64()
        .ok_or_else(|| ParseError::new(path, "expected a non-negative integer"))
}

fn parse_duration(value: &Value, path: &str) -> Result<Duration, ParseError> {
    as_str(value, path)?
        .parse()
        .map_err(|e| ParseError::new(path, format!("{e}")))
}

fn parse_rational_value(value: &Value, path: &str) -> Result<Rational, ParseError> {
    let text = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(ParseError::new(path, "expected a number or numeric string")),
    };
    parse_rational(&text).ok_or_else(|| ParseError::new(path, format!("invalid number `{text}`")))
}

fn parse_topology(value: &Value, path: &str) -> Result<CompositionExpr, ParseError> {
    if let Some(id) = value.as_str() {
        return Ok(CompositionExpr::leaf(id));
    }
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::new(path, "expected a stage id or a seq/par object"))?;
    if obj.len() != 1 {
        return Err(ParseError::new(path, "expected exactly one of `seq` or `par`"));
    }
    let (key, children) = obj.iter().next().expect("one entry");
    let child_path = child(path, key);
    let children = as_array(children, &child_path)?
        .iter()
        .enumerate()
        .map(|(i, c)| parse_topology(c, &child(&child_path, &i.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    match key.as_str() {
        "seq" => Ok(CompositionExpr::Seq(children)),
        "par" => Ok(CompositionExpr::Par(children)),
        _ => Err(ParseError::new(&child_path, "unknown key")),
    }
}

fn parse_stage(value: &Value, path: &str) -> Result<Stage, ParseError> {
    let o = Obj::new(value, path, &["id", "cost", "inter_arrival", "deadline", "blocking"])?;
    let inter_arrival: InterArrival = {
        let p = o.at("inter_arrival");
        as_str(o.required("inter_arrival")?, &p)?
            .parse()
            .map_err(|e| ParseError::new(&p, format!("{e}")))?
    };
    let mut stage = Stage::new(o.string("id")?, o.duration("cost")?, inter_arrival, o.duration("deadline")?);
    if let Some(b) = o.optional("blocking") {
        stage.blocking = parse_duration(b, &o.at("blocking"))?;
    }
    Ok(stage)
}

fn parse_analytic(value: &Value, path: &str) -> Result<Analytic, ParseError> {
    let o = Obj::new(value, path, &["id", "deadline", "stages", "topology"])?;
    let stages_path = o.at("stages");
    let stages = as_array(o.required("stages")?, &stages_path)?
        .iter()
        .enumerate()
        .map(|(i, s)| parse_stage(s, &child(&stages_path, &i.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Analytic {
        id: o.string("id")?.to_string(),
        end_to_end_deadline: o.duration("deadline")?,
        topology: parse_topology(o.required("topology")?, &o.at("topology"))?,
        stages,
    })
}

fn parse_core(value: &Value, path: &str) -> Result<Core, ParseError> {
    let o = Obj::new(value, path, &["id", "capacity", "blocking"])?;
    let mut core = Core::new(o.string("id")?);
    core.capacity = parse_rational_value(o.required("capacity")?, &o.at("capacity"))?;
    if let Some(b) = o.optional("blocking") {
        core.platform_blocking = parse_duration(b, &o.at("blocking"))?;
    }
    Ok(core)
}

fn parse_options(value: &Value, path: &str) -> Result<SpecOptions, ParseError> {
    let o = Obj::new(
        value,
        path,
        &[
            "u_max",
            "frequencies",
            "input_frequency",
            "factors",
            "k_max",
            "seed",
            "horizon",
            "blocking_policy",
            "release_policy",
        ],
    )?;
    let mut opts = SpecOptions::default();
    if let Some(v) = o.optional("u_max") {
        opts.u_max = Some(parse_rational_value(v, &o.at("u_max"))?);
    }
    if let Some(v) = o.optional("frequencies") {
        let p = o.at("frequencies");
        opts.frequencies = Some(
            as_array(v, &p)?
                .iter()
                .enumerate()
                .map(|(i, f)| parse_rational_value(f, &child(&p, &i.to_string())))
                .collect::<Result<_, _>>()?,
        );
    }
    if let Some(v) = o.optional("input_frequency") {
        opts.input_frequency = Some(parse_rational_value(v, &o.at("input_frequency"))?);
    }
    if let Some(v) = o.optional("factors") {
        let p = o.at("factors");
        opts.factors = Some(
            as_array(v, &p)?
                .iter()
                .enumerate()
                .map(|(i, f)| as_u64(f, &child(&p, &i.to_string())))
                .collect::<Result<_, _>>()?,
        );
    }
    if let Some(v) = o.optional("k_max") {
        opts.k_max = Some(as_u64(v, &o.at("k_max"))?);
    }
    if let Some(v) = o.optional("seed") {
        opts.seed = Some(as_u64(v, &o.at("seed"))?);
    }
    if let Some(v) = o.optional("horizon") {
        opts.horizon = Some(parse_duration(v, &o.at("horizon"))?);
    }
    if let Some(v) = o.optional("blocking_policy") {
        let p = o.at("blocking_policy");
        opts.blocking_policy = Some(match as_str(v, &p)? {
            "adversarial" => BlockingPolicy::Adversarial,
            "uniform" => BlockingPolicy::Uniform,
            other => return Err(ParseError::new(&p, format!("unknown blocking policy `{other}`"))),
        });
    }
    if let Some(v) = o.optional("release_policy") {
        let p = o.at("release_policy");
        opts.release_policy = Some(match as_str(v, &p)? {
            "synchronous" => ReleasePolicy::Synchronous,
            "jittered" => ReleasePolicy::Jittered,
            other => return Err(ParseError::new(&p, format!("unknown release policy `{other}`"))),
        });
    }
    Ok(opts)
}

/// Parses a spec document. Structural errors (types, missing or unknown
/// keys, bad durations, references to undeclared stages or cores) are
/// reported here; semantic checks of the system are left to
/// [`validate_system`].
pub fn parse_system_spec(text: &str) -> Result<SystemSpec, ParseError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ParseError::new("", format!("invalid JSON: {e}")))?;
    let o = Obj::new(&doc, "", &["analytics", "cluster", "allocation", "priorities", "options"])?;

    let analytics_path = o.at("analytics");
    let analytics = as_array(o.required("analytics")?, &analytics_path)?
        .iter()
        .enumerate()
        .map(|(i, a)| parse_analytic(a, &child(&analytics_path, &i.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut system = System::new(analytics);

    let cluster_path = o.at("cluster");
    let cluster = Cluster {
        cores: as_array(o.required("cluster")?, &cluster_path)?
            .iter()
            .enumerate()
            .map(|(i, c)| parse_core(c, &child(&cluster_path, &i.to_string())))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let cluster_report = validate_cluster(&cluster);
    if let Some(f) = cluster_report.findings.first() {
        return Err(ParseError::new(&f.path, f.message.clone()));
    }

    if let Some(v) = o.optional("priorities") {
        let p = o.at("priorities");
        let map = v.as_object().ok_or_else(|| ParseError::new(&p, "expected an object"))?;
        for (id, prio) in map {
            let at = child(&p, id);
            let value = as_u64(prio, &at)?;
            let prio = u32::try_from(value)
                .ok()
                .filter(|v| *v >= 1)
                .ok_or_else(|| ParseError::new(&at, "priority must be in 1..=4294967295"))?;
            let stage = system
                .stages_mut()
                .find(|s| &s.id == id)
                .ok_or_else(|| ParseError::new(&at, "unknown stage"))?;
            stage.priority = Some(Priority(prio));
        }
    }
    if let Some(v) = o.optional("allocation") {
        let p = o.at("allocation");
        let map = v.as_object().ok_or_else(|| ParseError::new(&p, "expected an object"))?;
        for (id, core) in map {
            let at = child(&p, id);
            let core = as_str(core, &at)?;
            if cluster.core(core).is_none() {
                return Err(ParseError::new(&at, format!("unknown core `{core}`")));
            }
            let stage = system
                .stages_mut()
                .find(|s| &s.id == id)
                .ok_or_else(|| ParseError::new(&at, "unknown stage"))?;
            stage.core = Some(core.to_string());
        }
    }
    let options = match o.optional("options") {
        Some(v) => parse_options(v, &o.at("options"))?,
        None => SpecOptions::default(),
    };
    Ok(SystemSpec {
        system,
        cluster,
        options,
    })
}

fn emit_topology(expr: &CompositionExpr) -> Value {
    match expr {
        CompositionExpr::Leaf(id) => Value::String(id.clone()),
        CompositionExpr::Seq(c) => json!({ "seq": c.iter().map(emit_topology).collect::<Vec<_>>() }),
        CompositionExpr::Par(c) => json!({ "par": c.iter().map(emit_topology).collect::<Vec<_>>() }),
    }
}

fn emit_rational(r: &Rational) -> Value {
    Value::String(format_rational_exact(r))
}

/// Serializes a spec; `parse_system_spec(&emit_system_spec(x)) == x`.
/// Keys are sorted and zero blocking terms are omitted.
pub fn emit_system_spec(spec: &SystemSpec) -> String {
    let analytics: Vec<Value> = spec
        .system
        .analytics
        .iter()
        .map(|a| {
            let stages: Vec<Value> = a
                .stages
                .iter()
                .map(|s| {
                    let mut m = Map::new();
                    m.insert("id".into(), json!(s.id));
                    m.insert("cost".into(), json!(s.cost.to_string()));
                    m.insert("inter_arrival".into(), json!(s.inter_arrival.to_string()));
                    m.insert("deadline".into(), json!(s.deadline.to_string()));
                    if !s.blocking.is_zero() {
                        m.insert("blocking".into(), json!(s.blocking.to_string()));
                    }
                    Value::Object(m)
                })
                .collect();
            json!({
                "id": a.id,
                "deadline": a.end_to_end_deadline.to_string(),
                "stages": stages,
                "topology": emit_topology(&a.topology),
            })
        })
        .collect();
    let cluster: Vec<Value> = spec
        .cluster
        .cores
        .iter()
        .map(|c| {
            let mut m = Map::new();
            m.insert("id".into(), json!(c.id));
            m.insert("capacity".into(), emit_rational(&c.capacity));
            if !c.platform_blocking.is_zero() {
                m.insert("blocking".into(), json!(c.platform_blocking.to_string()));
            }
            Value::Object(m)
        })
        .collect();

    let mut doc = Map::new();
    doc.insert("analytics".into(), Value::Array(analytics));
    doc.insert("cluster".into(), Value::Array(cluster));
    let priorities = spec.system.priorities();
    if !priorities.is_empty() {
        doc.insert(
            "priorities".into(),
            Value::Object(priorities.into_iter().map(|(k, p)| (k, json!(p.0))).collect()),
        );
    }
    let allocation = spec.system.allocation();
    if !allocation.is_empty() {
        doc.insert(
            "allocation".into(),
            Value::Object(allocation.into_iter().map(|(k, c)| (k, json!(c))).collect()),
        );
    }
    let o = &spec.options;
    let mut opts = Map::new();
    if let Some(v) = &o.u_max {
        opts.insert("u_max".into(), emit_rational(v));
    }
    if let Some(v) = &o.frequencies {
        opts.insert("frequencies".into(), Value::Array(v.iter().map(emit_rational).collect()));
    }
    if let Some(v) = &o.input_frequency {
        opts.insert("input_frequency".into(), emit_rational(v));
    }
    if let Some(v) = &o.factors {
        opts.insert("factors".into(), json!(v));
    }
    if let Some(v) = o.k_max {
        opts.insert("k_max".into(), json!(v));
    }
    if let Some(v) = o.seed {
        opts.insert("seed".into(), json!(v));
    }
    if let Some(v) = o.horizon {
        opts.insert("horizon".into(), json!(v.to_string()));
    }
    if let Some(v) = o.blocking_policy {
        opts.insert("blocking_policy".into(), json!(blocking_name(v)));
    }
    if let Some(v) = o.release_policy {
        opts.insert("release_policy".into(), json!(release_name(v)));
    }
    if !opts.is_empty() {
        doc.insert("options".into(), Value::Object(opts));
    }
    to_json_text(&Value::Object(doc))
}

fn to_json_text(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// A utilization as a JSON number with at most 9 significant digits.
fn utilization_value(r: &Rational) -> Value {
    serde_json::from_str(&format_sig9(r)).unwrap_or(Value::Null)
}

fn response_ns(r: &Response) -> Value {
    match r {
        Response::Bounded(d) => json!(d.as_nanos()),
        Response::Diverged => Value::Null,
    }
}

/// JSON form of a report:
/// `{"analytics": {id: {deadline_ns, end_to_end_ns, feasible}},
///   "stages": {id: {core, priority, response_ns}},
///   "system_feasible", "total_utilization"}`.
/// A diverged response is `null`.
pub fn report_json(system: &System, report: &ResponseReport) -> Value {
    let analytics: Map<String, Value> = report
        .per_analytic
        .iter()
        .map(|(id, v)| {
            (
                id.clone(),
                json!({
                    "deadline_ns": v.deadline.as_nanos(),
                    "end_to_end_ns": response_ns(&v.end_to_end),
                    "feasible": v.feasible,
                }),
            )
        })
        .collect();
    let stages: Map<String, Value> = report
        .per_stage
        .iter()
        .map(|(id, r)| {
            let stage = system.stage(id);
            (
                id.clone(),
                json!({
                    "core": stage.and_then(|s| s.core.clone()),
                    "priority": stage.and_then(|s| s.priority).map(|p| p.0),
                    "response_ns": response_ns(r),
                }),
            )
        })
        .collect();
    json!({
        "analytics": analytics,
        "stages": stages,
        "system_feasible": report.system_feasible,
        "total_utilization": utilization_value(&total_utilization(system).total),
    })
}

#[derive(Debug, Parser)]
#[command(name = "tc-sizer", version, about = "Response-time analysis and cluster sizing for time-critical analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BlockingArg {
    Adversarial,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReleaseArg {
    Synchronous,
    Jittered,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve response times and print the report as JSON.
    Analyze { spec: PathBuf },
    /// Utilization and minimum cores per input frequency, as CSV.
    Size {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = rational_arg)]
        freqs: Vec<Rational>,
        #[arg(long, value_parser = rational_arg)]
        umax: Option<Rational>,
    },
    /// Aggregator decimation sweep, as CSV.
    Decimate {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',')]
        factors: Vec<u64>,
        /// Input frequency in Hz.
        #[arg(long, value_parser = rational_arg)]
        freq: Option<Rational>,
        #[arg(long, value_parser = rational_arg)]
        umax: Option<Rational>,
    },
    /// Simulate the schedule and check the analytic bounds against it.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = duration_arg)]
        horizon: Option<Duration>,
        #[arg(long, value_enum)]
        blocking: Option<BlockingArg>,
        #[arg(long, value_enum)]
        release: Option<ReleaseArg>,
        /// Write the event trace as CSV to this file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Core counts with and without blocking charged as demand, as JSON.
    Compare {
        spec: PathBuf,
        #[arg(long, value_parser = rational_arg)]
        umax: Option<Rational>,
    },
}

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).ok_or_else(|| format!("invalid number `{s}`"))
}

fn duration_arg(s: &str) -> Result<Duration, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Single-line failure of a command; always exit code 1.
#[derive(Debug)]
struct Failure(String);

impl<E: fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

struct Outcome {
    stdout: String,
    feasible: bool,
}

/// Runs the command line `argv` (program name first), writing results to
/// `stdout` and diagnostics to `stderr`. Returns the exit code: 0 when the
/// analysis ran and the system is feasible, 2 when it ran and the system is
/// infeasible, 1 on any input or usage error.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_command_with_env(argv, std::env::var(SEED_ENV).ok(), stdout, stderr)
}

/// [`run_command`] with the value of `TC_SIZER_SEED` supplied explicitly.
pub fn run_command_with_env<I, T>(
    argv: I,
    env_seed: Option<String>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let rendered = e.render().to_string();
            let line = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            let _ = writeln!(stderr, "{}", line.trim());
            return 1;
        }
    };
    match execute(cli.command, env_seed) {
        Ok(outcome) => {
            if stdout.write_all(outcome.stdout.as_bytes()).is_err() {
                return 1;
            }
            if outcome.feasible {
                0
            } else {
                2
            }
        }
        Err(Failure(msg)) => {
            let _ = writeln!(stderr, "error: {}", msg.replace('\n', " "));
            1
        }
    }
}

fn load(path: &PathBuf) -> Result<SystemSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    parse_system_spec(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn validated(spec: &SystemSpec) -> Result<(), Failure> {
    let report = validate_system(&spec.system);
    match report.findings.first() {
        None => Ok(()),
        Some(f) if report.findings.len() == 1 => Err(Failure(format!("{}: {}", f.path, f.message))),
        Some(f) => Err(Failure(format!(
            "{}: {} (and {} more)",
            f.path,
            f.message,
            report.findings.len() - 1
        ))),
    }
}

/// Fills in deadline-monotonic priorities and a first-fit allocation when
/// the spec carries none; partial assignments are rejected.
fn prepare(spec: &mut SystemSpec) -> Result<(), Failure> {
    let total = spec.system.stages().count();
    let prioritized = spec.system.stages().filter(|s| s.priority.is_some()).count();
    if prioritized == 0 {
        let dm = assign_priorities_dm(&spec.system);
        spec.system.apply_priorities(&dm);
    } else if prioritized < total {
        let missing = spec.system.stages().find(|s| s.priority.is_none()).expect("some stage lacks a priority");
        return Err(Failure(format!("stage `{}` has no priority while others do", missing.id)));
    }
    let allocated = spec.system.stages().filter(|s| s.core.is_some()).count();
    if allocated == 0 {
        let alloc = allocate_first_fit(&spec.system, &spec.cluster)?;
        spec.system.apply_allocation(&alloc);
    } else if allocated < total {
        let missing = spec.system.stages().find(|s| s.core.is_none()).expect("some stage lacks a core");
        return Err(Failure(format!("stage `{}` has no core while others do", missing.id)));
    }
    Ok(())
}

fn analyze(spec: &SystemSpec) -> Result<ResponseReport, Failure> {
    Ok(solve_system(&spec.system, &spec.system.allocation(), &spec.cluster)?)
}

fn default_horizon(system: &System) -> Duration {
    let hp = crate::analysis::hyperperiod(system.stages()).unwrap_or(Duration::ZERO);
    let longest = system
        .analytics
        .iter()
        .map(|a| a.end_to_end_deadline)
        .max()
        .unwrap_or(Duration::ZERO);
    hp.max(longest)
}

fn execute(command: Command, env_seed: Option<String>) -> Result<Outcome, Failure> {
    match command {
        Command::Analyze { spec } => {
            let mut spec = load(&spec)?;
            validated(&spec)?;
            prepare(&mut spec)?;
            let report = analyze(&spec)?;
            Ok(Outcome {
                stdout: to_json_text(&report_json(&spec.system, &report)),
                feasible: report.system_feasible,
            })
        }
        Command::Size { spec, freqs, umax } => {
            let spec = load(&spec)?;
            validated(&spec)?;
            let freqs = if freqs.is_empty() {
                spec.options.frequencies.clone().ok_or(Failure("no frequencies given (--freqs)".into()))?
            } else {
                freqs
            };
            let u_max = positive_umax(umax, &spec)?;
            let rows = frequency_sweep(&spec.system, &freqs, &u_max, spec.options.k_max.unwrap_or(DEFAULT_K_MAX))?;
            Ok(Outcome {
                stdout: sweep_csv(&rows),
                feasible: true,
            })
        }
        Command::Decimate {
            spec,
            factors,
            freq,
            umax,
        } => {
            let spec = load(&spec)?;
            validated(&spec)?;
            let factors = if factors.is_empty() {
                spec.options.factors.clone().ok_or(Failure("no factors given (--factors)".into()))?
            } else {
                factors
            };
            let hz = freq
                .or_else(|| spec.options.input_frequency.clone())
                .ok_or(Failure("no input frequency given (--freq)".into()))?;
            let u_max = positive_umax(umax, &spec)?;
            let rows = decimation_sweep(
                &spec.system,
                &hz,
                &factors,
                &u_max,
                spec.options.k_max.unwrap_or(DEFAULT_K_MAX),
            )?;
            Ok(Outcome {
                stdout: decimation_csv(&rows),
                feasible: true,
            })
        }
        Command::Simulate {
            spec,
            seed,
            horizon,
            blocking,
            release,
            trace_out,
        } => {
            let mut spec = load(&spec)?;
            validated(&spec)?;
            prepare(&mut spec)?;
            let env_seed = match env_seed {
                Some(s) => Some(
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| Failure(format!("{SEED_ENV} is not an unsigned integer: `{s}`")))?,
                ),
                None => None,
            };
            let config = SimConfig {
                horizon: horizon.or(spec.options.horizon).unwrap_or_else(|| default_horizon(&spec.system)),
                seed: seed.or(env_seed).or(spec.options.seed).unwrap_or(0),
                blocking_policy: match blocking {
                    Some(BlockingArg::Adversarial) => BlockingPolicy::Adversarial,
                    Some(BlockingArg::Uniform) => BlockingPolicy::Uniform,
                    None => spec.options.blocking_policy.unwrap_or(BlockingPolicy::Adversarial),
                },
                release_policy: match release {
                    Some(ReleaseArg::Synchronous) => ReleasePolicy::Synchronous,
                    Some(ReleaseArg::Jittered) => ReleasePolicy::Jittered,
                    None => spec.options.release_policy.unwrap_or(ReleasePolicy::Synchronous),
                },
            };
            let report = analyze(&spec)?;
            let allocation = spec.system.allocation();
            let trace = simulate(&spec.system, &allocation, &spec.cluster, &config)?;
            if let Some(path) = trace_out {
                let file = std::fs::File::create(&path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                trace
                    .write_csv(std::io::BufWriter::new(file))
                    .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            }
            let observed = worst_observed(&trace);
            let violations = verify_conservative(&report, &observed);
            let to_ns = |m: &std::collections::BTreeMap<String, Duration>| -> Map<String, Value> {
                m.iter().map(|(k, d)| (k.clone(), json!(d.as_nanos()))).collect()
            };
            let violations: Vec<Value> = violations
                .iter()
                .map(|v| {
                    let (kind, id) = match &v.subject {
                        Subject::Stage(id) => ("stage", id),
                        Subject::Analytic(id) => ("analytic", id),
                    };
                    json!({"kind": kind, "id": id, "observed_ns": v.observed.as_nanos(), "bound_ns": v.bound.as_nanos()})
                })
                .collect();
            let doc = json!({
                "seed": config.seed,
                "horizon_ns": config.horizon.as_nanos(),
                "blocking_policy": blocking_name(config.blocking_policy),
                "release_policy": release_name(config.release_policy),
                "events": trace.events.len(),
                "observed": {
                    "stages": to_ns(&observed.per_stage),
                    "analytics": to_ns(&observed.per_analytic),
                },
                "analysis": report_json(&spec.system, &report),
                "conservative": violations.is_empty(),
                "violations": violations,
            });
            Ok(Outcome {
                stdout: to_json_text(&doc),
                feasible: report.system_feasible,
            })
        }
        Command::Compare { spec, umax } => {
            let spec = load(&spec)?;
            validated(&spec)?;
            let u_max = positive_umax(umax, &spec)?;
            let c = baseline_comparison(&spec.system, &u_max)?;
            let doc = json!({
                "ours_cores": c.ours,
                "baseline_cores": c.baseline,
                "ours_utilization": utilization_value(&c.ours_utilization),
                "baseline_utilization": utilization_value(&c.baseline_utilization),
                "baseline_overhead": serde_json::from_str::<Value>(&format_sig9(
                    &Rational::from_float(baseline_overhead(&c)).unwrap_or_else(|| ratio(0, 1))
                )).unwrap_or(Value::Null),
                "u_max": utilization_value(&u_max),
            });
            Ok(Outcome {
                stdout: to_json_text(&doc),
                feasible: true,
            })
        }
    }
}

fn positive_umax(flag: Option<Rational>, spec: &SystemSpec) -> Result<Rational, Failure> {
    let u = flag.or_else(|| spec.options.u_max.clone()).unwrap_or_else(|| ratio(1, 1));
    if u <= ratio(0, 1) {
        return Err(Failure("u_max must be positive".into()));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{table_vi, TableViConfig};

    fn spec_of(system: System) -> SystemSpec {
        SystemSpec {
            system,
            cluster: Cluster::uniform(1, ratio(1, 1)),
            options: SpecOptions::default(),
        }
    }

    #[test]
    fn table_vi_round_trips() {
        for config in [TableViConfig::GeneralPurpose, TableViConfig::TimeCritical] {
            let spec = spec_of(table_vi(config));
            let text = emit_system_spec(&spec);
            assert_eq!(parse_system_spec(&text).unwrap(), spec);
        }
    }

    #[test]
    fn missing_deadline_points_at_the_stage() {
        let text = r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": "s",
            "stages": [{"id": "s", "cost": "1ms", "inter_arrival": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": 1}]}"#;
        let err = parse_system_spec(text).unwrap_err();
        assert_eq!(err.path, "/analytics/0/stages/0/deadline");
    }

    #[test]
    fn durations_parse_exactly() {
        let text = r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": "s",
            "stages": [{"id": "s", "cost": "1.5ms", "inter_arrival": "inf", "deadline": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": "0.9"}]}"#;
        let spec = parse_system_spec(text).unwrap();
        assert_eq!(spec.system.stage("s").unwrap().cost.as_nanos(), 1_500_000);
        assert!(spec.system.stage("s").unwrap().inter_arrival.is_infinite());
        assert_eq!(spec.cluster.cores[0].capacity, ratio(9, 10));
    }

    #[test]
    fn bad_duration_names_the_token() {
        let text = r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": "s",
            "stages": [{"id": "s", "cost": "12 parsecs", "inter_arrival": "inf", "deadline": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": 1}]}"#;
        let err = parse_system_spec(text).unwrap_err();
        assert_eq!(err.path, "/analytics/0/stages/0/cost");
        assert!(err.message.contains("12 parsecs"), "{}", err.message);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"analytics": [], "cluster": [{"id": "core0", "capacity": 1}], "colour": "red"}"#;
        assert_eq!(parse_system_spec(text).unwrap_err().path, "/colour");
        let text = r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": {"loop": ["s"]},
            "stages": [{"id": "s", "cost": "1ms", "inter_arrival": "inf", "deadline": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": 1}]}"#;
        assert_eq!(parse_system_spec(text).unwrap_err().path, "/analytics/0/topology/loop");
    }

    #[test]
    fn references_must_exist() {
        let base = r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": "s",
            "stages": [{"id": "s", "cost": "1ms", "inter_arrival": "inf", "deadline": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": 1}]"#;
        let err = parse_system_spec(&format!(r#"{base}, "allocation": {{"s": "core9"}}}}"#)).unwrap_err();
        assert_eq!(err.path, "/allocation/s");
        let err = parse_system_spec(&format!(r#"{base}, "priorities": {{"t": 1}}}}"#)).unwrap_err();
        assert_eq!(err.path, "/priorities/t");
    }

    #[test]
    fn options_round_trip() {
        let mut spec = spec_of(table_vi(TableViConfig::TimeCritical));
        spec.options = SpecOptions {
            u_max: Some(ratio(3, 4)),
            frequencies: Some(vec![ratio(1, 1), ratio(4000, 1), ratio(1, 3)]),
            input_frequency: Some(ratio(1000, 1)),
            factors: Some(vec![1, 10]),
            k_max: Some(50),
            seed: Some(42),
            horizon: Some(Duration::from_millis(1500)),
            blocking_policy: Some(BlockingPolicy::Uniform),
            release_policy: Some(ReleasePolicy::Jittered),
        };
        spec.cluster.cores[0].platform_blocking = Duration::from_micros(3);
        let text = emit_system_spec(&spec);
        assert_eq!(parse_system_spec(&text).unwrap(), spec);
        assert_eq!(emit_system_spec(&parse_system_spec(&text).unwrap()), text);
    }

    #[test]
    fn usage_errors_exit_one_with_one_line() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_command_with_env(["tc-sizer", "frobnicate"], None, &mut out, &mut err);
        assert_eq!(code, 1);
        assert_eq!(String::from_utf8(err).unwrap().lines().count(), 1);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_command_with_env(["tc-sizer", "analyze", "/nonexistent/spec.json"], None, &mut out, &mut err);
        assert_eq!(code, 1);
        assert!(out.is_empty());
        assert_eq!(String::from_utf8(err).unwrap().lines().count(), 1);
    }
}
