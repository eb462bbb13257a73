//! Built-in scenarios and seeded random systems.
//!
//! The online scenarios are a generator feeding splitters feeding a
//! counting aggregator, with per-stage worst-case costs of
//! 127/507/511 µs (micro-blogging) and 1.1/5/0.8 ms (book word
//! histogram). The offline scenarios are download, map, reduce, sort
//! chains whose stage costs must be supplied by the caller.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Analytic, CompositionExpr, Stage, System};
use crate::sizing::{at_frequency, SizingError, DEFAULT_K_MAX};
use crate::time::{Duration, InterArrival};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("scenario {scenario} needs parameter `{param}`")]
    MissingParam { scenario: ScenarioId, param: &'static str },
    #[error("scenario {scenario} expects {expected} stage costs, got {got}")]
    WrongCostCount { scenario: ScenarioId, expected: usize, got: usize },
    #[error(transparent)]
    Sizing(#[from] SizingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioId {
    MicroblogOnline,
    MicroblogOffline,
    BookOnline,
    BookOffline,
    TableVi,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::MicroblogOnline,
        ScenarioId::MicroblogOffline,
        ScenarioId::BookOnline,
        ScenarioId::BookOffline,
        ScenarioId::TableVi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::MicroblogOnline => "microblog-online",
            ScenarioId::MicroblogOffline => "microblog-offline",
            ScenarioId::BookOnline => "book-online",
            ScenarioId::BookOffline => "book-offline",
            ScenarioId::TableVi => "table-vi",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioParams {
    /// Input frequency in events per second (online scenarios).
    pub frequency: Option<Rational>,
    /// Per-stage costs in topology order (offline scenarios).
    pub costs: Option<Vec<Duration>>,
    /// Number of round-robin splitter instances.
    pub splitter_hint: u64,
    /// Blocking applied to every stage.
    pub blocking: Duration,
    /// Overrides the scenario's end-to-end deadline.
    pub deadline: Option<Duration>,
    pub k_max: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            frequency: None,
            costs: None,
            splitter_hint: 1,
            blocking: Duration::ZERO,
            deadline: None,
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl ScenarioParams {
    pub fn at_frequency(hz: Rational) -> Self {
        ScenarioParams {
            frequency: Some(hz),
            ..Default::default()
        }
    }

    pub fn with_costs(costs: Vec<Duration>) -> Self {
        ScenarioParams {
            costs: Some(costs),
            ..Default::default()
        }
    }
}

pub const MICROBLOG_COSTS_US: [u64; 3] = [127, 507, 511];
pub const BOOK_COSTS_US: [u64; 3] = [1_100, 5_000, 800];
pub const OFFLINE_STAGES: [&str; 4] = ["download", "map", "reduce", "sort"];

/// Builds a scenario as a pure function of `(id, params)`.
///
/// Online scenarios come prioritized in pipeline order (generator
/// highest); the others come without priorities.
pub fn builtin_system(id: ScenarioId, params: &ScenarioParams) -> Result<System, WorkloadError> {
    match id {
        ScenarioId::MicroblogOnline => online(id, "microblog", MICROBLOG_COSTS_US, params),
        ScenarioId::BookOnline => online(id, "book", BOOK_COSTS_US, params),
        ScenarioId::MicroblogOffline => offline(id, "microblog-batch", Duration::from_hours(2), params),
        ScenarioId::BookOffline => offline(id, "library-batch", Duration::from_secs(600), params),
        ScenarioId::TableVi => Ok(table_vi_system()),
    }
}

/// `Seq(G, Par(S x hint), C)` at the requested input frequency.
fn online(
    scenario: ScenarioId,
    analytic_id: &str,
    costs_us: [u64; 3],
    params: &ScenarioParams,
) -> Result<System, WorkloadError> {
    let hz = params
        .frequency
        .clone()
        .ok_or(WorkloadError::MissingParam { scenario, param: "frequency" })?;
    let unit = Duration::from_secs(1);
    let hint = params.splitter_hint.max(1);
    let b = params.blocking;
    let mk = |id: String, cost_us: u64, t: Duration| {
        Stage::new(id, Duration::from_micros(cost_us), t.into(), t).with_blocking(b)
    };

    let mut stages = vec![mk("G".into(), costs_us[0], unit)];
    let splitters: Vec<String> = if hint == 1 {
        vec!["S".into()]
    } else {
        (0..hint).map(|i| format!("S{i}")).collect()
    };
    let splitter_period = Duration::from_secs(hint);
    for id in &splitters {
        stages.push(mk(id.clone(), costs_us[1], splitter_period));
    }
    stages.push(mk("C".into(), costs_us[2], unit));
    let n = stages.len() as u32;
    for (i, s) in stages.iter_mut().enumerate() {
        s.priority = Some(crate::model::Priority(n - i as u32));
    }

    let middle = if splitters.len() == 1 {
        CompositionExpr::leaf(&splitters[0])
    } else {
        CompositionExpr::Par(splitters.iter().map(CompositionExpr::leaf).collect())
    };
    let topology = CompositionExpr::Seq(vec![CompositionExpr::leaf("G"), middle, CompositionExpr::leaf("C")]);
    let template = System::new(vec![Analytic {
        id: analytic_id.into(),
        stages,
        topology,
        end_to_end_deadline: params.deadline.unwrap_or(Duration::from_secs(1)),
    }]);
    Ok(at_frequency(&template, &hz, params.k_max)?)
}

fn offline(
    scenario: ScenarioId,
    analytic_id: &str,
    default_deadline: Duration,
    params: &ScenarioParams,
) -> Result<System, WorkloadError> {
    let costs = params
        .costs
        .as_ref()
        .ok_or(WorkloadError::MissingParam { scenario, param: "costs" })?;
    if costs.len() != OFFLINE_STAGES.len() {
        return Err(WorkloadError::WrongCostCount {
            scenario,
            expected: OFFLINE_STAGES.len(),
            got: costs.len(),
        });
    }
    let deadline = params.deadline.unwrap_or(default_deadline);
    let stages: Vec<Stage> = OFFLINE_STAGES
        .iter()
        .zip(costs)
        .map(|(name, c)| {
            Stage::new(*name, *c, InterArrival::Infinite, deadline.max(*c)).with_blocking(params.blocking)
        })
        .collect();
    Ok(System::new(vec![Analytic {
        id: analytic_id.into(),
        topology: CompositionExpr::Seq(OFFLINE_STAGES.iter().map(|s| CompositionExpr::leaf(*s)).collect()),
        stages,
        end_to_end_deadline: deadline,
    }]))
}

/// Two one-hour one-shot analytics with deadlines of two hours (`TC1`)
/// and one hour (`TC2`), unprioritized.
fn table_vi_system() -> System {
    let analytic = |id: &str, deadline: Duration| Analytic {
        id: id.into(),
        stages: vec![Stage::new(id, Duration::from_hours(1), InterArrival::Infinite, deadline)],
        topology: CompositionExpr::leaf(id),
        end_to_end_deadline: deadline,
    };
    System::new(vec![
        analytic("TC1", Duration::from_hours(2)),
        analytic("TC2", Duration::from_hours(1)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableViConfig {
    /// Both analytics at the same default priority.
    GeneralPurpose,
    /// Deadline-monotonic priorities.
    TimeCritical,
}

/// The Table VI pair, prioritized per `config` and placed on `core0`.
pub fn table_vi(config: TableViConfig) -> System {
    let mut system = table_vi_system();
    let priorities = match config {
        TableViConfig::GeneralPurpose => system
            .stages()
            .map(|s| (s.id.clone(), crate::model::Priority(1)))
            .collect(),
        TableViConfig::TimeCritical => crate::model::assign_priorities_dm(&system),
    };
    system.apply_priorities(&priorities);
    for s in system.stages_mut() {
        s.core = Some("core0".into());
    }
    system
}

/// Uniformly distributed utilizations summing to `total`, each at most
/// `cap`, by rejection on the unbiased simplex split.
///
/// Falls back to the even split `total / n` if no draw is accepted within
/// a bounded number of attempts (only near `total = n * cap`).
pub fn uunifast_discard(rng: &mut impl Rng, n: usize, total: f64, cap: f64) -> Vec<f64> {
    assert!(n >= 1);
    for _ in 0..10_000 {
        let mut out = vec![0.0; n];
        let mut remaining = total;
        for i in (1..n).rev() {
            let next = remaining * rng.gen::<f64>().powf(1.0 / i as f64);
            out[i] = remaining - next;
            remaining = next;
        }
        out[0] = remaining;
        if out.iter().all(|u| *u <= cap) {
            return out;
        }
    }
    vec![total / n as f64; n]
}

fn log_uniform(rng: &mut impl Rng, lo: Duration, hi: Duration) -> Duration {
    let (lo, hi) = (lo.as_nanos().max(1) as f64, hi.as_nanos().max(1) as f64);
    if hi <= lo {
        return Duration::from_nanos(lo as u64);
    }
    let x = rng.gen_range(lo.ln()..hi.ln()).exp();
    Duration::from_nanos((x.floor() as u64).max(1))
}

fn seq_system(id: &str, stages: Vec<Stage>) -> System {
    let deadline = stages
        .iter()
        .fold(Duration::ZERO, |acc, s| acc.checked_add(s.deadline).unwrap_or(acc));
    System::new(vec![Analytic {
        id: id.into(),
        topology: CompositionExpr::Seq(stages.iter().map(|s| CompositionExpr::leaf(&s.id)).collect()),
        stages,
        end_to_end_deadline: deadline,
    }])
}

/// Stage costs `max(1, floor(u * T))` for the given utilizations and
/// periods, with `D = T` and no blocking.
fn implicit_stages(utilizations: &[f64], periods: &[Duration]) -> Vec<Stage> {
    let width = utilizations.len().saturating_sub(1).to_string().len();
    utilizations
        .iter()
        .zip(periods)
        .enumerate()
        .map(|(i, (u, t))| {
            let c = ((u * t.as_nanos() as f64).floor() as u64).clamp(1, t.as_nanos());
            Stage::new(format!("s{i:0width$}"), Duration::from_nanos(c), (*t).into(), *t)
        })
        .collect()
}

/// A random single-analytic system: `n_stages` stages in one sequential
/// chain, utilizations split uniformly (each at most 1) to `u_target`,
/// periods log-uniform in `t_range`, `C = floor(u * T)` (at least 1 ns),
/// `D = T`, `B = 0`. The end-to-end deadline is the sum of the stage
/// deadlines. Stage ids are `s0, s1, ...`, zero-padded.
pub fn random_system(n_stages: usize, u_target: f64, t_range: (Duration, Duration), seed: u64) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utilizations = uunifast_discard(&mut rng, n_stages, u_target, 1.0);
    let periods: Vec<Duration> = (0..n_stages).map(|_| log_uniform(&mut rng, t_range.0, t_range.1)).collect();
    seq_system("random", implicit_stages(&utilizations, &periods))
}

/// Divisors of `hyperperiod` (in ns) that lie within `t_range`.
pub fn period_grid(hyperperiod: Duration, t_range: (Duration, Duration)) -> Vec<Duration> {
    let h = hyperperiod.as_nanos();
    let mut divisors = Vec::new();
    let mut d = 1u64;
    while d * d <= h {
        if h.is_multiple_of(d) {
            divisors.push(d);
            if d != h / d {
                divisors.push(h / d);
            }
        }
        d += 1;
    }
    divisors.sort_unstable();
    divisors
        .into_iter()
        .map(Duration::from_nanos)
        .filter(|t| *t >= t_range.0 && *t <= t_range.1)
        .collect()
}

/// Like [`random_system`], but every period is drawn uniformly from the
/// divisors of `hyperperiod` within `t_range`, so the task set's
/// hyperperiod divides `hyperperiod`.
pub fn random_system_on_grid(
    n_stages: usize,
    u_target: f64,
    hyperperiod: Duration,
    t_range: (Duration, Duration),
    seed: u64,
) -> System {
    let grid = period_grid(hyperperiod, t_range);
    assert!(!grid.is_empty(), "no divisor of the hyperperiod lies in the period range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utilizations = uunifast_discard(&mut rng, n_stages, u_target, 1.0);
    let periods: Vec<Duration> = (0..n_stages).map(|_| grid[rng.gen_range(0..grid.len())]).collect();
    seq_system("random", implicit_stages(&utilizations, &periods))
}

/// Re-wraps every stage as its own single-stage analytic whose end-to-end
/// deadline is the stage deadline.
pub fn independent_stages(system: &System) -> System {
    System::new(
        system
            .stages()
            .map(|s| Analytic {
                id: s.id.clone(),
                stages: vec![s.clone()],
                topology: CompositionExpr::leaf(&s.id),
                end_to_end_deadline: s.deadline,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub analytics: usize,
    pub max_stages: usize,
    /// Total utilization of each analytic.
    pub utilization: f64,
    /// Blocking is drawn uniformly from `[0, max_blocking * T]`.
    pub max_blocking: f64,
    pub hyperperiod: Duration,
    pub t_range: (Duration, Duration),
}

/// Random pipelined analytics. Each analytic has one period drawn from the
/// divisors of `hyperperiod`, between 1 and `max_stages` stages arranged
/// as a chain whose links are single stages or two parallel stages,
/// `D = T + B` per stage, and an end-to-end deadline equal to the sum of
/// its stage deadlines. Stage ids are `a<i>s<j>`.
pub fn random_pipelined_system(params: &PipelineParams, seed: u64) -> System {
    let grid = period_grid(params.hyperperiod, params.t_range);
    assert!(!grid.is_empty(), "no divisor of the hyperperiod lies in the period range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytics = Vec::with_capacity(params.analytics);
    for a in 0..params.analytics {
        let n = rng.gen_range(1..=params.max_stages.max(1));
        let t = grid[rng.gen_range(0..grid.len())];
        let utilizations = uunifast_discard(&mut rng, n, params.utilization, 1.0);
        let mut stages = Vec::with_capacity(n);
        for (j, u) in utilizations.iter().enumerate() {
            let c = ((u * t.as_nanos() as f64).floor() as u64).clamp(1, t.as_nanos());
            let b_max = (params.max_blocking * t.as_nanos() as f64).floor() as u64;
            let b = Duration::from_nanos(rng.gen_range(0..=b_max));
            let d = t.checked_add(b).expect("small periods");
            stages.push(Stage::new(format!("a{a}s{j}"), Duration::from_nanos(c), t.into(), d).with_blocking(b));
        }
        let mut links = Vec::new();
        let mut j = 0;
        while j < n {
            if j + 1 < n && rng.gen_bool(0.3) {
                links.push(CompositionExpr::Par(vec![
                    CompositionExpr::leaf(&stages[j].id),
                    CompositionExpr::leaf(&stages[j + 1].id),
                ]));
                j += 2;
            } else {
                links.push(CompositionExpr::leaf(&stages[j].id));
                j += 1;
            }
        }
        let deadline = stages.iter().fold(Duration::ZERO, |acc, s| acc.checked_add(s.deadline).unwrap_or(acc));
        analytics.push(Analytic {
            id: format!("a{a}"),
            stages,
            topology: CompositionExpr::Seq(links),
            end_to_end_deadline: deadline,
        });
    }
    System::new(analytics)
}

/// Total utilization of a system as a float, for generator diagnostics.
pub fn utilization_f64(system: &System) -> f64 {
    use num::ToPrimitive;
    system.stages().map(|s| s.utilization()).sum::<Rational>().to_f64().unwrap_or(f64::NAN)
}
