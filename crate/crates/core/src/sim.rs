//! Deterministic discrete-event simulation of partitioned fixed-priority
//! preemptive scheduling.
//!
//! Each core runs an independent preemptive scheduler. A job first serves
//! its blocking term as a delay that cannot be shortened and during which
//! it does not occupy the core; it then executes its cost, preemptible by
//! strictly higher-priority jobs. Equal-priority jobs run in FIFO order of
//! release time, then stage id, and never preempt each other.
//!
//! Analytics are pipelined. Item `n` of an analytic arrives at
//! `offset + n * P`, where `P` is the largest inter-arrival time among the
//! analytic's stages (a single item if any stage is one-shot). A stage's
//! job for item `n` becomes eligible when all its predecessors have
//! completed item `n`, and is released no earlier than its previous
//! release plus its own inter-arrival time, so every stage behaves as a
//! sporadic task.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{Response, ResponseReport};
use crate::model::{effective_blocking, Allocation, Cluster, CoreId, StageId, System};
use crate::time::{Duration, InterArrival};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no item completed end-to-end within the horizon")]
    HorizonTooShort,
    #[error("stage `{stage}` is not allocated to a core of the cluster")]
    Unallocated { stage: StageId },
    #[error("stage `{stage}` has no priority")]
    UnassignedPriority { stage: StageId },
    #[error("horizon must be positive")]
    EmptyHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockingPolicy {
    /// Every job suffers its full blocking term.
    Adversarial,
    /// Blocking drawn uniformly from `[0, B]` per job.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleasePolicy {
    /// Every analytic's first item arrives at t = 0.
    Synchronous,
    /// Every analytic's first item arrives at a pseudo-random offset within
    /// one item period.
    Jittered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub horizon: Duration,
    pub seed: u64,
    pub blocking_policy: BlockingPolicy,
    pub release_policy: ReleasePolicy,
}

impl SimConfig {
    pub fn synchronous(horizon: Duration) -> Self {
        SimConfig {
            horizon,
            seed: 0,
            blocking_policy: BlockingPolicy::Adversarial,
            release_policy: ReleasePolicy::Synchronous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Release,
    Start,
    Preempt,
    Resume,
    BlockEnd,
    Complete,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Release => "RELEASE",
            EventKind::Start => "START",
            EventKind::Preempt => "PREEMPT",
            EventKind::Resume => "RESUME",
            EventKind::BlockEnd => "BLOCK_END",
            EventKind::Complete => "COMPLETE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Duration,
    pub core: CoreId,
    pub kind: EventKind,
    pub stage: StageId,
    pub job: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimTrace {
    pub horizon: Duration,
    pub events: Vec<TraceEvent>,
    pub job_responses: BTreeMap<(StageId, u64), Duration>,
    pub end_to_end_responses: BTreeMap<(String, u64), Duration>,
}

pub const TRACE_CSV_HEADER: &str = "time_ns,core,kind,stage,job";

impl SimTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for e in &self.events {
            writeln!(out, "{},{},{},{},{}", e.time.as_nanos(), e.core, e.kind, e.stage, e.job)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace is UTF-8")
    }

    /// Total execution time per core, reconstructed from the events.
    pub fn busy_time(&self) -> BTreeMap<CoreId, Duration> {
        let mut open: BTreeMap<&str, Duration> = BTreeMap::new();
        let mut busy: BTreeMap<CoreId, u64> = BTreeMap::new();
        for e in &self.events {
            match e.kind {
                EventKind::Start | EventKind::Resume => {
                    open.insert(&e.core, e.time);
                }
                EventKind::Preempt | EventKind::Complete => {
                    if let Some(since) = open.remove(e.core.as_str()) {
                        *busy.entry(e.core.clone()).or_default() += (e.time.saturating_sub(since)).as_nanos();
                    }
                }
                _ => {}
            }
        }
        for (core, since) in open {
            *busy.entry(core.to_string()).or_default() += self.horizon.saturating_sub(since).as_nanos();
        }
        busy.into_iter().map(|(k, v)| (k, Duration::from_nanos(v))).collect()
    }
}

#[derive(Debug, Clone)]
struct StageInfo {
    id: StageId,
    core: usize,
    priority: u32,
    cost: Duration,
    blocking: Duration,
    period: Option<Duration>,
    analytic: usize,
    successors: Vec<usize>,
    pred_count: usize,
    is_exit: bool,
}

#[derive(Debug, Clone)]
struct Job {
    stage: usize,
    item: u64,
    release: Duration,
    remaining: Duration,
    started: bool,
}

#[derive(Debug, Clone)]
struct AnalyticState {
    id: String,
    period: Option<Duration>,
    offset: Duration,
    entries: Vec<usize>,
    exit_count: usize,
    next_item: u64,
}

impl AnalyticState {
    fn arrival(&self, item: u64) -> Option<Duration> {
        match self.period {
            Some(p) => p.checked_mul(item).ok()?.checked_add(self.offset).ok(),
            None if item == 0 => Some(self.offset),
            None => None,
        }
    }
}

struct Engine<'a> {
    stages: Vec<StageInfo>,
    analytics: Vec<AnalyticState>,
    cores: Vec<&'a str>,
    jobs: Vec<Job>,
    // FIFO of (item, eligible-at) per stage
    pending: Vec<VecDeque<(u64, Duration)>>,
    last_release: Vec<Option<Duration>>,
    pred_done: BTreeMap<(usize, u64), usize>,
    exit_done: BTreeMap<(usize, u64), usize>,
    suspended: Vec<(Duration, usize)>,
    ready: Vec<Vec<usize>>,
    running: Vec<Option<usize>>,
    rng: ChaCha8Rng,
    blocking_policy: BlockingPolicy,
    trace: SimTrace,
}

/// Runs the simulation up to `config.horizon`: releases happen strictly
/// before the horizon, completions up to and including it.
pub fn simulate(
    system: &System,
    allocation: &Allocation,
    cluster: &Cluster,
    config: &SimConfig,
) -> Result<SimTrace, SimError> {
    if config.horizon.is_zero() {
        return Err(SimError::EmptyHorizon);
    }
    let mut engine = Engine::new(system, allocation, cluster, config)?;
    engine.run(config.horizon);
    let trace = engine.trace;
    if trace.end_to_end_responses.is_empty() {
        return Err(SimError::HorizonTooShort);
    }
    Ok(trace)
}

impl<'a> Engine<'a> {
    fn new(
        system: &System,
        allocation: &Allocation,
        cluster: &'a Cluster,
        config: &SimConfig,
    ) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut stages = Vec::new();
        for (ai, analytic) in system.analytics.iter().enumerate() {
            let exits = analytic.topology.exit_stages();
            for stage in &analytic.stages {
                let core_id = allocation
                    .get(&stage.id)
                    .ok_or_else(|| SimError::Unallocated { stage: stage.id.clone() })?;
                let core = cluster
                    .cores
                    .iter()
                    .position(|c| &c.id == core_id)
                    .ok_or_else(|| SimError::Unallocated { stage: stage.id.clone() })?;
                let priority = stage
                    .priority
                    .ok_or_else(|| SimError::UnassignedPriority { stage: stage.id.clone() })?;
                index.insert(&stage.id, stages.len());
                stages.push(StageInfo {
                    id: stage.id.clone(),
                    core,
                    priority: priority.0,
                    cost: stage.cost,
                    blocking: effective_blocking(stage, Some(&cluster.cores[core])),
                    period: stage.inter_arrival.finite(),
                    analytic: ai,
                    successors: Vec::new(),
                    pred_count: 0,
                    is_exit: exits.contains(&stage.id.as_str()),
                });
            }
        }

        let mut analytics = Vec::new();
        for (ai, analytic) in system.analytics.iter().enumerate() {
            for (stage, preds) in analytic.topology.predecessors() {
                let Some(&si) = index.get(stage.as_str()) else { continue };
                stages[si].pred_count = preds.len();
                for p in preds {
                    if let Some(&pi) = index.get(p.as_str()) {
                        stages[pi].successors.push(si);
                    }
                }
            }
            let one_shot = analytic.stages.iter().any(|s| s.inter_arrival == InterArrival::Infinite);
            let period = if one_shot {
                None
            } else {
                analytic.stages.iter().filter_map(|s| s.inter_arrival.finite()).max()
            };
            let offset = match (config.release_policy, period) {
                (ReleasePolicy::Jittered, Some(p)) => Duration::from_nanos(rng.gen_range(0..p.as_nanos())),
                _ => Duration::ZERO,
            };
            let entries = analytic
                .topology
                .entry_stages()
                .iter()
                .filter_map(|id| index.get(id).copied())
                .collect();
            analytics.push(AnalyticState {
                id: analytic.id.clone(),
                period,
                offset,
                entries,
                exit_count: analytic.topology.exit_stages().len(),
                next_item: 0,
            });
            debug_assert_eq!(analytics.len(), ai + 1);
        }

        let n = stages.len();
        Ok(Engine {
            stages,
            analytics,
            cores: cluster.cores.iter().map(|c| c.id.as_str()).collect(),
            jobs: Vec::new(),
            pending: vec![VecDeque::new(); n],
            last_release: vec![None; n],
            pred_done: BTreeMap::new(),
            exit_done: BTreeMap::new(),
            suspended: Vec::new(),
            ready: vec![Vec::new(); cluster.cores.len()],
            running: vec![None; cluster.cores.len()],
            rng,
            blocking_policy: config.blocking_policy,
            trace: SimTrace {
                horizon: config.horizon,
                ..SimTrace::default()
            },
        })
    }

    fn emit(&mut self, time: Duration, kind: EventKind, job: usize) {
        let j = &self.jobs[job];
        let s = &self.stages[j.stage];
        self.trace.events.push(TraceEvent {
            time,
            core: self.cores[s.core].to_string(),
            kind,
            stage: s.id.clone(),
            job: j.item,
        });
    }

    /// Release time of the front pending item of stage `s`.
    fn front_release(&self, s: usize) -> Option<Duration> {
        let &(_, eligible) = self.pending[s].front()?;
        let spaced = match (self.last_release[s], self.stages[s].period) {
            (Some(last), Some(t)) => last.checked_add(t).unwrap_or(Duration::from_nanos(u64::MAX)),
            _ => Duration::ZERO,
        };
        Some(eligible.max(spaced))
    }

    fn run(&mut self, horizon: Duration) {
        let mut now = Duration::ZERO;
        loop {
            self.complete_jobs(now);
            if now >= horizon {
                break;
            }
            self.arrive_items(now);
            self.release_jobs(now);
            self.end_blocking(now);
            self.dispatch(now);

            let Some(next) = self.next_instant(now) else { break };
            let next = next.min(horizon);
            let elapsed = next.saturating_sub(now);
            for r in self.running.iter().flatten() {
                let job = &mut self.jobs[*r];
                job.remaining = job.remaining.saturating_sub(elapsed);
            }
            now = next;
        }
    }

    fn complete_jobs(&mut self, now: Duration) {
        let mut done: Vec<(StageId, usize, usize)> = Vec::new();
        for (core, slot) in self.running.iter().enumerate() {
            if let Some(j) = *slot {
                if self.jobs[j].remaining.is_zero() {
                    done.push((self.stages[self.jobs[j].stage].id.clone(), j, core));
                }
            }
        }
        done.sort();
        for (_, j, core) in done {
            self.running[core] = None;
            self.emit(now, EventKind::Complete, j);
            let (stage, item, release) = {
                let job = &self.jobs[j];
                (job.stage, job.item, job.release)
            };
            self.trace
                .job_responses
                .insert((self.stages[stage].id.clone(), item), now.saturating_sub(release));
            for k in 0..self.stages[stage].successors.len() {
                let succ = self.stages[stage].successors[k];
                let count = self.pred_done.entry((succ, item)).or_default();
                *count += 1;
                if *count == self.stages[succ].pred_count {
                    self.pred_done.remove(&(succ, item));
                    self.pending[succ].push_back((item, now));
                }
            }
            if self.stages[stage].is_exit {
                let a = self.stages[stage].analytic;
                let count = self.exit_done.entry((a, item)).or_default();
                *count += 1;
                if *count == self.analytics[a].exit_count {
                    self.exit_done.remove(&(a, item));
                    if let Some(arrival) = self.analytics[a].arrival(item) {
                        self.trace
                            .end_to_end_responses
                            .insert((self.analytics[a].id.clone(), item), now.saturating_sub(arrival));
                    }
                }
            }
        }
    }

    fn arrive_items(&mut self, now: Duration) {
        for a in 0..self.analytics.len() {
            let state = &self.analytics[a];
            if state.arrival(state.next_item) == Some(now) {
                let item = state.next_item;
                for &s in &state.entries {
                    self.pending[s].push_back((item, now));
                }
                self.analytics[a].next_item += 1;
            }
        }
    }

    fn release_jobs(&mut self, now: Duration) {
        let mut order: Vec<usize> = (0..self.stages.len()).collect();
        order.sort_by(|a, b| self.stages[*a].id.cmp(&self.stages[*b].id));
        for s in order {
            while self.front_release(s) == Some(now) {
                let (item, _) = self.pending[s].pop_front().expect("front exists");
                self.last_release[s] = Some(now);
                let info = &self.stages[s];
                let blocking = match self.blocking_policy {
                    BlockingPolicy::Adversarial => info.blocking,
                    BlockingPolicy::Uniform => {
                        Duration::from_nanos(self.rng.gen_range(0..=info.blocking.as_nanos()))
                    }
                };
                let core = info.core;
                let j = self.jobs.len();
                self.jobs.push(Job {
                    stage: s,
                    item,
                    release: now,
                    remaining: info.cost,
                    started: false,
                });
                self.emit(now, EventKind::Release, j);
                if blocking.is_zero() {
                    self.ready[core].push(j);
                } else {
                    let until = now.checked_add(blocking).unwrap_or(Duration::from_nanos(u64::MAX));
                    self.suspended.push((until, j));
                }
            }
        }
    }

    fn end_blocking(&mut self, now: Duration) {
        let mut woken: Vec<usize> = Vec::new();
        self.suspended.retain(|&(until, j)| {
            if until == now {
                woken.push(j);
                false
            } else {
                true
            }
        });
        woken.sort_by(|a, b| {
            let (ja, jb) = (&self.jobs[*a], &self.jobs[*b]);
            self.stages[ja.stage].id.cmp(&self.stages[jb.stage].id).then(ja.item.cmp(&jb.item))
        });
        for j in woken {
            self.emit(now, EventKind::BlockEnd, j);
            let core = self.stages[self.jobs[j].stage].core;
            self.ready[core].push(j);
        }
    }

    /// Ordering key: higher priority first, then earlier release, stage id
    /// and item.
    fn better(&self, a: usize, b: usize) -> bool {
        let (ja, jb) = (&self.jobs[a], &self.jobs[b]);
        let (sa, sb) = (&self.stages[ja.stage], &self.stages[jb.stage]);
        sb.priority
            .cmp(&sa.priority)
            .then(ja.release.cmp(&jb.release))
            .then(sa.id.cmp(&sb.id))
            .then(ja.item.cmp(&jb.item))
            .is_lt()
    }

    fn dispatch(&mut self, now: Duration) {
        for core in 0..self.cores.len() {
            let best = self.ready[core].iter().copied().reduce(|a, b| if self.better(b, a) { b } else { a });
            let Some(best) = best else { continue };
            if let Some(cur) = self.running[core] {
                let preempts = self.stages[self.jobs[best].stage].priority
                    > self.stages[self.jobs[cur].stage].priority;
                if !preempts {
                    continue;
                }
                self.emit(now, EventKind::Preempt, cur);
                self.ready[core].push(cur);
            }
            self.ready[core].retain(|&j| j != best);
            let kind = if self.jobs[best].started { EventKind::Resume } else { EventKind::Start };
            self.jobs[best].started = true;
            self.emit(now, kind, best);
            self.running[core] = Some(best);
        }
    }

    fn next_instant(&self, now: Duration) -> Option<Duration> {
        let arrivals = self
            .analytics
            .iter()
            .filter_map(|a| a.arrival(a.next_item))
            .filter(|t| *t > now);
        let releases = (0..self.stages.len()).filter_map(|s| self.front_release(s));
        let wakeups = self.suspended.iter().map(|(t, _)| *t);
        let finishes = self
            .running
            .iter()
            .flatten()
            .map(|j| now.checked_add(self.jobs[*j].remaining).unwrap_or(Duration::from_nanos(u64::MAX)));
        arrivals.chain(releases).chain(wakeups).chain(finishes).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Observed {
    pub per_stage: BTreeMap<StageId, Duration>,
    pub per_analytic: BTreeMap<String, Duration>,
}

/// Largest observed response per stage and end-to-end latency per analytic.
pub fn worst_observed(trace: &SimTrace) -> Observed {
    let mut observed = Observed::default();
    for ((stage, _), r) in &trace.job_responses {
        let e = observed.per_stage.entry(stage.clone()).or_default();
        *e = (*e).max(*r);
    }
    for ((analytic, _), r) in &trace.end_to_end_responses {
        let e = observed.per_analytic.entry(analytic.clone()).or_default();
        *e = (*e).max(*r);
    }
    observed
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    Stage(StageId),
    Analytic(String),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Stage(id) => write!(f, "stage {id}"),
            Subject::Analytic(id) => write!(f, "analytic {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: Subject,
    pub observed: Duration,
    pub bound: Duration,
}

/// Every stage or analytic whose observed worst case exceeds its analytic
/// bound. Diverged bounds are not bounds and are never violated.
pub fn verify_conservative(report: &ResponseReport, observed: &Observed) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (stage, seen) in &observed.per_stage {
        if let Some(Response::Bounded(bound)) = report.per_stage.get(stage) {
            if seen > bound {
                violations.push(Violation {
                    subject: Subject::Stage(stage.clone()),
                    observed: *seen,
                    bound: *bound,
                });
            }
        }
    }
    for (analytic, seen) in &observed.per_analytic {
        if let Some(verdict) = report.per_analytic.get(analytic) {
            if let Response::Bounded(bound) = verdict.end_to_end {
                if *seen > bound {
                    violations.push(Violation {
                        subject: Subject::Analytic(analytic.clone()),
                        observed: *seen,
                        bound,
                    });
                }
            }
        }
    }
    violations
}
