//! Domain model: stages, analytics, systems and the cluster they run on.
//!
//! Besides the types, this module hosts the operations that prepare a
//! system for analysis: well-formedness validation, deadline-monotonic
//! priority assignment, replication of over-rate stages, and first-fit
//! decreasing allocation of stages to cores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::Zero;
use thiserror::Error;

use crate::time::{Duration, InterArrival};
use crate::{ratio, Rational};

pub type StageId = String;
pub type CoreId = String;

/// Fixed priority; a larger value is a higher priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Priority(pub u32);

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub type PriorityMap = BTreeMap<StageId, Priority>;
pub type Allocation = BTreeMap<StageId, CoreId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("stage `{stage}` needs {needed} replicas, more than the limit of {limit}")]
    ReplicationExceeded { stage: StageId, needed: u64, limit: u64 },
    #[error("stage `{stage}` is one-shot and cannot be replicated for rate")]
    OneShotReplication { stage: StageId },
    #[error("no core can host stage `{stage}`")]
    AllocationFailed { stage: StageId },
}

/// One schedulable segment of an analytic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub id: StageId,
    pub cost: Duration,
    pub inter_arrival: InterArrival,
    pub deadline: Duration,
    pub blocking: Duration,
    pub priority: Option<Priority>,
    pub core: Option<CoreId>,
}

impl Stage {
    /// A stage with no blocking, no priority and no host core.
    pub fn new(
        id: impl Into<StageId>,
        cost: Duration,
        inter_arrival: InterArrival,
        deadline: Duration,
    ) -> Self {
        Stage {
            id: id.into(),
            cost,
            inter_arrival,
            deadline,
            blocking: Duration::ZERO,
            priority: None,
            core: None,
        }
    }

    pub fn with_blocking(mut self, blocking: Duration) -> Self {
        self.blocking = blocking;
        self
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = Some(Priority(priority));
        self
    }

    pub fn on_core(mut self, core: impl Into<CoreId>) -> Self {
        self.core = Some(core.into());
        self
    }

    /// `C / T`, zero for one-shot stages.
    pub fn utilization(&self) -> Rational {
        match self.inter_arrival {
            InterArrival::Finite(t) => ratio(self.cost.as_nanos(), t.as_nanos()),
            InterArrival::Infinite => Rational::zero(),
        }
    }
}

/// Series-parallel composition of an analytic's stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompositionExpr {
    Leaf(StageId),
    Seq(Vec<CompositionExpr>),
    Par(Vec<CompositionExpr>),
}

impl CompositionExpr {
    pub fn leaf(id: impl Into<StageId>) -> Self {
        CompositionExpr::Leaf(id.into())
    }

    /// Stage ids in left-to-right order, duplicates included.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            CompositionExpr::Leaf(id) => out.push(id),
            CompositionExpr::Seq(children) | CompositionExpr::Par(children) => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    /// Stages that receive the analytic's input directly.
    pub fn entry_stages(&self) -> Vec<&str> {
        match self {
            CompositionExpr::Leaf(id) => vec![id.as_str()],
            CompositionExpr::Seq(children) => {
                children.first().map(|c| c.entry_stages()).unwrap_or_default()
            }
            CompositionExpr::Par(children) => children.iter().flat_map(|c| c.entry_stages()).collect(),
        }
    }

    /// Stages whose completion ends the analytic.
    pub fn exit_stages(&self) -> Vec<&str> {
        match self {
            CompositionExpr::Leaf(id) => vec![id.as_str()],
            CompositionExpr::Seq(children) => {
                children.last().map(|c| c.exit_stages()).unwrap_or_default()
            }
            CompositionExpr::Par(children) => children.iter().flat_map(|c| c.exit_stages()).collect(),
        }
    }

    /// Predecessor sets implied by the sequential edges.
    pub fn predecessors(&self) -> BTreeMap<StageId, Vec<StageId>> {
        let mut preds: BTreeMap<StageId, Vec<StageId>> = BTreeMap::new();
        for id in self.leaves() {
            preds.entry(id.to_string()).or_default();
        }
        self.collect_edges(&mut preds);
        preds
    }

    fn collect_edges(&self, preds: &mut BTreeMap<StageId, Vec<StageId>>) {
        match self {
            CompositionExpr::Leaf(_) => {}
            CompositionExpr::Par(children) => children.iter().for_each(|c| c.collect_edges(preds)),
            CompositionExpr::Seq(children) => {
                for c in children {
                    c.collect_edges(preds);
                }
                for pair in children.windows(2) {
                    let exits: Vec<StageId> =
                        pair[0].exit_stages().into_iter().map(String::from).collect();
                    for entry in pair[1].entry_stages() {
                        preds.entry(entry.to_string()).or_default().extend(exits.iter().cloned());
                    }
                }
            }
        }
    }

    /// Replaces every leaf for which `f` returns `Some` by the returned
    /// expression.
    pub fn map_leaves(&self, f: &impl Fn(&str) -> Option<CompositionExpr>) -> CompositionExpr {
        match self {
            CompositionExpr::Leaf(id) => f(id).unwrap_or_else(|| self.clone()),
            CompositionExpr::Seq(c) => CompositionExpr::Seq(c.iter().map(|e| e.map_leaves(f)).collect()),
            CompositionExpr::Par(c) => CompositionExpr::Par(c.iter().map(|e| e.map_leaves(f)).collect()),
        }
    }
}

/// A big-data computation: stages, their composition, and an end-to-end
/// deadline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analytic {
    pub id: String,
    pub stages: Vec<Stage>,
    pub topology: CompositionExpr,
    pub end_to_end_deadline: Duration,
}

impl Analytic {
    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct System {
    pub analytics: Vec<Analytic>,
}

impl System {
    pub fn new(analytics: Vec<Analytic>) -> Self {
        System { analytics }
    }

    pub fn stages(&self) -> impl Iterator<Item = &Stage> {
        self.analytics.iter().flat_map(|a| a.stages.iter())
    }

    pub fn stages_mut(&mut self) -> impl Iterator<Item = &mut Stage> {
        self.analytics.iter_mut().flat_map(|a| a.stages.iter_mut())
    }

    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages().find(|s| s.id == id)
    }

    pub fn analytic(&self, id: &str) -> Option<&Analytic> {
        self.analytics.iter().find(|a| a.id == id)
    }

    /// Overwrites stage priorities with the entries of `priorities`.
    pub fn apply_priorities(&mut self, priorities: &PriorityMap) {
        for stage in self.stages_mut() {
            if let Some(p) = priorities.get(&stage.id) {
                stage.priority = Some(*p);
            }
        }
    }

    /// Overwrites stage host cores with the entries of `allocation`.
    pub fn apply_allocation(&mut self, allocation: &Allocation) {
        for stage in self.stages_mut() {
            if let Some(c) = allocation.get(&stage.id) {
                stage.core = Some(c.clone());
            }
        }
    }

    /// Host cores of all stages that have one.
    pub fn allocation(&self) -> Allocation {
        self.stages()
            .filter_map(|s| s.core.clone().map(|c| (s.id.clone(), c)))
            .collect()
    }

    pub fn priorities(&self) -> PriorityMap {
        self.stages()
            .filter_map(|s| s.priority.map(|p| (s.id.clone(), p)))
            .collect()
    }
}

/// A scheduling unit with a utilization ceiling and a platform blocking term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Core {
    pub id: CoreId,
    pub capacity: Rational,
    pub platform_blocking: Duration,
}

impl Core {
    pub fn new(id: impl Into<CoreId>) -> Self {
        Core {
            id: id.into(),
            capacity: ratio(1, 1),
            platform_blocking: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub cores: Vec<Core>,
}

impl Cluster {
    /// `m` cores named `core0..core{m-1}` with the given capacity.
    pub fn uniform(m: usize, capacity: Rational) -> Self {
        Cluster {
            cores: (0..m)
                .map(|k| Core {
                    id: format!("core{k}"),
                    capacity: capacity.clone(),
                    platform_blocking: Duration::ZERO,
                })
                .collect(),
        }
    }

    pub fn core(&self, id: &str) -> Option<&Core> {
        self.cores.iter().find(|c| c.id == id)
    }
}

/// Blocking a stage suffers on its host: the larger of its own blocking
/// and the platform blocking of the core.
pub fn effective_blocking(stage: &Stage, core: Option<&Core>) -> Duration {
    core.map_or(stage.blocking, |c| stage.blocking.max(c.platform_blocking))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, path: String, message: impl Into<String>) {
        self.findings.push(Finding {
            path,
            message: message.into(),
        });
    }

    pub fn has(&self, message: &str) -> bool {
        self.findings.iter().any(|f| f.message == message)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.findings.iter().any(|f| f.message.starts_with(prefix))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", finding.path, finding.message)?;
        }
        Ok(())
    }
}

/// Lists every well-formedness violation of `system`, each with a JSON
/// pointer to the offending field.
pub fn validate_system(system: &System) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut analytic_ids = BTreeSet::new();
    let mut stage_ids = BTreeSet::new();

    for (ai, analytic) in system.analytics.iter().enumerate() {
        let base = format!("/analytics/{ai}");
        if !analytic_ids.insert(analytic.id.as_str()) {
            report.push(format!("{base}/id"), "duplicate analytic id");
        }
        if analytic.end_to_end_deadline.is_zero() {
            report.push(format!("{base}/deadline"), "end-to-end deadline must be positive");
        }
        if analytic.stages.is_empty() {
            report.push(format!("{base}/stages"), "analytic has no stages");
        }
        for (si, stage) in analytic.stages.iter().enumerate() {
            let path = format!("{base}/stages/{si}");
            if !stage_ids.insert(stage.id.as_str()) {
                report.push(format!("{path}/id"), "duplicate stage id");
            }
            if stage.cost > stage.deadline {
                report.push(format!("{path}/cost"), "cost exceeds deadline");
            }
            if let InterArrival::Finite(t) = stage.inter_arrival {
                if t.is_zero() {
                    report.push(format!("{path}/inter_arrival"), "inter-arrival must be positive");
                }
                match t.checked_add(stage.blocking) {
                    Ok(limit) if stage.deadline > limit => report.push(
                        format!("{path}/deadline"),
                        "deadline exceeds inter-arrival plus blocking",
                    ),
                    Ok(_) => {}
                    Err(_) => report.push(format!("{path}/blocking"), "time overflow"),
                }
            }
        }

        let topo_path = format!("{base}/topology");
        check_composition(&analytic.topology, &topo_path, &mut report);
        let mut seen = BTreeSet::new();
        let declared: BTreeSet<&str> = analytic.stages.iter().map(|s| s.id.as_str()).collect();
        for leaf in analytic.topology.leaves() {
            if !seen.insert(leaf) {
                report.push(topo_path.clone(), format!("stage covered twice: {leaf}"));
            }
            if !declared.contains(leaf) {
                report.push(topo_path.clone(), format!("unknown stage in topology: {leaf}"));
            }
        }
        for (si, stage) in analytic.stages.iter().enumerate() {
            if !seen.contains(stage.id.as_str()) {
                report.push(format!("{base}/stages/{si}/id"), "stage not covered by topology");
            }
        }
    }
    report
}

fn check_composition(expr: &CompositionExpr, path: &str, report: &mut ValidationReport) {
    match expr {
        CompositionExpr::Leaf(_) => {}
        CompositionExpr::Seq(children) | CompositionExpr::Par(children) => {
            if children.is_empty() {
                report.push(path.to_string(), "empty composition");
            }
            children.iter().for_each(|c| check_composition(c, path, report));
        }
    }
}

/// Checks the cluster: non-empty, unique core ids, capacities in (0, 1].
pub fn validate_cluster(cluster: &Cluster) -> ValidationReport {
    let mut report = ValidationReport::default();
    if cluster.cores.is_empty() {
        report.push("/cluster".to_string(), "cluster has no cores");
    }
    let mut ids = BTreeSet::new();
    for (k, core) in cluster.cores.iter().enumerate() {
        if !ids.insert(core.id.as_str()) {
            report.push(format!("/cluster/{k}/id"), "duplicate core id");
        }
        if core.capacity <= Rational::zero() || core.capacity > ratio(1, 1) {
            report.push(format!("/cluster/{k}/capacity"), "capacity must be in (0, 1]");
        }
    }
    report
}

/// Deadline-monotonic priorities: shorter deadline, higher priority; equal
/// deadlines are ordered by stage id, the lexicographically smaller id
/// getting the higher priority. Priorities are `1..=n`, `n` being highest.
pub fn assign_priorities_dm(system: &System) -> PriorityMap {
    let mut order: Vec<(&Duration, &str)> =
        system.stages().map(|s| (&s.deadline, s.id.as_str())).collect();
    order.sort();
    let n = order.len() as u32;
    order
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| (id.to_string(), Priority(n - i as u32)))
        .collect()
}

/// Splits an over-rate stage into `k = ceil(C / T)` round-robin replicas,
/// each seeing every k-th input, so each replica has inter-arrival `k * T`.
///
/// Replica ids are `<id>#<r>`. A stage with `C <= T` comes back unchanged.
pub fn replicate_for_rate(stage: &Stage, k_max: u64) -> Result<Vec<Stage>, ModelError> {
    let t = stage
        .inter_arrival
        .finite()
        .ok_or_else(|| ModelError::OneShotReplication { stage: stage.id.clone() })?;
    if stage.cost <= t {
        return Ok(vec![stage.clone()]);
    }
    let k = stage.cost.div_ceil(t);
    if k > k_max {
        return Err(ModelError::ReplicationExceeded {
            stage: stage.id.clone(),
            needed: k,
            limit: k_max,
        });
    }
    let overflow = || ModelError::ReplicationExceeded {
        stage: stage.id.clone(),
        needed: k,
        limit: k_max,
    };
    let period = t.checked_mul(k).map_err(|_| overflow())?;
    let deadline_cap = period.checked_add(stage.blocking).map_err(|_| overflow())?;
    Ok((0..k)
        .map(|r| Stage {
            id: format!("{}#{}", stage.id, r),
            inter_arrival: InterArrival::Finite(period),
            deadline: stage.deadline.min(deadline_cap),
            ..stage.clone()
        })
        .collect())
}

/// First-fit decreasing by utilization: stages sorted by `C / T`
/// descending (ties by id) go to the first core, in cluster order, whose
/// accumulated utilization stays within its capacity.
pub fn allocate_first_fit(system: &System, cluster: &Cluster) -> Result<Allocation, ModelError> {
    let mut items: Vec<(Rational, &str)> =
        system.stages().map(|s| (s.utilization(), s.id.as_str())).collect();
    items.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));

    let mut load: Vec<Rational> = vec![Rational::zero(); cluster.cores.len()];
    let mut allocation = Allocation::new();
    for (u, id) in items {
        let slot = cluster
            .cores
            .iter()
            .zip(load.iter())
            .position(|(core, used)| used + &u <= core.capacity)
            .ok_or_else(|| ModelError::AllocationFailed { stage: id.to_string() })?;
        load[slot] += u;
        allocation.insert(id.to_string(), cluster.cores[slot].id.clone());
    }
    Ok(allocation)
}
