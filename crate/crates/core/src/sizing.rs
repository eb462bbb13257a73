//! Cluster sizing experiments: utilization and minimum cores versus input
//! frequency, the decimation trade-off on an analytic's aggregator, and
//! the comparison against a baseline that charges blocking as demand.

use std::collections::BTreeMap;

use num::{BigInt, ToPrimitive, Zero};
use thiserror::Error;

use crate::analysis::{
    check_bound_preconditions, min_cores, solve_system, total_utilization, AnalysisError, Response,
};
use crate::model::{
    allocate_first_fit, assign_priorities_dm, replicate_for_rate, Allocation, Cluster, CompositionExpr,
    ModelError, StageId, System,
};
use crate::time::{period_of_frequency, Duration, InterArrival};
use crate::{format_sig9, ratio, Rational};

/// Default replica limit for sweeps.
pub const DEFAULT_K_MAX: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SizingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("frequency {0} Hz does not give a positive period")]
    InvalidFrequency(String),
    #[error("stage `{stage}` has an inter-arrival time that is not a multiple of its analytic's input period")]
    IrregularRates { stage: StageId },
    #[error("decimation needs exactly one analytic ending in a single aggregator stage or its replicas")]
    NoAggregator,
    #[error("decimation factor must be at least 1")]
    InvalidFactor,
    #[error("time arithmetic overflow")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepRow {
    pub frequency: Rational,
    pub total_utilization: Rational,
    pub min_cores: u64,
    pub per_stage_utilization: BTreeMap<StageId, Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecimationRow {
    pub factor: u64,
    pub end_to_end: Response,
    pub aggregator_utilization: Rational,
    pub cores_saved: i64,
}

/// Re-times `template` for an input stream at `hz` events per second.
///
/// Within each analytic, a stage whose inter-arrival is `k` times the
/// analytic's shortest one keeps that multiple of the new input period
/// `floor(1e9 / hz)` ns. Stages whose cost exceeds their new inter-arrival
/// are replaced by round-robin replicas, and every periodic stage gets
/// `D = T + B`. One-shot stages are left as they are.
pub fn at_frequency(template: &System, hz: &Rational, k_max: u64) -> Result<System, SizingError> {
    let period = period_of_frequency(hz).ok_or_else(|| SizingError::InvalidFrequency(hz.to_string()))?;
    let mut out = template.clone();
    for analytic in &mut out.analytics {
        let Some(base) = analytic.stages.iter().filter_map(|s| s.inter_arrival.finite()).min() else {
            continue;
        };
        let mut replaced: BTreeMap<StageId, Vec<StageId>> = BTreeMap::new();
        let mut stages = Vec::with_capacity(analytic.stages.len());
        for stage in &analytic.stages {
            let InterArrival::Finite(t) = stage.inter_arrival else {
                stages.push(stage.clone());
                continue;
            };
            if t.as_nanos() % base.as_nanos() != 0 {
                return Err(SizingError::IrregularRates { stage: stage.id.clone() });
            }
            let multiple = t.as_nanos() / base.as_nanos();
            let mut retimed = stage.clone();
            retimed.inter_arrival = period.checked_mul(multiple).map_err(|_| SizingError::Overflow)?.into();
            let replicas = replicate_for_rate(&retimed, k_max)?;
            if replicas.len() > 1 {
                replaced.insert(stage.id.clone(), replicas.iter().map(|r| r.id.clone()).collect());
            }
            for mut r in replicas {
                let t = r.inter_arrival.finite().expect("periodic");
                r.deadline = t.checked_add(r.blocking).map_err(|_| SizingError::Overflow)?;
                if replaced.contains_key(&stage.id) {
                    r.core = None;
                }
                stages.push(r);
            }
        }
        analytic.stages = stages;
        if !replaced.is_empty() {
            analytic.topology = analytic.topology.map_leaves(&|id| {
                replaced
                    .get(id)
                    .map(|ids| CompositionExpr::Par(ids.iter().map(CompositionExpr::leaf).collect()))
            });
        }
    }
    Ok(out)
}

/// Utilization and minimum core count of `template` re-timed to each
/// frequency, in input order.
pub fn frequency_sweep(
    template: &System,
    frequencies: &[Rational],
    u_max: &Rational,
    k_max: u64,
) -> Result<Vec<SweepRow>, SizingError> {
    frequencies
        .iter()
        .map(|hz| {
            let system = at_frequency(template, hz, k_max)?;
            let summary = total_utilization(&system);
            Ok(SweepRow {
                frequency: hz.clone(),
                min_cores: min_cores(&summary.total, u_max),
                total_utilization: summary.total,
                per_stage_utilization: summary.per_stage,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "frequency_hz,total_utilization,min_cores";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            format_sig9(&row.frequency),
            format_sig9(&row.total_utilization),
            row.min_cores
        ));
    }
    out
}

/// Decimation of the aggregator (the single exit stage of the system's
/// only analytic) by each factor `F`.
///
/// With factor `F` the aggregator activates once per `F` inputs: its
/// inter-arrival becomes `F` times the input-rate value, and it waits up to
/// `(F - 1)` input periods for its batch, charged as additional blocking.
/// An aggregator replicated for rate keeps its replicas, which take the
/// batches in turn; `aggregator_utilization` is then their sum.
/// Priorities and the allocation are fixed from the undecimated system
/// (deadline-monotonic and first-fit on the fewest cores that admit it
/// when the template does not carry them), so every row differs from the
/// `F = 1` row only in the aggregator.
pub fn decimation_sweep(
    template: &System,
    input_hz: &Rational,
    factors: &[u64],
    u_max: &Rational,
    k_max: u64,
) -> Result<Vec<DecimationRow>, SizingError> {
    let mut base = at_frequency(template, input_hz, k_max)?;
    let input_period = period_of_frequency(input_hz).ok_or_else(|| SizingError::InvalidFrequency(input_hz.to_string()))?;
    if base.analytics.len() != 1 {
        return Err(SizingError::NoAggregator);
    }
    let exits: Vec<String> = base.analytics[0].topology.exit_stages().iter().map(|s| s.to_string()).collect();
    let replica_base = |id: &str| id.split_once('#').map_or(id.to_string(), |(b, _)| b.to_string());
    let Some(first) = exits.first() else {
        return Err(SizingError::NoAggregator);
    };
    if exits.len() > 1 && !exits.iter().all(|e| e.contains('#') && replica_base(e) == replica_base(first)) {
        return Err(SizingError::NoAggregator);
    }
    let mut aggregators = Vec::with_capacity(exits.len());
    for exit in &exits {
        let index = base.analytics[0]
            .stages
            .iter()
            .position(|s| &s.id == exit)
            .ok_or(SizingError::NoAggregator)?;
        let period = base.analytics[0].stages[index]
            .inter_arrival
            .finite()
            .ok_or(SizingError::NoAggregator)?;
        aggregators.push((index, period));
    }

    if base.stages().any(|s| s.priority.is_none()) {
        let priorities = assign_priorities_dm(&base);
        base.apply_priorities(&priorities);
    }
    let base_cores = min_cores(&total_utilization(&base).total, u_max);
    let (allocation, cluster) = hold_allocation(&base, base_cores, u_max)?;

    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        if factor == 0 {
            return Err(SizingError::InvalidFactor);
        }
        let mut system = base.clone();
        let buffering = input_period.checked_mul(factor - 1).map_err(|_| SizingError::Overflow)?;
        let mut aggregator_utilization = Rational::zero();
        for &(index, agg_period) in &aggregators {
            let agg = &mut system.analytics[0].stages[index];
            let period = agg_period.checked_mul(factor).map_err(|_| SizingError::Overflow)?;
            agg.inter_arrival = period.into();
            agg.blocking = agg.blocking.checked_add(buffering).map_err(|_| SizingError::Overflow)?;
            agg.deadline = period.checked_add(agg.blocking).map_err(|_| SizingError::Overflow)?;
            aggregator_utilization += agg.utilization();
        }

        let report = solve_system(&system, &allocation, &cluster)?;
        let end_to_end = report.per_analytic[&system.analytics[0].id].end_to_end;
        let cores = min_cores(&total_utilization(&system).total, u_max);
        rows.push(DecimationRow {
            factor,
            end_to_end,
            aggregator_utilization,
            cores_saved: base_cores as i64 - cores as i64,
        });
    }
    Ok(rows)
}

/// The template's own allocation if complete, otherwise first-fit onto
/// `m, m + 1, ...` cores until it succeeds.
fn hold_allocation(system: &System, m: u64, u_max: &Rational) -> Result<(Allocation, Cluster), SizingError> {
    let stage_count = system.stages().count() as u64;
    let given = system.allocation();
    if given.len() as u64 == stage_count {
        let mut ids: Vec<&String> = given.values().collect();
        ids.sort();
        ids.dedup();
        let cluster = Cluster {
            cores: ids
                .into_iter()
                .map(|id| crate::model::Core {
                    id: id.clone(),
                    capacity: u_max.clone(),
                    platform_blocking: Duration::ZERO,
                })
                .collect(),
        };
        return Ok((given, cluster));
    }
    let mut cores = m.max(1);
    loop {
        let cluster = Cluster::uniform(cores as usize, u_max.clone());
        match allocate_first_fit(system, &cluster) {
            Ok(alloc) => return Ok((alloc, cluster)),
            Err(e) if cores >= stage_count.max(1) => return Err(e.into()),
            Err(_) => cores += 1,
        }
    }
}

pub const DECIMATION_CSV_HEADER: &str = "factor,end_to_end_ns,aggregator_utilization,cores_saved";

pub fn decimation_csv(rows: &[DecimationRow]) -> String {
    let mut out = String::from(DECIMATION_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let e2e = match row.end_to_end {
            Response::Bounded(d) => d.as_nanos().to_string(),
            Response::Diverged => "diverged".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.factor,
            e2e,
            format_sig9(&row.aggregator_utilization),
            row.cores_saved
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub ours: u64,
    pub baseline: u64,
    pub ours_utilization: Rational,
    pub baseline_utilization: Rational,
}

/// Minimum cores with blocking kept out of demand (`C / T`) versus a
/// baseline that charges blocking as execution (`(C + B) / T`).
pub fn baseline_comparison(system: &System, u_max: &Rational) -> Result<Comparison, SizingError> {
    check_bound_preconditions(system)?;
    let ours_utilization = total_utilization(system).total;
    let baseline_utilization: Rational = system
        .stages()
        .filter_map(|s| {
            s.inter_arrival.finite().map(|t| {
                let demand = BigInt::from(s.cost.as_nanos()) + BigInt::from(s.blocking.as_nanos());
                Rational::new(demand, BigInt::from(t.as_nanos()))
            })
        })
        .sum();
    Ok(Comparison {
        ours: min_cores(&ours_utilization, u_max),
        baseline: min_cores(&baseline_utilization, u_max),
        ours_utilization,
        baseline_utilization,
    })
}

/// Relative extra cores of the baseline, `baseline / ours - 1`.
pub fn baseline_overhead(c: &Comparison) -> f64 {
    (ratio(c.baseline, c.ours) - ratio(1, 1)).to_f64().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Analytic, Stage};
    use crate::time::Duration as D;
    use crate::workloads::{builtin_system, ScenarioId, ScenarioParams};

    fn hz(v: u64) -> Rational {
        ratio(v, 1)
    }

    fn microblog() -> System {
        builtin_system(ScenarioId::MicroblogOnline, &ScenarioParams::at_frequency(hz(1))).unwrap()
    }

    #[test]
    fn microblog_sweep_examples() {
        let rows = frequency_sweep(&microblog(), &[hz(1), hz(4000)], &ratio(1, 1), DEFAULT_K_MAX).unwrap();
        assert_eq!(rows[0].total_utilization, ratio(1145, 1_000_000));
        assert_eq!(rows[0].min_cores, 1);
        assert_eq!(rows[1].total_utilization, ratio(458, 100));
        assert_eq!(rows[1].min_cores, 6);
        assert_eq!(rows[1].per_stage_utilization.len(), 1 + 3 + 3);
        assert_eq!(
            sweep_csv(&rows),
            "frequency_hz,total_utilization,min_cores\n1,0.001145,1\n4000,4.58,6\n"
        );
    }

    #[test]
    fn book_sweep_at_one_hertz() {
        let book = builtin_system(ScenarioId::BookOnline, &ScenarioParams::at_frequency(hz(1))).unwrap();
        let rows = frequency_sweep(&book, &[hz(1)], &ratio(1, 1), DEFAULT_K_MAX).unwrap();
        assert_eq!(rows[0].total_utilization, ratio(69, 10_000));
        assert_eq!(rows[0].min_cores, 1);
    }

    #[test]
    fn sweep_propagates_replication_limit() {
        let err = frequency_sweep(&microblog(), &[hz(40_000)], &ratio(1, 1), 5).unwrap_err();
        assert!(matches!(err, SizingError::Model(ModelError::ReplicationExceeded { .. })));
    }

    #[test]
    fn irregular_rates_are_rejected() {
        let mut sys = microblog();
        sys.analytics[0].stages[1].inter_arrival = D::from_millis(1500).into();
        assert!(matches!(at_frequency(&sys, &hz(2), 10), Err(SizingError::IrregularRates { .. })));
    }

    #[test]
    fn decimation_examples() {
        let rows = decimation_sweep(&microblog(), &hz(1000), &[1, 1000], &ratio(1, 1), DEFAULT_K_MAX).unwrap();
        assert_eq!(rows[0].cores_saved, 0);
        assert_eq!(rows[0].aggregator_utilization, ratio(511, 1000));
        assert_eq!(rows[1].aggregator_utilization, ratio(511, 1_000_000));
        let e1 = rows[0].end_to_end.bound().unwrap();
        let e1000 = rows[1].end_to_end.bound().unwrap();
        // 999 extra input periods of buffering on the aggregator
        assert!(e1000.as_nanos() >= e1.as_nanos() + 999 * 1_000_000);
        // U drops from 1.145 to 0.634511, both needing 2 cores
        assert_eq!(rows[1].cores_saved, 0);
    }

    #[test]
    fn decimation_needs_single_aggregator() {
        let mut sys = microblog();
        let extra = sys.analytics[0].clone();
        let mut extra = Analytic { id: "other".into(), ..extra };
        for s in &mut extra.stages {
            s.id = format!("x{}", s.id);
        }
        extra.topology = extra.topology.map_leaves(&|id| Some(CompositionExpr::leaf(format!("x{id}"))));
        sys.analytics.push(extra);
        assert_eq!(
            decimation_sweep(&sys, &hz(10), &[1], &ratio(1, 1), 10),
            Err(SizingError::NoAggregator)
        );
        assert_eq!(
            decimation_sweep(&microblog(), &hz(10), &[0], &ratio(1, 1), 10),
            Err(SizingError::InvalidFactor)
        );
    }

    #[test]
    fn decimation_of_replicated_aggregator() {
        // at 4 kHz the 511 µs aggregator runs as three replicas
        let rows = decimation_sweep(&microblog(), &hz(4000), &[1, 10], &ratio(1, 1), DEFAULT_K_MAX).unwrap();
        assert_eq!(rows[0].aggregator_utilization, ratio(511, 250));
        assert_eq!(rows[1].aggregator_utilization, ratio(511, 2500));
        assert_eq!(rows[0].cores_saved, 0);
        // 4.58 drops to 2.7404: six cores down to four
        assert_eq!(rows[1].cores_saved, 2);
        let (e1, e10) = (rows[0].end_to_end.bound().unwrap(), rows[1].end_to_end.bound().unwrap());
        assert!(e10 >= e1.checked_add(D::from_micros(9 * 250)).unwrap());
    }

    #[test]
    fn baseline_examples() {
        let plain = builtin_system(ScenarioId::MicroblogOnline, &ScenarioParams::at_frequency(hz(4000))).unwrap();
        let c = baseline_comparison(&plain, &ratio(1, 1)).unwrap();
        assert_eq!(c.ours, c.baseline);

        let mut params = ScenarioParams::at_frequency(hz(4000));
        params.blocking = D::from_micros(200);
        let blocked = builtin_system(ScenarioId::MicroblogOnline, &params).unwrap();
        let c = baseline_comparison(&blocked, &ratio(1, 1)).unwrap();
        assert_eq!(c.ours_utilization, ratio(458, 100));
        assert_eq!(c.baseline_utilization, ratio(698, 100));
        assert_eq!((c.ours, c.baseline), (6, 8));

        let t = D::from_nanos(10);
        let single = System::new(vec![Analytic {
            id: "a".into(),
            stages: vec![Stage::new("s", D::from_nanos(1), t.into(), D::from_nanos(11))
                .with_blocking(D::from_nanos(1))
                .with_priority(1)],
            topology: CompositionExpr::leaf("s"),
            end_to_end_deadline: D::from_nanos(11),
        }]);
        let c = baseline_comparison(&single, &ratio(1, 1)).unwrap();
        assert_eq!((c.ours, c.baseline), (1, 1));
    }

    #[test]
    fn baseline_rejects_broken_regime() {
        let mut sys = builtin_system(ScenarioId::MicroblogOnline, &ScenarioParams::at_frequency(hz(10))).unwrap();
        sys.analytics[0].stages[0].deadline = D::from_millis(50);
        assert!(matches!(
            baseline_comparison(&sys, &ratio(1, 1)),
            Err(SizingError::Analysis(AnalysisError::PreconditionViolated { .. }))
        ));
    }

    #[test]
    fn sweep_is_monotone_in_frequency() {
        let freqs: Vec<Rational> = [1u64, 10, 100, 500, 1000, 2000, 4000, 8000, 16_000, 24_000]
            .iter()
            .map(|f| hz(*f))
            .collect();
        for scenario in [ScenarioId::MicroblogOnline, ScenarioId::BookOnline] {
            let sys = builtin_system(scenario, &ScenarioParams::at_frequency(hz(1))).unwrap();
            let rows = frequency_sweep(&sys, &freqs, &ratio(1, 1), DEFAULT_K_MAX).unwrap();
            for w in rows.windows(2) {
                assert!(w[1].total_utilization >= w[0].total_utilization);
                assert!(w[1].min_cores >= w[0].min_cores);
            }
        }
    }
}
