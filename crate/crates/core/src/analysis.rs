//! Response-time analysis with blocking, series-parallel composition of
//! stage bounds into end-to-end bounds, and the utilization bound that
//! yields the minimum number of cores.

use std::collections::BTreeMap;
use std::fmt;

use num::{BigInt, Integer, ToPrimitive, Zero};
use thiserror::Error;

use crate::model::{effective_blocking, Allocation, Cluster, CompositionExpr, Stage, StageId, System};
use crate::time::{Duration, InterArrival};
use crate::{ratio, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("stage `{stage}` has no valid core in the allocation")]
    InvalidAllocation { stage: StageId },
    #[error("stage `{stage}` has no priority")]
    UnassignedPriority { stage: StageId },
    #[error("no response time for stage `{stage}`")]
    MissingStage { stage: StageId },
    #[error("precondition violated at stage `{stage}`: {reason}")]
    PreconditionViolated { stage: StageId, reason: String },
    #[error("time arithmetic overflow")]
    Overflow,
}

/// Outcome of a response-time computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Bounded(Duration),
    /// The iteration exceeded its cap; no bound was established.
    Diverged,
}

impl Response {
    pub fn bound(self) -> Option<Duration> {
        match self {
            Response::Bounded(d) => Some(d),
            Response::Diverged => None,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Bounded(d) => d.fmt(f),
            Response::Diverged => f.write_str("diverged"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalyticVerdict {
    pub end_to_end: Response,
    pub deadline: Duration,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseReport {
    pub per_stage: BTreeMap<StageId, Response>,
    pub per_analytic: BTreeMap<String, AnalyticVerdict>,
    pub system_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtilizationSummary {
    pub total: Rational,
    pub per_stage: BTreeMap<StageId, Rational>,
}

/// Worst-case response time of `stage` against the interfering
/// `cotenants` (the caller selects the same-core stages of higher or equal
/// priority). Solves
///
/// ```text
/// R = B + C + sum_z ceil(R / T_z) * C_z
/// ```
///
/// by iteration from `R = B + C`; a one-shot cotenant contributes its cost
/// exactly once. Returns [`Response::Diverged`] as soon as an iterate
/// exceeds `cap`.
pub fn stage_response_time(stage: &Stage, cotenants: &[&Stage], cap: Duration) -> Response {
    response_time(stage.cost, stage.blocking, cotenants, cap)
}

fn response_time(cost: Duration, blocking: Duration, cotenants: &[&Stage], cap: Duration) -> Response {
    let Ok(base) = blocking.checked_add(cost) else {
        return Response::Diverged;
    };
    let mut r = base;
    loop {
        if r > cap {
            return Response::Diverged;
        }
        let Some(next) = rhs(base, cotenants, r) else {
            return Response::Diverged;
        };
        if next == r {
            return Response::Bounded(r);
        }
        r = next;
    }
}

/// Right-hand side of the fixed-point equation evaluated at `r`; `None` on
/// overflow.
fn rhs(base: Duration, cotenants: &[&Stage], r: Duration) -> Option<Duration> {
    let mut total = base;
    for z in cotenants {
        let jobs = match z.inter_arrival {
            InterArrival::Finite(t) => r.div_ceil(t),
            InterArrival::Infinite => 1,
        };
        total = total.checked_add(z.cost.checked_mul(jobs).ok()?).ok()?;
    }
    Some(total)
}

/// Iteration cap used by [`solve_system`].
///
/// A periodic stage is capped at `T + B`: beyond that, successive jobs of
/// the stage could overlap and the single-job equation no longer bounds
/// the response. A one-shot stage is capped at the closed-form bound
/// `(B + C + sum C_z) / (1 - U_hp)`, which dominates the least fixed point
/// whenever the periodic interference `U_hp` is below one.
fn solve_cap(stage: &Stage, blocking: Duration, cotenants: &[&Stage]) -> Option<Duration> {
    if let InterArrival::Finite(t) = stage.inter_arrival {
        return t.checked_add(blocking).ok();
    }
    let u_hp: Rational = cotenants.iter().map(|z| z.utilization()).sum();
    let one = ratio(1, 1);
    if u_hp >= one {
        return None;
    }
    let demand: u128 = blocking.as_nanos() as u128
        + stage.cost.as_nanos() as u128
        + cotenants.iter().map(|z| z.cost.as_nanos() as u128).sum::<u128>();
    let bound = (Rational::from_integer(BigInt::from(demand)) / (one - u_hp)).ceil();
    Some(Duration::from_nanos(bound.to_integer().to_u64().unwrap_or(u64::MAX)))
}

/// Response times of every stage on its allocated core, composed into
/// end-to-end bounds per analytic.
///
/// Interference comes from every stage on the same core, from any
/// analytic, whose priority is higher or equal. Blocking is the larger of
/// the stage's blocking and the core's platform blocking. An analytic is
/// feasible when no stage diverged and its end-to-end bound is within its
/// deadline.
pub fn solve_system(
    system: &System,
    allocation: &Allocation,
    cluster: &Cluster,
) -> Result<ResponseReport, AnalysisError> {
    let mut placed: Vec<(&Stage, &str)> = Vec::new();
    for stage in system.stages() {
        let core = allocation
            .get(&stage.id)
            .filter(|c| cluster.core(c).is_some())
            .ok_or_else(|| AnalysisError::InvalidAllocation { stage: stage.id.clone() })?;
        if stage.priority.is_none() {
            return Err(AnalysisError::UnassignedPriority { stage: stage.id.clone() });
        }
        placed.push((stage, core.as_str()));
    }

    let mut per_stage = BTreeMap::new();
    for &(stage, core_id) in &placed {
        let own = stage.priority;
        let cotenants: Vec<&Stage> = placed
            .iter()
            .filter(|(z, c)| *c == core_id && z.id != stage.id && z.priority >= own)
            .map(|(z, _)| *z)
            .collect();
        let blocking = effective_blocking(stage, cluster.core(core_id));
        let response = match solve_cap(stage, blocking, &cotenants) {
            Some(cap) => response_time(stage.cost, blocking, &cotenants, cap),
            None => Response::Diverged,
        };
        per_stage.insert(stage.id.clone(), response);
    }

    let mut per_analytic = BTreeMap::new();
    for analytic in &system.analytics {
        let bounded: Option<BTreeMap<StageId, Duration>> = analytic
            .stages
            .iter()
            .map(|s| per_stage[&s.id].bound().map(|d| (s.id.clone(), d)))
            .collect();
        let end_to_end = match bounded {
            Some(map) => match end_to_end_response(&analytic.topology, &map) {
                Ok(d) => Response::Bounded(d),
                Err(AnalysisError::Overflow) => Response::Diverged,
                Err(e) => return Err(e),
            },
            None => Response::Diverged,
        };
        let feasible = matches!(end_to_end, Response::Bounded(d) if d <= analytic.end_to_end_deadline);
        per_analytic.insert(
            analytic.id.clone(),
            AnalyticVerdict {
                end_to_end,
                deadline: analytic.end_to_end_deadline,
                feasible,
            },
        );
    }
    let system_feasible = per_analytic.values().all(|v| v.feasible);
    Ok(ResponseReport {
        per_stage,
        per_analytic,
        system_feasible,
    })
}

/// Sequential composition adds, parallel composition takes the maximum.
pub fn end_to_end_response(
    expr: &CompositionExpr,
    per_stage: &BTreeMap<StageId, Duration>,
) -> Result<Duration, AnalysisError> {
    match expr {
        CompositionExpr::Leaf(id) => per_stage
            .get(id)
            .copied()
            .ok_or_else(|| AnalysisError::MissingStage { stage: id.clone() }),
        CompositionExpr::Seq(children) => children.iter().try_fold(Duration::ZERO, |acc, c| {
            acc.checked_add(end_to_end_response(c, per_stage)?)
                .map_err(|_| AnalysisError::Overflow)
        }),
        CompositionExpr::Par(children) => children.iter().try_fold(Duration::ZERO, |acc, c| {
            Ok(acc.max(end_to_end_response(c, per_stage)?))
        }),
    }
}

/// Sum of `C / T` over all stages, exactly. Blocking never enters.
pub fn total_utilization(system: &System) -> UtilizationSummary {
    let per_stage: BTreeMap<StageId, Rational> =
        system.stages().map(|s| (s.id.clone(), s.utilization())).collect();
    let total = per_stage.values().sum();
    UtilizationSummary { total, per_stage }
}

/// Least `m >= 1` with `total < (m - 1/2) * u_max`.
///
/// # Panics
///
/// If `u_max` is not positive or `total` is negative.
pub fn min_cores(total: &Rational, u_max: &Rational) -> u64 {
    assert!(u_max > &Rational::zero(), "u_max must be positive");
    assert!(total >= &Rational::zero(), "utilization must be non-negative");
    // total < (m - 1/2) u  <=>  m > total/u + 1/2
    let threshold = total / u_max + ratio(1, 2);
    let m = threshold.floor().to_integer() + BigInt::from(1);
    m.to_u64().unwrap_or(u64::MAX).max(1)
}

/// Checks the preconditions of the utilization bound: every periodic stage
/// has `T + B = D`, and priorities are deadline-monotonic.
pub fn check_bound_preconditions(system: &System) -> Result<(), AnalysisError> {
    let mut ranked: Vec<&Stage> = Vec::new();
    for stage in system.stages() {
        if let InterArrival::Finite(t) = stage.inter_arrival {
            let sum = t.checked_add(stage.blocking).map_err(|_| AnalysisError::Overflow)?;
            if sum != stage.deadline {
                return Err(AnalysisError::PreconditionViolated {
                    stage: stage.id.clone(),
                    reason: format!("T + B = {} but D = {}", sum, stage.deadline),
                });
            }
        }
        if stage.priority.is_none() {
            return Err(AnalysisError::PreconditionViolated {
                stage: stage.id.clone(),
                reason: "priority not assigned".into(),
            });
        }
        ranked.push(stage);
    }
    ranked.sort_by_key(|s| s.deadline);
    // deadline-monotonic: strictly shorter deadline must have strictly higher priority
    let mut best_longer: Option<&Stage> = None;
    for group in ranked.chunk_by(|a, b| a.deadline == b.deadline).rev() {
        let min_in_group = group.iter().min_by_key(|s| s.priority).expect("non-empty");
        if let Some(longer) = best_longer {
            if min_in_group.priority <= longer.priority {
                return Err(AnalysisError::PreconditionViolated {
                    stage: min_in_group.id.clone(),
                    reason: format!(
                        "priorities are not deadline-monotonic (vs. stage `{}`)",
                        longer.id
                    ),
                });
            }
        }
        let max_in_group = group.iter().max_by_key(|s| s.priority).expect("non-empty");
        if best_longer.is_none_or(|l| max_in_group.priority > l.priority) {
            best_longer = Some(max_in_group);
        }
    }
    Ok(())
}

/// `total_utilization(system) < (m - 1/2) * u_max`, after verifying the
/// bound's preconditions.
pub fn check_utilization_bound(system: &System, m: u64, u_max: &Rational) -> Result<bool, AnalysisError> {
    check_bound_preconditions(system)?;
    let total = total_utilization(system).total;
    let limit = (Rational::from_integer(BigInt::from(m)) - ratio(1, 2)) * u_max;
    Ok(total < limit)
}

/// `lcm` of the finite inter-arrival times, `None` on overflow or when
/// there are none.
pub fn hyperperiod<'a>(stages: impl IntoIterator<Item = &'a Stage>) -> Option<Duration> {
    let mut acc: Option<u64> = None;
    for s in stages {
        if let InterArrival::Finite(t) = s.inter_arrival {
            let t = t.as_nanos();
            acc = Some(match acc {
                None => t,
                Some(a) => {
                    let g = a.gcd(&t);
                    (a / g).checked_mul(t)?
                }
            });
        }
    }
    acc.map(Duration::from_nanos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Analytic, Priority};
    use crate::time::Duration as D;

    fn task(id: &str, c: D, t: InterArrival) -> Stage {
        let d = t.finite().unwrap_or(D::from_hours(1_000));
        Stage::new(id, c, t, d.max(c))
    }

    #[test]
    fn no_cotenants_is_blocking_plus_cost() {
        let s = task("s", D::from_micros(100), D::from_secs(1).into());
        assert_eq!(stage_response_time(&s, &[], D::from_secs(1)), Response::Bounded(D::from_micros(100)));
    }

    #[test]
    fn two_task_example() {
        let lp = task("lp", D::from_millis(3), D::from_millis(15).into());
        let hp = task("hp", D::from_millis(2), D::from_millis(5).into());
        assert_eq!(stage_response_time(&lp, &[&hp], D::from_secs(1)), Response::Bounded(D::from_millis(5)));

        let blocked = lp.clone().with_blocking(D::from_millis(1));
        assert_eq!(stage_response_time(&blocked, &[&hp], D::from_secs(1)), Response::Bounded(D::from_millis(8)));
    }

    #[test]
    fn one_shot_cotenant_counts_once() {
        let lo = task("TC1", D::from_hours(1), InterArrival::Infinite);
        let hi = task("TC2", D::from_hours(1), InterArrival::Infinite);
        assert_eq!(stage_response_time(&lo, &[&hi], D::from_hours(10)), Response::Bounded(D::from_hours(2)));
    }

    #[test]
    fn diverges_past_cap() {
        let lp = task("lp", D::from_millis(3), D::from_millis(15).into());
        let hp = task("hp", D::from_millis(2), D::from_millis(5).into());
        assert_eq!(stage_response_time(&lp, &[&hp], D::from_millis(4)), Response::Diverged);
        // R0 alone above the cap
        assert_eq!(stage_response_time(&lp, &[], D::from_millis(2)), Response::Diverged);
        // overloaded core
        let hog = task("hog", D::from_millis(5), D::from_millis(5).into());
        assert_eq!(stage_response_time(&lp, &[&hog], D::from_secs(3600)), Response::Diverged);
    }

    #[test]
    fn composition_examples() {
        use CompositionExpr::*;
        let rt: BTreeMap<StageId, D> = [("G", 1), ("S1", 2), ("S2", 3), ("C", 4), ("s", 5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), D::from_millis(v)))
            .collect();
        let leaf = CompositionExpr::leaf;
        assert_eq!(end_to_end_response(&leaf("s"), &rt).unwrap(), D::from_millis(5));
        assert_eq!(end_to_end_response(&Seq(vec![leaf("S2"), leaf("s")]), &rt).unwrap(), D::from_millis(8));
        assert_eq!(end_to_end_response(&Par(vec![leaf("S2"), leaf("s")]), &rt).unwrap(), D::from_millis(5));
        let expr = Seq(vec![leaf("G"), Par(vec![leaf("S1"), leaf("S2")]), leaf("C")]);
        assert_eq!(end_to_end_response(&expr, &rt).unwrap(), D::from_millis(8));
        assert_eq!(
            end_to_end_response(&leaf("nope"), &rt),
            Err(AnalysisError::MissingStage { stage: "nope".into() })
        );
    }

    #[test]
    fn min_cores_examples() {
        assert_eq!(min_cores(&ratio(0, 1), &ratio(1, 1)), 1);
        assert_eq!(min_cores(&ratio(458, 100), &ratio(1, 1)), 6);
        assert_eq!(min_cores(&ratio(1, 2), &ratio(1, 1)), 2);
        assert_eq!(min_cores(&ratio(3, 2), &ratio(1, 1)), 3);
        assert_eq!(min_cores(&ratio(1, 2), &ratio(1, 2)), 2);
    }

    #[test]
    fn min_cores_agrees_with_linear_search() {
        for num in 0..200u64 {
            for u_den in 1..6u64 {
                let total = ratio(num, 20);
                let u = ratio(u_den, 5);
                let mut m = 1u64;
                while total >= (Rational::from_integer(BigInt::from(m)) - ratio(1, 2)) * &u {
                    m += 1;
                }
                assert_eq!(min_cores(&total, &u), m, "U={total} u={u}");
            }
        }
    }

    fn one_analytic(stages: Vec<Stage>) -> System {
        let topology = CompositionExpr::Seq(stages.iter().map(|s| CompositionExpr::leaf(&s.id)).collect());
        System::new(vec![Analytic {
            id: "a".into(),
            stages,
            topology,
            end_to_end_deadline: D::from_secs(1),
        }])
    }

    #[test]
    fn bound_precondition_checks() {
        let t = D::from_millis(10);
        let bad = Stage::new("x", D::from_millis(1), t.into(), D::from_millis(9)).with_priority(1);
        assert!(matches!(
            check_utilization_bound(&one_analytic(vec![bad]), 1, &ratio(1, 1)),
            Err(AnalysisError::PreconditionViolated { ref stage, .. }) if stage == "x"
        ));

        let short = Stage::new("a", D::from_millis(1), D::from_millis(5).into(), D::from_millis(5));
        let long = Stage::new("b", D::from_millis(1), D::from_millis(9).into(), D::from_millis(9));
        let good = one_analytic(vec![short.clone().with_priority(2), long.clone().with_priority(1)]);
        assert_eq!(check_utilization_bound(&good, 1, &ratio(1, 1)), Ok(true));
        let inverted = one_analytic(vec![short.with_priority(1), long.with_priority(2)]);
        assert!(matches!(
            check_utilization_bound(&inverted, 1, &ratio(1, 1)),
            Err(AnalysisError::PreconditionViolated { .. })
        ));
    }

    #[test]
    fn equal_deadlines_allow_any_order() {
        let t = D::from_millis(10);
        let s = |id: &str, p: u32| Stage::new(id, D::from_millis(1), t.into(), t).with_priority(p);
        let sys = one_analytic(vec![s("a", 1), s("b", 3), s("c", 2)]);
        assert!(check_bound_preconditions(&sys).is_ok());
    }

    #[test]
    fn solve_requires_allocation_and_priority() {
        let t = D::from_millis(10);
        let sys = one_analytic(vec![Stage::new("a", D::from_millis(1), t.into(), t).with_priority(1)]);
        let cluster = Cluster::uniform(1, ratio(1, 1));
        assert_eq!(
            solve_system(&sys, &Allocation::new(), &cluster),
            Err(AnalysisError::InvalidAllocation { stage: "a".into() })
        );
        let alloc: Allocation = [("a".to_string(), "nowhere".to_string())].into();
        assert!(solve_system(&sys, &alloc, &cluster).is_err());

        let mut unprioritized = sys.clone();
        unprioritized.analytics[0].stages[0].priority = None;
        let alloc: Allocation = [("a".to_string(), "core0".to_string())].into();
        assert_eq!(
            solve_system(&unprioritized, &alloc, &cluster),
            Err(AnalysisError::UnassignedPriority { stage: "a".into() })
        );
    }

    #[test]
    fn platform_blocking_combines_by_max() {
        let t = D::from_millis(10);
        let sys = one_analytic(vec![Stage::new("a", D::from_millis(1), t.into(), t)
            .with_blocking(D::from_millis(1))
            .with_priority(1)]);
        let mut cluster = Cluster::uniform(1, ratio(1, 1));
        cluster.cores[0].platform_blocking = D::from_millis(3);
        let alloc: Allocation = [("a".to_string(), "core0".to_string())].into();
        let report = solve_system(&sys, &alloc, &cluster).unwrap();
        assert_eq!(report.per_stage["a"], Response::Bounded(D::from_millis(4)));
    }

    #[test]
    fn lower_priority_does_not_interfere() {
        let t = D::from_millis(10);
        let sys = one_analytic(vec![
            Stage::new("hi", D::from_millis(2), t.into(), t).with_priority(2),
            Stage::new("lo", D::from_millis(3), t.into(), t).with_priority(1),
        ]);
        let alloc: Allocation = [("hi", "core0"), ("lo", "core0")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let report = solve_system(&sys, &alloc, &Cluster::uniform(1, ratio(1, 1))).unwrap();
        assert_eq!(report.per_stage["hi"], Response::Bounded(D::from_millis(2)));
        assert_eq!(report.per_stage["lo"], Response::Bounded(D::from_millis(5)));
        assert_eq!(report.per_analytic["a"].end_to_end, Response::Bounded(D::from_millis(7)));
        assert!(report.system_feasible);
        let _ = Priority(0);
    }

    #[test]
    fn hyperperiod_of_periods() {
        let s = |t: u64| Stage::new("x", D::from_nanos(1), D::from_nanos(t).into(), D::from_nanos(t));
        assert_eq!(hyperperiod(&[s(4), s(6), s(10)]), Some(D::from_nanos(60)));
        assert_eq!(hyperperiod(&[task("o", D::from_nanos(1), InterArrival::Infinite)]), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cotenant() -> impl Strategy<Value = Stage> {
            (1u64..20, 5u64..60).prop_map(|(c, t)| {
                Stage::new("z", D::from_nanos(c), D::from_nanos(t).into(), D::from_nanos(t.max(c)))
            })
        }

        proptest! {
            #[test]
            fn fixed_point_is_exact(
                c in 1u64..30, b in 0u64..10,
                zs in proptest::collection::vec(cotenant(), 0..4),
            ) {
                let s = Stage::new("s", D::from_nanos(c), InterArrival::Infinite, D::from_nanos(c)).with_blocking(D::from_nanos(b));
                let refs: Vec<&Stage> = zs.iter().collect();
                if let Response::Bounded(r) = stage_response_time(&s, &refs, D::from_nanos(100_000)) {
                    let again: u64 = b + c + zs.iter().map(|z| r.div_ceil(z.inter_arrival.finite().unwrap()) * z.cost.as_nanos()).sum::<u64>();
                    prop_assert_eq!(again, r.as_nanos());
                }
            }

            #[test]
            fn monotone_in_parameters(
                c in 1u64..30, b in 0u64..10, dc in 0u64..5, db in 0u64..5,
                zs in proptest::collection::vec(cotenant(), 0..4),
                extra in cotenant(),
                shrink in 0u64..4,
            ) {
                let cap = D::from_nanos(1_000_000);
                let mk = |c: u64, b: u64| Stage::new("s", D::from_nanos(c), InterArrival::Infinite, D::from_nanos(c)).with_blocking(D::from_nanos(b));
                let refs: Vec<&Stage> = zs.iter().collect();
                let r = |s: &Stage, refs: &[&Stage]| match stage_response_time(s, refs, cap) {
                    Response::Bounded(d) => d.as_nanos(),
                    Response::Diverged => u64::MAX,
                };
                let base = r(&mk(c, b), &refs);
                prop_assert!(r(&mk(c + dc, b + db), &refs) >= base);

                let mut with_extra = refs.clone();
                with_extra.push(&extra);
                prop_assert!(r(&mk(c, b), &with_extra) >= base);

                if let Some(first) = zs.first() {
                    let mut faster = first.clone();
                    let t = faster.inter_arrival.finite().unwrap().as_nanos();
                    faster.inter_arrival = D::from_nanos((t - shrink).max(1)).into();
                    let mut swapped = refs.clone();
                    swapped[0] = &faster;
                    prop_assert!(r(&mk(c, b), &swapped) >= base);

                    let mut heavier = first.clone();
                    heavier.cost = D::from_nanos(heavier.cost.as_nanos() + dc);
                    let mut swapped = refs.clone();
                    swapped[0] = &heavier;
                    prop_assert!(r(&mk(c, b), &swapped) >= base);
                }
            }

            #[test]
            fn composition_laws(rts in proptest::collection::vec(0u64..1000, 1..6)) {
                use CompositionExpr::*;
                let map: BTreeMap<StageId, D> = rts.iter().enumerate().map(|(i, v)| (format!("s{i}"), D::from_nanos(*v))).collect();
                let leaves: Vec<CompositionExpr> = (0..rts.len()).map(|i| CompositionExpr::leaf(format!("s{i}"))).collect();
                let max_leaf = *rts.iter().max().unwrap();
                let seq = end_to_end_response(&Seq(leaves.clone()), &map).unwrap().as_nanos();
                let par = end_to_end_response(&Par(leaves.clone()), &map).unwrap().as_nanos();
                prop_assert!(seq >= max_leaf);
                prop_assert_eq!(par, max_leaf);
                prop_assert_eq!(seq, rts.iter().sum::<u64>());
                let single = end_to_end_response(&leaves[0], &map).unwrap();
                prop_assert_eq!(end_to_end_response(&Seq(vec![leaves[0].clone()]), &map).unwrap(), single);
                prop_assert_eq!(end_to_end_response(&Par(vec![leaves[0].clone(), leaves[0].clone()]), &map).unwrap(), single);
            }

            #[test]
            fn min_cores_monotone_and_tight(n in 0u64..2000, d in 1u64..50, u1 in 1u64..=10, u2 in 1u64..=10) {
                let total = ratio(n, d);
                let (lo, hi) = (u1.min(u2), u1.max(u2));
                let (ulo, uhi) = (ratio(lo, 10), ratio(hi, 10));
                prop_assert!(min_cores(&total, &ulo) >= min_cores(&total, &uhi));
                prop_assert!(min_cores(&(total.clone() + ratio(1, 7)), &uhi) >= min_cores(&total, &uhi));
                let m = min_cores(&total, &uhi);
                let limit = |m: u64| (Rational::from_integer(BigInt::from(m)) - ratio(1, 2)) * &uhi;
                prop_assert!(total < limit(m));
                if m >= 2 {
                    prop_assert!(total >= limit(m - 1));
                }
            }
        }
    }
}
