//! The offline book analytic (download, map, reduce, sort) as one-shot
//! stages, alone and next to a periodic online analytic on the same core.

use tc_sizer::model::{Cluster, Priority};
use tc_sizer::workloads::{builtin_system, ScenarioId, ScenarioParams};
use tc_sizer::{ratio, solve_system, Duration, System};

fn main() {
    let costs = [20, 90, 40, 20].map(Duration::from_secs).to_vec();
    let batch = builtin_system(ScenarioId::BookOffline, &ScenarioParams::with_costs(costs)).expect("costs given");
    let online = builtin_system(ScenarioId::BookOnline, &ScenarioParams::at_frequency(ratio(10, 1)))
        .expect("valid scenario");

    // online stages above the batch job, each in pipeline order
    let mut system = System::new(online.analytics.into_iter().chain(batch.analytics).collect());
    let n = system.stages().count() as u32;
    for (i, s) in system.stages_mut().enumerate() {
        s.priority = Some(Priority(n - i as u32));
        s.core = Some("core0".into());
    }
    let cluster = Cluster::uniform(1, ratio(1, 1));
    let report = solve_system(&system, &system.allocation(), &cluster).expect("solvable");
    for (id, r) in &report.per_stage {
        println!("  {id}: {r}");
    }
    for (id, v) in &report.per_analytic {
        println!("{id}: end-to-end {} against {} ({})", v.end_to_end, v.deadline, if v.feasible { "met" } else { "missed" });
    }
}
