//! Cross-checks the analysis against the simulator on seeded random
//! systems: exact agreement on single cores without blocking, and
//! bounds never exceeded on multi-core pipelines with blocking.

use tc_sizer::model::Cluster;
use tc_sizer::sim::{simulate, verify_conservative, worst_observed, SimConfig};
use tc_sizer::workloads::{independent_stages, random_pipelined_system, random_system_on_grid, PipelineParams};
use tc_sizer::{allocate_first_fit, assign_priorities_dm, min_cores, ratio, solve_system, total_utilization, Duration};

fn main() {
    let range = (Duration::from_millis(1), Duration::from_millis(100));
    let mut exact = 0;
    for seed in 0..50 {
        let mut system = independent_stages(&random_system_on_grid(5, 0.7, Duration::from_secs(1), range, seed));
        let dm = assign_priorities_dm(&system);
        system.apply_priorities(&dm);
        let cluster = Cluster::uniform(1, ratio(1, 1));
        let alloc = allocate_first_fit(&system, &cluster).expect("fits one core");
        let report = solve_system(&system, &alloc, &cluster).expect("solvable");
        let horizon = tc_sizer::analysis::hyperperiod(system.stages()).expect("finite periods");
        let observed = worst_observed(&simulate(&system, &alloc, &cluster, &SimConfig::synchronous(horizon)).expect("sim"));
        if report.per_stage.iter().all(|(id, r)| r.bound() == observed.per_stage.get(id).copied()) {
            exact += 1;
        }
    }
    println!("single core, no blocking: {exact}/50 systems with bound == observed for every stage");

    let params = PipelineParams {
        analytics: 3,
        max_stages: 4,
        utilization: 0.6,
        max_blocking: 0.3,
        hyperperiod: Duration::from_secs(1),
        t_range: range,
    };
    let (mut feasible, mut violations) = (0, 0);
    for seed in 0..50 {
        let mut system = random_pipelined_system(&params, seed);
        let dm = assign_priorities_dm(&system);
        system.apply_priorities(&dm);
        let m = min_cores(&total_utilization(&system).total, &ratio(1, 1)) + 1;
        let cluster = Cluster::uniform(m as usize, ratio(1, 1));
        let Ok(alloc) = allocate_first_fit(&system, &cluster) else { continue };
        let report = solve_system(&system, &alloc, &cluster).expect("solvable");
        if !report.system_feasible {
            continue;
        }
        feasible += 1;
        let horizon = Duration::from_secs(2);
        let trace = simulate(&system, &alloc, &cluster, &SimConfig::synchronous(horizon)).expect("sim");
        violations += verify_conservative(&report, &worst_observed(&trace)).len();
    }
    println!("pipelines with blocking: {feasible} feasible systems simulated, {violations} bound violations");
}
