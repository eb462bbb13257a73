//! Two one-hour batch analytics sharing one core, under a single default
//! priority and under deadline-monotonic priorities.

use tc_sizer::model::Cluster;
use tc_sizer::workloads::{table_vi, TableViConfig};
use tc_sizer::{ratio, solve_system};

fn main() {
    let cluster = Cluster::uniform(1, ratio(1, 1));
    for (name, config) in [
        ("general purpose", TableViConfig::GeneralPurpose),
        ("time critical", TableViConfig::TimeCritical),
    ] {
        let system = table_vi(config);
        let report = solve_system(&system, &system.allocation(), &cluster).expect("allocated and prioritized");
        println!("{name}:");
        for (id, verdict) in &report.per_analytic {
            let mark = if verdict.feasible { "Y" } else { "N" };
            println!("  {id}: WCRT {} (deadline {}) {mark}", verdict.end_to_end, verdict.deadline);
        }
    }
}
