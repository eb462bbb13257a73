//! Simulates the micro-blogging pipeline at 4 kHz with blocking and checks
//! every analytic bound against the observed worst case.
//!
//! Pass a path to also write the event trace as CSV.

use tc_sizer::model::Cluster;
use tc_sizer::sim::{simulate, verify_conservative, worst_observed, SimConfig};
use tc_sizer::workloads::{builtin_system, ScenarioId, ScenarioParams};
use tc_sizer::{allocate_first_fit, min_cores, ratio, solve_system, total_utilization, Duration};

fn main() {
    let mut params = ScenarioParams::at_frequency(ratio(4000, 1));
    params.blocking = Duration::from_micros(20);
    let mut system = builtin_system(ScenarioId::MicroblogOnline, &params).expect("valid scenario");

    let mut m = min_cores(&total_utilization(&system).total, &ratio(1, 1));
    let cluster = loop {
        let cluster = Cluster::uniform(m as usize, ratio(1, 1));
        if let Ok(alloc) = allocate_first_fit(&system, &cluster) {
            system.apply_allocation(&alloc);
            break cluster;
        }
        m += 1;
    };
    let alloc = system.allocation();
    let report = solve_system(&system, &alloc, &cluster).expect("solvable");
    let trace = simulate(&system, &alloc, &cluster, &SimConfig::synchronous(Duration::from_millis(50)))
        .expect("simulation");
    let observed = worst_observed(&trace);

    println!("{m} cores, {} events", trace.events.len());
    println!("{:<6} {:>10} {:>10}", "stage", "bound", "observed");
    for (id, bound) in &report.per_stage {
        let seen = observed.per_stage.get(id).map_or("-".to_string(), |d| d.to_string());
        println!("{id:<6} {:>10} {seen:>10}", bound.to_string());
    }
    for (id, verdict) in &report.per_analytic {
        println!("{id}: end-to-end bound {}, observed {}", verdict.end_to_end, observed.per_analytic[id]);
    }
    let violations = verify_conservative(&report, &observed);
    println!("conservative: {}", violations.is_empty());

    if let Some(path) = std::env::args().nth(1) {
        let file = std::fs::File::create(&path).expect("trace file");
        trace.write_csv(std::io::BufWriter::new(file)).expect("write trace");
        println!("trace written to {path}");
    }
}
