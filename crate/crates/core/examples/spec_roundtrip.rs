//! Writes a built-in scenario as a JSON spec, reads it back, and analyzes
//! the result the way `tc-sizer analyze` does.

use tc_sizer::cli::{emit_system_spec, parse_system_spec, report_json, SpecOptions, SystemSpec};
use tc_sizer::model::Cluster;
use tc_sizer::workloads::{builtin_system, ScenarioId, ScenarioParams};
use tc_sizer::{allocate_first_fit, ratio, solve_system, Duration};

fn main() {
    let mut params = ScenarioParams::at_frequency(ratio(1000, 1));
    params.blocking = Duration::from_micros(100);
    let spec = SystemSpec {
        system: builtin_system(ScenarioId::MicroblogOnline, &params).expect("valid scenario"),
        cluster: Cluster::uniform(2, ratio(1, 1)),
        options: SpecOptions::default(),
    };
    let text = emit_system_spec(&spec);
    print!("{text}");

    let mut parsed = parse_system_spec(&text).expect("emitted specs parse");
    assert_eq!(parsed, spec);
    let alloc = allocate_first_fit(&parsed.system, &parsed.cluster).expect("fits");
    parsed.system.apply_allocation(&alloc);
    let report = solve_system(&parsed.system, &alloc, &parsed.cluster).expect("solvable");
    println!("{}", serde_json::to_string_pretty(&report_json(&parsed.system, &report)).unwrap());
}
