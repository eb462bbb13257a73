//! Trading end-to-end latency for aggregator load: the aggregator runs once
//! per `F` inputs.

use tc_sizer::sizing::{decimation_csv, decimation_sweep, DEFAULT_K_MAX};
use tc_sizer::workloads::{builtin_system, ScenarioId, ScenarioParams};
use tc_sizer::ratio;

fn main() {
    let template = builtin_system(ScenarioId::MicroblogOnline, &ScenarioParams::at_frequency(ratio(1, 1)))
        .expect("valid scenario");
    for hz in [1_000u64, 4_000] {
        let rows = decimation_sweep(&template, &ratio(hz, 1), &[1, 10, 100, 1000], &ratio(1, 1), DEFAULT_K_MAX)
            .expect("single aggregator");
        println!("# microblog-online at {hz} Hz");
        print!("{}", decimation_csv(&rows));
    }
}
