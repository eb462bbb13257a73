//! Utilization and minimum core count of the online analytics as the input
//! rate grows.

use tc_sizer::sizing::{frequency_sweep, sweep_csv, DEFAULT_K_MAX};
use tc_sizer::workloads::{builtin_system, ScenarioId, ScenarioParams};
use tc_sizer::ratio;

fn main() {
    let freqs: Vec<_> = [1u64, 100, 1_000, 2_000, 4_000, 8_000, 16_000, 24_000]
        .iter()
        .map(|f| ratio(*f, 1))
        .collect();
    for id in [ScenarioId::MicroblogOnline, ScenarioId::BookOnline] {
        let template = builtin_system(id, &ScenarioParams::at_frequency(ratio(1, 1))).expect("valid scenario");
        let rows = frequency_sweep(&template, &freqs, &ratio(1, 1), DEFAULT_K_MAX).expect("sweep");
        println!("# {id}, u_max = 1");
        print!("{}", sweep_csv(&rows));
    }
}
