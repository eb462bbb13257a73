//! Core counts when blocking only delays jobs versus when it is charged as
//! execution time. Both sides need deadline-monotonic priorities, which the
//! pipeline-ordered built-in priorities stop being once replicas with
//! longer periods appear.

use tc_sizer::sizing::{baseline_comparison, baseline_overhead};
use tc_sizer::workloads::{builtin_system, ScenarioId, ScenarioParams};
use tc_sizer::{assign_priorities_dm, ratio, Duration};

fn main() {
    println!("scenario,frequency_hz,blocking_us,ours,baseline,overhead");
    for id in [ScenarioId::MicroblogOnline, ScenarioId::BookOnline] {
        for hz in [100u64, 1_000, 4_000] {
            for blocking_us in [0u64, 50, 200] {
                let mut params = ScenarioParams::at_frequency(ratio(hz, 1));
                params.blocking = Duration::from_micros(blocking_us);
                let mut system = builtin_system(id, &params).expect("valid scenario");
                let dm = assign_priorities_dm(&system);
                system.apply_priorities(&dm);
                let c = baseline_comparison(&system, &ratio(1, 1)).expect("bound preconditions hold");
                println!(
                    "{id},{hz},{blocking_us},{},{},{:.3}",
                    c.ours,
                    c.baseline,
                    baseline_overhead(&c)
                );
            }
        }
    }
}
