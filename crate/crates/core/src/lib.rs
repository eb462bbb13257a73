//! Schedulability analysis and cluster sizing for time-critical analytics.
//!
//! An analytic is a series-parallel DAG of stages, each characterized by a
//! worst-case cost, a minimum inter-arrival time, a deadline, a priority and
//! a blocking term. The crate computes per-stage worst-case response times
//! with blocking, composes them into end-to-end latencies, derives the
//! minimum number of cores from a utilization bound, and checks every bound
//! against a deterministic discrete-event simulator.
//!
//! Module map:
//!
//! - [`model`]: domain types, validation, priority assignment, replication
//!   and first-fit allocation.
//! - [`analysis`]: response-time fixed point, series-parallel composition,
//!   utilization bound and minimum core count.
//! - [`sizing`]: frequency sweeps, decimation sweeps and the blocking
//!   baseline comparison.
//! - [`sim`]: partitioned fixed-priority preemptive scheduling simulator.
//! - [`workloads`]: built-in scenarios and seeded random systems.
//! - [`cli`]: the JSON system-spec format and the `tc-sizer` commands.

pub mod analysis;
pub mod cli;
pub mod model;
pub mod sim;
pub mod sizing;
pub mod time;
pub mod workloads;

pub use analysis::{
    check_utilization_bound, end_to_end_response, min_cores, solve_system, stage_response_time,
    total_utilization, AnalysisError, Response, ResponseReport, UtilizationSummary,
};
pub use model::{
    allocate_first_fit, assign_priorities_dm, replicate_for_rate, validate_system, Allocation,
    Analytic, Cluster, CompositionExpr, Core, ModelError, Priority, PriorityMap, Stage, System,
    ValidationReport,
};
pub use time::{Duration, InterArrival};

use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};

/// Exact rational number used for utilizations, capacities and frequencies.
pub type Rational = BigRational;

/// `a / b` as an exact rational.
pub fn ratio(a: u64, b: u64) -> Rational {
    Rational::new(BigInt::from(a), BigInt::from(b))
}

pub fn rational_from_int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Parses `"3"`, `"0.9"`, `"-1.25"` or `"3/4"` into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let denom = num::pow(BigInt::from(10), frac_part.len());
    let value = Rational::new(digits, denom);
    Some(if neg { -value } else { value })
}

/// Formats a rational as a plain decimal with at most 9 significant digits,
/// trailing zeros removed (`4.58`, `0.001145`, `1`).
pub fn format_sig9(value: &Rational) -> String {
    if value.is_zero() {
        return "0".to_string();
    }
    let x = value.to_f64().unwrap_or(f64::NAN);
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let mut s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Exact text form used in JSON documents: an integer, a terminating
/// decimal, or `n/d`.
pub fn format_rational_exact(value: &Rational) -> String {
    if value.is_integer() {
        return value.to_integer().to_string();
    }
    let mut denom = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0usize;
    let mut fives = 0usize;
    while (&denom % &two).is_zero() {
        denom /= &two;
        twos += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        fives += 1;
    }
    if denom != BigInt::from(1) {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let places = twos.max(fives);
    let scaled = (value * Rational::from_integer(num::pow(BigInt::from(10), places))).to_integer();
    let sign = if scaled.is_negative() { "-" } else { "" };
    let digits = scaled.abs().to_string();
    let digits = format!("{:0>width$}", digits, width = places + 1);
    let (int_part, frac_part) = digits.split_at(digits.len() - places);
    format!("{sign}{int_part}.{frac_part}")
}
