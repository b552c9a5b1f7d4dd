//! CSV and JSON renderings of a [`SimulationResult`].
//!
//! Trajectory CSV columns, in order: `time_s,mx,my,mz`. Numbers use Rust's
//! shortest round-trip formatting, so the output is exact and reproducible.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::run::SimulationResult;

pub const TRAJECTORY_HEADER: &str = "time_s,mx,my,mz";

/// Version of the JSON result document layout.
pub const RESULT_SCHEMA: u32 = 1;

pub fn trajectory_csv(result: &SimulationResult) -> String {
    let mut out = String::with_capacity(32 * (result.sample_times.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (t, v) in result.sample_times.iter().zip(&result.mean_bloch) {
        let _ = writeln!(out, "{t:?},{:?},{:?},{:?}", v[0], v[1], v[2]);
    }
    out
}

/// JSON result document: the configuration as given, run summary, and one
/// row per acquire statement.
pub fn result_json(result: &SimulationResult, config: &Value) -> Value {
    let acquisitions: Vec<Value> = result
        .acquisitions
        .iter()
        .map(|a| {
            json!({
                "label": a.label,
                "time_s": a.time,
                "magnitude": a.magnitude(),
                "phase_rad": a.phase(),
                "mean": [a.mean.x, a.mean.y, a.mean.z],
                "std_error": a.std_error,
            })
        })
        .collect();
    let table: serde_json::Map<String, Value> = result
        .acquire_table()
        .into_iter()
        .map(|(k, e)| (k, json!({"magnitude": e.magnitude, "phase_rad": e.phase})))
        .collect();
    json!({
        "schema_version": RESULT_SCHEMA,
        "config": config,
        "duration_s": result.duration,
        "members": result.members,
        "final_mean": [result.final_mean.x, result.final_mean.y, result.final_mean.z],
        "acquire_amplitudes": table,
        "acquisitions": acquisitions,
    })
}
