//! Trajectory CSV and summary writers, plus the key-value report type used by
//! the verification subcommand. Decimal output uses Rust's shortest
//! round-trip formatting so golden files are platform-stable; line endings
//! are LF.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::linalg::{BlochVector, QuantumState};
use crate::walk::{Boundary, EnsembleStats, TrajectoryRecord, TrajectorySummary};

/// CSV header for a system of dimension `dim`; Bloch columns only for qubits.
pub fn csv_header(dim: usize) -> String {
    let mut cols = vec![
        "trajectory_id".to_string(),
        "step".to_string(),
        "x".to_string(),
        "outcome".to_string(),
        "p_plus".to_string(),
    ];
    for k in 0..dim {
        cols.push(format!("re{k}"));
        cols.push(format!("im{k}"));
    }
    if dim == 2 {
        cols.extend(["bloch_x".into(), "bloch_y".into(), "bloch_z".into()]);
    }
    cols.join(",")
}

fn push_state_columns(row: &mut String, state: &QuantumState) {
    for a in state.amplitudes() {
        let _ = write!(row, ",{},{}", a.re, a.im);
    }
    if state.dim() == 2 {
        let b = BlochVector::from_state(state);
        let _ = write!(row, ",{},{},{}", b.x, b.y, b.z);
    }
}

/// One row per step of a recorded trajectory; `x` is the pointer after the step.
pub fn trajectory_rows(id: usize, rec: &TrajectoryRecord, delta: f64, out: &mut String) {
    let states = rec
        .states
        .as_ref()
        .expect("trajectory_rows requires record_states");
    for (step_idx, (step, state)) in rec.steps.iter().zip(states).enumerate() {
        let x_after = step.x_before + step.outcome as f64 * delta;
        let _ = write!(
            out,
            "{id},{},{},{},{}",
            step_idx + 1,
            x_after,
            step.outcome,
            step.p_plus
        );
        push_state_columns(out, state);
        out.push('\n');
    }
}

/// One row per trajectory (final state only) for unrecorded ensembles.
pub fn summary_row(id: usize, s: &TrajectorySummary, out: &mut String) {
    let _ = write!(
        out,
        "{id},{},{},{},{}",
        s.steps, s.final_x, s.last_outcome, s.last_p_plus
    );
    push_state_columns(out, &s.final_state);
    out.push('\n');
}

pub fn boundary_label(b: Boundary) -> &'static str {
    match b {
        Boundary::Plus => "plus",
        Boundary::Minus => "minus",
        Boundary::Timeout => "timeout",
    }
}

/// Render the run summary with the fixed key set.
pub fn render_summary(
    stats: &EnsembleStats,
    p1_analytic: f64,
    seed: u64,
    wall_seconds: f64,
) -> String {
    let mut out = String::new();
    let fid = |v: Option<f64>| v.map(|f| f.to_string()).unwrap_or_else(|| "nan".into());
    let _ = writeln!(out, "n = {}", stats.n);
    let _ = writeln!(out, "freq_outcome1 = {}", stats.freq_outcome1);
    let _ = writeln!(out, "ci95 = {}", stats.ci95_halfwidth);
    let _ = writeln!(out, "p1_analytic = {p1_analytic}");
    let _ = writeln!(out, "mean_fidelity_1 = {}", fid(stats.mean_fidelity_1));
    let _ = writeln!(out, "mean_fidelity_2 = {}", fid(stats.mean_fidelity_2));
    let _ = writeln!(out, "mean_steps = {}", stats.mean_steps);
    let _ = writeln!(out, "timeouts = {}", stats.timeouts);
    let _ = writeln!(out, "renorms = {}", stats.total_renorms);
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "wall_seconds = {wall_seconds}");
    out
}

pub fn write_text(path: &Path, content: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content.as_bytes())
}

/// Structured pass/fail report emitted by the verification checks.
#[derive(Debug, Default)]
pub struct Report {
    items: Vec<(String, String)>,
    failures: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.items.push((key.to_string(), value.to_string()));
    }

    /// Record a named criterion; failing criteria flip the overall status.
    pub fn criterion(&mut self, name: &str, pass: bool) {
        self.items
            .push((name.to_string(), if pass { "pass" } else { "FAIL" }.to_string()));
        if !pass {
            self.failures.push(name.to_string());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.items {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "result = {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}
