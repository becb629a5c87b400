//! Trajectory CSV and summary JSON writers.
//!
//! Numbers are written with 17 significant digits so files round-trip
//! exactly; identical configs produce byte-identical CSV output.

use ksnbody::algebra::InvariantBasis;
use num_complex::Complex64;
use serde_json::json;
use std::io::Write;
use std::path::Path;

pub fn fmt(x: f64) -> String {
    // Fold negative zero into plain zero.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// One trajectory row: fictitious time, physical time, the 36 raw
/// invariants in fixed column order, and the six characteristic
/// coefficients split into re/im.
pub struct Row {
    pub s: f64,
    pub t: f64,
    pub raw: Vec<f64>,
    pub casimirs: Vec<Complex64>,
}

pub fn csv_header(basis: &InvariantBasis) -> String {
    let mut cols = vec!["s".to_string(), "t".to_string()];
    for k in 0..basis.len() {
        cols.push(basis.label(k));
    }
    for k in 1..=6 {
        cols.push(format!("cas{k}_re"));
        cols.push(format!("cas{k}_im"));
    }
    cols.join(",")
}

pub fn write_trajectory(path: &Path, basis: &InvariantBasis, rows: &[Row]) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{}", csv_header(basis))?;
    for row in rows {
        let mut cols = Vec::with_capacity(2 + row.raw.len() + 12);
        cols.push(fmt(row.s));
        cols.push(fmt(row.t));
        cols.extend(row.raw.iter().map(|&v| fmt(v)));
        for c in &row.casimirs {
            cols.push(fmt(c.re));
            cols.push(fmt(c.im));
        }
        writeln!(out, "{}", cols.join(","))?;
    }
    out.flush()
}

/// Max absolute and relative drift of one conserved quantity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Drift {
    pub initial: f64,
    pub abs: f64,
}

impl Drift {
    pub fn update(&mut self, value: f64) {
        self.abs = self.abs.max((value - self.initial).abs());
    }

    pub fn rel(&self) -> f64 {
        self.abs / self.initial.abs().max(1.0)
    }

    pub fn to_json(self) -> serde_json::Value {
        json!({"abs": self.abs, "rel": self.rel()})
    }
}

pub struct SummaryInputs<'a> {
    pub config: serde_json::Value,
    pub mode: &'a str,
    pub h_reg: Drift,
    pub bilinear: [Drift; 3],
    pub angular_momentum: Drift,
    pub sum_q: Drift,
    pub casimirs: Vec<Drift>,
    pub representation_deviation: Option<f64>,
    pub wall_clock_seconds: f64,
    pub steps_completed: usize,
    pub error: Option<String>,
}

pub fn write_summary(path: &Path, inputs: &SummaryInputs) -> std::io::Result<()> {
    let value = json!({
        "config": inputs.config,
        "mode": inputs.mode,
        "steps_completed": inputs.steps_completed,
        "drift": {
            "h_reg": inputs.h_reg.to_json(),
            "c11": inputs.bilinear[0].to_json(),
            "c22": inputs.bilinear[1].to_json(),
            "c33": inputs.bilinear[2].to_json(),
            "angular_momentum": inputs.angular_momentum.to_json(),
            "sum_q": inputs.sum_q.to_json(),
            "casimirs": inputs.casimirs.iter().map(|d| d.to_json()).collect::<Vec<_>>(),
        },
        "representation_deviation": inputs.representation_deviation,
        "wall_clock_seconds": inputs.wall_clock_seconds,
        "error": inputs.error,
    });
    std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")
}
