//! Trajectory logs as CSV: a header, then one row per control instant.
//!
//! Columns: `t`, `q0..q{3n-1}`, `qd0..`, `tau_nom0..`, `tau0..`,
//! `b0..b{6n-1}`, `qp_status`, `qp_time_us`. Numbers are written with 17
//! significant digits so every value reads back bit-exactly.

use std::io::{Read, Write};

use nalgebra::DVector;
use pcc_cbf::kinematics::CORNERS;
use pcc_cbf::sim::{FilterStatus, Record, TrajectoryLog};

use crate::CliError;

pub fn header(n_segments: usize) -> Vec<String> {
    let dof = 3 * n_segments;
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "qd", "tau_nom", "tau"] {
        cols.extend((0..dof).map(|k| format!("{prefix}{k}")));
    }
    cols.extend((0..CORNERS * n_segments).map(|k| format!("b{k}")));
    cols.push("qp_status".into());
    cols.push("qp_time_us".into());
    cols
}

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_log(log: &TrajectoryLog, n_segments: usize, out: impl Write) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Numerical(format!("writing log: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n_segments)).map_err(fail)?;
    let dof = 3 * n_segments;
    for r in &log.records {
        if r.q.len() != dof || r.b.len() != CORNERS * n_segments {
            return Err(CliError::Config(format!("record at t = {} does not match {n_segments} segments", r.t)));
        }
        let mut row = vec![number(r.t)];
        for v in [&r.q, &r.qdot, &r.tau_nom, &r.tau, &r.b] {
            row.extend(v.iter().copied().map(number));
        }
        row.push(r.status.as_str().to_string());
        row.push(number(r.qp_time_us));
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Numerical(format!("writing log: {e}")))
}

/// Reads a log written by [`write_log`]; returns it with its segment count.
pub fn read_log(input: impl Read) -> Result<(TrajectoryLog, usize), CliError> {
    let bad = |msg: String| CliError::Config(format!("log: {msg}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let cols = head.len();
    if cols < 21 || !(cols - 3).is_multiple_of(18) {
        return Err(bad(format!("{cols} columns cannot hold whole segments")));
    }
    let n_segments = (cols - 3) / 18;
    if head != header(n_segments) {
        return Err(bad("unexpected column names".into()));
    }
    let dof = 3 * n_segments;
    let mut log = TrajectoryLog::default();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if row.len() != cols {
            return Err(bad(format!("row {} has {} fields, expected {cols}", line + 1, row.len())));
        }
        let value = |k: usize| -> Result<f64, CliError> {
            row[k].parse().map_err(|_| bad(format!("row {}, column {}: not a number: {:?}", line + 1, head[k], &row[k])))
        };
        let block = |start: usize, len: usize| -> Result<DVector<f64>, CliError> {
            (start..start + len).map(value).collect::<Result<Vec<_>, _>>().map(DVector::from_vec)
        };
        let status: FilterStatus =
            row[cols - 2].parse().map_err(|_| bad(format!("row {}: unknown qp_status {:?}", line + 1, &row[cols - 2])))?;
        log.records.push(Record {
            t: value(0)?,
            q: block(1, dof)?,
            qdot: block(1 + dof, dof)?,
            tau_nom: block(1 + 2 * dof, dof)?,
            tau: block(1 + 3 * dof, dof)?,
            b: block(1 + 4 * dof, 2 * dof)?,
            status,
            qp_time_us: value(cols - 1)?,
        });
    }
    if log.records.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(bad("time stamps are not strictly increasing".into()));
    }
    Ok((log, n_segments))
}
