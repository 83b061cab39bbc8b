//! The three subcommands. Each writes its report to the given sink and
//! returns an error whose exit code the binary passes on.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use pcc_cbf::control::check_admissible;
use pcc_cbf::kinematics::{stack_constraints, CORNERS};
use pcc_cbf::sim::{run_scenario, FilterStatus, RunError, TrajectoryLog, STEADY_HOLD};
use pcc_cbf::Error;

use crate::config::{Overrides, ScenarioFile};
use crate::csvlog::{read_log, write_log};
use crate::CliError;

fn row_name(row: usize) -> String {
    format!("segment {} corner {}", row / CORNERS, row % CORNERS)
}

/// Mean applied torque norm once the robot has settled, or over the final
/// [`STEADY_HOLD`] seconds when it never does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueLevel {
    pub tau_norm: f64,
    /// `Some(t)` when the log settles at `t`.
    pub settled_at: Option<f64>,
}

pub fn torque_level(log: &TrajectoryLog) -> Option<TorqueLevel> {
    if let Some(s) = log.steady_state() {
        return Some(TorqueLevel { tau_norm: s.tau_norm, settled_at: Some(s.t_settled) });
    }
    let t_end = log.records.last()?.t;
    let tail: Vec<f64> = log
        .records
        .iter()
        .filter(|r| r.t >= t_end - STEADY_HOLD * (1.0 + 1e-9))
        .map(|r| r.tau.norm())
        .collect();
    Some(TorqueLevel { tau_norm: tail.iter().sum::<f64>() / tail.len() as f64, settled_at: None })
}

fn describe_level(level: &TorqueLevel) -> String {
    match level.settled_at {
        Some(t) => format!("{:.6e} N (settled at t = {t:.3} s)", level.tau_norm),
        None => format!("{:.6e} N (not settled; mean over the final {STEADY_HOLD} s)", level.tau_norm),
    }
}

pub fn summarize(log: &TrajectoryLog) -> String {
    let mut s = String::new();
    let Some(last) = log.records.last() else {
        return "empty log\n".into();
    };
    let _ = writeln!(s, "{} records, t = 0 .. {} s", log.len(), last.t);
    let _ = writeln!(s, "min b per row (m):");
    for (row, b) in log.min_barrier_per_row().iter().enumerate() {
        let _ = writeln!(s, "  row {row:2} ({}): {b:+.6e}", row_name(row));
    }
    if let Some((b, row)) = log.min_barrier() {
        let _ = writeln!(s, "overall min b: {b:+.6e} m at row {row} ({})", row_name(row));
    }
    let _ = writeln!(s, "final |qdot|: {:.6e}", last.qdot.norm());
    if let Some(level) = torque_level(log) {
        let _ = writeln!(s, "steady-state |tau|: {}", describe_level(&level));
    }
    let filtered: Vec<f64> =
        log.records.iter().filter(|r| r.status != FilterStatus::Unfiltered).map(|r| r.qp_time_us).collect();
    if filtered.is_empty() {
        let _ = writeln!(s, "QP: not used (pd_plus)");
    } else {
        let mean = filtered.iter().sum::<f64>() / filtered.len() as f64;
        let max = filtered.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(
            s,
            "QP: {} optimal, {} infeasible_relaxed, {} max_iter; solve time mean {mean:.1} us, max {max:.1} us",
            log.count_status(FilterStatus::Optimal),
            log.count_status(FilterStatus::Relaxed),
            log.count_status(FilterStatus::MaxIter),
        );
    }
    s
}

fn save(log: &TrajectoryLog, n_segments: usize, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_log(log, n_segments, &mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs the scenario, writes the CSV log (partial on a numerical abort) and
/// prints the summary.
pub fn simulate(config: &Path, out: Option<&Path>, overrides: &Overrides, sink: &mut dyn Write) -> Result<(), CliError> {
    let mut file = ScenarioFile::load(config)?;
    file.apply(overrides);
    let scenario = file.to_scenario()?;
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| file.output.as_ref().and_then(|o| o.csv.clone()))
        .ok_or_else(|| CliError::Config("no output path: pass --out or set output.csv".into()))?;
    let n_segments = scenario.model.n_segments();
    let _ = writeln!(
        sink,
        "{} run: {} segments, t_final = {} s, control_dt = {} s, integrator {} at {} s",
        scenario.mode.as_str(),
        n_segments,
        scenario.t_final,
        scenario.control_dt,
        scenario.integrator.as_str(),
        scenario.integrator_dt,
    );
    match run_scenario(&scenario) {
        Ok(log) => {
            save(&log, n_segments, &out)?;
            let _ = write!(sink, "{}", summarize(&log));
            let _ = writeln!(sink, "log written to {}", out.display());
            Ok(())
        }
        Err(RunError::Aborted { t, source, log }) => {
            save(&log, n_segments, &out)?;
            let _ = write!(sink, "{}", summarize(&log));
            let _ = writeln!(sink, "partial log written to {}", out.display());
            Err(CliError::Numerical(format!("run aborted at t = {t:.6} s: {source}")))
        }
        Err(e) => Err(e.into()),
    }
}

/// Validates the file and the initial admissibility `ψ₀ > 0`, `ψ₁ > 0`, and
/// prints every row's initial barrier value.
pub fn check(config: &Path, sink: &mut dyn Write) -> Result<(), CliError> {
    let scenario = ScenarioFile::load(config)?.to_scenario()?;
    let cons = stack_constraints(&scenario.q0, &scenario.qdot0, &scenario.model)?;
    let rate = cons.rate(&scenario.qdot0);
    let _ = writeln!(sink, "{} barrier rows, p = {} 1/s", cons.len(), scenario.p);
    for row in 0..cons.len() {
        let _ = writeln!(
            sink,
            "  row {row:2} ({}): b = {:+.6e} m, psi1 = {:+.6e} m/s",
            row_name(row),
            cons.b[row],
            rate[row] + scenario.p * cons.b[row]
        );
    }
    match check_admissible(&scenario.q0, &scenario.qdot0, &scenario.model, scenario.p) {
        Ok(_) => {
            let _ = writeln!(sink, "initial state admissible");
            Ok(())
        }
        Err(Error::Inadmissible { row, psi0, psi1 }) => Err(CliError::Inadmissible(format!(
            "initial state not admissible at row {row} ({}): psi0 = {psi0:+.6e}, psi1 = {psi1:+.6e}",
            row_name(row)
        ))),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub min_b: [(f64, usize); 2],
    pub levels: [TorqueLevel; 2],
    /// Torque level of the first log over that of the second.
    pub ratio: f64,
}

pub fn load_log(path: &Path) -> Result<TrajectoryLog, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_log(BufReader::new(file))
        .map(|(log, _)| log)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn compare_logs(a: &TrajectoryLog, b: &TrajectoryLog) -> Result<Comparison, CliError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CliError::Config(format!("grid mismatch: {} vs {} records", a.len(), b.len())));
    }
    if let Some((x, y)) = a.records.iter().zip(&b.records).find(|(x, y)| x.t != y.t) {
        return Err(CliError::Config(format!("grid mismatch: t = {} vs t = {}", x.t, y.t)));
    }
    if a.records[0].b.len() != b.records[0].b.len() {
        return Err(CliError::Config("logs have different segment counts".into()));
    }
    let min_b = [a.min_barrier().expect("non-empty"), b.min_barrier().expect("non-empty")];
    let levels = [torque_level(a).expect("non-empty"), torque_level(b).expect("non-empty")];
    Ok(Comparison { min_b, levels, ratio: levels[0].tau_norm / levels[1].tau_norm })
}

pub fn compare(log_a: &Path, log_b: &Path, sink: &mut dyn Write) -> Result<Comparison, CliError> {
    let cmp = compare_logs(&load_log(log_a)?, &load_log(log_b)?)?;
    for (k, path) in [log_a, log_b].iter().enumerate() {
        let (b, row) = cmp.min_b[k];
        let _ = writeln!(sink, "{}: {}", ["A", "B"][k], path.display());
        let _ = writeln!(sink, "  min b: {b:+.6e} m at row {row} ({})", row_name(row));
        let _ = writeln!(sink, "  steady-state |tau|: {}", describe_level(&cmp.levels[k]));
    }
    let _ = writeln!(sink, "min b difference (B - A): {:+.6e} m", cmp.min_b[1].0 - cmp.min_b[0].0);
    let _ = writeln!(sink, "steady-state |tau| ratio (A / B): {:.6}", cmp.ratio);
    Ok(cmp)
}
