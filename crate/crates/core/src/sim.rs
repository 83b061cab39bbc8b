//! Closed-loop simulation with zero-order-hold control.
//!
//! At every control instant `t_k = k·Δt` the controller sees the exact state,
//! computes one torque, and that torque is held while the chosen integrator
//! advances the dynamics over `[t_k, t_k + Δt)` in fixed substeps.

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use thiserror::Error as ThisError;

use crate::control::{
    check_admissible, hocbf_rows, pd_plus_from_terms, PdPlusGains, ReferenceTrajectory, DEFAULT_CLASS_K,
};
use crate::dynamics::{DynamicsTerms, RobotModel, DEFAULT_GRAVITY};
use crate::error::Error;
use crate::integrate::{integrate_interval, Integrator};
use crate::kinematics::{check_len, stack_constraints, Config, SegmentParams};
use crate::qp::{solve_qp_relaxed, QpProblem, QpSolver, QpStatus};

/// Slack penalty used when the barrier rows admit no torque.
pub const RELAXATION_PENALTY: f64 = 1e6;

/// `‖q̇‖` below which the robot counts as settled.
pub const STEADY_SPEED: f64 = 1e-5;

/// How long `‖q̇‖` must stay below [`STEADY_SPEED`] (s).
pub const STEADY_HOLD: f64 = 0.5;

/// Relative tolerance for "divides evenly" checks on the time grid.
const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    /// Nominal PD+ torque applied directly.
    PdPlus,
    /// PD+ torque projected onto the barrier constraints by a QP.
    CbfQp,
}

impl ControllerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PdPlus => "pd_plus",
            Self::CbfQp => "cbf_qp",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "pd_plus" => Ok(Self::PdPlus),
            "cbf_qp" => Ok(Self::CbfQp),
            other => Err(Error::InvalidParameter(format!(
                "controller mode must be pd_plus or cbf_qp, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: RobotModel,
    pub mode: ControllerMode,
    pub gains: PdPlusGains,
    /// Class-K coefficient (1/s).
    pub p: f64,
    pub reference: ReferenceTrajectory,
    pub q0: DVector<f64>,
    pub qdot0: DVector<f64>,
    pub t_final: f64,
    pub control_dt: f64,
    pub integrator_dt: f64,
    pub integrator: Integrator,
    /// Optional `(τ_min, τ_max)` box added to the filter QP.
    pub torque_bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl Scenario {
    /// Two identical segments (10 cm, 150 g, hexagonal plates) hanging from a
    /// fixed base, started straight and at rest, asked to reach a set point
    /// that folds the second segment into its own plate.
    pub fn two_segment_demo(mode: ControllerMode) -> Self {
        let model = RobotModel::new(vec![SegmentParams::default(); 2], Vector3::from(DEFAULT_GRAVITY))
            .expect("demo parameters are valid");
        let control_dt = 1e-3;
        Self {
            model,
            mode,
            gains: PdPlusGains::uniform(6, 5.0, 1.0).expect("positive gains"),
            p: DEFAULT_CLASS_K,
            reference: ReferenceTrajectory::SetPoint(DVector::from_vec(vec![0.08, 0.0, -0.05, 0.0, -0.06, -0.07])),
            q0: DVector::zeros(6),
            qdot0: DVector::zeros(6),
            t_final: 10.0,
            control_dt,
            integrator_dt: control_dt / 10.0,
            integrator: Integrator::default(),
            torque_bounds: None,
        }
    }

    /// Checks the time grid, dimensions, gains and initial configuration.
    /// Initial admissibility for the filter is checked by [`run_scenario`].
    pub fn validate(&self) -> Result<(), Error> {
        let dof = self.model.dof();
        check_len("Kp diagonal", self.gains.kp(), dof)?;
        if self.gains.kp().iter().chain(self.gains.kd().iter()).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("Kp and Kd must be > 0".into()));
        }
        if self.reference.dof() != dof {
            return Err(Error::Dimension { what: "reference", expected: dof, actual: self.reference.dof() });
        }
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::InvalidParameter(format!("class-K coefficient must be > 0, got {}", self.p)));
        }
        Config::new(self.q0.clone(), &self.model)?;
        check_len("initial rate", &self.qdot0, dof)?;
        if self.qdot0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial rate"));
        }
        for (name, v) in [
            ("t_final", self.t_final),
            ("control_dt", self.control_dt),
            ("integrator_dt", self.integrator_dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.integrator_dt > self.control_dt * (1.0 + GRID_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "integrator_dt {} exceeds control_dt {}",
                self.integrator_dt, self.control_dt
            )));
        }
        self.n_steps()?;
        if let Some((lower, upper)) = &self.torque_bounds {
            check_len("torque lower bound", lower, dof)?;
            check_len("torque upper bound", upper, dof)?;
            if lower.iter().zip(upper.iter()).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
                return Err(Error::InvalidParameter("torque bounds need lower <= upper".into()));
            }
        }
        Ok(())
    }

    /// Number of control intervals, `t_final / control_dt`.
    pub fn n_steps(&self) -> Result<usize, Error> {
        let ratio = self.t_final / self.control_dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > GRID_TOLERANCE * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "control_dt {} does not divide t_final {}",
                self.control_dt, self.t_final
            )));
        }
        Ok(n as usize)
    }
}

/// What the filter did at one control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterStatus {
    /// PD+ mode; no QP was solved.
    Unfiltered,
    Optimal,
    /// The barrier rows were jointly infeasible and the slack-relaxed QP was
    /// applied instead.
    Relaxed,
    /// The exact QP hit its iteration cap; the relaxed solution was applied.
    MaxIter,
}

impl FilterStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unfiltered => "none",
            Self::Optimal => "optimal",
            Self::Relaxed => "infeasible_relaxed",
            Self::MaxIter => "max_iter",
        }
    }
}

impl std::str::FromStr for FilterStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        [Self::Unfiltered, Self::Optimal, Self::Relaxed, Self::MaxIter]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown QP status {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub tau_nom: DVector<f64>,
    pub tau: DVector<f64>,
    /// Barrier values `b` at the state the torque was computed for.
    pub b: DVector<f64>,
    pub status: FilterStatus,
    /// Wall-clock QP time in microseconds (0 when unfiltered).
    pub qp_time_us: f64,
}

/// One controller instance per run; it carries the QP warm start.
#[derive(Debug, Clone, Default)]
pub struct Controller {
    solver: QpSolver,
}

impl Controller {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dynamics terms are evaluated once at `(q, q̇)` and shared by the
    /// nominal law and the barrier rows.
    pub fn step(
        &mut self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        t: f64,
        scenario: &Scenario,
    ) -> Result<ControlOutput, Error> {
        let model = &scenario.model;
        let terms = DynamicsTerms::evaluate(q, qdot, model)?;
        let cons = stack_constraints(q, qdot, model)?;
        let sample = scenario.reference.sample(t);
        let tau_nom = pd_plus_from_terms(&terms, q, qdot, &sample, &scenario.gains, model);
        if tau_nom.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nominal torque"));
        }
        if scenario.mode == ControllerMode::PdPlus {
            return Ok(ControlOutput {
                tau: tau_nom.clone(),
                tau_nom,
                b: cons.b,
                status: FilterStatus::Unfiltered,
                qp_time_us: 0.0,
            });
        }

        let rows = hocbf_rows(qdot, &terms, &cons, scenario.p)?;
        let start = Instant::now();
        let mut problem = QpProblem::projection(&tau_nom, rows.a, rows.lo)?;
        if let Some((lower, upper)) = &scenario.torque_bounds {
            problem = problem.with_bounds(lower.clone(), upper.clone())?;
        }
        let sol = self.solver.solve(&problem);
        let (tau, status) = match sol.status {
            QpStatus::Optimal => (sol.x, FilterStatus::Optimal),
            QpStatus::Infeasible => (solve_qp_relaxed(&problem, RELAXATION_PENALTY)?.x, FilterStatus::Relaxed),
            QpStatus::MaxIter => (solve_qp_relaxed(&problem, RELAXATION_PENALTY)?.x, FilterStatus::MaxIter),
        };
        let qp_time_us = start.elapsed().as_secs_f64() * 1e6;
        if tau.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filtered torque"));
        }
        Ok(ControlOutput { tau_nom, tau, b: cons.b, status, qp_time_us })
    }
}

/// One control step with a fresh controller (no warm start).
pub fn control_step(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    t: f64,
    scenario: &Scenario,
) -> Result<ControlOutput, Error> {
    Controller::new().step(q, qdot, t, scenario)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub tau_nom: DVector<f64>,
    pub tau: DVector<f64>,
    pub b: DVector<f64>,
    pub status: FilterStatus,
    pub qp_time_us: f64,
}

/// Settling summary of a log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// First time from which `‖q̇‖ < STEADY_SPEED` held for `STEADY_HOLD`.
    pub t_settled: f64,
    /// Mean applied torque norm from `t_settled` to the end of the log.
    pub tau_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub records: Vec<Record>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Smallest logged barrier value over all rows and times, with its row.
    pub fn min_barrier(&self) -> Option<(f64, usize)> {
        self.records
            .iter()
            .flat_map(|r| r.b.iter().copied().enumerate())
            .fold(None, |best, (row, v)| match best {
                Some((b, _)) if b <= v => best,
                _ => Some((v, row)),
            })
    }

    /// Minimum over time of each barrier row.
    pub fn min_barrier_per_row(&self) -> Vec<f64> {
        let rows = self.records.first().map_or(0, |r| r.b.len());
        (0..rows)
            .map(|j| self.records.iter().map(|r| r.b[j]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn final_rate_norm(&self) -> Option<f64> {
        self.records.last().map(|r| r.qdot.norm())
    }

    pub fn steady_state(&self) -> Option<SteadyState> {
        steady_state(self.records.iter().map(|r| (r.t, r.qdot.norm(), r.tau.norm())))
    }

    pub fn count_status(&self, status: FilterStatus) -> usize {
        self.records.iter().filter(|r| r.status == status).count()
    }
}

/// Settling detection on `(t, ‖q̇‖, ‖τ‖)` samples in time order: the robot
/// must stay slow from `t_settled` to the end of the log, for at least
/// [`STEADY_HOLD`].
pub fn steady_state(samples: impl IntoIterator<Item = (f64, f64, f64)>) -> Option<SteadyState> {
    let samples: Vec<_> = samples.into_iter().collect();
    let start = samples
        .iter()
        .rposition(|&(_, speed, _)| !(speed < STEADY_SPEED))
        .map_or(0, |k| k + 1);
    let tail = &samples[start..];
    let (t_settled, t_end) = (tail.first()?.0, tail.last()?.0);
    if t_end - t_settled < STEADY_HOLD * (1.0 - GRID_TOLERANCE) {
        return None;
    }
    let tau_norm = tail.iter().map(|&(_, _, n)| n).sum::<f64>() / tail.len() as f64;
    Some(SteadyState { t_settled, tau_norm })
}

#[derive(Debug, ThisError)]
pub enum RunError {
    #[error("scenario rejected: {0}")]
    Setup(Error),
    #[error("run aborted at t = {t:.6} s: {source}")]
    Aborted {
        t: f64,
        source: Error,
        /// Records up to the last finite state.
        log: Box<TrajectoryLog>,
    },
}

/// Runs the closed loop on the grid `t_k = k·control_dt`, `k = 0..=N`.
/// The last record holds the torque the controller would apply at `t_final`.
pub fn run_scenario(scenario: &Scenario) -> Result<TrajectoryLog, RunError> {
    scenario.validate().map_err(RunError::Setup)?;
    if scenario.mode == ControllerMode::CbfQp {
        check_admissible(&scenario.q0, &scenario.qdot0, &scenario.model, scenario.p).map_err(RunError::Setup)?;
    }
    let n = scenario.n_steps().map_err(RunError::Setup)?;
    let mut log = TrajectoryLog { records: Vec::with_capacity(n + 1) };
    let mut controller = Controller::new();
    let mut q = scenario.q0.clone();
    let mut qdot = scenario.qdot0.clone();
    for k in 0..=n {
        let t = k as f64 * scenario.control_dt;
        let abort = |source: Error, log: TrajectoryLog| RunError::Aborted { t, source, log: Box::new(log) };
        let out = match controller.step(&q, &qdot, t, scenario) {
            Ok(out) => out,
            Err(e) => return Err(abort(e, log)),
        };
        let next = if k < n {
            Some(integrate_interval(
                scenario.integrator,
                &q,
                &qdot,
                &out.tau,
                &scenario.model,
                scenario.control_dt,
                scenario.integrator_dt,
            ))
        } else {
            None
        };
        log.records.push(Record {
            t,
            q: q.clone(),
            qdot: qdot.clone(),
            tau_nom: out.tau_nom,
            tau: out.tau,
            b: out.b,
            status: out.status,
            qp_time_us: out.qp_time_us,
        });
        match next {
            Some(Ok((qn, qdn))) => {
                q = qn;
                qdot = qdn;
            }
            Some(Err(e)) => return Err(abort(e, log)),
            None => {}
        }
    }
    Ok(log)
}
