//! Fixed-step integrators for `q̈ = M(q)⁻¹(τ - C q̇ - G - K q - D q̇)` under
//! constant `τ`.
//!
//! The point-mass model has almost no inertia in some bending directions, so
//! `M⁻¹D` reaches 1e5 to 1e7 s⁻¹ while the motion of interest evolves on a
//! 0.1 s scale. Classical RK4 is kept for non-stiff models and reference
//! runs. The default is a five-stage, L-stable, stiffly accurate SDIRK method
//! of order 4 whose stages are solved by simplified Newton iteration.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DynamicsTerms, RobotModel};
use crate::error::Error;
use crate::kinematics::check_len;

/// Relative tolerance on the last Newton update of a stage velocity.
const NEWTON_TOLERANCE: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Classical explicit Runge-Kutta, order 4. Stable only for
    /// `h·λ(M⁻¹D) ≲ 2.7`.
    Rk4,
    /// Singly diagonally implicit Runge-Kutta, order 4, L-stable.
    #[default]
    Sdirk4,
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rk4 => "rk4",
            Self::Sdirk4 => "sdirk4",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "rk4" => Ok(Self::Rk4),
            "sdirk4" => Ok(Self::Sdirk4),
            other => Err(Error::InvalidParameter(format!("integrator must be rk4 or sdirk4, got {other:?}"))),
        }
    }
}

const GAMMA: f64 = 0.25;

/// Butcher tableau (strictly lower part; the diagonal is `GAMMA`). The last
/// row doubles as the weights.
const SDIRK4_A: [[f64; 4]; 5] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0],
];

/// Advances `(q, q̇)` by `dt_total` under constant `τ`. The substep is
/// `dt_total / ceil(dt_total / dt_sub)`, never larger than `dt_sub`.
pub fn integrate_interval(
    method: Integrator,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    tau: &DVector<f64>,
    model: &RobotModel,
    dt_total: f64,
    dt_sub: f64,
) -> Result<(DVector<f64>, DVector<f64>), Error> {
    if !(dt_total > 0.0 && dt_sub > 0.0 && dt_sub <= dt_total * (1.0 + 1e-9)) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < dt_sub <= dt_total, got dt_sub = {dt_sub}, dt_total = {dt_total}"
        )));
    }
    check_len("configuration", q, model.dof())?;
    check_len("configuration rate", qdot, model.dof())?;
    check_len("torque", tau, model.dof())?;
    let substeps = (dt_total / dt_sub * (1.0 - 1e-9)).ceil().max(1.0) as usize;
    let h = dt_total / substeps as f64;
    let f = Accel { model, tau };
    let mut state = (q.clone(), qdot.clone());
    let mut newton: Option<NewtonMatrix> = None;
    for _ in 0..substeps {
        state = match method {
            Integrator::Rk4 => rk4_step(&f, &state.0, &state.1, h)?,
            Integrator::Sdirk4 => sdirk4_step(&f, &state.0, &state.1, h, &mut newton)?,
        };
        if state.0.iter().chain(state.1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
    }
    Ok(state)
}

struct Accel<'a> {
    model: &'a RobotModel,
    tau: &'a DVector<f64>,
}

impl Accel<'_> {
    fn eval(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, Error> {
        let a = DynamicsTerms::evaluate(q, v, self.model)?.acceleration(v, self.tau);
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("acceleration"));
        }
        Ok(a)
    }

    /// Forward-difference `(∂a/∂q, ∂a/∂v)`.
    fn jacobians(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), Error> {
        let n = q.len();
        let a0 = self.eval(q, v)?;
        let mut aq = DMatrix::zeros(n, n);
        let mut av = DMatrix::zeros(n, n);
        for k in 0..n {
            let step = 1e-8 * q[k].abs().max(1e-2);
            let mut qp = q.clone();
            qp[k] += step;
            aq.set_column(k, &((self.eval(&qp, v)? - &a0) / step));
            let step = 1e-8 * v[k].abs().max(1.0);
            let mut vp = v.clone();
            vp[k] += step;
            av.set_column(k, &((self.eval(q, &vp)? - &a0) / step));
        }
        Ok((aq, av))
    }
}

fn rk4_step(
    f: &Accel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, DVector<f64>), Error> {
    let a1 = f.eval(q, qd)?;
    let (q2, v2) = (q + qd * (0.5 * h), qd + &a1 * (0.5 * h));
    let a2 = f.eval(&q2, &v2)?;
    let (q3, v3) = (q + &v2 * (0.5 * h), qd + &a2 * (0.5 * h));
    let a3 = f.eval(&q3, &v3)?;
    let (q4, v4) = (q + &v3 * h, qd + &a3 * h);
    let a4 = f.eval(&q4, &v4)?;
    let q_next = q + (qd + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
    let v_next = qd + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    Ok((q_next, v_next))
}

/// LU of `I - hγ(∂a/∂v + hγ ∂a/∂q)`, the Newton matrix of one stage written
/// in the stage velocity alone.
struct NewtonMatrix {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    h: f64,
}

impl NewtonMatrix {
    fn build(f: &Accel, q: &DVector<f64>, v: &DVector<f64>, h: f64) -> Result<Self, Error> {
        let (aq, av) = f.jacobians(q, v)?;
        let hg = h * GAMMA;
        let w = DMatrix::identity(q.len(), q.len()) - (av + aq * hg) * hg;
        Ok(Self { lu: w.lu(), h })
    }
}

/// Solves `V = v_b + hγ a(q_b + hγ V, V)`. Returns `None` when the frozen
/// Newton matrix fails to converge.
fn solve_stage(
    f: &Accel,
    newton: &NewtonMatrix,
    q_base: &DVector<f64>,
    v_base: &DVector<f64>,
    guess: &DVector<f64>,
) -> Result<Option<DVector<f64>>, Error> {
    let hg = newton.h * GAMMA;
    let mut v = guess.clone();
    for _ in 0..NEWTON_MAX_ITER {
        let qs = q_base + &v * hg;
        let r = &v - v_base - f.eval(&qs, &v)? * hg;
        let Some(dv) = newton.lu.solve(&r) else {
            return Ok(None);
        };
        v -= &dv;
        if !v.iter().all(|x| x.is_finite()) {
            return Ok(None);
        }
        if dv.amax() <= NEWTON_TOLERANCE * (1.0 + v.amax()) {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

fn sdirk4_step(
    f: &Accel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    h: f64,
    newton: &mut Option<NewtonMatrix>,
) -> Result<(DVector<f64>, DVector<f64>), Error> {
    let hg = h * GAMMA;
    // stage derivatives of q (= V_i) and of v
    let mut kq: Vec<DVector<f64>> = Vec::with_capacity(5);
    let mut kv: Vec<DVector<f64>> = Vec::with_capacity(5);
    let mut last = (q.clone(), qd.clone());
    for (i, row) in SDIRK4_A.iter().enumerate() {
        let mut q_base = q.clone();
        let mut v_base = qd.clone();
        for j in 0..i {
            q_base.axpy(h * row[j], &kq[j], 1.0);
            v_base.axpy(h * row[j], &kv[j], 1.0);
        }
        let guess = kq.last().unwrap_or(qd).clone();
        if newton.as_ref().is_some_and(|m| m.h != h) {
            *newton = None;
        }
        let mut fresh = false;
        let v = loop {
            if newton.is_none() {
                *newton = Some(NewtonMatrix::build(f, &q_base, &guess, h)?);
                fresh = true;
            }
            let m = newton.as_ref().expect("built above");
            match solve_stage(f, m, &q_base, &v_base, &guess)? {
                Some(v) => break v,
                None if !fresh => *newton = None,
                None => return Err(Error::NoConvergence("implicit stage")),
            }
        };
        // the stage equation gives V̇ without another evaluation, which keeps
        // Newton residuals from being amplified by the stiff modes
        let v_dot = (&v - &v_base) / hg;
        let q_stage = &q_base + &v * hg;
        kq.push(v.clone());
        kv.push(v_dot);
        last = (q_stage, v);
    }
    // stiffly accurate: the solution is the last stage
    Ok(last)
}
