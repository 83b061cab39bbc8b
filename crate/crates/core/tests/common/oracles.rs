//! Independent oracles shared by the oracle suites and the acceptance run.
//! Each report function measures the worst deviation over a seeded sample
//! and leaves the thresholds to the caller.

use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};
use pcc_cbf::dynamics::{coriolis_matrix, forward_dynamics, mass_matrix, mechanical_energy, DynamicsTerms, RobotModel};
use pcc_cbf::integrate::{integrate_interval, Integrator};
use pcc_cbf::kinematics::{
    bend_angle, corner_height, corner_jacobian, corner_jacobian_dot, segment_slice, segment_transform, SegmentParams,
    CORNERS,
};
use pcc_cbf::qp::{solve_qp, QpProblem, QpSolution, QpStatus};
use rand::Rng;

/// 100 single-segment states with θ in [0, 2], the first 12 with θ < 1e-6.
pub fn sample_segment_states(seed: u64) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let params = SegmentParams::default();
    let mut rng = super::rng(seed);
    (0..100)
        .map(|k| {
            let theta = if k < 12 { rng.gen_range(0.0..1e-6) } else { rng.gen_range(0.0..2.0) };
            let q = super::segment_with_angle(&mut rng, &params, theta);
            let qdot = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5));
            (q, qdot)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct JacobianReport {
    pub configs: usize,
    pub small_angle_configs: usize,
    /// max |FD - J_k| / ‖J‖
    pub worst_jacobian: f64,
    /// max ‖FD - J̇‖ / max(‖J̇‖, 1e-3‖q̇‖)
    pub worst_jacobian_rate: f64,
}

pub fn jacobian_report(seed: u64) -> JacobianReport {
    let params = SegmentParams::default();
    let states = sample_segment_states(seed);
    let h = 1e-6;
    let mut worst_jacobian: f64 = 0.0;
    let mut worst_jacobian_rate: f64 = 0.0;
    for (q, qdot) in &states {
        for j in 0..CORNERS {
            let jac = corner_jacobian(q, &params, j);
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = h;
                let fd = (corner_height(&(q + e), &params, j) - corner_height(&(q - e), &params, j)) / (2.0 * h);
                worst_jacobian = worst_jacobian.max((fd - jac[k]).abs() / jac.norm());
            }
            let jd = corner_jacobian_dot(q, qdot, &params, j);
            let fd = (corner_jacobian(&(q + qdot * h), &params, j) - corner_jacobian(&(q - qdot * h), &params, j))
                / (2.0 * h);
            let scale = jd.norm().max(1e-3 * qdot.norm());
            worst_jacobian_rate = worst_jacobian_rate.max((fd - jd).norm() / scale);
        }
    }
    JacobianReport {
        configs: states.len(),
        small_angle_configs: states.iter().filter(|(q, _)| bend_angle(q[0], q[1], params.tendon_radius) < 1e-6).count(),
        worst_jacobian,
        worst_jacobian_rate,
    }
}

/// Plate-center positions by chaining segment transforms.
pub fn plate_positions(q: &DVector<f64>, model: &RobotModel) -> Vec<Vector3<f64>> {
    let mut t = Matrix4::identity();
    model
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            t *= segment_transform(&segment_slice(q, i), seg, 1.0);
            (t * Vector4::new(0.0, 0.0, 0.0, 1.0)).xyz()
        })
        .collect()
}

/// `M` without the diagonal floor `λ = 1e-9·tr(M₀)/3n`, i.e. the pure
/// point-mass matrix `M₀`.
pub fn point_mass_matrix(q: &DVector<f64>, model: &RobotModel) -> DMatrix<f64> {
    let m = mass_matrix(q, model).unwrap();
    let n = m.nrows();
    let floor = 1e-9 * m.trace() / (n as f64 * (1.0 + 1e-9));
    m - DMatrix::identity(n, n) * floor
}

/// Random states on an `n`-segment robot with an off-axis gravity.
pub fn dynamics_cases(n_segments: usize, seed: u64) -> (RobotModel, Vec<(DVector<f64>, DVector<f64>)>) {
    let model = super::model(n_segments, [0.3, -1.2, -9.81]);
    let mut rng = super::rng(seed);
    let states = (0..50)
        .map(|_| {
            let q = super::random_config(&mut rng, &model, 1.5);
            let qdot = super::random_vector(&mut rng, model.dof(), 0.5);
            (q, qdot)
        })
        .collect();
    (model, states)
}

/// `max |xᵀ(Ṁ - 2C)x| / (‖x‖²‖q̇‖)` with `Ṁ` from a fourth-order stencil.
pub fn worst_skew_ratio(model: &RobotModel, states: &[(DVector<f64>, DVector<f64>)], seed: u64) -> f64 {
    let mut rng = super::rng(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (q, qdot) in states {
        let m_at = |s: f64| point_mass_matrix(&(q + qdot * s), model);
        let m_dot = (m_at(-2.0 * h) - m_at(-h) * 8.0 + m_at(h) * 8.0 - m_at(2.0 * h)) / (12.0 * h);
        let n = &m_dot - coriolis_matrix(q, qdot, model).unwrap() * 2.0;
        for _ in 0..10 {
            let x = super::random_vector(&mut rng, model.dof(), 1.0);
            worst = worst.max(x.dot(&(&n * &x)).abs() / (x.norm_squared() * qdot.norm()));
        }
    }
    worst
}

/// `max ‖M q̈ + bias - τ‖ / (1 + ‖τ‖)` for random torques.
pub fn worst_forward_residual(model: &RobotModel, states: &[(DVector<f64>, DVector<f64>)], seed: u64) -> f64 {
    let mut rng = super::rng(seed);
    let mut worst: f64 = 0.0;
    for (q, qdot) in states {
        let tau = super::random_vector(&mut rng, model.dof(), 50.0);
        let qdd = forward_dynamics(q, qdot, &tau, model).unwrap();
        let t = DynamicsTerms::evaluate(q, qdot, model).unwrap();
        let residual = &t.mass * &qdd + t.bias(qdot) - &tau;
        worst = worst.max(residual.norm() / (1.0 + tau.norm()));
    }
    worst
}

/// Largest step-to-step rise of mechanical energy over damped, unforced,
/// weightless runs (0.3 s each, sampled every millisecond).
pub fn worst_energy_rise(seed: u64) -> f64 {
    let model = super::model(2, [0.0; 3]);
    let mut rng = super::rng(seed);
    let tau = DVector::zeros(6);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..3 {
        let mut q = super::random_config(&mut rng, &model, 0.8);
        let mut qdot = super::random_vector(&mut rng, 6, 0.3);
        let mut energy = mechanical_energy(&q, &qdot, &model).unwrap();
        for _ in 0..300 {
            (q, qdot) = integrate_interval(Integrator::Sdirk4, &q, &qdot, &tau, &model, 1e-3, 1e-4).unwrap();
            let next = mechanical_energy(&q, &qdot, &model).unwrap();
            worst = worst.max(next - energy);
            energy = next;
        }
    }
    worst
}

fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    (&h + h.transpose()) * 0.5
}

/// Random problem with up to 6 variables and 12 rows, plus a point that
/// satisfies every row when `feasible`. Some rows are duplicated or tight at
/// that point to exercise degenerate active sets.
pub fn random_problem_with_point(rng: &mut impl Rng, feasible: bool) -> (QpProblem, DVector<f64>) {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(0..=12);
    let h = random_spd(rng, n);
    let f = super::random_vector(rng, n, 3.0);
    let mut a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = super::random_vector(rng, n, 1.0);
    let mut lo = DVector::zeros(m);
    for i in 0..m {
        if i > 0 && rng.gen_bool(0.1) {
            let src = a.row(i - 1).into_owned();
            a.set_row(i, &(src * rng.gen_range(0.5..2.0)));
        }
        let slack = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
        lo[i] = a.row(i).dot(&x0.transpose()) - slack;
    }
    if !feasible {
        lo += DVector::from_fn(m, |_, _| rng.gen_range(0.0..3.0));
    }
    (QpProblem::new(h, f, a, lo).unwrap(), x0)
}

pub fn random_problem(rng: &mut impl Rng, feasible: bool) -> QpProblem {
    random_problem_with_point(rng, feasible).0
}

/// Minimum objective over every equality-constrained subproblem whose
/// solution is feasible. `None` when no subset yields a feasible point.
pub fn enumeration_oracle(problem: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let (a, lo) = problem.stacked_rows();
    let n = problem.n_vars();
    let m = a.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0 && lo[*i].is_finite()).collect();
        if rows.len() != mask.count_ones() as usize || rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&problem.f));
        for (c, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + c)] = -a[(i, j)];
                kkt[(n + c, j)] = a[(i, j)];
            }
            rhs[n + c] = lo[i];
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let feasible = (0..m)
            .all(|i| !lo[i].is_finite() || a.row(i).dot(&x.transpose()) - lo[i] >= -1e-9 * (1.0 + lo[i].abs()));
        if !feasible {
            continue;
        }
        let obj = problem.objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best
}

/// Largest violation among stationarity, primal feasibility, dual
/// feasibility and complementarity, computed from the problem data alone.
pub fn kkt_violation(problem: &QpProblem, sol: &QpSolution) -> f64 {
    let (a, lo) = problem.stacked_rows();
    let x = &sol.x;
    let mu = &sol.multipliers;
    assert_eq!(mu.len(), a.nrows());
    let mut worst = (&problem.h * x + &problem.f - a.transpose() * mu).amax();
    for i in 0..a.nrows() {
        if !lo[i].is_finite() {
            continue;
        }
        let slack = a.row(i).dot(&x.transpose()) - lo[i];
        worst = worst.max(-slack).max(-mu[i]).max((mu[i] * slack).abs());
    }
    worst
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QpReport {
    pub problems: usize,
    pub optimal: usize,
    pub infeasible: usize,
    /// Problems where the solver's status disagrees with the oracle.
    pub status_mismatches: usize,
    /// max |f(x) - f*| / max(1, |f*|)
    pub worst_objective_gap: f64,
    pub worst_kkt: f64,
}

/// Every tenth problem has its bounds pushed up and is usually infeasible.
pub fn qp_report(seed: u64, count: usize) -> QpReport {
    let mut rng = super::rng(seed);
    let mut report = QpReport { problems: count, ..QpReport::default() };
    for k in 0..count {
        let problem = random_problem(&mut rng, k % 10 != 0);
        let sol = solve_qp(&problem);
        match enumeration_oracle(&problem) {
            Some((_, best)) => {
                if sol.status != QpStatus::Optimal {
                    report.status_mismatches += 1;
                    continue;
                }
                report.optimal += 1;
                let gap = (problem.objective(&sol.x) - best).abs() / best.abs().max(1.0);
                report.worst_objective_gap = report.worst_objective_gap.max(gap);
                report.worst_kkt = report.worst_kkt.max(kkt_violation(&problem, &sol));
            }
            None => {
                report.infeasible += 1;
                if sol.status != QpStatus::Infeasible {
                    report.status_mismatches += 1;
                }
            }
        }
    }
    report
}
