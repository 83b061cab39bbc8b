//! Manipulator dynamics `M(q)q̈ + C(q,q̇)q̇ + G(q) + Kq + Dq̇ = τ`.
//!
//! Each segment's mass is lumped at the center of its top plate. With point
//! masses the Christoffel-symbol Coriolis matrix reduces to
//! `C = Σ m_i J_iᵀ J̇_i`, where `J_i` is the positional Jacobian of mass `i`,
//! so `Ṁ - 2C = Σ m_i (J̇_iᵀ J_i - J_iᵀ J̇_i)` is skew-symmetric exactly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3xX, Matrix4, Vector3, Vector4};

use crate::error::Error;
use crate::kinematics::{check_len, segment_slice, transform_derivs, SegmentParams};

/// Relative size of the diagonal floor added to `M` before factorization.
const MASS_REGULARIZATION: f64 = 1e-9;

/// Standard gravity along the base `-z` axis.
pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

/// Serial chain of PCC segments plus the gravity vector in the base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub segments: Vec<SegmentParams>,
    pub gravity: Vector3<f64>,
}

impl RobotModel {
    pub fn new(segments: Vec<SegmentParams>, gravity: Vector3<f64>) -> Result<Self, Error> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("robot needs at least one segment".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::InvalidParameter(format!("segment {i}: {e}")))?;
        }
        if gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gravity"));
        }
        Ok(Self { segments, gravity })
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    /// Number of generalized coordinates, `3n`.
    pub fn dof(&self) -> usize {
        3 * self.segments.len()
    }

    /// Diagonal of `K`: `κθ/d²` on the bending coordinates, `κL` on extension.
    pub fn stiffness_diagonal(&self) -> DVector<f64> {
        self.per_coordinate(|s| {
            let bend = s.bend_stiffness / (s.tendon_radius * s.tendon_radius);
            [bend, bend, s.axial_stiffness]
        })
    }

    /// Diagonal of `D`: `βθ/d²` on the bending coordinates, `βL` on extension.
    pub fn damping_diagonal(&self) -> DVector<f64> {
        self.per_coordinate(|s| {
            let bend = s.bend_damping / (s.tendon_radius * s.tendon_radius);
            [bend, bend, s.axial_damping]
        })
    }

    fn per_coordinate(&self, f: impl Fn(&SegmentParams) -> [f64; 3]) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.segments.iter().flat_map(f))
    }
}

/// Position, Jacobian, and Jacobian rate of one lumped mass.
#[derive(Debug, Clone)]
pub struct PointKinematics {
    pub position: Vector3<f64>,
    pub jac: Matrix3xX<f64>,
    pub jac_dot: Matrix3xX<f64>,
}

/// Kinematics of every top-plate center along the chain, in the base frame.
pub fn mass_point_kinematics(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    model: &RobotModel,
) -> Vec<PointKinematics> {
    let n = model.n_segments();
    let dof = model.dof();
    let derivs: Vec<_> = (0..n)
        .map(|i| transform_derivs(&segment_slice(q, i), &segment_slice(qdot, i), &model.segments[i]))
        .collect();

    // prefix[l] = T_1 ... T_l and its time derivative
    let mut prefix: Vec<Matrix4<f64>> = Vec::with_capacity(n + 1);
    let mut prefix_dot: Vec<Matrix4<f64>> = Vec::with_capacity(n + 1);
    prefix.push(Matrix4::identity());
    prefix_dot.push(Matrix4::zeros());
    for (l, d) in derivs.iter().enumerate() {
        prefix.push(prefix[l] * d.t);
        prefix_dot.push(prefix_dot[l] * d.t + prefix[l] * d.t_dot);
    }

    let origin = Vector4::new(0.0, 0.0, 0.0, 1.0);
    (0..n)
        .map(|i| {
            let mut jac: Matrix3xX<f64> = Matrix3xX::zeros(dof);
            let mut jac_dot: Matrix3xX<f64> = Matrix3xX::zeros(dof);
            // suffix point T_{j+1} ... T_i o, walking j downward
            let mut s = origin;
            let mut s_dot: Vector4<f64> = Vector4::zeros();
            for j in (0..=i).rev() {
                let d = &derivs[j];
                for a in 0..3 {
                    let col = prefix[j] * d.partial[a] * s;
                    let col_dot = prefix_dot[j] * d.partial[a] * s
                        + prefix[j] * d.partial_dot[a] * s
                        + prefix[j] * d.partial[a] * s_dot;
                    jac.set_column(3 * j + a, &col.xyz());
                    jac_dot.set_column(3 * j + a, &col_dot.xyz());
                }
                s_dot = d.t_dot * s + d.t * s_dot;
                s = d.t * s;
            }
            PointKinematics {
                position: (prefix[i + 1] * origin).xyz(),
                jac,
                jac_dot,
            }
        })
        .collect()
}

fn symmetric_mass(points: &[PointKinematics], model: &RobotModel) -> DMatrix<f64> {
    let dof = model.dof();
    let mut m = DMatrix::zeros(dof, dof);
    for (p, seg) in points.iter().zip(&model.segments) {
        m += p.jac.transpose() * &p.jac * seg.mass;
    }
    let floor = MASS_REGULARIZATION * m.trace() / dof as f64;
    for r in 0..dof {
        m[(r, r)] += floor;
        for c in 0..r {
            m[(r, c)] = m[(c, r)];
        }
    }
    m
}

/// Regularized mass matrix `Σ m_i J_iᵀJ_i + λI`, `λ = 1e-9·tr/3n`. Exactly
/// symmetric.
pub fn mass_matrix(q: &DVector<f64>, model: &RobotModel) -> Result<DMatrix<f64>, Error> {
    check_len("configuration", q, model.dof())?;
    let points = mass_point_kinematics(q, &DVector::zeros(model.dof()), model);
    let m = symmetric_mass(&points, model);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mass matrix"));
    }
    Ok(m)
}

pub fn coriolis_matrix(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    model: &RobotModel,
) -> Result<DMatrix<f64>, Error> {
    Ok(DynamicsTerms::evaluate(q, qdot, model)?.coriolis)
}

/// `G = -Σ m_i J_iᵀ g`.
pub fn gravity_vector(q: &DVector<f64>, model: &RobotModel) -> Result<DVector<f64>, Error> {
    check_len("configuration", q, model.dof())?;
    let points = mass_point_kinematics(q, &DVector::zeros(model.dof()), model);
    Ok(gravity_from_points(&points, model))
}

fn gravity_from_points(points: &[PointKinematics], model: &RobotModel) -> DVector<f64> {
    let mut g = DVector::zeros(model.dof());
    for (p, seg) in points.iter().zip(&model.segments) {
        g -= p.jac.transpose() * model.gravity * seg.mass;
    }
    g
}

pub fn stiffness_matrix(model: &RobotModel) -> DMatrix<f64> {
    DMatrix::from_diagonal(&model.stiffness_diagonal())
}

pub fn damping_matrix(model: &RobotModel) -> DMatrix<f64> {
    DMatrix::from_diagonal(&model.damping_diagonal())
}

/// `K q`.
pub fn elastic_force(q: &DVector<f64>, model: &RobotModel) -> Result<DVector<f64>, Error> {
    check_len("configuration", q, model.dof())?;
    Ok(model.stiffness_diagonal().component_mul(q))
}

/// Every dynamics term at one state, with the mass-matrix factorization.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
    pub gravity: DVector<f64>,
    /// `K q`
    pub elastic: DVector<f64>,
    /// `D q̇`
    pub damping: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl DynamicsTerms {
    pub fn evaluate(q: &DVector<f64>, qdot: &DVector<f64>, model: &RobotModel) -> Result<Self, Error> {
        check_len("configuration", q, model.dof())?;
        check_len("configuration rate", qdot, model.dof())?;
        let points = mass_point_kinematics(q, qdot, model);
        let mass = symmetric_mass(&points, model);
        let dof = model.dof();
        let mut coriolis = DMatrix::zeros(dof, dof);
        for (p, seg) in points.iter().zip(&model.segments) {
            coriolis += p.jac.transpose() * &p.jac_dot * seg.mass;
        }
        let gravity = gravity_from_points(&points, model);
        if mass.iter().chain(coriolis.iter()).chain(gravity.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dynamics terms"));
        }
        let chol = Cholesky::new(mass.clone()).ok_or(Error::Factorization)?;
        Ok(Self {
            elastic: model.stiffness_diagonal().component_mul(q),
            damping: model.damping_diagonal().component_mul(qdot),
            mass,
            coriolis,
            gravity,
            chol,
        })
    }

    /// `C q̇ + G + K q + D q̇`.
    pub fn bias(&self, qdot: &DVector<f64>) -> DVector<f64> {
        &self.coriolis * qdot + &self.gravity + &self.elastic + &self.damping
    }

    /// `M⁻¹ rhs` via the Cholesky factor.
    pub fn solve_mass(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `M⁻¹ rhs` for a matrix right-hand side.
    pub fn solve_mass_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// `q̈ = M⁻¹(τ - C q̇ - G - K q - D q̇)`.
    pub fn acceleration(&self, qdot: &DVector<f64>, tau: &DVector<f64>) -> DVector<f64> {
        self.solve_mass(&(tau - self.bias(qdot)))
    }
}

pub fn forward_dynamics(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    tau: &DVector<f64>,
    model: &RobotModel,
) -> Result<DVector<f64>, Error> {
    check_len("torque", tau, model.dof())?;
    let terms = DynamicsTerms::evaluate(q, qdot, model)?;
    let qddot = terms.acceleration(qdot, tau);
    if qddot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("acceleration"));
    }
    Ok(qddot)
}

/// `½q̇ᵀMq̇ + ½qᵀKq`.
pub fn mechanical_energy(q: &DVector<f64>, qdot: &DVector<f64>, model: &RobotModel) -> Result<f64, Error> {
    let m = mass_matrix(q, model)?;
    let k = model.stiffness_diagonal();
    Ok(0.5 * qdot.dot(&(m * qdot)) + 0.5 * q.dot(&k.component_mul(q)))
}
