//! Piecewise-constant-curvature segment geometry.
//!
//! Each segment is described by `q_i = [Δx, Δy, δL]`. The bend angle is
//! `θ = |Δ| / d`, the arc length is `L0 + δL`, and the segment bends toward
//! the direction `(Δx, Δy) / |Δ|` of its base frame. All quantities are
//! written in terms of `sin θ / θ` and `(1 - cos θ) / θ²` (see
//! [`crate::smooth`]), which keeps them smooth through the straight
//! configuration.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, RowVector3, Vector3};

use crate::dynamics::RobotModel;
use crate::error::Error;
use crate::jet::Jet;
use crate::smooth;

/// Number of plate corners per segment.
pub const CORNERS: usize = 6;

/// Corner angles of a regular hexagon, `φ_j = j·π/3`.
pub fn hexagon_corner_angles() -> [f64; CORNERS] {
    std::array::from_fn(|j| j as f64 * PI / 3.0)
}

/// Physical parameters of one soft segment and its top plate. SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentParams {
    /// Uncompressed length `L0` (m).
    pub rest_length: f64,
    /// Center-to-tendon distance `d` (m).
    pub tendon_radius: f64,
    /// Center-to-plate-corner distance `r` (m).
    pub corner_radius: f64,
    /// Lumped segment mass (kg).
    pub mass: f64,
    /// Bending stiffness κθ (N·m/rad).
    pub bend_stiffness: f64,
    /// Axial stiffness κL (N/m).
    pub axial_stiffness: f64,
    /// Bending damping βθ (N·m·s/rad).
    pub bend_damping: f64,
    /// Axial damping βL (N·s/m).
    pub axial_damping: f64,
    /// Plate corner angles φ_j (rad), each in `[0, 2π)`.
    pub corner_angles: [f64; CORNERS],
    /// Safety margin ε (m) subtracted from each corner height.
    pub margin: f64,
}

impl Default for SegmentParams {
    /// The two-segment demonstration module: 10 cm long, 4 cm tendon radius,
    /// 5 cm hexagonal plate, 150 g.
    fn default() -> Self {
        Self {
            rest_length: 0.1,
            tendon_radius: 0.04,
            corner_radius: 0.05,
            mass: 0.15,
            bend_stiffness: 10.0,
            axial_stiffness: 10.0,
            bend_damping: 5.0,
            axial_damping: 5.0,
            corner_angles: hexagon_corner_angles(),
            margin: 0.005,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("rest_length", self.rest_length),
            ("tendon_radius", self.tendon_radius),
            ("corner_radius", self.corner_radius),
            ("mass", self.mass),
            ("margin", self.margin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        let non_negative = [
            ("bend_stiffness", self.bend_stiffness),
            ("axial_stiffness", self.axial_stiffness),
            ("bend_damping", self.bend_damping),
            ("axial_damping", self.axial_damping),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (j, &phi) in self.corner_angles.iter().enumerate() {
            if !(0.0..2.0 * PI).contains(&phi) {
                return Err(Error::InvalidParameter(format!(
                    "corner_angles[{j}] must lie in [0, 2π), got {phi}"
                )));
            }
        }
        Ok(())
    }

    /// Smallest corner height over all plate directions, `L0 + δL - (r/d)|Δ|`,
    /// before the `sin θ / θ` factor. Positive on the valid domain.
    pub fn height_margin(&self, q: &Vector3<f64>) -> f64 {
        let delta = q[0].hypot(q[1]);
        self.rest_length + q[2] - self.corner_radius / self.tendon_radius * delta
    }
}

/// `θ = sqrt(Δx² + Δy²) / d`.
pub fn bend_angle(delta_x: f64, delta_y: f64, d: f64) -> f64 {
    delta_x.hypot(delta_y) / d
}

/// Shared pieces of the corner-height expression `c = S(u)·a` where
/// `u = θ²` and `a = L0 + δL - (r/d)(Δx cos φ + Δy sin φ)`.
struct CornerTerms {
    s: smooth::Taylor2,
    a: f64,
    grad_u: Vector3<f64>,
    grad_a: Vector3<f64>,
    /// Diagonal of ∂²u/∂q².
    hess_u: Vector3<f64>,
}

fn corner_terms(q: &Vector3<f64>, params: &SegmentParams, j: usize) -> CornerTerms {
    assert!(j < CORNERS, "corner index {j} out of range");
    let d = params.tendon_radius;
    let ratio = params.corner_radius / d;
    let (sin_phi, cos_phi) = params.corner_angles[j].sin_cos();
    let u = (q[0] * q[0] + q[1] * q[1]) / (d * d);
    CornerTerms {
        s: smooth::sinc(u),
        a: params.rest_length + q[2] - ratio * (q[0] * cos_phi + q[1] * sin_phi),
        grad_u: Vector3::new(2.0 * q[0] / (d * d), 2.0 * q[1] / (d * d), 0.0),
        grad_a: Vector3::new(-ratio * cos_phi, -ratio * sin_phi, 1.0),
        hess_u: Vector3::new(2.0 / (d * d), 2.0 / (d * d), 0.0),
    }
}

/// Height of corner `j` of the segment's top plate above its base plate.
pub fn corner_height(q: &Vector3<f64>, params: &SegmentParams, j: usize) -> f64 {
    let t = corner_terms(q, params, j);
    t.s.value * t.a
}

/// `∂c_j / ∂q_i`.
pub fn corner_jacobian(q: &Vector3<f64>, params: &SegmentParams, j: usize) -> RowVector3<f64> {
    let t = corner_terms(q, params, j);
    (t.grad_u * (t.s.d1 * t.a) + t.grad_a * t.s.value).transpose()
}

fn corner_hessian(t: &CornerTerms) -> Matrix3<f64> {
    let cross = t.grad_u * t.grad_a.transpose();
    t.grad_u * t.grad_u.transpose() * (t.s.d2 * t.a)
        + (cross + cross.transpose()) * t.s.d1
        + Matrix3::from_diagonal(&t.hess_u) * (t.s.d1 * t.a)
}

/// `d/dt ∂c_j/∂q_i = (∂²c_j/∂q_i²) q̇_i`.
pub fn corner_jacobian_dot(
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    params: &SegmentParams,
    j: usize,
) -> RowVector3<f64> {
    let t = corner_terms(q, params, j);
    (corner_hessian(&t) * qdot).transpose()
}

/// Rotation and translation entries of a segment transform as jets.
fn transform_jets(q: &Vector3<f64>, qdot: &Vector3<f64>, params: &SegmentParams, s: f64) -> [[Jet; 4]; 3] {
    let d = params.tendon_radius;
    let vx = Jet::coordinate(0, q[0], qdot[0], s / d);
    let vy = Jet::coordinate(1, q[1], qdot[1], s / d);
    let len = Jet::coordinate(2, q[2], qdot[2], s) + Jet::constant(s * params.rest_length);
    let u = vx * vx + vy * vy;
    let sinc = u.compose(smooth::sinc(u.val));
    let cosc = u.compose(smooth::cosc(u.val));
    let one = Jet::constant(1.0);
    let cxy = -(cosc * vx * vy);
    [
        [one - cosc * vx * vx, cxy, sinc * vx, len * cosc * vx],
        [cxy, one - cosc * vy * vy, sinc * vy, len * cosc * vy],
        [-(sinc * vx), -(sinc * vy), one - cosc * u, len * sinc],
    ]
}

/// Homogeneous transform from the segment base to the cross-section at arc
/// fraction `s ∈ [0, 1]` (bend angle `s·θ`, arc length `s·(L0 + δL)`).
pub fn segment_transform(q: &Vector3<f64>, params: &SegmentParams, s: f64) -> Matrix4<f64> {
    let jets = transform_jets(q, &Vector3::zeros(), params, s);
    let mut t = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            t[(r, c)] = jets[r][c].val;
        }
    }
    t
}

/// A segment's top-plate transform with its coordinate derivatives and
/// their time derivatives along `q̇`.
#[derive(Debug, Clone)]
pub(crate) struct TransformDerivs {
    pub t: Matrix4<f64>,
    pub t_dot: Matrix4<f64>,
    pub partial: [Matrix4<f64>; 3],
    pub partial_dot: [Matrix4<f64>; 3],
}

pub(crate) fn transform_derivs(
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    params: &SegmentParams,
) -> TransformDerivs {
    let jets = transform_jets(q, qdot, params, 1.0);
    let mut out = TransformDerivs {
        t: Matrix4::identity(),
        t_dot: Matrix4::zeros(),
        partial: [Matrix4::zeros(); 3],
        partial_dot: [Matrix4::zeros(); 3],
    };
    for r in 0..3 {
        for c in 0..4 {
            let jet = &jets[r][c];
            out.t[(r, c)] = jet.val;
            out.t_dot[(r, c)] = jet.dot;
            for k in 0..3 {
                out.partial[k][(r, c)] = jet.grad[k];
                out.partial_dot[k][(r, c)] = jet.grad_dot[k];
            }
        }
    }
    out
}

/// Generalized coordinates `q ∈ R^{3n}` on the valid domain
/// (`L0 + δL - (r/d)|Δ| > 0` for every segment).
#[derive(Debug, Clone, PartialEq)]
pub struct Config(DVector<f64>);

impl Config {
    pub fn new(q: DVector<f64>, model: &RobotModel) -> Result<Self, Error> {
        check_len("configuration", &q, model.dof())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("configuration"));
        }
        for (i, seg) in model.segments.iter().enumerate() {
            let margin = seg.height_margin(&segment_slice(&q, i));
            if margin <= 0.0 {
                return Err(Error::InvalidConfig { segment: i, margin });
            }
        }
        Ok(Self(q))
    }

    pub fn zeros(model: &RobotModel) -> Self {
        Self(DVector::zeros(model.dof()))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Generalized velocities `q̇`, same layout as [`Config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigRate(DVector<f64>);

impl ConfigRate {
    pub fn new(qdot: DVector<f64>, model: &RobotModel) -> Result<Self, Error> {
        check_len("configuration rate", &qdot, model.dof())?;
        if qdot.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("configuration rate"));
        }
        Ok(Self(qdot))
    }

    pub fn zeros(model: &RobotModel) -> Self {
        Self(DVector::zeros(model.dof()))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

pub(crate) fn check_len(what: &'static str, v: &DVector<f64>, expected: usize) -> Result<(), Error> {
    if v.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

/// Segment `i`'s block `[Δx, Δy, δL]` of a stacked coordinate vector.
pub fn segment_slice(q: &DVector<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(q[3 * i], q[3 * i + 1], q[3 * i + 2])
}

/// Stacked barrier values and their derivatives, one row per plate corner.
/// Row `6i + j` is corner `j` of segment `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// `b_j = c_j - ε` (m).
    pub b: DVector<f64>,
    /// `∂b/∂q`, `6n × 3n`, block diagonal.
    pub jac: DMatrix<f64>,
    /// `d/dt ∂b/∂q`, same shape as `jac`.
    pub jac_dot: DMatrix<f64>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// `ḃ = J q̇`.
    pub fn rate(&self, qdot: &DVector<f64>) -> DVector<f64> {
        &self.jac * qdot
    }
}

pub fn stack_constraints(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    model: &RobotModel,
) -> Result<ConstraintSet, Error> {
    let dof = model.dof();
    check_len("configuration", q, dof)?;
    check_len("configuration rate", qdot, dof)?;
    let rows = CORNERS * model.segments.len();
    let mut set = ConstraintSet {
        b: DVector::zeros(rows),
        jac: DMatrix::zeros(rows, dof),
        jac_dot: DMatrix::zeros(rows, dof),
    };
    for (i, seg) in model.segments.iter().enumerate() {
        let qi = segment_slice(q, i);
        let qdi = segment_slice(qdot, i);
        for j in 0..CORNERS {
            let row = CORNERS * i + j;
            let terms = corner_terms(&qi, seg, j);
            set.b[row] = terms.s.value * terms.a - seg.margin;
            let jac = terms.grad_u * (terms.s.d1 * terms.a) + terms.grad_a * terms.s.value;
            let jac_dot = corner_hessian(&terms) * qdi;
            for k in 0..3 {
                set.jac[(row, 3 * i + k)] = jac[k];
                set.jac_dot[(row, 3 * i + k)] = jac_dot[k];
            }
        }
    }
    Ok(set)
}
