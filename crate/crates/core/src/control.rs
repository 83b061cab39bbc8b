//! PD+ nominal control and the relative-degree-2 barrier rows that the
//! safety filter enforces.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DynamicsTerms, RobotModel};
use crate::error::Error;
use crate::kinematics::{check_len, stack_constraints, ConstraintSet};

/// Default class-K coefficient `p` (1/s).
pub const DEFAULT_CLASS_K: f64 = 5.0;

/// Diagonal proportional and derivative gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PdPlusGains {
    kp: DVector<f64>,
    kd: DVector<f64>,
}

impl PdPlusGains {
    /// Both diagonals must be strictly positive and of equal length.
    pub fn new(kp: DVector<f64>, kd: DVector<f64>) -> Result<Self, Error> {
        if kp.len() != kd.len() {
            return Err(Error::Dimension {
                what: "Kd diagonal",
                expected: kp.len(),
                actual: kd.len(),
            });
        }
        for (name, diag) in [("Kp", &kp), ("Kd", &kd)] {
            if let Some(v) = diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} entries must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self { kp, kd })
    }

    pub fn uniform(dof: usize, kp: f64, kd: f64) -> Result<Self, Error> {
        Self::new(DVector::from_element(dof, kp), DVector::from_element(dof, kd))
    }

    /// Zero feedback: the law reduces to model feedforward. Not a stabilizing
    /// gain set, so scenarios reject it.
    pub fn feedforward_only(dof: usize) -> Self {
        Self {
            kp: DVector::zeros(dof),
            kd: DVector::zeros(dof),
        }
    }

    pub fn kp(&self) -> &DVector<f64> {
        &self.kp
    }

    pub fn kd(&self) -> &DVector<f64> {
        &self.kd
    }

    pub fn dof(&self) -> usize {
        self.kp.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub q: DVector<f64>,
}

/// Desired `(q̄, q̄̇, q̄̈)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceTrajectory {
    SetPoint(DVector<f64>),
    /// Rest-to-rest cubic blends between consecutive waypoints; holds the
    /// first waypoint before its time and the last one after.
    Cubic(Vec<Waypoint>),
}

impl ReferenceTrajectory {
    pub fn cubic(waypoints: Vec<Waypoint>) -> Result<Self, Error> {
        let first = waypoints
            .first()
            .ok_or_else(|| Error::InvalidParameter("cubic reference needs at least one waypoint".into()))?;
        let dof = first.q.len();
        for w in &waypoints {
            check_len("waypoint", &w.q, dof)?;
            if !w.t.is_finite() || w.q.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("waypoint"));
            }
        }
        if waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidParameter("waypoint times must be strictly increasing".into()));
        }
        Ok(Self::Cubic(waypoints))
    }

    pub fn dof(&self) -> usize {
        match self {
            Self::SetPoint(q) => q.len(),
            Self::Cubic(w) => w[0].q.len(),
        }
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        let hold = |q: &DVector<f64>| ReferenceSample {
            q: q.clone(),
            qdot: DVector::zeros(q.len()),
            qddot: DVector::zeros(q.len()),
        };
        match self {
            Self::SetPoint(q) => hold(q),
            Self::Cubic(w) => {
                let last = &w[w.len() - 1];
                if t <= w[0].t {
                    return hold(&w[0].q);
                }
                if t >= last.t {
                    return hold(&last.q);
                }
                let k = w.partition_point(|p| p.t <= t) - 1;
                let (a, b) = (&w[k], &w[k + 1]);
                let span = b.t - a.t;
                let s = (t - a.t) / span;
                let h = s * s * (3.0 - 2.0 * s);
                let hd = 6.0 * s * (1.0 - s) / span;
                let hdd = (6.0 - 12.0 * s) / (span * span);
                let delta = &b.q - &a.q;
                ReferenceSample {
                    q: &a.q + &delta * h,
                    qdot: &delta * hd,
                    qddot: &delta * hdd,
                }
            }
        }
    }
}

/// PD+ law evaluated with dynamics terms already computed at `(q, q̇)`:
/// `M q̄̈ + C q̇ + G + K q̄ + D q̄̇ + Kp (q̄ - q) + Kd (q̄̇ - q̇)`.
pub fn pd_plus_from_terms(
    terms: &DynamicsTerms,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    reference: &ReferenceSample,
    gains: &PdPlusGains,
    model: &RobotModel,
) -> DVector<f64> {
    let k = model.stiffness_diagonal();
    let d = model.damping_diagonal();
    &terms.mass * &reference.qddot
        + &terms.coriolis * qdot
        + &terms.gravity
        + k.component_mul(&reference.q)
        + d.component_mul(&reference.qdot)
        + gains.kp.component_mul(&(&reference.q - q))
        + gains.kd.component_mul(&(&reference.qdot - qdot))
}

pub fn pd_plus(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    t: f64,
    reference: &ReferenceTrajectory,
    gains: &PdPlusGains,
    model: &RobotModel,
) -> Result<DVector<f64>, Error> {
    check_len("reference", &DVector::zeros(reference.dof()), model.dof())?;
    check_len("Kp diagonal", gains.kp(), model.dof())?;
    let terms = DynamicsTerms::evaluate(q, qdot, model)?;
    Ok(pd_plus_from_terms(&terms, q, qdot, &reference.sample(t), gains, model))
}

/// Barrier rows in the form `A τ ≥ lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct HocbfRows {
    /// `J M⁻¹`
    pub a: DMatrix<f64>,
    pub lo: DVector<f64>,
}

impl HocbfRows {
    /// `ψ₂ = b̈ + 2p ḃ + p² b` per row for a given input, i.e. `A τ - lo`.
    pub fn psi2(&self, tau: &DVector<f64>) -> DVector<f64> {
        &self.a * tau - &self.lo
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }
}

/// `p² b + 2p J q̇ + J M⁻¹(τ - C q̇ - G - K q - D q̇) + J̇ q̇ ≥ 0`, rearranged
/// to `J M⁻¹ τ ≥ lo`.
pub fn hocbf_rows(
    qdot: &DVector<f64>,
    terms: &DynamicsTerms,
    cons: &ConstraintSet,
    p: f64,
) -> Result<HocbfRows, Error> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidParameter(format!("class-K coefficient must be > 0, got {p}")));
    }
    // M symmetric: J M⁻¹ = (M⁻¹ Jᵀ)ᵀ
    let a = terms.solve_mass_matrix(&cons.jac.transpose()).transpose();
    let drift = &a * terms.bias(qdot);
    let lo = -(&cons.b * (p * p) + cons.rate(qdot) * (2.0 * p) + &cons.jac_dot * qdot - drift);
    if a.iter().chain(lo.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("barrier rows"));
    }
    Ok(HocbfRows { a, lo })
}

/// The ψ-sequence of a barrier with linear class-K functions `α(s) = p s`.
///
/// `derivatives` holds `[b, ḃ, b̈, ...]` and must have at least `order + 1`
/// entries. Returns `[ψ_0, ..., ψ_order]`.
pub fn psi_sequence(derivatives: &[f64], p: f64, order: usize) -> Result<Vec<f64>, Error> {
    if !(1..=2).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    if derivatives.len() < order + 1 {
        return Err(Error::Dimension {
            what: "barrier derivatives",
            expected: order + 1,
            actual: derivatives.len(),
        });
    }
    // ψ_i = (d/dt + p) ψ_{i-1}, tracked as coefficients on b, ḃ, b̈, ...
    let mut coeffs = vec![1.0];
    let mut out = vec![derivatives[0]];
    for _ in 0..order {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] += p * c;
        }
        out.push(next.iter().zip(derivatives).map(|(c, d)| c * d).sum());
        coeffs = next;
    }
    Ok(out)
}

/// Checks `ψ₀ > 0` and `ψ₁ > 0` on every barrier row at the initial state.
pub fn check_admissible(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    model: &RobotModel,
    p: f64,
) -> Result<ConstraintSet, Error> {
    let cons = stack_constraints(q, qdot, model)?;
    let rate = cons.rate(qdot);
    for row in 0..cons.len() {
        let psi0 = cons.b[row];
        let psi1 = rate[row] + p * psi0;
        if !(psi0 > 0.0 && psi1 > 0.0) {
            return Err(Error::Inadmissible { row, psi0, psi1 });
        }
    }
    Ok(cons)
}
