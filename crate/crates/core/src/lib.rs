//! Self-contact safety filtering for serial soft-rigid manipulators.
//!
//! Each soft segment follows piecewise-constant-curvature kinematics with
//! coordinates `[Δx, Δy, δL]`. The heights of the corners of every segment's
//! top plate above its base plate define barrier functions of relative
//! degree two; a PD+ nominal controller is filtered through a small QP that
//! keeps those heights above a safety margin.
//!
//! Modules, bottom up:
//! - [`kinematics`]: bend angle, corner heights and their Jacobians, segment
//!   transforms, stacked barrier rows.
//! - [`dynamics`]: lumped-mass manipulator dynamics and forward dynamics.
//! - [`control`]: PD+ law, barrier-constraint rows, ψ-sequences.
//! - [`qp`]: dense dual active-set QP solver with a slack-relaxed fallback.
//! - [`integrate`]: fixed-step integration under a held torque (L-stable
//!   SDIRK by default, classical RK4 on request).
//! - [`sim`]: zero-order-hold closed-loop simulation and trajectory logs.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod integrate;
mod jet;
pub mod kinematics;
pub mod qp;
pub mod sim;
mod smooth;

pub use error::Error;
