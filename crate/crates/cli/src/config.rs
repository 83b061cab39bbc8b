//! TOML scenario files. All quantities are SI; angles are in radians.
//!
//! ```toml
//! [robot]
//! gravity = [0.0, 0.0, -9.81]          # m/s², base frame
//!
//! [[robot.segments]]
//! rest_length = 0.1                    # L0, m
//! tendon_radius = 0.04                 # d, m
//! corner_radius = 0.05                 # r, m
//! mass = 0.15                          # kg
//! bend_stiffness = 10.0                # N·m/rad
//! axial_stiffness = 10.0               # N/m
//! bend_damping = 5.0                   # N·m·s/rad
//! axial_damping = 5.0                  # N·s/m
//! margin = 0.005                       # ε, m
//! # corner_angles = [...]              # rad, default: regular hexagon
//!
//! [controller]
//! mode = "cbf_qp"                      # or "pd_plus"
//! kp = 5.0                             # scalar or one value per coordinate
//! kd = 1.0
//! p = 5.0                              # class-K coefficient, 1/s
//! # epsilon = 0.005                    # overrides every segment margin
//! # torque_min = [...]; torque_max = [...]
//!
//! [reference]
//! set_point = [0.08, 0.0, -0.05, 0.0, -0.06, -0.07]
//! # or: waypoints = [{ t = 0.0, q = [...] }, { t = 2.0, q = [...] }]
//!
//! [sim]
//! t_final = 10.0                       # s
//! control_dt = 1e-3                    # s
//! integrator_dt = 1e-4                 # s, default control_dt / 10
//! integrator = "sdirk4"                # or "rk4"
//! # q0 = [...]; qdot0 = [...]          # default: straight, at rest
//!
//! [output]
//! csv = "run.csv"                      # optional, --out wins
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use pcc_cbf::control::{PdPlusGains, ReferenceTrajectory, Waypoint, DEFAULT_CLASS_K};
use pcc_cbf::dynamics::RobotModel;
use pcc_cbf::integrate::Integrator;
use pcc_cbf::kinematics::{hexagon_corner_angles, SegmentParams, CORNERS};
use pcc_cbf::sim::{ControllerMode, Scenario};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub robot: RobotSection,
    pub controller: ControllerSection,
    pub reference: ReferenceSection,
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    pub gravity: [f64; 3],
    pub segments: Vec<SegmentSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub rest_length: f64,
    pub tendon_radius: f64,
    pub corner_radius: f64,
    pub mass: f64,
    pub bend_stiffness: f64,
    pub axial_stiffness: f64,
    pub bend_damping: f64,
    pub axial_damping: f64,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_angles: Option<[f64; CORNERS]>,
}

/// A gain given once for every coordinate or per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl Gain {
    fn expand(&self, dof: usize, key: &str) -> Result<DVector<f64>, CliError> {
        match self {
            Self::Uniform(v) => Ok(DVector::from_element(dof, *v)),
            Self::PerCoordinate(v) => vector(v, dof, key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub mode: String,
    pub kp: Gain,
    pub kd: Gain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_max: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<WaypointSection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSection {
    pub t: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_final: f64,
    pub control_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdot0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

/// Command-line replacements applied on top of a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<ControllerMode>,
    pub t_final: Option<f64>,
    /// New control period; the integrator step keeps its ratio to it.
    pub control_dt: Option<f64>,
    pub p: Option<f64>,
}

fn vector(values: &[f64], dof: usize, key: &str) -> Result<DVector<f64>, CliError> {
    if values.len() != dof {
        return Err(CliError::Config(format!("{key}: expected {dof} values, got {}", values.len())));
    }
    Ok(DVector::from_column_slice(values))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("scenario file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(mode) = overrides.mode {
            self.controller.mode = mode.as_str().to_string();
        }
        if let Some(t) = overrides.t_final {
            self.sim.t_final = t;
        }
        if let Some(dt) = overrides.control_dt {
            let ratio = self.sim.integrator_dt.map_or(0.1, |h| h / self.sim.control_dt);
            self.sim.control_dt = dt;
            self.sim.integrator_dt = Some(dt * ratio);
        }
        if let Some(p) = overrides.p {
            self.controller.p = Some(p);
        }
    }

    /// Builds the simulation scenario. Structural problems (lengths, names,
    /// conflicting keys) are reported with the key path; numeric ranges are
    /// left to the core validators.
    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let mut segments = Vec::with_capacity(self.robot.segments.len());
        for s in &self.robot.segments {
            segments.push(SegmentParams {
                rest_length: s.rest_length,
                tendon_radius: s.tendon_radius,
                corner_radius: s.corner_radius,
                mass: s.mass,
                bend_stiffness: s.bend_stiffness,
                axial_stiffness: s.axial_stiffness,
                bend_damping: s.bend_damping,
                axial_damping: s.axial_damping,
                corner_angles: s.corner_angles.unwrap_or_else(hexagon_corner_angles),
                margin: self.controller.epsilon.unwrap_or(s.margin),
            });
        }
        if segments.is_empty() {
            return Err(CliError::Config("robot.segments: at least one segment is required".into()));
        }
        let model = RobotModel::new(segments, Vector3::from(self.robot.gravity))?;
        let dof = model.dof();

        let c = &self.controller;
        let mode: ControllerMode = c.mode.parse().map_err(|_| {
            CliError::Config(format!("controller.mode: unknown mode {:?} (pd_plus, cbf_qp)", c.mode))
        })?;
        let gains = PdPlusGains::new(c.kp.expand(dof, "controller.kp")?, c.kd.expand(dof, "controller.kd")?)?;
        let torque_bounds = match (&c.torque_min, &c.torque_max) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                Some((vector(lo, dof, "controller.torque_min")?, vector(hi, dof, "controller.torque_max")?))
            }
            _ => return Err(CliError::Config("controller: torque_min and torque_max go together".into())),
        };

        let reference = match (&self.reference.set_point, &self.reference.waypoints) {
            (Some(q), None) => ReferenceTrajectory::SetPoint(vector(q, dof, "reference.set_point")?),
            (None, Some(w)) => {
                let mut points = Vec::with_capacity(w.len());
                for (k, p) in w.iter().enumerate() {
                    points.push(Waypoint { t: p.t, q: vector(&p.q, dof, &format!("reference.waypoints[{k}].q"))? });
                }
                ReferenceTrajectory::cubic(points)?
            }
            _ => return Err(CliError::Config("reference: give exactly one of set_point, waypoints".into())),
        };

        let sim = &self.sim;
        let integrator = match &sim.integrator {
            None => Integrator::default(),
            Some(name) => name.parse().map_err(|_| {
                CliError::Config(format!("sim.integrator: unknown integrator {name:?} (sdirk4, rk4)"))
            })?,
        };
        let q0 = match &sim.q0 {
            Some(q) => vector(q, dof, "sim.q0")?,
            None => DVector::zeros(dof),
        };
        let qdot0 = match &sim.qdot0 {
            Some(q) => vector(q, dof, "sim.qdot0")?,
            None => DVector::zeros(dof),
        };
        let scenario = Scenario {
            model,
            mode,
            gains,
            p: c.p.unwrap_or(DEFAULT_CLASS_K),
            reference,
            q0,
            qdot0,
            t_final: sim.t_final,
            control_dt: sim.control_dt,
            integrator_dt: sim.integrator_dt.unwrap_or(sim.control_dt / 10.0),
            integrator,
            torque_bounds,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// The file that [`to_scenario`](Self::to_scenario) maps back onto
    /// `scenario`. Every optional key is written out explicitly.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let list = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        let segments = scenario
            .model
            .segments
            .iter()
            .map(|s| SegmentSection {
                rest_length: s.rest_length,
                tendon_radius: s.tendon_radius,
                corner_radius: s.corner_radius,
                mass: s.mass,
                bend_stiffness: s.bend_stiffness,
                axial_stiffness: s.axial_stiffness,
                bend_damping: s.bend_damping,
                axial_damping: s.axial_damping,
                margin: s.margin,
                corner_angles: (s.corner_angles != hexagon_corner_angles()).then_some(s.corner_angles),
            })
            .collect();
        let reference = match &scenario.reference {
            ReferenceTrajectory::SetPoint(q) => ReferenceSection { set_point: Some(list(q)), waypoints: None },
            ReferenceTrajectory::Cubic(w) => ReferenceSection {
                set_point: None,
                waypoints: Some(w.iter().map(|p| WaypointSection { t: p.t, q: list(&p.q) }).collect()),
            },
        };
        Self {
            robot: RobotSection { gravity: scenario.model.gravity.into(), segments },
            controller: ControllerSection {
                mode: scenario.mode.as_str().to_string(),
                kp: Gain::PerCoordinate(list(scenario.gains.kp())),
                kd: Gain::PerCoordinate(list(scenario.gains.kd())),
                p: Some(scenario.p),
                epsilon: None,
                torque_min: scenario.torque_bounds.as_ref().map(|(lo, _)| list(lo)),
                torque_max: scenario.torque_bounds.as_ref().map(|(_, hi)| list(hi)),
            },
            reference,
            sim: SimSection {
                t_final: scenario.t_final,
                control_dt: scenario.control_dt,
                integrator_dt: Some(scenario.integrator_dt),
                integrator: Some(scenario.integrator.as_str().to_string()),
                q0: Some(list(&scenario.q0)),
                qdot0: Some(list(&scenario.qdot0)),
            },
            output: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_round_trips() {
        for mode in [ControllerMode::PdPlus, ControllerMode::CbfQp] {
            let scenario = Scenario::two_segment_demo(mode);
            let file = ScenarioFile::from_scenario(&scenario);
            let parsed = ScenarioFile::parse(&file.emit()).unwrap();
            assert_eq!(parsed, file);
            assert_eq!(parsed.to_scenario().unwrap(), scenario);
        }
    }

    #[test]
    fn dt_override_keeps_the_substep_ratio() {
        let mut file = ScenarioFile::from_scenario(&Scenario::two_segment_demo(ControllerMode::CbfQp));
        file.apply(&Overrides { control_dt: Some(1e-4), ..Overrides::default() });
        let s = file.to_scenario().unwrap();
        assert_eq!(s.control_dt, 1e-4);
        assert!((s.integrator_dt - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn epsilon_overrides_every_margin() {
        let mut file = ScenarioFile::from_scenario(&Scenario::two_segment_demo(ControllerMode::CbfQp));
        file.controller.epsilon = Some(0.01);
        let s = file.to_scenario().unwrap();
        assert!(s.model.segments.iter().all(|seg| seg.margin == 0.01));
    }
}
