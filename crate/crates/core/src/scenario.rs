//! Scenario files: TOML documents describing both robots, the controller,
//! initial conditions, force profiles and run settings.
//!
//! ```toml
//! name = "c1_sim"
//!
//! [robot.local]
//! gravity = 9.81
//! mass = [1.8, 1.6]
//! length = [0.8, 0.6]
//! com = [0.4, 0.3]
//! inertia = [0.096, 0.048]
//! torque_limit = [40.0, 20.0]    # optional; omitted means unlimited
//!
//! # [robot.remote] defaults to a copy of [robot.local]
//!
//! [controller]
//! variant = "C1"                 # C1 | C2 | C3 | C4
//! r1 = 1.5
//! r2 = 1.0
//! K_s = 6.0                      # scalar (broadcast) or per-joint list
//! D_s = 8.0                      # C1, C3
//! # K_c, D_c for C2, C4; delta_u, delta_f for C3, C4
//!
//! # [controller.remote] may override D_s, K_c, D_c for one side
//!
//! [initial]
//! q_local = [1.0, -0.4]
//! q_remote = [1.3, 0.3]
//! # qdot_local, qdot_remote default to rest; theta_* default to q_*
//!
//! [force.local]
//! kind = "zero"                  # zero | pulse | spring_damper
//!
//! [simulation]                   # every key optional; defaults shown
//! horizon = 8.0
//! dt = 1e-4
//! integrator = "euler"           # euler | rk4
//! sample_interval = 1e-3
//! delay = 0.0
//! tol = 1e-3
//!
//! [output]
//! trace = "c1_trace.csv"         # relative to the CLI's --out directory
//!
//! [audit]
//! samples = 256
//! seed = 0
//! # q_c = [1.15, -0.05]          # default: final pose of a simulated run
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controllers::{validate_saturation, ControllerConfig, ControllerState, Pair, RobotGains, Saturation, Variant};
use crate::dynamics::{Link, RobotParams, RobotState, STANDARD_GRAVITY};
use crate::error::{Error, Result};
use crate::scalar_ops::Weights;
use crate::sim::{ClosedLoop, ForceProfile, Integrator, SimOptions, TeleopState};

/// A scalar broadcast to every joint, or one value per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    List(Vec<f64>),
}

impl Gain {
    fn expand(&self, n: usize, name: &str, issues: &mut Vec<String>) -> DVector<f64> {
        match self {
            Gain::Scalar(v) => DVector::from_element(n, *v),
            Gain::List(v) if v.len() == n => DVector::from_row_slice(v),
            Gain::List(v) => {
                issues.push(format!("{name} has {} entries, expected {n}", v.len()));
                DVector::from_element(n, f64::NAN)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub mass: Vec<f64>,
    pub length: Vec<f64>,
    pub com: Vec<f64>,
    pub inertia: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<Vec<f64>>,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Robots {
    pub local: RobotSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RobotSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideGains {
    #[serde(rename = "D_s", default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<Gain>,
    #[serde(rename = "K_c", default, skip_serializing_if = "Option::is_none")]
    pub virtual_stiffness: Option<Gain>,
    #[serde(rename = "D_c", default, skip_serializing_if = "Option::is_none")]
    pub virtual_damping: Option<Gain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub variant: Variant,
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "K_s")]
    pub stiffness: Gain,
    #[serde(rename = "D_s", default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<Gain>,
    #[serde(rename = "K_c", default, skip_serializing_if = "Option::is_none")]
    pub virtual_stiffness: Option<Gain>,
    #[serde(rename = "D_c", default, skip_serializing_if = "Option::is_none")]
    pub virtual_damping: Option<Gain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<SideGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<SideGains>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q_local: Vec<f64>,
    pub q_remote: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdot_local: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdot_remote: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_local: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_remote: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceSection {
    #[default]
    Zero,
    Pulse { start: f64, stop: f64, amplitude: Gain },
    SpringDamper { stiffness: Gain, damping: Gain, anchor: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forces {
    #[serde(default)]
    pub local: ForceSection,
    #[serde(default)]
    pub remote: ForceSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorName {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub integrator: IntegratorName,
    #[serde(default = "default_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub delay: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            horizon: default_horizon(),
            dt: default_dt(),
            integrator: IntegratorName::Euler,
            sample_interval: default_interval(),
            delay: 0.0,
            tol: default_tol(),
        }
    }
}

fn default_horizon() -> f64 {
    8.0
}

fn default_dt() -> f64 {
    1e-4
}

fn default_interval() -> f64 {
    1e-3
}

fn default_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_c: Option<Vec<f64>>,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { samples: default_samples(), seed: 0, q_c: None }
    }
}

fn default_samples() -> usize {
    256
}

/// The document as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub robot: Robots,
    pub controller: ControllerSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub force: Forces,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub audit: AuditSection,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub system: ClosedLoop,
    pub initial: TeleopState,
    pub options: SimOptions,
    pub tol: f64,
    pub output: OutputSection,
    pub audit: AuditSection,
    source: ScenarioFile,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

impl ScenarioFile {
    /// Parses TOML text; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Parse { path: path.to_path_buf(), line, column, message: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario documents always serialize")
    }

    /// Validates everything and reports every problem found.
    pub fn build(&self, fallback_name: &str) -> Result<Scenario> {
        let mut issues = Vec::new();
        let n = self.robot.local.mass.len();

        let robot = |sec: &RobotSection, side: &str, issues: &mut Vec<String>| -> Option<RobotParams> {
            let lens = [sec.length.len(), sec.com.len(), sec.inertia.len()];
            if lens.iter().any(|l| *l != sec.mass.len()) || sec.mass.len() != n {
                issues.push(format!(
                    "{side} robot: mass, length, com and inertia need {n} entries each"
                ));
                return None;
            }
            let links = (0..n)
                .map(|k| Link { mass: sec.mass[k], length: sec.length[k], com: sec.com[k], inertia: sec.inertia[k] })
                .collect();
            match RobotParams::new(links, sec.gravity, sec.torque_limit.clone()) {
                Ok(p) => Some(p),
                Err(e) => {
                    issues.push(format!("{side} robot: {}", plain(&e)));
                    None
                }
            }
        };
        let local = robot(&self.robot.local, "local", &mut issues);
        let remote = robot(self.robot.remote.as_ref().unwrap_or(&self.robot.local), "remote", &mut issues);

        let c = &self.controller;
        let shared = SideGains {
            damping: c.damping.clone(),
            virtual_stiffness: c.virtual_stiffness.clone(),
            virtual_damping: c.virtual_damping.clone(),
        };
        let weights = Weights::new(c.r1, c.r2).map_err(|e| issues.push(format!("controller: {}", plain(&e)))).ok();
        let stiffness = c.stiffness.expand(n, "K_s", &mut issues);
        let side_gains = |over: &Option<SideGains>, side: &str, issues: &mut Vec<String>| {
            let pick = |o: Option<&Gain>, s: Option<&Gain>, name: &str, issues: &mut Vec<String>| {
                match o.or(s) {
                    Some(g) => g.expand(n, &format!("{side} {name}"), issues),
                    None => DVector::zeros(n),
                }
            };
            let o = over.as_ref();
            let damping = pick(o.and_then(|g| g.damping.as_ref()), shared.damping.as_ref(), "D_s", issues);
            let ks = pick(
                o.and_then(|g| g.virtual_stiffness.as_ref()),
                shared.virtual_stiffness.as_ref(),
                "K_c",
                issues,
            );
            let kd = pick(
                o.and_then(|g| g.virtual_damping.as_ref()),
                shared.virtual_damping.as_ref(),
                "D_c",
                issues,
            );
            RobotGains { damping, virtual_stiffness: ks, virtual_damping: kd }
        };
        let gains = Pair::new(side_gains(&c.local, "local", &mut issues), side_gains(&c.remote, "remote", &mut issues));
        let unused = |present: bool, name: &str, issues: &mut Vec<String>| {
            if present {
                issues.push(format!("{name} is not used by {}", c.variant));
            }
        };
        let any = |f: &dyn Fn(&SideGains) -> bool| {
            f(&shared) || c.local.as_ref().is_some_and(f) || c.remote.as_ref().is_some_and(f)
        };
        if c.variant.output_feedback() {
            unused(any(&|g| g.damping.is_some()), "D_s", &mut issues);
        } else {
            unused(any(&|g| g.virtual_stiffness.is_some() || g.virtual_damping.is_some()), "K_c/D_c", &mut issues);
        }
        let saturation = match (c.delta_u, c.delta_f) {
            (Some(delta_u), Some(delta_f)) => Some(Saturation { delta_u, delta_f }),
            (None, None) => None,
            _ => {
                issues.push("delta_u and delta_f must be given together".into());
                None
            }
        };
        if !c.variant.bounded() && saturation.is_some() {
            issues.push(format!("delta_u/delta_f are not used by {}", c.variant));
        }
        issues.extend(ControllerConfig::check(c.variant, &stiffness, &gains, saturation));

        let force = |sec: &ForceSection, side: &str, issues: &mut Vec<String>| match sec {
            ForceSection::Zero => ForceProfile::Zero,
            ForceSection::Pulse { start, stop, amplitude } => ForceProfile::Pulse {
                start: *start,
                stop: *stop,
                amplitude: amplitude.expand(n, &format!("{side} pulse amplitude"), issues),
            },
            ForceSection::SpringDamper { stiffness, damping, anchor } => ForceProfile::SpringDamper {
                stiffness: stiffness.expand(n, &format!("{side} spring stiffness"), issues),
                damping: damping.expand(n, &format!("{side} spring damping"), issues),
                anchor: DVector::from_row_slice(anchor),
            },
        };
        let forces = Pair::new(
            force(&self.force.local, "local", &mut issues),
            force(&self.force.remote, "remote", &mut issues),
        );

        let s = &self.simulation;
        let options = SimOptions {
            dt: s.dt,
            horizon: s.horizon,
            integrator: match s.integrator {
                IntegratorName::Euler => Integrator::Euler,
                IntegratorName::Rk4 => Integrator::Rk4,
            },
            sample_interval: s.sample_interval,
            delay: s.delay,
        };
        issues.extend(options.check());
        if !(s.tol > 0.0) {
            issues.push(format!("tol must be positive, got {}", s.tol));
        }

        let vec = |v: &Option<Vec<f64>>, name: &str, issues: &mut Vec<String>| {
            v.as_ref().map(|v| {
                if v.len() != n {
                    issues.push(format!("initial {name} has {} entries, expected {n}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    issues.push(format!("initial {name} must be finite"));
                }
                DVector::from_row_slice(v)
            })
        };
        let init = &self.initial;
        let q_l = vec(&Some(init.q_local.clone()), "q_local", &mut issues).expect("present");
        let q_r = vec(&Some(init.q_remote.clone()), "q_remote", &mut issues).expect("present");
        let qd_l = vec(&init.qdot_local, "qdot_local", &mut issues).unwrap_or_else(|| DVector::zeros(q_l.len()));
        let qd_r = vec(&init.qdot_remote, "qdot_remote", &mut issues).unwrap_or_else(|| DVector::zeros(q_r.len()));
        let th_l = vec(&init.theta_local, "theta_local", &mut issues);
        let th_r = vec(&init.theta_remote, "theta_remote", &mut issues);
        if !c.variant.output_feedback() && (th_l.is_some() || th_r.is_some()) {
            issues.push(format!("theta_local/theta_remote are not used by {}", c.variant));
        }
        if let Some(qc) = &self.audit.q_c {
            if qc.len() != n {
                issues.push(format!("audit q_c has {} entries, expected {n}", qc.len()));
            }
        }
        if self.audit.samples == 0 {
            issues.push("audit samples must be positive".into());
        }

        if !issues.is_empty() {
            return Err(Error::InvalidConfig(issues));
        }
        let (Some(local), Some(remote), Some(weights)) = (local, remote, weights) else {
            unreachable!("missing parts always leave an issue");
        };
        let controller = ControllerConfig::new(c.variant, weights, stiffness, gains, saturation)?;
        if controller.variant().bounded() {
            let report = validate_saturation(&controller, Pair::new(&local, &remote));
            if !report.pass {
                let rows = report
                    .rows
                    .iter()
                    .filter(|r| !r.pass)
                    .map(|r| {
                        format!(
                            "saturation condition K_s*delta_U + D*delta_F < tau_max - g violated at {} joint {} \
                             (budget {:.4}, available {:.4})",
                            r.robot,
                            r.joint,
                            r.literal.max(r.powered),
                            r.available
                        )
                    })
                    .collect();
                return Err(Error::InvalidConfig(rows));
            }
        }
        let system = ClosedLoop::new(Pair::new(local, remote), controller, forces)?;
        let mut initial = TeleopState::at_rest(&system.controller, q_l.clone(), q_r.clone());
        initial.local = RobotState::new(q_l.clone(), qd_l)?;
        initial.remote = RobotState::new(q_r.clone(), qd_r)?;
        if system.controller.variant().output_feedback() {
            initial.ctrl = ControllerState {
                theta: Some(Pair::new(th_l.unwrap_or(q_l), th_r.unwrap_or(q_r))),
            };
        }
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| fallback_name.to_string()),
            system,
            initial,
            options,
            tol: s.tol,
            output: self.output.clone(),
            audit: self.audit.clone(),
            source: self.clone(),
        })
    }
}

/// Error text without the variant prefix, for issue lists.
fn plain(e: &Error) -> String {
    match e {
        Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    ScenarioFile::parse(&text, path)?.build(stem)
}

impl Scenario {
    pub fn source(&self) -> &ScenarioFile {
        &self.source
    }

    /// Re-serialized document; loading it yields an identical scenario.
    pub fn to_toml(&self) -> String {
        self.source.to_toml()
    }

    /// Rebuilds with an edited document.
    pub fn edited(&self, edit: impl FnOnce(&mut ScenarioFile)) -> Result<Scenario> {
        let mut src = self.source.clone();
        edit(&mut src);
        let mut out = src.build(&self.name)?;
        out.name = self.name.clone();
        Ok(out)
    }

    pub fn with_dt(&self, dt: f64) -> Result<Scenario> {
        self.edited(|s| {
            s.simulation.dt = dt;
            if s.simulation.sample_interval < dt {
                s.simulation.sample_interval = dt;
            }
        })
    }

    pub fn with_delay(&self, delay: f64) -> Result<Scenario> {
        self.edited(|s| s.simulation.delay = delay)
    }

    /// Same scenario with `r1 = r2`, the asymptotic counterpart.
    pub fn asymptotic(&self) -> Result<Scenario> {
        self.edited(|s| s.controller.r1 = s.controller.r2)
    }
}
