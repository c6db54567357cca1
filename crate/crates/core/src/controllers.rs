//! The finite-time P+d controller family.
//!
//! All four laws shape the closed-loop potential energy into a signed-power
//! spring between the two robots and cancel gravity exactly:
//!
//! | variant | velocity feedback | bounded |
//! |---------|-------------------|---------|
//! | C1      | yes               | no      |
//! | C2      | no (virtual θ)    | no      |
//! | C3      | yes               | yes     |
//! | C4      | no (virtual θ)    | yes     |
//!
//! The output-feedback variants inject damping through first-order
//! controller states `θ_i` and feed back `θ̃_i = θ_i - q_i` instead of `q̇_i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{gravity_vector, RobotParams, RobotState};
use crate::error::{Error, Result};
use crate::scalar_ops::{
    s_integral_unchecked, sat_pow_unchecked, signed_pow_unchecked, Weights,
};

/// A value for each side of the teleoperator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pair<T> {
    pub local: T,
    pub remote: T,
}

impl<T> Pair<T> {
    pub fn new(local: T, remote: T) -> Self {
        Pair { local, remote }
    }

    pub fn as_ref(&self) -> Pair<&T> {
        Pair { local: &self.local, remote: &self.remote }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Pair<U> {
        Pair { local: f(self.local), remote: f(self.remote) }
    }

    pub fn try_map<U>(self, mut f: impl FnMut(T) -> Result<U>) -> Result<Pair<U>> {
        Ok(Pair { local: f(self.local)?, remote: f(self.remote)? })
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        [&self.local, &self.remote].into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    C1,
    C2,
    C3,
    C4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::C1, Variant::C2, Variant::C3, Variant::C4];

    /// Uses virtual controller states instead of measured velocities.
    pub fn output_feedback(self) -> bool {
        matches!(self, Variant::C2 | Variant::C4)
    }

    pub fn bounded(self) -> bool {
        matches!(self, Variant::C3 | Variant::C4)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::C1 => "C1",
            Variant::C2 => "C2",
            Variant::C3 => "C3",
            Variant::C4 => "C4",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(Variant::C1),
            "C2" => Ok(Variant::C2),
            "C3" => Ok(Variant::C3),
            "C4" => Ok(Variant::C4),
            other => Err(Error::invalid(format!("unknown controller variant {other:?}"))),
        }
    }
}

/// Per-robot gains. Unused entries for a variant are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotGains {
    /// Velocity damping `D_s` (C1, C3).
    pub damping: DVector<f64>,
    /// Virtual spring `K_c` (C2, C4).
    pub virtual_stiffness: DVector<f64>,
    /// Virtual damping `D_c` (C2, C4).
    pub virtual_damping: DVector<f64>,
}

impl RobotGains {
    pub fn state_feedback(damping: DVector<f64>) -> Self {
        let n = damping.len();
        RobotGains {
            damping,
            virtual_stiffness: DVector::zeros(n),
            virtual_damping: DVector::zeros(n),
        }
    }

    pub fn output_feedback(virtual_stiffness: DVector<f64>, virtual_damping: DVector<f64>) -> Self {
        let n = virtual_stiffness.len();
        RobotGains { damping: DVector::zeros(n), virtual_stiffness, virtual_damping }
    }
}

/// Saturation levels `δ_U` (proportional) and `δ_F` (damping / virtual).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturation {
    pub delta_u: f64,
    pub delta_f: f64,
}

/// `(p_U, p_F) = ((2r2 - r1)/r1, (2r2 - r1)/r2)`.
pub fn derive_exponents(r1: f64, r2: f64) -> Result<(f64, f64)> {
    let w = Weights::new(r1, r2)?;
    Ok(exponents(&w))
}

fn exponents(w: &Weights) -> (f64, f64) {
    let num = 2.0 * w.r2() - w.r1();
    (num / w.r1(), num / w.r2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    variant: Variant,
    weights: Weights,
    stiffness: DVector<f64>,
    gains: Pair<RobotGains>,
    saturation: Option<Saturation>,
    p_u: f64,
    p_f: f64,
}

impl ControllerConfig {
    /// Validates every gain the variant uses. `stiffness` is the shared
    /// inter-robot spring `K_s`, one entry per joint.
    pub fn new(
        variant: Variant,
        weights: Weights,
        stiffness: DVector<f64>,
        gains: Pair<RobotGains>,
        saturation: Option<Saturation>,
    ) -> Result<Self> {
        let issues = Self::check(variant, &stiffness, &gains, saturation);
        if !issues.is_empty() {
            return Err(Error::InvalidConfig(issues));
        }
        let (p_u, p_f) = exponents(&weights);
        Ok(ControllerConfig { variant, weights, stiffness, gains, saturation, p_u, p_f })
    }

    pub(crate) fn check(
        variant: Variant,
        stiffness: &DVector<f64>,
        gains: &Pair<RobotGains>,
        saturation: Option<Saturation>,
    ) -> Vec<String> {
        let mut issues = Vec::new();
        let n = stiffness.len();
        if n == 0 {
            issues.push("stiffness K_s needs at least one joint".to_string());
        }
        if stiffness.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            issues.push("stiffness K_s must be positive".to_string());
        }
        for (side, g) in [("local", &gains.local), ("remote", &gains.remote)] {
            for (name, v) in [
                ("D_s", &g.damping),
                ("K_c", &g.virtual_stiffness),
                ("D_c", &g.virtual_damping),
            ] {
                if v.len() != n {
                    issues.push(format!("{side} {name} has {} entries, expected {n}", v.len()));
                }
            }
            if variant.output_feedback() {
                if g.virtual_stiffness.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
                    issues.push(format!("{side} K_c must be positive for {variant}"));
                }
                if g.virtual_damping.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                    issues.push(format!("{side} D_c must be positive for {variant}"));
                }
            } else if g.damping.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                issues.push(format!("{side} D_s must be nonnegative for {variant}"));
            }
        }
        if variant.bounded() {
            match saturation {
                None => issues.push(format!("{variant} requires saturation levels delta_u and delta_f")),
                Some(s) => {
                    if !(s.delta_u > 0.0) || !(s.delta_f > 0.0) {
                        issues.push("saturation levels delta_u and delta_f must be positive".to_string());
                    }
                }
            }
        }
        issues
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }

    pub fn gains(&self) -> &Pair<RobotGains> {
        &self.gains
    }

    pub fn saturation(&self) -> Option<Saturation> {
        self.saturation
    }

    pub fn dof(&self) -> usize {
        self.stiffness.len()
    }

    pub fn p_u(&self) -> f64 {
        self.p_u
    }

    pub fn p_f(&self) -> f64 {
        self.p_f
    }

    /// Same gains under different homogeneity weights.
    pub fn with_weights(&self, weights: Weights) -> Self {
        let (p_u, p_f) = exponents(&weights);
        ControllerConfig { weights, p_u, p_f, ..self.clone() }
    }

    fn sat(&self) -> Saturation {
        self.saturation.unwrap_or(Saturation { delta_u: f64::INFINITY, delta_f: f64::INFINITY })
    }

    /// Proportional spring torque on robot `i` for the error `e = q_i - q_j`,
    /// already negated: `-K_s ⌈e⌋^{p_U}` (saturated for C3/C4).
    pub fn spring_torque(&self, error: &DVector<f64>) -> DVector<f64> {
        let p = self.p_u;
        if self.variant.bounded() {
            let d = self.sat().delta_u;
            DVector::from_fn(error.len(), |k, _| -self.stiffness[k] * sat_pow_unchecked(error[k], p, d))
        } else {
            DVector::from_fn(error.len(), |k, _| -self.stiffness[k] * signed_pow_unchecked(error[k], p))
        }
    }

    /// Rate `θ̇_i` of the virtual state for the output-feedback variants.
    pub fn theta_rate(&self, gains: &RobotGains, theta_tilde: &DVector<f64>) -> DVector<f64> {
        let expo = self.weights.r2() / self.weights.r1();
        let bounded = self.variant.bounded();
        let d = self.sat().delta_f;
        DVector::from_fn(theta_tilde.len(), |k, _| {
            let gain = (gains.virtual_stiffness[k] / gains.virtual_damping[k]).powf(1.0 / self.p_f);
            let shaped = if bounded {
                sat_pow_unchecked(theta_tilde[k], expo, d)
            } else {
                signed_pow_unchecked(theta_tilde[k], expo)
            };
            -gain * shaped
        })
    }

    /// Torque net of gravity compensation for one robot.
    fn net_torque(
        &self,
        gains: &RobotGains,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        peer_q: &DVector<f64>,
        theta: Option<&DVector<f64>>,
    ) -> DVector<f64> {
        let mut tau = self.spring_torque(&(q - peer_q));
        let n = q.len();
        match self.variant {
            Variant::C1 => {
                for k in 0..n {
                    tau[k] -= gains.damping[k] * signed_pow_unchecked(qdot[k], self.p_f);
                }
            }
            Variant::C3 => {
                let d = self.sat().delta_f;
                for k in 0..n {
                    tau[k] -= gains.damping[k] * sat_pow_unchecked(qdot[k], self.p_f, d);
                }
            }
            Variant::C2 | Variant::C4 => {
                let theta = theta.expect("output-feedback variants carry virtual states");
                let d = self.sat().delta_f;
                for k in 0..n {
                    let tt = theta[k] - q[k];
                    let shaped = if self.variant == Variant::C4 {
                        sat_pow_unchecked(tt, self.p_u, d)
                    } else {
                        signed_pow_unchecked(tt, self.p_u)
                    };
                    tau[k] += gains.virtual_stiffness[k] * shaped;
                }
            }
        }
        tau
    }
}

/// Virtual controller positions `θ_i` (output-feedback variants only).
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub theta: Option<Pair<DVector<f64>>>,
}

impl ControllerState {
    pub fn none() -> Self {
        ControllerState { theta: None }
    }

    /// `θ_i(0) = q_i(0)` for output-feedback variants.
    pub fn initial(variant: Variant, q: Pair<&DVector<f64>>) -> Self {
        if variant.output_feedback() {
            ControllerState { theta: Some(Pair::new(q.local.clone(), q.remote.clone())) }
        } else {
            ControllerState::none()
        }
    }
}

/// Torques and virtual-state rates produced by one controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Full commanded torque, including `+∇U_i`.
    pub tau: Pair<DVector<f64>>,
    /// Commanded torque minus the gravity compensation term.
    pub net: Pair<DVector<f64>>,
    pub theta_dot: Option<Pair<DVector<f64>>>,
}

/// Evaluates the configured law. `peers`, when given, replaces the position
/// each robot receives from the other side (used for channel delays).
pub fn evaluate(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    states: Pair<&RobotState>,
    ctrl: &ControllerState,
    peers: Option<Pair<&DVector<f64>>>,
) -> Result<ControlOutput> {
    let n = config.dof();
    for s in states.iter() {
        for v in [&s.q, &s.qdot] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { what: "robot state", expected: n, found: v.len() });
            }
        }
    }
    for p in params.iter() {
        if p.dof() != n {
            return Err(Error::DimensionMismatch { what: "robot parameters", expected: n, found: p.dof() });
        }
    }
    let theta = if config.variant.output_feedback() {
        let th = ctrl
            .theta
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} needs virtual controller states", config.variant)))?;
        for t in th.iter() {
            if t.len() != n {
                return Err(Error::DimensionMismatch { what: "virtual states", expected: n, found: t.len() });
            }
        }
        Some(th)
    } else {
        None
    };
    let peer_l = peers.as_ref().map_or(&states.remote.q, |p| p.local);
    let peer_r = peers.as_ref().map_or(&states.local.q, |p| p.remote);

    let net_l = config.net_torque(
        &config.gains.local,
        &states.local.q,
        &states.local.qdot,
        peer_l,
        theta.map(|t| &t.local),
    );
    let net_r = config.net_torque(
        &config.gains.remote,
        &states.remote.q,
        &states.remote.qdot,
        peer_r,
        theta.map(|t| &t.remote),
    );
    let tau_l = &net_l + gravity_vector(params.local, &states.local.q)?;
    let tau_r = &net_r + gravity_vector(params.remote, &states.remote.q)?;
    let theta_dot = theta.map(|th| Pair {
        local: config.theta_rate(&config.gains.local, &(&th.local - &states.local.q)),
        remote: config.theta_rate(&config.gains.remote, &(&th.remote - &states.remote.q)),
    });
    Ok(ControlOutput {
        tau: Pair::new(tau_l, tau_r),
        net: Pair::new(net_l, net_r),
        theta_dot,
    })
}

fn expect_variant(config: &ControllerConfig, v: Variant) -> Result<()> {
    if config.variant != v {
        return Err(Error::invalid(format!("configuration is {}, expected {v}", config.variant)));
    }
    Ok(())
}

/// Torques `τ` and virtual-state rates `θ̇` for both robots.
pub type TorquesAndRates = (Pair<DVector<f64>>, Pair<DVector<f64>>);

/// P+d with signed-power spring and damping.
pub fn c1_torques(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    states: Pair<&RobotState>,
) -> Result<Pair<DVector<f64>>> {
    expect_variant(config, Variant::C1)?;
    Ok(evaluate(config, params, states, &ControllerState::none(), None)?.tau)
}

/// Velocity-free P+d: torques plus virtual-state rates.
pub fn c2_torques_and_theta_dot(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    states: Pair<&RobotState>,
    ctrl: &ControllerState,
) -> Result<TorquesAndRates> {
    expect_variant(config, Variant::C2)?;
    let out = evaluate(config, params, states, ctrl, None)?;
    Ok((out.tau, out.theta_dot.expect("output-feedback")))
}

/// Bounded P+d with saturated spring and damping.
pub fn c3_torques(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    states: Pair<&RobotState>,
) -> Result<Pair<DVector<f64>>> {
    expect_variant(config, Variant::C3)?;
    Ok(evaluate(config, params, states, &ControllerState::none(), None)?.tau)
}

/// Bounded velocity-free P+d.
pub fn c4_torques_and_theta_dot(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    states: Pair<&RobotState>,
    ctrl: &ControllerState,
) -> Result<TorquesAndRates> {
    expect_variant(config, Variant::C4)?;
    let out = evaluate(config, params, states, ctrl, None)?;
    Ok((out.tau, out.theta_dot.expect("output-feedback")))
}

/// Shaped potential energy of the closed loop for the configured variant.
/// `theta_tilde` is required for C2/C4.
pub fn desired_potential(
    config: &ControllerConfig,
    q_l: &DVector<f64>,
    q_r: &DVector<f64>,
    theta_tilde: Option<Pair<&DVector<f64>>>,
) -> f64 {
    let p = config.p_u;
    let sat = config.sat();
    let spring = |x: f64, delta: f64| {
        if config.variant.bounded() {
            s_integral_unchecked(x, delta, p)
        } else {
            x.abs().powf(p + 1.0) / (p + 1.0)
        }
    };
    let mut u = 0.0;
    for k in 0..config.dof() {
        u += config.stiffness[k] * spring(q_l[k] - q_r[k], sat.delta_u);
    }
    if config.variant.output_feedback() {
        let tt = theta_tilde.expect("output-feedback variants need theta_tilde");
        for (g, t) in [(&config.gains.local, tt.local), (&config.gains.remote, tt.remote)] {
            for k in 0..config.dof() {
                u += g.virtual_stiffness[k] * spring(t[k], sat.delta_f);
            }
        }
    }
    u
}

/// Closed-form energy rate `Ḣ` under zero external force. Always `<= 0`.
pub fn dissipation_rate(
    config: &ControllerConfig,
    qdot: Pair<&DVector<f64>>,
    theta_dot: Option<Pair<&DVector<f64>>>,
) -> f64 {
    let pf = config.p_f;
    let mut rate = 0.0;
    match config.variant {
        Variant::C1 => {
            for (g, v) in [(&config.gains.local, qdot.local), (&config.gains.remote, qdot.remote)] {
                for k in 0..config.dof() {
                    rate -= g.damping[k] * v[k].abs().powf(pf + 1.0);
                }
            }
        }
        Variant::C3 => {
            let d = config.sat().delta_f;
            for (g, v) in [(&config.gains.local, qdot.local), (&config.gains.remote, qdot.remote)] {
                for k in 0..config.dof() {
                    rate -= g.damping[k] * v[k] * sat_pow_unchecked(v[k], pf, d);
                }
            }
        }
        Variant::C2 | Variant::C4 => {
            let td = theta_dot.expect("output-feedback variants need theta_dot");
            for (g, v) in [(&config.gains.local, td.local), (&config.gains.remote, td.remote)] {
                for k in 0..config.dof() {
                    rate -= g.virtual_damping[k] * v[k].abs().powf(pf + 1.0);
                }
            }
        }
    }
    rate
}

/// One row of a saturation budget check.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBudget {
    pub robot: &'static str,
    pub joint: usize,
    /// `K_s δ_U + D δ_F` with the levels read as caps on the powered signal.
    pub literal: f64,
    /// Worst-case magnitude of the saturated terms as implemented,
    /// `K_s δ_U^{p_U} + D δ_F^{p}`.
    pub powered: f64,
    /// `τ̄ - g`; infinite for unlimited actuators.
    pub available: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationReport {
    pub rows: Vec<JointBudget>,
    pub pass: bool,
    pub note: Option<String>,
}

impl fmt::Display for SaturationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(note) = &self.note {
            writeln!(f, "note: {note}")?;
        }
        writeln!(f, "robot   joint  literal      powered      available    margin       status")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<7} {:<6} {:<12.6} {:<12.6} {:<12.6} {:<12.6} {}",
                r.robot,
                r.joint,
                r.literal,
                r.powered,
                r.available,
                r.margin,
                if r.pass { "pass" } else { "FAIL" }
            )?;
        }
        write!(f, "saturation budget: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Per-joint check of `K_s δ_U + D δ_F < τ̄ - g` (D = D_s for C3, K_c for C4).
/// The gate uses the larger of the literal and powered budgets.
pub fn validate_saturation(config: &ControllerConfig, params: Pair<&RobotParams>) -> SaturationReport {
    let mut rows = Vec::new();
    let mut pass = true;
    let mut note = None;
    for (robot, p, g) in [
        ("local", params.local, &config.gains.local),
        ("remote", params.remote, &config.gains.remote),
    ] {
        let limits = p.torque_limits();
        for k in 0..config.dof() {
            let available = limits.map_or(f64::INFINITY, |t| t[k] - p.bounds().gravity[k]);
            let (literal, powered) = match (config.variant, config.saturation) {
                (Variant::C3, Some(s)) => (
                    config.stiffness[k] * s.delta_u + g.damping[k] * s.delta_f,
                    config.stiffness[k] * s.delta_u.powf(config.p_u)
                        + g.damping[k] * s.delta_f.powf(config.p_f),
                ),
                (Variant::C4, Some(s)) => (
                    config.stiffness[k] * s.delta_u + g.virtual_stiffness[k] * s.delta_f,
                    config.stiffness[k] * s.delta_u.powf(config.p_u)
                        + g.virtual_stiffness[k] * s.delta_f.powf(config.p_u),
                ),
                _ => (f64::INFINITY, f64::INFINITY),
            };
            let gate = literal.max(powered);
            let ok = if available.is_infinite() { true } else { gate < available };
            if !config.variant.bounded() && available.is_finite() {
                note = Some(format!("{} is not a bounded law; torque limits cannot be guaranteed", config.variant));
            }
            pass &= ok;
            rows.push(JointBudget {
                robot,
                joint: k + 1,
                literal,
                powered,
                available,
                margin: available - gate,
                pass: ok,
            });
        }
    }
    SaturationReport { rows, pass, note }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::STANDARD_GRAVITY;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn c1(ks: f64, ds: f64) -> ControllerConfig {
        let g = RobotGains::state_feedback(v(&[ds, ds]));
        ControllerConfig::new(
            Variant::C1,
            Weights::new(1.5, 1.0).unwrap(),
            v(&[ks, ks]),
            Pair::new(g.clone(), g),
            None,
        )
        .unwrap()
    }

    fn c2(kc: f64, dc: f64) -> ControllerConfig {
        let g = RobotGains::output_feedback(v(&[kc, kc]), v(&[dc, dc]));
        ControllerConfig::new(
            Variant::C2,
            Weights::new(1.5, 1.0).unwrap(),
            v(&[6.0, 6.0]),
            Pair::new(g.clone(), g),
            None,
        )
        .unwrap()
    }

    #[test]
    fn exponents_from_weights() {
        let (pu, pf) = derive_exponents(1.5, 1.0).unwrap();
        assert_relative_eq!(pu, 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(pf, 0.5, epsilon = 1e-15);
        assert_eq!(derive_exponents(1.0, 1.0).unwrap(), (1.0, 1.0));
        assert!(derive_exponents(2.0, 1.0).is_err());
        assert!(derive_exponents(0.8, 1.0).is_err());
    }

    #[test]
    fn c1_reference_gains() {
        let flat = RobotParams::reference_two_link(0.0);
        let cfg = c1(6.0, 8.0);
        let sl = RobotState::at_rest(v(&[1.0, 0.0]));
        let sr = RobotState::at_rest(v(&[0.0, 0.0]));
        let tau = c1_torques(&cfg, Pair::new(&flat, &flat), Pair::new(&sl, &sr)).unwrap();
        assert_relative_eq!(tau.local, v(&[-6.0, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(tau.remote, v(&[6.0, 0.0]), epsilon = 1e-14);

        let sl = RobotState::at_rest(v(&[0.008, 0.0]));
        let tau = c1_torques(&cfg, Pair::new(&flat, &flat), Pair::new(&sl, &sr)).unwrap();
        assert_relative_eq!(tau.local[0], -1.2, epsilon = 1e-12);
    }

    #[test]
    fn c2_theta_rate() {
        let cfg = c2(1.0, 1.0);
        let rate = cfg.theta_rate(&cfg.gains().local, &v(&[1.0, 0.0]));
        assert_relative_eq!(rate, v(&[-1.0, 0.0]), epsilon = 1e-15);
        // exponent r2/r1 = 2/3 on the virtual error
        let rate = cfg.theta_rate(&cfg.gains().local, &v(&[0.125, 0.0]));
        assert_relative_eq!(rate[0], -0.25, epsilon = 1e-14);
    }

    #[test]
    fn consensus_rest_is_pure_gravity_compensation() {
        let p = RobotParams::reference_two_link(STANDARD_GRAVITY);
        let q = v(&[0.4, -0.9]);
        let s = RobotState::at_rest(q.clone());
        let sat = Some(Saturation { delta_u: 0.3, delta_f: 0.4 });
        for variant in Variant::ALL {
            let gains = if variant.output_feedback() {
                RobotGains::output_feedback(v(&[2.0, 2.0]), v(&[3.0, 3.0]))
            } else {
                RobotGains::state_feedback(v(&[8.0, 8.0]))
            };
            let cfg = ControllerConfig::new(
                variant,
                Weights::new(1.5, 1.0).unwrap(),
                v(&[6.0, 6.0]),
                Pair::new(gains.clone(), gains),
                if variant.bounded() { sat } else { None },
            )
            .unwrap();
            let ctrl = ControllerState::initial(variant, Pair::new(&q, &q));
            let out = evaluate(&cfg, Pair::new(&p, &p), Pair::new(&s, &s), &ctrl, None).unwrap();
            let grav = gravity_vector(&p, &q).unwrap();
            assert_eq!(out.tau.local, grav);
            assert_eq!(out.tau.remote, grav);
            if let Some(td) = out.theta_dot {
                assert_eq!(td.local, DVector::zeros(2));
            }
        }
    }

    #[test]
    fn c3_saturated_spring() {
        let flat = RobotParams::reference_two_link(0.0);
        let g = RobotGains::state_feedback(v(&[0.0, 0.0]));
        let cfg = ControllerConfig::new(
            Variant::C3,
            Weights::new(1.5, 1.0).unwrap(),
            v(&[1.0, 1.0]),
            Pair::new(g.clone(), g),
            Some(Saturation { delta_u: 0.2, delta_f: 0.5 }),
        )
        .unwrap();
        let sl = RobotState::at_rest(v(&[8.0, 0.0]));
        let sr = RobotState::at_rest(v(&[0.0, 0.0]));
        let tau = c3_torques(&cfg, Pair::new(&flat, &flat), Pair::new(&sl, &sr)).unwrap();
        // the level caps the argument; the output magnitude is δ_U^{p_U}
        assert_relative_eq!(tau.local[0], -(0.2_f64).powf(1.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn wrong_variant_is_rejected() {
        let flat = RobotParams::reference_two_link(0.0);
        let s = RobotState::at_rest(v(&[0.0, 0.0]));
        assert!(c3_torques(&c1(1.0, 1.0), Pair::new(&flat, &flat), Pair::new(&s, &s)).is_err());
    }

    #[test]
    fn config_validation() {
        let w = Weights::new(1.5, 1.0).unwrap();
        let zero = RobotGains::output_feedback(v(&[1.0, 1.0]), v(&[0.0, 1.0]));
        let err = ControllerConfig::new(Variant::C2, w, v(&[1.0, 1.0]), Pair::new(zero.clone(), zero), None)
            .unwrap_err();
        assert!(err.to_string().contains("D_c must be positive"));
        let g = RobotGains::state_feedback(v(&[1.0, 1.0]));
        let err = ControllerConfig::new(Variant::C3, w, v(&[1.0, 1.0]), Pair::new(g.clone(), g), None)
            .unwrap_err();
        assert!(err.to_string().contains("saturation levels"));
    }

    #[test]
    fn saturation_budget() {
        let link = crate::dynamics::Link { mass: 1.0, length: 1.0, com: 0.5, inertia: 0.1 };
        // g_k = 1.05 * 9.81 * 0.5 ≈ 5.15, τ̄ = 14 → available ≈ 8.85
        let p = RobotParams::new(vec![link], STANDARD_GRAVITY, Some(vec![14.0])).unwrap();
        let mk = |ds: f64| {
            let g = RobotGains::state_feedback(v(&[ds]));
            ControllerConfig::new(
                Variant::C3,
                Weights::new(1.5, 1.0).unwrap(),
                v(&[6.0]),
                Pair::new(g.clone(), g),
                Some(Saturation { delta_u: 1.0, delta_f: 1.0 }),
            )
            .unwrap()
        };
        let ok = validate_saturation(&mk(1.0), Pair::new(&p, &p));
        assert!(ok.pass, "{ok}");
        assert_relative_eq!(ok.rows[0].literal, 7.0);
        let bad = validate_saturation(&mk(3.0), Pair::new(&p, &p));
        assert!(!bad.pass);

        let flat = RobotParams::reference_two_link(0.0);
        assert!(validate_saturation(&c1(6.0, 8.0), Pair::new(&flat, &flat)).pass);
    }
}
