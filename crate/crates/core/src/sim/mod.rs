//! Fixed-step integration of the coupled local/remote closed loop.

mod analysis;
mod batch;
mod trace;

use std::collections::VecDeque;

use nalgebra::DVector;

pub use analysis::{
    convergence_time, energy_audit, energy_bounds, passivity_ledger, EnergyAudit, EnergyBounds, EnergyRow,
    PassivityLedger,
};
pub use batch::run_batch;
pub(crate) use trace::write_atomic;
pub use trace::{Sample, SimTrace};

use crate::controllers::{desired_potential, evaluate, ControllerConfig, ControllerState, Pair};
use crate::dynamics::{energies, forward_dynamics_compensated, RobotParams, RobotState};
use crate::error::{Error, Result};

/// Scripted external torque acting on one robot.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ForceProfile {
    #[default]
    Zero,
    /// Constant torque on `start <= t < stop`.
    Pulse { start: f64, stop: f64, amplitude: DVector<f64> },
    /// Passive environment `f = -K (q - anchor) - B q̇`.
    SpringDamper { stiffness: DVector<f64>, damping: DVector<f64>, anchor: DVector<f64> },
}

impl ForceProfile {
    pub fn force(&self, t: f64, state: &RobotState) -> DVector<f64> {
        let n = state.q.len();
        match self {
            ForceProfile::Zero => DVector::zeros(n),
            ForceProfile::Pulse { start, stop, amplitude } => {
                if t >= *start && t < *stop {
                    amplitude.clone()
                } else {
                    DVector::zeros(n)
                }
            }
            ForceProfile::SpringDamper { stiffness, damping, anchor } => {
                -(stiffness.component_mul(&(&state.q - anchor)) + damping.component_mul(&state.qdot))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ForceProfile::Zero)
    }

    /// Energy the environment can return at most, starting from `q0`.
    /// Zero for profiles that are not passive environments.
    pub fn stored_energy(&self, q0: &DVector<f64>) -> f64 {
        match self {
            ForceProfile::SpringDamper { stiffness, anchor, .. } => {
                0.5 * stiffness.iter().zip((q0 - anchor).iter()).map(|(k, d)| k * d * d).sum::<f64>()
            }
            _ => 0.0,
        }
    }

    pub(crate) fn check(&self, n: usize, side: &str) -> Vec<String> {
        let mut issues = Vec::new();
        let len = |name: &str, v: &DVector<f64>, issues: &mut Vec<String>| {
            if v.len() != n {
                issues.push(format!("{side} force {name} has {} entries, expected {n}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                issues.push(format!("{side} force {name} must be finite"));
            }
        };
        match self {
            ForceProfile::Zero => {}
            ForceProfile::Pulse { start, stop, amplitude } => {
                len("amplitude", amplitude, &mut issues);
                if !(start.is_finite() && stop.is_finite() && start < stop) {
                    issues.push(format!("{side} pulse needs finite start < stop"));
                }
            }
            ForceProfile::SpringDamper { stiffness, damping, anchor } => {
                len("stiffness", stiffness, &mut issues);
                len("damping", damping, &mut issues);
                len("anchor", anchor, &mut issues);
                if stiffness.iter().chain(damping.iter()).any(|x| *x < 0.0) {
                    issues.push(format!(
                        "{side} spring-damper stiffness and damping must be nonnegative (passive environment)"
                    ));
                }
            }
        }
        issues
    }
}

/// Full closed-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleopState {
    pub local: RobotState,
    pub remote: RobotState,
    pub ctrl: ControllerState,
    pub time: f64,
}

impl TeleopState {
    /// Both robots at rest with virtual states at `θ_i = q_i`.
    pub fn at_rest(config: &ControllerConfig, q_l: DVector<f64>, q_r: DVector<f64>) -> Self {
        let ctrl = ControllerState::initial(config.variant(), Pair::new(&q_l, &q_r));
        TeleopState { local: RobotState::at_rest(q_l), remote: RobotState::at_rest(q_r), ctrl, time: 0.0 }
    }

    pub fn robots(&self) -> Pair<&RobotState> {
        Pair::new(&self.local, &self.remote)
    }

    pub fn is_finite(&self) -> bool {
        self.local.is_finite()
            && self.remote.is_finite()
            && self.ctrl.theta.as_ref().is_none_or(|t| t.iter().all(|v| v.iter().all(|x| x.is_finite())))
    }

    pub fn error_norm(&self) -> f64 {
        (&self.local.q - &self.remote.q).norm()
    }

    /// `θ̃_i = θ_i - q_i`, when virtual states exist.
    pub fn theta_tilde(&self) -> Option<Pair<DVector<f64>>> {
        self.ctrl
            .theta
            .as_ref()
            .map(|t| Pair::new(&t.local - &self.local.q, &t.remote - &self.remote.q))
    }
}

/// Everything that stays fixed during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub params: Pair<RobotParams>,
    pub controller: ControllerConfig,
    pub forces: Pair<ForceProfile>,
}

impl ClosedLoop {
    pub fn new(params: Pair<RobotParams>, controller: ControllerConfig, forces: Pair<ForceProfile>) -> Result<Self> {
        let n = controller.dof();
        let mut issues = Vec::new();
        for (side, p) in [("local", &params.local), ("remote", &params.remote)] {
            if p.dof() != n {
                issues.push(format!("{side} robot has {} joints, controller gains have {n}", p.dof()));
            }
        }
        issues.extend(forces.local.check(n, "local"));
        issues.extend(forces.remote.check(n, "remote"));
        if !issues.is_empty() {
            return Err(Error::InvalidConfig(issues));
        }
        Ok(ClosedLoop { params, controller, forces })
    }

    /// Total energy `H`: kinetic energies plus the shaped potential.
    pub fn total_energy(&self, state: &TeleopState) -> Result<f64> {
        let (kl, _) = energies(&self.params.local, &state.local)?;
        let (kr, _) = energies(&self.params.remote, &state.remote)?;
        let tt = state.theta_tilde();
        let du = desired_potential(
            &self.controller,
            &state.local.q,
            &state.remote.q,
            tt.as_ref().map(|t| t.as_ref()),
        );
        Ok(kl + kr + du)
    }

    fn check_state(&self, state: &TeleopState) -> Result<()> {
        let n = self.controller.dof();
        for v in [&state.local.q, &state.local.qdot, &state.remote.q, &state.remote.qdot] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { what: "closed-loop state", expected: n, found: v.len() });
            }
        }
        match (&state.ctrl.theta, self.controller.variant().output_feedback()) {
            (Some(t), true) => {
                for v in t.iter() {
                    if v.len() != n {
                        return Err(Error::DimensionMismatch { what: "virtual states", expected: n, found: v.len() });
                    }
                }
            }
            (None, true) => {
                return Err(Error::invalid(format!(
                    "{} needs virtual controller states",
                    self.controller.variant()
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    /// Spacing of recorded samples; rounded to a whole number of steps.
    pub sample_interval: f64,
    /// Constant transport delay on the exchanged positions. Not covered by
    /// any stability guarantee.
    pub delay: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { dt: 1e-4, horizon: 8.0, integrator: Integrator::Euler, sample_interval: 1e-3, delay: 0.0 }
    }
}

impl SimOptions {
    pub(crate) fn check(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            issues.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            issues.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.sample_interval >= self.dt) {
            issues.push(format!(
                "sample interval {} must not be shorter than dt {}",
                self.sample_interval, self.dt
            ));
        }
        if !(self.delay >= 0.0) || !self.delay.is_finite() {
            issues.push(format!("delay must be nonnegative, got {}", self.delay));
        }
        issues
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn stride(&self) -> usize {
        ((self.sample_interval / self.dt).round() as usize).max(1)
    }
}

/// Time derivative of the closed-loop state plus the signals that produced it.
#[derive(Debug, Clone)]
struct Rates {
    qdot: Pair<DVector<f64>>,
    qddot: Pair<DVector<f64>>,
    theta_dot: Option<Pair<DVector<f64>>>,
    tau: Pair<DVector<f64>>,
    force: Pair<DVector<f64>>,
}

fn rates(sys: &ClosedLoop, state: &TeleopState, peers: Option<Pair<&DVector<f64>>>) -> Result<Rates> {
    let params = sys.params.as_ref();
    let out = evaluate(&sys.controller, params, state.robots(), &state.ctrl, peers)?;
    let force = Pair::new(
        sys.forces.local.force(state.time, &state.local),
        sys.forces.remote.force(state.time, &state.remote),
    );
    // The controller's +∇U and the plant's -∇U cancel exactly, so the
    // accelerations are computed from the net torque.
    let qddot = Pair::new(
        forward_dynamics_compensated(params.local, &state.local, &out.net.local, &force.local)?,
        forward_dynamics_compensated(params.remote, &state.remote, &out.net.remote, &force.remote)?,
    );
    Ok(Rates {
        qdot: Pair::new(state.local.qdot.clone(), state.remote.qdot.clone()),
        qddot,
        theta_dot: out.theta_dot,
        tau: out.tau,
        force,
    })
}

fn advance(state: &TeleopState, r: &Rates, h: f64) -> TeleopState {
    let robot = |s: &RobotState, v: &DVector<f64>, a: &DVector<f64>| RobotState {
        q: &s.q + v * h,
        qdot: &s.qdot + a * h,
    };
    let theta = match (&state.ctrl.theta, &r.theta_dot) {
        (Some(t), Some(td)) => Some(Pair::new(&t.local + &td.local * h, &t.remote + &td.remote * h)),
        (t, _) => t.clone(),
    };
    TeleopState {
        local: robot(&state.local, &r.qdot.local, &r.qddot.local),
        remote: robot(&state.remote, &r.qdot.remote, &r.qddot.remote),
        ctrl: ControllerState { theta },
        time: state.time + h,
    }
}

/// Weighted sum of stage rates for RK4.
fn blend(stages: [&Rates; 4], w: [f64; 4]) -> Rates {
    let mix = |f: &dyn Fn(&Rates) -> &DVector<f64>| {
        stages.iter().zip(w).fold(DVector::zeros(f(stages[0]).len()), |acc, (r, wi)| acc + f(r) * wi)
    };
    let theta_dot = stages[0].theta_dot.as_ref().map(|_| {
        Pair::new(
            mix(&|r| &r.theta_dot.as_ref().unwrap().local),
            mix(&|r| &r.theta_dot.as_ref().unwrap().remote),
        )
    });
    Rates {
        qdot: Pair::new(mix(&|r| &r.qdot.local), mix(&|r| &r.qdot.remote)),
        qddot: Pair::new(mix(&|r| &r.qddot.local), mix(&|r| &r.qddot.remote)),
        theta_dot,
        tau: stages[0].tau.clone(),
        force: stages[0].force.clone(),
    }
}

fn integrate(
    sys: &ClosedLoop,
    state: &TeleopState,
    first: &Rates,
    dt: f64,
    integrator: Integrator,
    peers: Option<Pair<&DVector<f64>>>,
) -> Result<TeleopState> {
    match integrator {
        Integrator::Euler => Ok(advance(state, first, dt)),
        Integrator::Rk4 => {
            let k2 = rates(sys, &advance(state, first, 0.5 * dt), peers)?;
            let k3 = rates(sys, &advance(state, &k2, 0.5 * dt), peers)?;
            let k4 = rates(sys, &advance(state, &k3, dt), peers)?;
            let avg = blend([first, &k2, &k3, &k4], [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]);
            Ok(advance(state, &avg, dt))
        }
    }
}

/// One explicit-Euler step of the closed loop.
pub fn step(sys: &ClosedLoop, state: &TeleopState, dt: f64) -> Result<TeleopState> {
    step_with(sys, state, dt, Integrator::Euler)
}

pub fn step_with(sys: &ClosedLoop, state: &TeleopState, dt: f64, integrator: Integrator) -> Result<TeleopState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    sys.check_state(state)?;
    let r = rates(sys, state, None)?;
    let next = integrate(sys, state, &r, dt, integrator, None)?;
    if !next.is_finite() {
        return Err(Error::Unstable { time: next.time, detail: "non-finite state after step".into() });
    }
    Ok(next)
}

/// Positions as seen through a constant transport delay.
struct DelayLine {
    lag: usize,
    history: VecDeque<Pair<DVector<f64>>>,
}

impl DelayLine {
    fn new(lag: usize) -> Self {
        DelayLine { lag, history: VecDeque::with_capacity(lag + 1) }
    }

    /// Records the current positions and returns what each side receives:
    /// `local` gets the delayed remote position and vice versa.
    fn push(&mut self, state: &TeleopState) -> Pair<DVector<f64>> {
        self.history.push_back(Pair::new(state.local.q.clone(), state.remote.q.clone()));
        if self.history.len() > self.lag + 1 {
            self.history.pop_front();
        }
        // before the first delayed sample arrives, peers see the initial pose
        let old = self.history.front().expect("just pushed");
        Pair::new(old.remote.clone(), old.local.clone())
    }
}

fn record(sys: &ClosedLoop, state: &TeleopState, r: &Rates) -> Result<Sample> {
    Ok(Sample {
        t: state.time,
        q: Pair::new(state.local.q.clone(), state.remote.q.clone()),
        qdot: Pair::new(state.local.qdot.clone(), state.remote.qdot.clone()),
        theta: state.ctrl.theta.clone(),
        tau: r.tau.clone(),
        force: r.force.clone(),
        err_norm: state.error_norm(),
        energy: sys.total_energy(state)?,
    })
}

/// Integrates from `initial` over `[0, horizon]` and records every
/// `sample_interval`. Sample `k` sits at `t = k · stride · dt`.
pub fn run(sys: &ClosedLoop, initial: &TeleopState, options: &SimOptions) -> Result<SimTrace> {
    let issues = options.check();
    if !issues.is_empty() {
        return Err(Error::InvalidConfig(issues));
    }
    sys.check_state(initial)?;
    if !initial.is_finite() {
        return Err(Error::invalid("initial state must be finite"));
    }
    let steps = options.steps();
    let stride = options.stride();
    let lag = (options.delay / options.dt).round() as usize;
    let mut delay = (lag > 0).then(|| DelayLine::new(lag));

    let mut trace = SimTrace::new(sys.controller.dof(), options.dt, options.integrator);
    let mut state = TeleopState { time: 0.0, ..initial.clone() };
    for k in 0..=steps {
        state.time = k as f64 * options.dt;
        let seen = delay.as_mut().map(|d| d.push(&state));
        let peers = seen.as_ref().map(|p| p.as_ref());
        let r = rates(sys, &state, peers)?;
        if k % stride == 0 {
            trace.push(record(sys, &state, &r)?);
        }
        if k == steps {
            break;
        }
        let next = integrate(sys, &state, &r, options.dt, options.integrator, peers)?;
        if !next.is_finite() {
            return Err(Error::Unstable {
                time: (k + 1) as f64 * options.dt,
                detail: "state became non-finite; reduce dt or the gains".into(),
            });
        }
        state = next;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{RobotGains, Variant};
    use crate::dynamics::{mass_matrix, STANDARD_GRAVITY};
    use crate::scalar_ops::Weights;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn c1_loop(gravity: f64) -> ClosedLoop {
        let p = RobotParams::reference_two_link(gravity);
        let g = RobotGains::state_feedback(v(&[8.0, 8.0]));
        let c = ControllerConfig::new(
            Variant::C1,
            Weights::new(1.5, 1.0).unwrap(),
            v(&[6.0, 6.0]),
            Pair::new(g.clone(), g),
            None,
        )
        .unwrap();
        ClosedLoop::new(Pair::new(p.clone(), p), c, Pair::default()).unwrap()
    }

    #[test]
    fn consensus_rest_is_fixed_point() {
        let sys = c1_loop(STANDARD_GRAVITY);
        let s0 = TeleopState::at_rest(&sys.controller, v(&[0.3, -1.1]), v(&[0.3, -1.1]));
        let s1 = step(&sys, &s0, 1e-4).unwrap();
        assert!((&s1.local.q - &s0.local.q).amax() <= 1e-15);
        assert!(s1.local.qdot.amax() <= 1e-15);
    }

    #[test]
    fn euler_velocity_increment() {
        let sys = c1_loop(0.0);
        let s0 = TeleopState::at_rest(&sys.controller, v(&[1.0, 0.0]), v(&[0.0, 0.0]));
        let dt = 1e-4;
        let s1 = step(&sys, &s0, dt).unwrap();
        let m = mass_matrix(&sys.params.local, &s0.local.q).unwrap();
        let a = m.cholesky().unwrap().solve(&v(&[-6.0, 0.0]));
        approx::assert_relative_eq!(s1.local.qdot, a * dt, epsilon = 1e-15);
        assert_eq!(s1.local.q, s0.local.q);
    }

    #[test]
    fn sampling_grid() {
        let sys = c1_loop(0.0);
        let s0 = TeleopState::at_rest(&sys.controller, v(&[0.1, 0.0]), v(&[0.0, 0.0]));
        let opts = SimOptions { horizon: 0.05, ..Default::default() };
        let trace = run(&sys, &s0, &opts).unwrap();
        assert_eq!(trace.len(), 51);
        assert!((trace.samples()[50].t - 0.05).abs() < 1e-12);
    }

    #[test]
    fn instability_is_reported() {
        let sys = c1_loop(0.0);
        let s0 = TeleopState::at_rest(&sys.controller, v(&[1.0, 0.0]), v(&[-1.0, 0.0]));
        let opts = SimOptions { dt: 5.0, horizon: 2000.0, sample_interval: 5.0, ..Default::default() };
        assert!(matches!(run(&sys, &s0, &opts), Err(Error::Unstable { .. }) | Err(Error::SingularInertia { .. })));
    }

    #[test]
    fn delay_line_holds_initial_pose() {
        let sys = c1_loop(0.0);
        let s0 = TeleopState::at_rest(&sys.controller, v(&[0.2, 0.0]), v(&[0.0, 0.0]));
        let mut line = DelayLine::new(2);
        let mut s = s0.clone();
        for _ in 0..2 {
            let seen = line.push(&s);
            assert_eq!(seen.remote, s0.local.q);
            s.local.q[0] += 1.0;
        }
        let seen = line.push(&s);
        assert_eq!(seen.remote, s0.local.q);
        let seen = line.push(&s);
        assert_eq!(seen.remote[0], 1.2);
    }

    #[test]
    fn spring_damper_energy() {
        let f = ForceProfile::SpringDamper { stiffness: v(&[2.0, 4.0]), damping: v(&[1.0, 1.0]), anchor: v(&[0.0, 0.5]) };
        assert!((f.stored_energy(&v(&[1.0, 0.0])) - 1.5).abs() < 1e-15);
        let s = RobotState::new(v(&[1.0, 0.0]), v(&[0.5, 0.0])).unwrap();
        assert_eq!(f.force(0.0, &s), v(&[-2.5, 2.0]));
        assert!(!ForceProfile::SpringDamper { stiffness: v(&[-1.0]), damping: v(&[0.0]), anchor: v(&[0.0]) }
            .check(1, "local")
            .is_empty());
    }
}
