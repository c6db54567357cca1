use nalgebra::DVector;

use super::SimTrace;
use crate::controllers::{desired_potential, dissipation_rate, ControllerConfig, Pair};
use crate::dynamics::{energies, RobotParams, RobotState};
use crate::error::{Error, Result};

/// First recorded time after which the error norm stays below `tol` for
/// the rest of the trace. `None` when the last sample is not below `tol`.
pub fn convergence_time(trace: &SimTrace, tol: f64) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let samples = trace.samples();
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    match samples.iter().rposition(|s| !(s.err_norm < tol)) {
        None => Ok(Some(samples[0].t)),
        Some(i) if i + 1 == samples.len() => Ok(None),
        Some(i) => Ok(Some(samples[i + 1].t)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub energy: f64,
    /// Closed-form `Ḣ` for the variant; never positive.
    pub rate_analytic: f64,
    /// Central difference of the sampled `H`.
    pub rate_numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAudit {
    pub rows: Vec<EnergyRow>,
}

impl EnergyAudit {
    /// Largest analytic rate; `<= 0` when dissipation holds everywhere.
    pub fn max_analytic_rate(&self) -> f64 {
        self.rows.iter().map(|r| r.rate_analytic).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest increase of `H` between consecutive samples (0 if none).
    pub fn max_increase(&self) -> f64 {
        self.rows.windows(2).map(|w| w[1].energy - w[0].energy).fold(0.0, f64::max)
    }

    /// Indices where `H` rose by more than `tol` over one sample interval.
    pub fn increases(&self, tol: f64) -> Vec<usize> {
        self.rows
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].energy - w[0].energy > tol)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Largest `|Ḣ_numeric - Ḣ_analytic|` over the rows.
    pub fn max_rate_mismatch(&self) -> f64 {
        self.rows.iter().map(|r| (r.rate_numeric - r.rate_analytic).abs()).fold(0.0, f64::max)
    }
}

/// Recomputes `H` per sample from the model, evaluates the closed-form
/// dissipation rate and differentiates `H` numerically. Refuses traces
/// with external forces, where `H` need not decrease.
pub fn energy_audit(trace: &SimTrace, config: &ControllerConfig, params: Pair<&RobotParams>) -> Result<EnergyAudit> {
    let samples = trace.samples();
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(s) = samples.iter().find(|s| !s.forces_zero()) {
        return Err(Error::ForcesPresent { time: s.t });
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let kl = energies(params.local, &RobotState { q: s.q.local.clone(), qdot: s.qdot.local.clone() })?.0;
        let kr = energies(params.remote, &RobotState { q: s.q.remote.clone(), qdot: s.qdot.remote.clone() })?.0;
        let tt = s.theta_tilde();
        let du = desired_potential(config, &s.q.local, &s.q.remote, tt.as_ref().map(|t| t.as_ref()));
        let theta_dot = tt.as_ref().map(|t| {
            Pair::new(
                config.theta_rate(&config.gains().local, &t.local),
                config.theta_rate(&config.gains().remote, &t.remote),
            )
        });
        let rate = dissipation_rate(config, s.qdot.as_ref(), theta_dot.as_ref().map(|t| t.as_ref()));
        rows.push(EnergyRow { t: s.t, energy: kl + kr + du, rate_analytic: rate, rate_numeric: 0.0 });
    }
    let n = rows.len();
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        if b > a {
            rows[i].rate_numeric = (rows[b].energy - rows[a].energy) / (rows[b].t - rows[a].t);
        }
    }
    Ok(EnergyAudit { rows })
}

/// Per-robot supplied energy `∫ q̇ᵀ f` and the smallest `κ_i` that keeps
/// `κ_i - ∫ q̇ᵀ f` nonnegative along the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivityLedger {
    pub supplied: Vec<Pair<f64>>,
    pub kappa: Pair<f64>,
}

impl PassivityLedger {
    /// `ℰ_i(t) = κ_i - ∫₀ᵗ q̇ᵀ f`.
    pub fn ledger(&self) -> Vec<Pair<f64>> {
        self.supplied
            .iter()
            .map(|w| Pair::new(self.kappa.local - w.local, self.kappa.remote - w.remote))
            .collect()
    }
}

/// Trapezoidal accumulation of `q̇_iᵀ f_i` over the recorded samples.
pub fn passivity_ledger(trace: &SimTrace) -> PassivityLedger {
    let samples = trace.samples();
    let mut supplied = Vec::with_capacity(samples.len());
    let mut acc = Pair::new(0.0, 0.0);
    let mut kappa = Pair::new(0.0_f64, 0.0_f64);
    let power = |qd: &DVector<f64>, f: &DVector<f64>| qd.dot(f);
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let p = &samples[i - 1];
            let h = 0.5 * (s.t - p.t);
            acc.local += h * (power(&p.qdot.local, &p.force.local) + power(&s.qdot.local, &s.force.local));
            acc.remote += h * (power(&p.qdot.remote, &p.force.remote) + power(&s.qdot.remote, &s.force.remote));
        }
        kappa.local = kappa.local.max(acc.local);
        kappa.remote = kappa.remote.max(acc.remote);
        supplied.push(acc);
    }
    PassivityLedger { supplied, kappa }
}

/// State bounds implied by an energy budget `B >= H(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBounds {
    /// Bound on `‖q_l - q_r‖`.
    pub error: f64,
    /// Bound on `‖q̇_i‖`.
    pub speed: Pair<f64>,
    /// Bound on `‖θ̃_i‖` for output-feedback variants.
    pub theta_tilde: Option<Pair<f64>>,
}

/// Inverse of the one-joint potential `φ(x)` that each spring term
/// contributes to `H`.
fn inverse_potential(y: f64, p: f64, delta: f64) -> f64 {
    let knee = delta.powf(p + 1.0) / (p + 1.0);
    if y < knee {
        ((p + 1.0) * y).powf(1.0 / (p + 1.0))
    } else {
        (y + p * knee) / delta.powf(p)
    }
}

/// Converts an energy budget into bounds on the error, the joint speeds
/// and the virtual errors, using `H >= ½ m₁ ‖q̇‖²` and the fact that each
/// spring term alone is at most `B`.
pub fn energy_bounds(config: &ControllerConfig, params: Pair<&RobotParams>, budget: f64) -> EnergyBounds {
    let budget = budget.max(0.0);
    let p = config.p_u();
    let sat = config.saturation();
    let (du, df) = if config.variant().bounded() {
        let s = sat.expect("bounded variants carry saturation levels");
        (s.delta_u, s.delta_f)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let combine = |gains: &DVector<f64>, delta: f64| {
        gains.iter().map(|k| inverse_potential(budget / k, p, delta).powi(2)).sum::<f64>().sqrt()
    };
    let speed = |r: &RobotParams| (2.0 * budget / r.bounds().m1).sqrt();
    EnergyBounds {
        error: combine(config.stiffness(), du),
        speed: Pair::new(speed(params.local), speed(params.remote)),
        theta_tilde: config.variant().output_feedback().then(|| {
            Pair::new(
                combine(&config.gains().local.virtual_stiffness, df),
                combine(&config.gains().remote.virtual_stiffness, df),
            )
        }),
    }
}
