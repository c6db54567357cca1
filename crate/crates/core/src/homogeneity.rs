//! Numerical audit of the homogeneous approximation of the closed loop.
//!
//! Points are laid out as `x = (q̃_l, q̃_r, q̇_l, q̇_r[, θ̃_l, θ̃_r])` with
//! `q̃_i = q_i - q_c`. Position-like and virtual coordinates carry weight
//! `r1`, velocities carry `r2`, and the claimed degree is `r2 - r1`.
//!
//! The supremum over the unit sphere is approximated by the maximum over a
//! finite sample, so the audit can falsify the vanishing condition but
//! cannot certify it.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::controllers::{evaluate, ControllerConfig, ControllerState, Pair, Variant};
use crate::dynamics::{coriolis_matrix, factor, mass_matrix, RobotParams, RobotState};
use crate::error::{Error, Result};
use crate::scalar_ops::{dilate, signed_pow_unchecked};

/// Absolute floor in relative-defect denominators.
pub const DEFECT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneitySpec {
    /// One weight per coordinate of `x`.
    pub weights: Vec<f64>,
    /// Claimed degree `l`.
    pub degree: f64,
    pub samples: usize,
    /// Strictly decreasing dilation parameters.
    pub eps_grid: Vec<f64>,
    pub seed: u64,
}

impl HomogeneitySpec {
    /// Weights and degree for a controller, 256 sphere samples and the grid
    /// `10^{-k/4}`, `k = 0..=12`.
    pub fn for_config(config: &ControllerConfig) -> Self {
        let n = config.dof();
        let (r1, r2) = (config.weights().r1(), config.weights().r2());
        let mut weights = vec![r1; 2 * n];
        weights.extend(vec![r2; 2 * n]);
        if config.variant().output_feedback() {
            weights.extend(vec![r1; 2 * n]);
        }
        HomogeneitySpec {
            weights,
            degree: config.weights().degree(),
            samples: 256,
            eps_grid: (0..=12).map(|k| 10f64.powf(-(k as f64) / 4.0)).collect(),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("homogeneity weights must be positive"));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::invalid("dilation grid must hold positive values"));
        }
        if self.eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("dilation grid must be strictly decreasing"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("need at least one sphere sample"));
        }
        Ok(())
    }
}

/// Seeded directions on the unit sphere of `R^dim`.
pub fn sphere_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

struct Split {
    q: Pair<DVector<f64>>,
    qdot: Pair<DVector<f64>>,
    theta_tilde: Option<Pair<DVector<f64>>>,
}

fn split(config: &ControllerConfig, x: &[f64]) -> Result<Split> {
    let n = config.dof();
    let m = if config.variant().output_feedback() { 6 * n } else { 4 * n };
    if x.len() != m {
        return Err(Error::DimensionMismatch { what: "closed-loop point", expected: m, found: x.len() });
    }
    let block = |b: usize| DVector::from_row_slice(&x[b * n..(b + 1) * n]);
    Ok(Split {
        q: Pair::new(block(0), block(1)),
        qdot: Pair::new(block(2), block(3)),
        theta_tilde: config.variant().output_feedback().then(|| Pair::new(block(4), block(5))),
    })
}

fn stack(parts: &[&DVector<f64>]) -> Vec<f64> {
    parts.iter().flat_map(|v| v.iter().copied()).collect()
}

/// Frozen-inertia homogeneous field `f_H(x)` with `M_i(q_c)`.
///
/// The saturations of C3/C4 are inactive near the origin, so their
/// homogeneous parts coincide with those of C1/C2.
pub fn homogeneous_part(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    q_c: &DVector<f64>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let s = split(config, x)?;
    let n = config.dof();
    let (pu, pf) = (config.p_u(), config.p_f());
    let bracket = |qi: &DVector<f64>, qj: &DVector<f64>, qdi: &DVector<f64>, side: usize| {
        let gains = if side == 0 { &config.gains().local } else { &config.gains().remote };
        DVector::from_fn(n, |k, _| {
            let spring = config.stiffness()[k] * signed_pow_unchecked(qi[k] - qj[k], pu);
            match &s.theta_tilde {
                None => spring + gains.damping[k] * signed_pow_unchecked(qdi[k], pf),
                Some(tt) => {
                    let t = if side == 0 { &tt.local } else { &tt.remote };
                    spring - gains.virtual_stiffness[k] * signed_pow_unchecked(t[k], pu)
                }
            }
        })
    };
    let acc_l = -factor(mass_matrix(params.local, q_c)?)?.solve(&bracket(&s.q.local, &s.q.remote, &s.qdot.local, 0));
    let acc_r = -factor(mass_matrix(params.remote, q_c)?)?.solve(&bracket(&s.q.remote, &s.q.local, &s.qdot.remote, 1));
    let mut out = stack(&[&s.qdot.local, &s.qdot.remote, &acc_l, &acc_r]);
    if let Some(tt) = &s.theta_tilde {
        let expo = config.weights().r2() / config.weights().r1();
        for (g, t, qd) in [
            (&config.gains().local, &tt.local, &s.qdot.local),
            (&config.gains().remote, &tt.remote, &s.qdot.remote),
        ] {
            for k in 0..n {
                let c = (g.virtual_stiffness[k] / g.virtual_damping[k]).powf(1.0 / pf);
                out.push(-c * signed_pow_unchecked(t[k], expo) - qd[k]);
            }
        }
    }
    Ok(out)
}

/// The complete closed-loop field at `q_i = q_c + q̃_i`, including the
/// configuration-dependent inertia, Coriolis terms and saturations.
/// Gravity cancels exactly and is left out.
pub fn full_field(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    q_c: &DVector<f64>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let s = split(config, x)?;
    let local = RobotState { q: q_c + &s.q.local, qdot: s.qdot.local.clone() };
    let remote = RobotState { q: q_c + &s.q.remote, qdot: s.qdot.remote.clone() };
    let ctrl = ControllerState {
        theta: s.theta_tilde.as_ref().map(|tt| Pair::new(&local.q + &tt.local, &remote.q + &tt.remote)),
    };
    let out = evaluate(config, params, Pair::new(&local, &remote), &ctrl, None)?;
    let acc = |p: &RobotParams, st: &RobotState, net: &DVector<f64>| -> Result<DVector<f64>> {
        let rhs = net - coriolis_matrix(p, &st.q, &st.qdot)? * &st.qdot;
        Ok(factor(mass_matrix(p, &st.q)?)?.solve(&rhs))
    };
    let acc_l = acc(params.local, &local, &out.net.local)?;
    let acc_r = acc(params.remote, &remote, &out.net.remote)?;
    let mut field = stack(&[&s.qdot.local, &s.qdot.remote, &acc_l, &acc_r]);
    if let (Some(td), Some(_)) = (&out.theta_dot, &s.theta_tilde) {
        field.extend(stack(&[&(&td.local - &s.qdot.local), &(&td.remote - &s.qdot.remote)]));
    }
    Ok(field)
}

/// Coriolis acceleration `-M(q)⁻¹ C(q, q̇) q̇` of both robots, stacked into
/// the velocity rows of an otherwise zero field.
pub fn coriolis_field(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    q_c: &DVector<f64>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let s = split(config, x)?;
    let n = config.dof();
    let mut field = vec![0.0; x.len()];
    for (side, p, q, qd) in [(0, params.local, &s.q.local, &s.qdot.local), (1, params.remote, &s.q.remote, &s.qdot.remote)] {
        let q = q_c + q;
        let a = -factor(mass_matrix(p, &q)?)?.solve(&(coriolis_matrix(p, &q, qd)? * qd));
        field[(2 + side) * n..(3 + side) * n].copy_from_slice(a.as_slice());
    }
    Ok(field)
}

/// Largest relative defect `|f_j(Δ_ε x) - ε^{l+r_j} f_j(x)| / (|f_j(x)| + floor)`
/// over the points and the dilation grid.
pub fn check_degree<F>(field: F, spec: &HomogeneitySpec, points: &[Vec<f64>]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    spec.check()?;
    let mut worst = 0.0_f64;
    for x in points {
        let fx = field(x)?;
        for &eps in &spec.eps_grid {
            let fd = field(&dilate(x, &spec.weights, eps)?)?;
            for j in 0..fx.len() {
                let expected = eps.powf(spec.degree + spec.weights[j]) * fx[j];
                let defect = (fd[j] - expected).abs() / (fx[j].abs() + DEFECT_FLOOR);
                worst = worst.max(defect);
            }
        }
    }
    Ok(worst)
}

/// One row of a vanishing sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// Sample supremum of `‖ε^{-l} Δ_ε⁻¹ f(Δ_ε x) - f_H(x)‖`.
    pub deviation: f64,
    /// Same quantity for the Coriolis acceleration alone.
    pub coriolis: f64,
    /// Points whose evaluation failed or was non-finite.
    pub failures: usize,
}

fn rescaled(spec: &HomogeneitySpec, eps: f64, y: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(&spec.weights)
        .map(|(v, r)| v * eps.powf(-spec.degree - r))
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Remark-style vanishing test of `f - f_H` under dilation.
pub fn vanishing_sweep(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    q_c: &DVector<f64>,
    spec: &HomogeneitySpec,
) -> Result<Vec<SweepRow>> {
    spec.check()?;
    let points = sphere_points(spec.dim(), spec.samples, spec.seed);
    let base: Vec<Vec<f64>> = points
        .iter()
        .map(|x| homogeneous_part(config, params, q_c, x))
        .collect::<Result<_>>()?;
    let zero = vec![0.0; spec.dim()];
    let mut rows = Vec::with_capacity(spec.eps_grid.len());
    for &eps in &spec.eps_grid {
        let mut row = SweepRow { eps, deviation: 0.0, coriolis: 0.0, failures: 0 };
        for (x, fh) in points.iter().zip(&base) {
            let xd = dilate(x, &spec.weights, eps)?;
            match (full_field(config, params, q_c, &xd), coriolis_field(config, params, q_c, &xd)) {
                (Ok(f), Ok(c)) => {
                    let dev = distance(&rescaled(spec, eps, &f), fh);
                    let cor = distance(&rescaled(spec, eps, &c), &zero);
                    if dev.is_finite() && cor.is_finite() {
                        row.deviation = row.deviation.max(dev);
                        row.coriolis = row.coriolis.max(cor);
                    } else {
                        row.failures += 1;
                    }
                }
                _ => row.failures += 1,
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log ε` over rows with
/// `ε <= 10 · ε_min` (the final decade).
pub fn final_decade_slope(rows: &[SweepRow], pick: impl Fn(&SweepRow) -> f64) -> Option<f64> {
    let eps_min = rows.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.eps <= 10.0 * eps_min * (1.0 + 1e-12) && pick(r) > 0.0)
        .map(|r| (r.eps.ln(), pick(r).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Dilation parameter below which no saturation in C3/C4 can be active
/// for points on the unit sphere; infinite for the unbounded variants.
pub fn saturation_threshold(config: &ControllerConfig) -> f64 {
    let Some(s) = config.saturation().filter(|_| config.variant().bounded()) else {
        return f64::INFINITY;
    };
    let (r1, r2) = (config.weights().r1(), config.weights().r2());
    // |q̃_i - q̃_j| <= 2 on the sphere, |q̇| and |θ̃| <= 1
    let mut eps = (s.delta_u / 2.0).powf(1.0 / r1).min(s.delta_f.powf(1.0 / r2));
    if config.variant() == Variant::C4 {
        eps = eps.min(s.delta_f.powf(1.0 / r1));
    }
    eps.min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub variant: Variant,
    pub degree: f64,
    pub degree_defect: f64,
    pub origin_norm: f64,
    pub rows: Vec<SweepRow>,
    pub slope: Option<f64>,
    pub coriolis_slope: Option<f64>,
    pub r1: f64,
}

impl AuditReport {
    pub fn degree_ok(&self) -> bool {
        self.degree_defect <= 1e-9
    }

    pub fn negative_degree(&self) -> bool {
        self.degree < 0.0
    }

    /// Deviation at the smallest ε against the largest.
    pub fn reduction(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if a.deviation > 0.0 => b.deviation / a.deviation,
            _ => 0.0,
        }
    }

    /// Non-increasing over the final four grid points.
    pub fn tail_monotone(&self) -> bool {
        let tail = &self.rows[self.rows.len().saturating_sub(4)..];
        tail.windows(2).all(|w| w[1].deviation <= w[0].deviation)
    }

    pub fn vanishing_ok(&self) -> bool {
        self.reduction() < 1e-2 && self.tail_monotone() && self.slope.is_some_and(|s| s >= 1.0)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,deviation,coriolis\n");
        for r in &self.rows {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.eps, r.deviation, r.coriolis));
        }
        out
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(f, "homogeneity audit for {}", self.variant)?;
        writeln!(f, "  degree l = r2 - r1 = {:.6} < 0: {}", self.degree, mark(self.negative_degree()))?;
        writeln!(f, "  f_H(0) = 0 (norm {:.3e}): {}", self.origin_norm, mark(self.origin_norm == 0.0))?;
        writeln!(f, "  degree defect of f_H {:.3e} <= 1e-9: {}", self.degree_defect, mark(self.degree_ok()))?;
        writeln!(f, "  deviation ratio eps_min/eps_max {:.3e} < 1e-2: {}", self.reduction(), mark(self.reduction() < 1e-2))?;
        writeln!(f, "  tail non-increasing: {}", mark(self.tail_monotone()))?;
        match self.slope {
            Some(s) => writeln!(f, "  final-decade slope {s:.4} >= 1.0: {}", mark(s >= 1.0))?,
            None => writeln!(f, "  final-decade slope: undefined (deviation vanished)")?,
        }
        if let Some(s) = self.coriolis_slope {
            writeln!(f, "  Coriolis-only slope {s:.4} (r1 = {})", self.r1)?;
        }
        if self.failures() > 0 {
            writeln!(f, "  {} sample evaluations failed", self.failures())?;
        }
        write!(f, "  sup over the sphere is a sample maximum; this audit can only falsify")
    }
}

/// Runs every check for one configuration.
pub fn audit(
    config: &ControllerConfig,
    params: Pair<&RobotParams>,
    q_c: &DVector<f64>,
    spec: &HomogeneitySpec,
) -> Result<AuditReport> {
    let fh = |x: &[f64]| homogeneous_part(config, params, q_c, x);
    let points = sphere_points(spec.dim(), spec.samples, spec.seed.wrapping_add(1));
    let degree_defect = check_degree(fh, spec, &points)?;
    let origin = homogeneous_part(config, params, q_c, &vec![0.0; spec.dim()])?;
    let rows = vanishing_sweep(config, params, q_c, spec)?;
    Ok(AuditReport {
        variant: config.variant(),
        degree: spec.degree,
        degree_defect,
        origin_norm: origin.iter().map(|v| v * v).sum::<f64>().sqrt(),
        slope: final_decade_slope(&rows, |r| r.deviation),
        coriolis_slope: final_decade_slope(&rows, |r| r.coriolis),
        rows,
        r1: config.weights().r1(),
    })
}

/// `M(q_c)⁻¹` for direct composition checks.
pub fn frozen_inverse(params: &RobotParams, q_c: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = params.dof();
    Ok(factor(mass_matrix(params, q_c)?)?.solve(&DMatrix::identity(n, n)))
}
