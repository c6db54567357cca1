//! Euler-Lagrange dynamics of a planar serial chain of revolute joints.
//!
//! Every link is a point mass at its center-of-mass offset plus a rotational
//! inertia about that point. Joint angles are relative; the absolute angle of
//! link `a` is `φ_a = q_1 + … + q_a`, measured from the horizontal axis.
//! Gravity (when nonzero) points along `-y`, so the model is a vertical arm.
//!
//! The Coriolis matrix is built from Christoffel symbols of the first kind
//! using closed-form derivatives of the inertia matrix, which makes
//! `Ṁ - 2C` skew-symmetric up to rounding.

mod bounds;
pub mod verify;

pub use bounds::{derive_bounds, Bounds};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Standard gravitational acceleration used by the bundled scenarios.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Condition-number estimate beyond which the inertia matrix is rejected.
const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    /// Distance from the joint axis to the center of mass, m.
    pub com: f64,
    /// Rotational inertia about the center of mass, kg·m².
    pub inertia: f64,
}

/// Physical description of one manipulator with its derived model bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    links: Vec<Link>,
    gravity: f64,
    torque_limits: Option<DVector<f64>>,
    bounds: Bounds,
}

impl RobotParams {
    /// Validates the links, derives the model bounds and checks that every
    /// finite torque limit exceeds the gravity bound of its joint.
    pub fn new(links: Vec<Link>, gravity: f64, torque_limits: Option<Vec<f64>>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invalid("a manipulator needs at least one link"));
        }
        for (k, link) in links.iter().enumerate() {
            let ok = link.mass > 0.0
                && link.length > 0.0
                && link.inertia >= 0.0
                && link.com.is_finite()
                && link.mass.is_finite()
                && link.length.is_finite()
                && link.inertia.is_finite();
            if !ok {
                return Err(Error::invalid(format!(
                    "link {}: mass and length must be positive and inertia nonnegative ({link:?})",
                    k + 1
                )));
            }
        }
        if !(gravity >= 0.0) || !gravity.is_finite() {
            return Err(Error::invalid(format!("gravity acceleration must be >= 0, got {gravity}")));
        }
        let n = links.len();
        let torque_limits = match torque_limits {
            None => None,
            Some(t) => {
                if t.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "torque limits",
                        expected: n,
                        found: t.len(),
                    });
                }
                if t.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::invalid("torque limits must be positive"));
                }
                Some(DVector::from_vec(t))
            }
        };
        let mut params = RobotParams {
            links,
            gravity,
            torque_limits,
            bounds: Bounds::placeholder(n),
        };
        params.bounds = derive_bounds(&params);
        if let Some(limits) = &params.torque_limits {
            for k in 0..n {
                if !(limits[k] > params.bounds.gravity[k]) {
                    return Err(Error::invalid(format!(
                        "actuator limit condition tau_max > g violated at joint {}: \
                         tau_max = {}, gravity bound g = {:.6}",
                        k + 1,
                        limits[k],
                        params.bounds.gravity[k]
                    )));
                }
            }
        }
        Ok(params)
    }

    /// The two-link arm used in the reference free-motion scenario.
    pub fn reference_two_link(gravity: f64) -> Self {
        let links = vec![
            Link { mass: 1.8, length: 0.8, com: 0.4, inertia: 0.096 },
            Link { mass: 1.6, length: 0.6, com: 0.3, inertia: 0.048 },
        ];
        RobotParams::new(links, gravity, None).expect("reference parameters are valid")
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn torque_limits(&self) -> Option<&DVector<f64>> {
        self.torque_limits.as_ref()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn check_len(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::DimensionMismatch { what, expected: self.dof(), found: v.len() });
        }
        Ok(())
    }

    /// Lever arm of link `a`'s segment within the position of link `k`'s
    /// center of mass.
    #[inline]
    fn arm(&self, k: usize, a: usize) -> f64 {
        if a < k {
            self.links[a].length
        } else {
            self.links[k].com
        }
    }
}

/// Generalized position and velocity of one manipulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl RobotState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.len() != qdot.len() {
            return Err(Error::DimensionMismatch {
                what: "joint velocities",
                expected: q.len(),
                found: qdot.len(),
            });
        }
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("robot state has non-finite entries"));
        }
        Ok(RobotState { q, qdot })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        RobotState { q, qdot: DVector::zeros(n) }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

fn absolute_angles(q: &DVector<f64>) -> Vec<f64> {
    let mut acc = 0.0;
    q.iter()
        .map(|qi| {
            acc += qi;
            acc
        })
        .collect()
}

fn mass_matrix_raw(params: &RobotParams, q: &DVector<f64>) -> DMatrix<f64> {
    let n = params.dof();
    let phi = absolute_angles(q);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in j..n {
                let link = &params.links[k];
                let mut trans = 0.0;
                for a in i..=k {
                    for b in j..=k {
                        trans += params.arm(k, a) * params.arm(k, b) * (phi[a] - phi[b]).cos();
                    }
                }
                acc += link.mass * trans + link.inertia;
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc;
        }
    }
    m
}

/// Inertia matrix `M(q)`.
pub fn mass_matrix(params: &RobotParams, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    params.check_len("joint positions", q)?;
    Ok(mass_matrix_raw(params, q))
}

/// Partial derivatives `∂M/∂q_m` for every joint `m`.
pub fn mass_matrix_partials(params: &RobotParams, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    params.check_len("joint positions", q)?;
    Ok(mass_matrix_partials_raw(params, q))
}

fn mass_matrix_partials_raw(params: &RobotParams, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let n = params.dof();
    let phi = absolute_angles(q);
    let mut out = vec![DMatrix::zeros(n, n); n];
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let mass = params.links[k].mass;
                for a in i..=k {
                    for b in j..=k {
                        if a == b {
                            continue;
                        }
                        let w = -mass * params.arm(k, a) * params.arm(k, b) * (phi[a] - phi[b]).sin();
                        // ∂(φ_a - φ_b)/∂q_m is +1 for b < m <= a and -1 for a < m <= b
                        let (lo, hi, s) = if a > b { (b, a, 1.0) } else { (a, b, -1.0) };
                        for dm in out.iter_mut().take(hi + 1).skip(lo + 1) {
                            dm[(i, j)] += s * w;
                        }
                    }
                }
            }
            if i != j {
                for dm in out.iter_mut() {
                    dm[(j, i)] = dm[(i, j)];
                }
            }
        }
    }
    out
}

fn coriolis_from_partials(partials: &[DMatrix<f64>], qdot: &DVector<f64>) -> DMatrix<f64> {
    let n = qdot.len();
    let mut c = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                let gamma = 0.5
                    * (partials[i][(k, j)] + partials[j][(k, i)] - partials[k][(i, j)]);
                acc += gamma * qdot[i];
            }
            c[(k, j)] = acc;
        }
    }
    c
}

/// Coriolis and centrifugal matrix `C(q, q̇)` from Christoffel symbols.
pub fn coriolis_matrix(
    params: &RobotParams,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    params.check_len("joint positions", q)?;
    params.check_len("joint velocities", qdot)?;
    let partials = mass_matrix_partials_raw(params, q);
    Ok(coriolis_from_partials(&partials, qdot))
}

/// Christoffel symbols `Γ[k][(i, j)]` so that `(C q̇)_k = q̇ᵀ Γ[k] q̇`.
pub(crate) fn christoffel(params: &RobotParams, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let n = params.dof();
    let partials = mass_matrix_partials_raw(params, q);
    (0..n)
        .map(|k| {
            DMatrix::from_fn(n, n, |i, j| {
                0.5 * (partials[i][(k, j)] + partials[j][(k, i)] - partials[k][(i, j)])
            })
        })
        .collect()
}

fn gravity_raw(params: &RobotParams, q: &DVector<f64>) -> DVector<f64> {
    let n = params.dof();
    if params.gravity == 0.0 {
        return DVector::zeros(n);
    }
    let phi = absolute_angles(q);
    DVector::from_fn(n, |i, _| {
        let mut acc = 0.0;
        for k in i..n {
            let mut lever = 0.0;
            for (a, phi_a) in phi.iter().enumerate().take(k + 1).skip(i) {
                lever += params.arm(k, a) * phi_a.cos();
            }
            acc += params.links[k].mass * lever;
        }
        params.gravity * acc
    })
}

/// Gradient of the gravitational potential energy, `∇U(q)`.
pub fn gravity_vector(params: &RobotParams, q: &DVector<f64>) -> Result<DVector<f64>> {
    params.check_len("joint positions", q)?;
    Ok(gravity_raw(params, q))
}

/// Gravitational potential energy, zero with every link horizontal.
pub fn potential_energy(params: &RobotParams, q: &DVector<f64>) -> Result<f64> {
    params.check_len("joint positions", q)?;
    let phi = absolute_angles(q);
    let mut u = 0.0;
    for (k, link) in params.links.iter().enumerate() {
        let height: f64 = (0..=k).map(|a| params.arm(k, a) * phi[a].sin()).sum();
        u += link.mass * height;
    }
    Ok(params.gravity * u)
}

/// `(kinetic, potential)` energy in joules.
pub fn energies(params: &RobotParams, state: &RobotState) -> Result<(f64, f64)> {
    let m = mass_matrix(params, &state.q)?;
    params.check_len("joint velocities", &state.qdot)?;
    let kinetic = 0.5 * state.qdot.dot(&(&m * &state.qdot));
    Ok((kinetic, potential_energy(params, &state.q)?))
}

pub(crate) fn factor(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m).ok_or(Error::SingularInertia { condition: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
    let condition = (hi / lo).powi(2);
    if !(condition < CONDITION_LIMIT) {
        return Err(Error::SingularInertia { condition });
    }
    Ok(chol)
}

/// Joint accelerations `q̈ = M⁻¹(τ + f - C q̇ - ∇U)`.
pub fn forward_dynamics(
    params: &RobotParams,
    state: &RobotState,
    tau: &DVector<f64>,
    f_ext: &DVector<f64>,
) -> Result<DVector<f64>> {
    params.check_len("joint positions", &state.q)?;
    params.check_len("joint velocities", &state.qdot)?;
    params.check_len("torques", tau)?;
    params.check_len("external forces", f_ext)?;
    let partials = mass_matrix_partials_raw(params, &state.q);
    let coriolis = coriolis_from_partials(&partials, &state.qdot);
    let rhs = tau + f_ext - coriolis * &state.qdot - gravity_raw(params, &state.q);
    let chol = factor(mass_matrix_raw(params, &state.q))?;
    Ok(chol.solve(&rhs))
}

/// Accelerations under a torque that already excludes gravity compensation:
/// `q̈ = M⁻¹(u + f - C q̇)`. Used where the controller's `+∇U` term and the
/// plant's `-∇U` term cancel exactly.
pub(crate) fn forward_dynamics_compensated(
    params: &RobotParams,
    state: &RobotState,
    net_tau: &DVector<f64>,
    f_ext: &DVector<f64>,
) -> Result<DVector<f64>> {
    let partials = mass_matrix_partials_raw(params, &state.q);
    let coriolis = coriolis_from_partials(&partials, &state.qdot);
    let rhs = net_tau + f_ext - coriolis * &state.qdot;
    let chol = factor(mass_matrix_raw(params, &state.q))?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn arm() -> RobotParams {
        RobotParams::reference_two_link(STANDARD_GRAVITY)
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn two_link_inertia_entries() {
        let p = arm();
        let m = mass_matrix(&p, &v(&[0.3, 0.0])).unwrap();
        assert_relative_eq!(m[(0, 0)], 2.368, epsilon = 1e-12);
        let m = mass_matrix(&p, &v(&[0.3, FRAC_PI_2])).unwrap();
        assert_relative_eq!(m[(0, 1)], 0.192, epsilon = 1e-12);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn matches_closed_form_two_link() {
        // textbook closed form for the two-link planar arm
        let p = arm();
        let (m1, m2, l1, lc1, lc2, i1, i2) = (1.8, 1.6, 0.8, 0.4, 0.3, 0.096, 0.048);
        for &(q1, q2, dq1, dq2) in &[(0.2, -0.7, 0.5, -1.1), (1.0, -0.4, 1.0, 1.0), (-2.0, 2.5, -0.3, 0.9)] {
            let c2 = f64::cos(q2);
            let s2 = f64::sin(q2);
            let m11 = m1 * lc1 * lc1 + i1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i2;
            let m12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2;
            let m22 = m2 * lc2 * lc2 + i2;
            let h = m2 * l1 * lc2 * s2;
            let m = mass_matrix(&p, &v(&[q1, q2])).unwrap();
            assert_relative_eq!(m[(0, 0)], m11, epsilon = 1e-12);
            assert_relative_eq!(m[(0, 1)], m12, epsilon = 1e-12);
            assert_relative_eq!(m[(1, 1)], m22, epsilon = 1e-12);
            let c = coriolis_matrix(&p, &v(&[q1, q2]), &v(&[dq1, dq2])).unwrap();
            let expected = DMatrix::from_row_slice(2, 2, &[-h * dq2, -h * (dq1 + dq2), h * dq1, 0.0]);
            assert_relative_eq!(c, expected, epsilon = 1e-12);
            let g = STANDARD_GRAVITY;
            let g1 = g * ((m1 * lc1 + m2 * l1) * q1.cos() + m2 * lc2 * (q1 + q2).cos());
            let g2 = g * m2 * lc2 * (q1 + q2).cos();
            let grad = gravity_vector(&p, &v(&[q1, q2])).unwrap();
            assert_relative_eq!(grad[0], g1, epsilon = 1e-12);
            assert_relative_eq!(grad[1], g2, epsilon = 1e-12);
        }
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let p = arm();
        let c = coriolis_matrix(&p, &v(&[0.4, 1.2]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(c, DMatrix::zeros(2, 2));
    }

    #[test]
    fn gravity_horizontal_links() {
        let p = arm();
        let g = gravity_vector(&p, &v(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(g[0], 9.81 * (1.8 * 0.4 + 1.6 * 0.8 + 1.6 * 0.3), epsilon = 1e-12);
        let flat = RobotParams::reference_two_link(0.0);
        assert_eq!(gravity_vector(&flat, &v(&[0.3, 0.1])).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn static_equilibrium_and_rest() {
        let p = arm();
        let s = RobotState::at_rest(v(&[0.7, -1.3]));
        let tau = gravity_vector(&p, &s.q).unwrap();
        let acc = forward_dynamics(&p, &s, &tau, &DVector::zeros(2)).unwrap();
        assert!(acc.norm() < 1e-12);
        let flat = RobotParams::reference_two_link(0.0);
        let acc = forward_dynamics(&flat, &s, &DVector::zeros(2), &DVector::zeros(2)).unwrap();
        assert_eq!(acc, DVector::zeros(2));
    }

    #[test]
    fn forward_dynamics_solves_residual() {
        let p = arm();
        let s = RobotState::new(v(&[1.0, -0.4]), v(&[0.8, -1.5])).unwrap();
        let tau = v(&[1.0, -2.0]);
        let f = v(&[0.3, 0.1]);
        let acc = forward_dynamics(&p, &s, &tau, &f).unwrap();
        let m = mass_matrix(&p, &s.q).unwrap();
        let c = coriolis_matrix(&p, &s.q, &s.qdot).unwrap();
        let residual = m * &acc + c * &s.qdot + gravity_vector(&p, &s.q).unwrap() - tau - f;
        assert!(residual.amax() < 1e-10);
    }

    #[test]
    fn reference_arm_unit_torque() {
        let p = arm();
        let s = RobotState::at_rest(v(&[1.0, -0.4]));
        let tau = gravity_vector(&p, &s.q).unwrap() + v(&[1.0, 0.0]);
        let acc = forward_dynamics(&p, &s, &tau, &DVector::zeros(2)).unwrap();
        let m = mass_matrix(&p, &s.q).unwrap();
        let expected = m.try_inverse().unwrap() * v(&[1.0, 0.0]);
        assert_relative_eq!(acc, expected, epsilon = 1e-12);
    }

    #[test]
    fn kinetic_energy_values() {
        let p = arm();
        let (k, _) = energies(&p, &RobotState::new(v(&[0.2, 0.0]), v(&[1.0, 0.0])).unwrap()).unwrap();
        assert_relative_eq!(k, 1.184, epsilon = 1e-12);
        let (k, _) = energies(&p, &RobotState::at_rest(v(&[0.2, 0.5]))).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn dimension_errors() {
        let p = arm();
        assert!(matches!(mass_matrix(&p, &v(&[1.0])), Err(Error::DimensionMismatch { .. })));
        assert!(coriolis_matrix(&p, &v(&[1.0, 2.0]), &v(&[1.0])).is_err());
        assert!(RobotState::new(v(&[1.0]), v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = Link { mass: 0.0, length: 1.0, com: 0.5, inertia: 0.1 };
        assert!(RobotParams::new(vec![bad], 0.0, None).is_err());
        let ok = Link { mass: 1.0, length: 1.0, com: 0.5, inertia: 0.1 };
        assert!(RobotParams::new(vec![ok], -1.0, None).is_err());
        // limit below the gravity load cannot hold the link up
        let err = RobotParams::new(vec![ok], 9.81, Some(vec![1.0])).unwrap_err();
        assert!(err.to_string().contains("tau_max > g"));
        assert!(RobotParams::new(vec![ok], 9.81, Some(vec![10.0])).is_ok());
    }

    #[test]
    fn singular_inertia_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(factor(m), Err(Error::SingularInertia { .. })));
    }
}
