//! Randomized checks of the structural properties the stability arguments
//! rely on: skew-symmetry of `Ṁ - 2C`, the quadratic Coriolis bound, the
//! inertia eigenvalue bounds and the gravity bound.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{coriolis_matrix, gravity_vector, mass_matrix, RobotParams};
use crate::error::Result;

/// `Ṁ(q)` along `q̇` by a five-point central stencil.
pub fn mass_matrix_rate_fd(
    params: &RobotParams,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    let at = |s: f64| mass_matrix(params, &(q + qdot * s));
    let m2p = at(2.0 * h)?;
    let m1p = at(h)?;
    let m1m = at(-h)?;
    let m2m = at(-2.0 * h)?;
    Ok((m1p - m1m) * (8.0 / (12.0 * h)) - (m2p - m2m) * (1.0 / (12.0 * h)))
}

#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub samples: usize,
    /// max |xᵀ(Ṁ - 2C)x| / ‖x‖²
    pub skew_defect: f64,
    /// max ‖C q̇‖ / (L_c ‖q̇‖²); at most 1 when the Coriolis bound holds.
    pub coriolis_ratio: f64,
    /// Extreme sampled eigenvalues of `M(q)`.
    pub eigen_range: (f64, f64),
    /// max_k |∇U_k| / g_k over samples (0 when gravity is off).
    pub gravity_ratio: f64,
}

impl PropertyReport {
    pub fn inertia_within_bounds(&self, params: &RobotParams) -> bool {
        let b = params.bounds();
        self.eigen_range.0 >= b.m1 && self.eigen_range.1 <= b.m2
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Evaluates the model properties on `samples` random `(q, q̇, x)` triples.
pub fn audit_model(params: &RobotParams, samples: usize, seed: u64) -> Result<PropertyReport> {
    let n = params.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = params.bounds();
    let mut report = PropertyReport {
        samples,
        skew_defect: 0.0,
        coriolis_ratio: 0.0,
        eigen_range: (f64::INFINITY, 0.0),
        gravity_ratio: 0.0,
    };
    for _ in 0..samples {
        let q = DVector::from_fn(n, |_, _| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let qdot = DVector::from_fn(n, |_, _| 2.0 * normal(&mut rng));
        let x = DVector::from_fn(n, |_, _| normal(&mut rng));

        let mdot = mass_matrix_rate_fd(params, &q, &qdot, 1e-3)?;
        let c = coriolis_matrix(params, &q, &qdot)?;
        let skew = (x.transpose() * (mdot - &c * 2.0) * &x)[(0, 0)].abs() / x.norm_squared();
        report.skew_defect = report.skew_defect.max(skew);

        let speed2 = qdot.norm_squared();
        if bounds.coriolis > 0.0 && speed2 > 0.0 {
            let ratio = (&c * &qdot).norm() / (bounds.coriolis * speed2);
            report.coriolis_ratio = report.coriolis_ratio.max(ratio);
        } else {
            let cq = (&c * &qdot).norm();
            if cq > 0.0 {
                report.coriolis_ratio = f64::INFINITY;
            }
        }

        let eig = mass_matrix(params, &q)?.symmetric_eigenvalues();
        report.eigen_range.0 = report.eigen_range.0.min(eig.min());
        report.eigen_range.1 = report.eigen_range.1.max(eig.max());

        let g = gravity_vector(params, &q)?;
        for k in 0..n {
            if bounds.gravity[k] > 0.0 {
                report.gravity_ratio = report.gravity_ratio.max(g[k].abs() / bounds.gravity[k]);
            } else if g[k] != 0.0 {
                report.gravity_ratio = f64::INFINITY;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Link, STANDARD_GRAVITY};

    #[test]
    fn reference_arm_satisfies_properties() {
        let p = RobotParams::reference_two_link(STANDARD_GRAVITY);
        let r = audit_model(&p, 200, 7).unwrap();
        assert!(r.skew_defect < 1e-9, "{r:?}");
        assert!(r.coriolis_ratio <= 1.0);
        assert!(r.gravity_ratio <= 1.0);
        assert!(r.inertia_within_bounds(&p));
    }

    #[test]
    fn three_link_arm_satisfies_properties() {
        let links = vec![
            Link { mass: 2.0, length: 0.5, com: 0.25, inertia: 0.05 },
            Link { mass: 1.2, length: 0.4, com: 0.2, inertia: 0.02 },
            Link { mass: 0.6, length: 0.3, com: 0.1, inertia: 0.01 },
        ];
        let p = RobotParams::new(links, STANDARD_GRAVITY, None).unwrap();
        let r = audit_model(&p, 200, 11).unwrap();
        assert!(r.skew_defect < 1e-9, "{r:?}");
        assert!(r.coriolis_ratio <= 1.0, "{r:?}");
        assert!(r.gravity_ratio <= 1.0);
        assert!(r.inertia_within_bounds(&p));
    }
}
