use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{christoffel, gravity_raw, mass_matrix_raw, RobotParams};

/// Minimum number of sampled configurations.
const MIN_SAMPLES: usize = 10_000;
/// Multiplicative margin on sampled suprema.
const MARGIN: f64 = 1.05;
/// Fraction of the sampled eigenvalue spread added on each side.
const SPREAD_MARGIN: f64 = 0.05;

/// Configuration-independent model bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    /// Lower eigenvalue bound of `M(q)`.
    pub m1: f64,
    /// Upper eigenvalue bound of `M(q)`.
    pub m2: f64,
    /// `‖C(q, q̇) q̇‖ <= coriolis · ‖q̇‖²`.
    pub coriolis: f64,
    /// `|∇U_k(q)| <= gravity[k]`.
    pub gravity: DVector<f64>,
}

impl Bounds {
    pub(super) fn placeholder(n: usize) -> Self {
        Bounds { m1: 0.0, m2: 0.0, coriolis: 0.0, gravity: DVector::zeros(n) }
    }
}

fn configurations(n: usize) -> Vec<DVector<f64>> {
    let per_axis = ((MIN_SAMPLES as f64).powf(1.0 / n as f64).ceil() as usize).max(3);
    let total = per_axis.pow(n as u32);
    let step = std::f64::consts::TAU / per_axis as f64;
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(n, |_, _| {
                let k = idx % per_axis;
                idx /= per_axis;
                -std::f64::consts::PI + step * k as f64
            })
        })
        .collect()
}

fn unit_directions(n: usize) -> Vec<DVector<f64>> {
    match n {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..180)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / 180.0;
                DVector::from_row_slice(&[a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut dirs: Vec<DVector<f64>> = (0..n)
                .map(|k| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
                .collect();
            while dirs.len() < 512 {
                let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let norm = v.norm();
                if norm > 1e-9 {
                    dirs.push(v / norm);
                }
            }
            dirs
        }
    }
}

/// Inertia, Coriolis and gravity bounds from dense sampling of the
/// configuration torus (at least 10⁴ configurations).
///
/// The sampled suprema of `‖C(q,u)u‖` over unit `u` and of `|∇U_k|` are
/// inflated by 5 %. The eigenvalue range is widened by 5 % of its spread on
/// each side, so an arm whose inertia does not depend on `q` gets exact
/// bounds.
pub fn derive_bounds(params: &RobotParams) -> Bounds {
    let n = params.dof();
    let dirs = unit_directions(n);
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = 0.0_f64;
    let mut coriolis = 0.0_f64;
    let mut gravity = DVector::<f64>::zeros(n);
    for q in configurations(n) {
        let eig = mass_matrix_raw(params, &q).symmetric_eigenvalues();
        lambda_min = lambda_min.min(eig.min());
        lambda_max = lambda_max.max(eig.max());
        if n > 1 {
            let gamma = christoffel(params, &q);
            for u in &dirs {
                let cu = DVector::from_fn(n, |k, _| u.dot(&(&gamma[k] * u)));
                coriolis = coriolis.max(cu.norm());
            }
        }
        let g = gravity_raw(params, &q);
        for k in 0..n {
            gravity[k] = gravity[k].max(g[k].abs());
        }
    }
    let spread = lambda_max - lambda_min;
    Bounds {
        m1: (lambda_min - SPREAD_MARGIN * spread).max(0.5 * lambda_min),
        m2: lambda_max + SPREAD_MARGIN * spread,
        coriolis: MARGIN * coriolis,
        gravity: gravity * MARGIN,
    }
}
