//! Closed-form planar reference fields and a dense direct solver used to
//! separate iterative-solver error from discretisation error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geom::{Vec3, MU0};
use crate::linalg::SparseSystem;

/// Largest system the dense reference will factorise.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("invalid analytic case: {0}")]
    InvalidCase(String),
    #[error("unknown analytic case `{0}`")]
    UnknownKind(String),
    #[error("system has {0} unknowns, dense reference is limited to {DENSE_LIMIT}")]
    TooLarge(usize),
    #[error("matrix is singular")]
    Singular,
}

/// Infinite planar configurations with a circular cross-section of radius
/// `radius` centred at the origin, embedded in unbounded air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticCase {
    /// Permanent magnet with uniform in-plane magnetisation.
    MagnetizedCylinder { radius: f64, magnetization: [f64; 2] },
    /// Straight conductor carrying a uniform `J_z`.
    CurrentWire { radius: f64, current_density: f64 },
    /// Linear permeable cylinder in a uniform in-plane applied field.
    PermeableCylinderUniformField { radius: f64, mu_r: f64, b0: [f64; 2] },
}

impl AnalyticCase {
    pub const KINDS: [&'static str; 3] = ["magnetized_cylinder", "current_wire", "permeable_cylinder"];

    pub fn radius(&self) -> f64 {
        match *self {
            AnalyticCase::MagnetizedCylinder { radius, .. }
            | AnalyticCase::CurrentWire { radius, .. }
            | AnalyticCase::PermeableCylinderUniformField { radius, .. } => radius,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let a = self.radius();
        if !(a.is_finite() && a > 0.0) {
            return Err(OracleError::InvalidCase(format!("radius must be positive, got {a}")));
        }
        let finite = match *self {
            AnalyticCase::MagnetizedCylinder { magnetization, .. } => magnetization.iter().all(|v| v.is_finite()),
            AnalyticCase::CurrentWire { current_density, .. } => current_density.is_finite(),
            AnalyticCase::PermeableCylinderUniformField { mu_r, b0, .. } => {
                if !(mu_r.is_finite() && mu_r >= 1.0) {
                    return Err(OracleError::InvalidCase(format!("mu_r must be >= 1, got {mu_r}")));
                }
                b0.iter().all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(OracleError::InvalidCase("parameters must be finite".into()))
        }
    }

    /// The named case with its default parameters.
    pub fn by_name(name: &str) -> Result<Self, OracleError> {
        let radius = 0.0375;
        match name {
            "magnetized_cylinder" => Ok(AnalyticCase::MagnetizedCylinder {
                radius,
                magnetization: [0.0, 9.75e5],
            }),
            "current_wire" => Ok(AnalyticCase::CurrentWire {
                radius,
                current_density: 2.5e7,
            }),
            "permeable_cylinder" | "permeable_cylinder_uniform_field" => Ok(AnalyticCase::PermeableCylinderUniformField {
                radius,
                mu_r: 30.0,
                b0: [0.1, 0.0],
            }),
            other => Err(OracleError::UnknownKind(other.to_string())),
        }
    }
}

fn v2(a: [f64; 2]) -> Vec3 {
    Vec3::new(a[0], a[1], 0.0)
}

/// 2D line-dipole field `p a²/r² (2(v·r̂)r̂ − v)` outside the cylinder.
fn dipole(v: Vec3, a: f64, r: Vec3) -> Vec3 {
    let rn = r.norm();
    let rh = r / rn;
    (a * a / (rn * rn)) * (2.0 * v.dot(&rh) * rh - v)
}

/// Flux density at an in-plane point (the z coordinate is ignored).
pub fn analytic_b(case: &AnalyticCase, point: &Vec3) -> Vec3 {
    let r = Vec3::new(point.x, point.y, 0.0);
    let rn = r.norm();
    let a = case.radius();
    match *case {
        AnalyticCase::MagnetizedCylinder { magnetization, .. } => {
            let m = v2(magnetization);
            if rn < a {
                0.5 * MU0 * m
            } else {
                0.5 * MU0 * dipole(m, a, r)
            }
        }
        AnalyticCase::CurrentWire { current_density, .. } => {
            if rn == 0.0 {
                return Vec3::zeros();
            }
            let theta = Vec3::new(-r.y, r.x, 0.0) / rn;
            let bt = if rn < a {
                0.5 * MU0 * current_density * rn
            } else {
                0.5 * MU0 * current_density * a * a / rn
            };
            bt * theta
        }
        AnalyticCase::PermeableCylinderUniformField { mu_r, b0, .. } => {
            let b0 = v2(b0);
            if rn < a {
                (2.0 * mu_r / (mu_r + 1.0)) * b0
            } else {
                b0 + ((mu_r - 1.0) / (mu_r + 1.0)) * dipole(b0, a, r)
            }
        }
    }
}

/// Solves every component of `system` by dense LU factorisation.
pub fn dense_reference_solve(system: &SparseSystem) -> Result<Vec<Vec3>, OracleError> {
    let n = system.n();
    if n > DENSE_LIMIT {
        return Err(OracleError::TooLarge(n));
    }
    let rows = system.matrix.to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let lu = m.lu();
    if !lu.is_invertible() {
        return Err(OracleError::Singular);
    }
    let mut x = vec![Vec3::zeros(); n];
    for k in 0..3 {
        let b = DVector::from_vec(system.component(k));
        let sol = lu.solve(&b).ok_or(OracleError::Singular)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::Singular);
        }
        for (xi, s) in x.iter_mut().zip(sol.iter()) {
            xi[k] = *s;
        }
    }
    Ok(x)
}
