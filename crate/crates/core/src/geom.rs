//! Small vector/tensor helpers shared by every module.
//!
//! Gradient tensors follow the convention `G[(i, j)] = ∂_i a_j`, so the
//! directional derivative along `n` is `Gᵀ n` and the flux through a face
//! with area vector `s` is `s·G = Gᵀ s`.

use std::f64::consts::PI;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Tensor = nalgebra::Matrix3<f64>;

/// Magnetic permeability of free space [H/m].
pub const MU0: f64 = 4.0e-7 * PI;

pub fn outer(a: &Vec3, b: &Vec3) -> Tensor {
    a * b.transpose()
}

/// Axial vector of a gradient tensor, `c_i = ε_ijk G_jk`.
///
/// For `G = ∇a` this is `∇×a`.
pub fn hodge(g: &Tensor) -> Vec3 {
    Vec3::new(
        g[(1, 2)] - g[(2, 1)],
        g[(2, 0)] - g[(0, 2)],
        g[(0, 1)] - g[(1, 0)],
    )
}

/// Skew part `G − Gᵀ`.
pub fn skew(g: &Tensor) -> Tensor {
    g - g.transpose()
}

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}
