//! Interface coupling: generalised surface current and the two-sided flux
//! match for the normal gradient of `A`.

use crate::geom::{hodge, outer, Tensor, Vec3, MU0};
use crate::mesh::Region;

/// Coefficients of the outward normal gradient on one side of an interface
/// face, `∂A/∂n = a_C A_C' + a_E A_E' + a_K K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxMatch {
    pub a_c: f64,
    pub a_e: f64,
    pub a_k: f64,
}

/// Flux match for the side whose cell sits `d_c` from the face, the other
/// cell `d_e`: continuity of `A` plus the gradient jump `−μ0 K`.
pub fn interface_sn_grad(d_c: f64, d_e: f64) -> FluxMatch {
    let inv = 1.0 / (d_c + d_e);
    FluxMatch {
        a_c: -inv,
        a_e: inv,
        a_k: MU0 * d_e * inv,
    }
}

impl FluxMatch {
    /// Outward normal gradient on side C.
    pub fn gradient(&self, a_c: &Vec3, a_e: &Vec3, k: &Vec3) -> Vec3 {
        self.a_c * a_c + self.a_e * a_e + self.a_k * k
    }
}

/// Shared face value `[A_C/d_C + A_E/d_E + μ0 K] / (1/d_C + 1/d_E)`.
pub fn interface_face_value(a_c: &Vec3, a_e: &Vec3, d_c: f64, d_e: f64, k: &Vec3) -> Vec3 {
    (a_c / d_c + a_e / d_e + MU0 * k) / (1.0 / d_c + 1.0 / d_e)
}

/// `K = −K_f + [(χB + M)_A − (χB + M)_B] × e_n`, `e_n` from A to B.
pub fn surface_current(kf: &Vec3, side_a: &SideState, side_b: &SideState, e_n: &Vec3) -> Vec3 {
    let da = side_a.chi * side_a.b + side_a.m;
    let db = side_b.chi * side_b.b + side_b.m;
    -kf + (da - db).cross(e_n)
}

/// One-sided face quantities entering `K`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideState {
    pub chi: f64,
    pub b: Vec3,
    pub m: Vec3,
}

/// Flux density on one side of a boundary face: tangential part from the
/// one-sided face gradient with outward normal derivative `g`, normal part
/// from the cell value extrapolated with its gradient.
pub fn side_flux_density(n: &Vec3, grad_a: &Tensor, g: &Vec3, b_cell: &Vec3, grad_b: &Tensor, r_cf: &Vec3) -> Vec3 {
    let b_ext = b_cell + grad_b.transpose() * r_cf;
    let tang_grad = grad_a - outer(n, &(grad_a.transpose() * n));
    let t = hodge(&tang_grad) + n.cross(g);
    b_ext.dot(n) * n + (t - t.dot(n) * n)
}

/// Cell value shifted to the foot of the face normal: `A + Gᵀ (x_f − d n̂ − x_C)`.
pub fn shifted_value(region: &Region, face: usize, a: &Vec3, grad: &Tensor) -> Vec3 {
    a + grad.transpose() * region.geometry.bnd_offset[face - region.n_internal]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_no_jump() {
        let d = 0.3;
        let fm = interface_sn_grad(d, d);
        let (ac, ae, k) = (Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::zeros());
        assert_eq!(interface_face_value(&ac, &ae, d, d, &k), Vec3::new(1.0, 0.0, 0.0));
        assert!((fm.gradient(&ac, &ae, &k) - Vec3::new(1.0 / d, 0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn pure_jump() {
        let d = 0.01;
        let kv = Vec3::new(0.0, 0.0, 3.0e5);
        let k = MU0 * kv;
        let z = Vec3::zeros();
        let af = interface_face_value(&z, &z, d, d, &kv);
        assert!((af - d / 2.0 * k).norm() < 1e-15);
        let gc = interface_sn_grad(d, d).gradient(&z, &z, &kv);
        // side E's outward gradient, expressed along side C's normal
        let ge = -interface_sn_grad(d, d).gradient(&z, &z, &kv);
        assert!((gc - k / 2.0).norm() < 1e-12);
        assert!((ge + k / 2.0).norm() < 1e-12);
        assert!((ge - gc + k).norm() < 1e-12);
    }

    #[test]
    fn diagonal_coefficient() {
        let fm = interface_sn_grad(1.0, 2.0);
        assert!((fm.a_c + 1.0 / 3.0).abs() < 1e-15);
        let spec_form = -(1.0 / 1.0) * (1.0 - (1.0 / 1.0) / (1.0 / 1.0 + 1.0 / 2.0));
        assert!((fm.a_c - spec_form).abs() < 1e-15);
    }

    #[test]
    fn surface_current_examples() {
        let e_n = Vec3::new(1.0, 0.0, 0.0);
        let same = SideState { chi: 7.7e5, b: Vec3::new(0.1, 0.2, 0.0), m: Vec3::zeros() };
        assert_eq!(surface_current(&Vec3::zeros(), &same, &same, &e_n), Vec3::zeros());
        let magnet = SideState { chi: 0.0, b: Vec3::zeros(), m: Vec3::new(0.0, 9.75e5, 0.0) };
        let air = SideState::default();
        let k = surface_current(&Vec3::zeros(), &magnet, &air, &e_n);
        assert_eq!(k, Vec3::new(0.0, 0.0, -9.75e5));
        let top = surface_current(&Vec3::zeros(), &magnet, &air, &Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(top, Vec3::zeros());
        // swapping sides flips both Δ and e_n
        let swapped = surface_current(&Vec3::zeros(), &air, &magnet, &-e_n);
        assert_eq!(swapped, k);
    }

    #[test]
    fn side_flux_density_of_uniform_field() {
        // A = (0, 0, B0 y) gives B = (B0, 0, 0)
        let b0 = 0.7;
        let mut g = Tensor::zeros();
        g[(1, 2)] = b0;
        let b = Vec3::new(b0, 0.0, 0.0);
        for n in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.6, 0.8, 0.0)] {
            let gn = g.transpose() * n;
            let s = side_flux_density(&n, &g, &gn, &b, &Tensor::zeros(), &Vec3::new(0.1, 0.0, 0.0));
            assert!((s - b).norm() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn flux_match_jump_identity(
            ac in prop::array::uniform3(-1e3f64..1e3),
            ae in prop::array::uniform3(-1e3f64..1e3),
            k in prop::array::uniform3(-1e7f64..1e7),
            dc in 1e-4f64..1.0,
            de in 1e-4f64..1.0,
        ) {
            let (ac, ae, k) = (Vec3::from(ac), Vec3::from(ae), Vec3::from(k));
            let gc = interface_sn_grad(dc, de).gradient(&ac, &ae, &k);
            let ge = interface_sn_grad(de, dc).gradient(&ae, &ac, &k);
            // along a common normal: g_E,n − g_C,n = −ge − gc = −μ0 K
            let jump = -ge - gc;
            let scale = (MU0 * k).norm() + (ac - ae).norm() / dc.min(de);
            prop_assert!((jump + MU0 * k).norm() <= 1e-12 * scale.max(1.0));
            // both sides reproduce the shared face value
            let af = interface_face_value(&ac, &ae, dc, de, &k);
            prop_assert!((ac + dc * gc - af).norm() <= 1e-12 * (af.norm() + ac.norm() + ae.norm()).max(1.0));
            prop_assert!((ae + de * ge - af).norm() <= 1e-12 * (af.norm() + ac.norm() + ae.norm()).max(1.0));
        }
    }
}
