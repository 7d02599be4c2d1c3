//! Shared helpers for the integration tests: discrete forms of the vector
//! identities on manufactured polynomial fields.

#![allow(dead_code)]

use ferrovolt::field::CellVectorField;
use ferrovolt::fvops::{consistent_face_gradients, face_gradients, gauss_cell_gradient, gauss_curl, scalar_gauss_gradient};
use ferrovolt::geom::{hodge, Tensor, Vec3};
use ferrovolt::mesh::generate::structured::{self, Split};
use ferrovolt::mesh::planar::{extrude, PlanarMesh};
use ferrovolt::mesh::{MultiRegionMesh, PatchKind, Region};

/// Meshes of the unit square used for the observed-order studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Uniform quads.
    Orthogonal,
    /// Quads on a smoothly stretched tensor grid.
    StretchedQuads,
    /// Diagonal-split quads under a smooth sinusoidal map.
    MappedTriangles,
    /// Diagonal-split quads with nodes moved at random by a quarter edge.
    PerturbedTriangles,
}

pub fn unit_square(family: Family, n: usize) -> MultiRegionMesh {
    let xs = structured::uniform_axis(0.0, 1.0, n);
    match family {
        Family::Orthogonal => structured::rectilinear(&xs, &xs, |_| 0, &["box"], None).unwrap(),
        Family::StretchedQuads => {
            let s: Vec<f64> = xs.iter().map(|&t| (t + 0.6 * t * t) / 1.6).collect();
            structured::rectilinear(&s, &s, |_| 0, &["box"], None).unwrap()
        }
        Family::PerturbedTriangles => {
            let mut pm = structured::rectilinear_planar(&xs, &xs, |_| 0, &["box"], Some(Split::Triangles));
            structured::perturb(&mut pm, 0.25, 3);
            extrude(&pm, 1.0).unwrap()
        }
        Family::MappedTriangles => {
            let mut pm = structured::rectilinear_planar(&xs, &xs, |_| 0, &["box"], Some(Split::Triangles));
            smooth_map(&mut pm, 0.04);
            extrude(&pm, 1.0).unwrap()
        }
    }
}

/// `x += ε sin(2πx) sin(2πy)` and likewise for y; fixes the square's edges.
fn smooth_map(pm: &mut PlanarMesh, eps: f64) {
    let tau = std::f64::consts::TAU;
    for p in &mut pm.points {
        let s = eps * (tau * p[0]).sin() * (tau * p[1]).sin();
        let t = eps * (tau * (p[0] + 0.25)).sin() * (tau * p[1]).sin() * (tau * p[0]).sin();
        p[0] += s;
        p[1] += t;
    }
}

/// A cubic field with all nine in-plane gradient entries non-trivial.
pub fn poly(x: Vec3) -> Vec3 {
    let (a, b) = (x.x, x.y);
    Vec3::new(a * a * b - b * b * b / 3.0 + 0.5 * a, a * a * a + a * b * b - b, a * a * b + a * b * b + a)
}

/// Exact gradient `G[(i, j)] = ∂_i a_j` of [`poly`].
pub fn poly_grad(x: Vec3) -> Tensor {
    let (a, b) = (x.x, x.y);
    let mut g = Tensor::zeros();
    g[(0, 0)] = 2.0 * a * b + 0.5;
    g[(1, 0)] = a * a - b * b;
    g[(0, 1)] = 3.0 * a * a + b * b;
    g[(1, 1)] = 2.0 * a * b - 1.0;
    g[(0, 2)] = 2.0 * a * b + b * b + 1.0;
    g[(1, 2)] = a * a + 2.0 * a * b;
    g
}

fn sign(r: &Region, f: usize, c: usize) -> f64 {
    if r.faces[f].owner == c {
        1.0
    } else {
        -1.0
    }
}

fn planar(r: &Region, f: usize) -> bool {
    f >= r.n_internal && r.boundary_kind(f) == PatchKind::Planar
}

/// `(∇·T)_j = (1/V) Σ_f s_i T_ij` over non-planar faces.
pub fn tensor_divergence(r: &Region, face: &[Tensor]) -> Vec<Vec3> {
    let g = &r.geometry;
    (0..r.n_cells)
        .map(|c| {
            let mut v = Vec3::zeros();
            for &f in &r.cell_faces[c] {
                if !planar(r, f) {
                    v += sign(r, f, c) * face[f].transpose() * g.face_area[f];
                }
            }
            v / g.cell_volume[c]
        })
        .collect()
}

fn with_exact_boundary(r: &Region, mut internal: Vec<Tensor>) -> Vec<Tensor> {
    internal.extend((r.n_internal..r.n_faces()).map(|f| poly_grad(r.geometry.face_centroid[f])));
    internal
}

/// Both sides of the identities I03, I10 and I11 per cell.
pub struct IdentitySides {
    pub curl_curl: Vec<Vec3>,
    pub grad_div: Vec<Vec3>,
    pub laplacian: Vec<Vec3>,
    pub div_grad: Vec<Vec3>,
    pub div_grad_t: Vec<Vec3>,
}

pub fn identity_sides(r: &Region) -> IdentitySides {
    let a = CellVectorField::from_fn(r, poly);
    let grads = gauss_cell_gradient(r, &a, 50);
    let g = &r.geometry;

    // ∇·(∇a): interpolated face gradients
    let interp = with_exact_boundary(r, face_gradients(r, &grads));
    let div_grad = tensor_divergence(r, &interp);
    let interp_t: Vec<Tensor> = interp.iter().map(|t| t.transpose()).collect();
    let div_grad_t = tensor_divergence(r, &interp_t);

    // ∇²a: compact normal gradient with the non-orthogonal correction
    let compact = with_exact_boundary(r, consistent_face_gradients(r, &grads, &a.cells, 1.0));
    let laplacian = tensor_divergence(r, &compact);

    // ∇(∇·a) from cell divergences interpolated to faces
    let div: Vec<f64> = grads.iter().map(|t| t.trace()).collect();
    let div_faces: Vec<f64> = (0..r.n_faces())
        .map(|f| match r.faces[f].neighbour {
            Some(nb) => g.weight[f] * div[r.faces[f].owner] + (1.0 - g.weight[f]) * div[nb],
            None => poly_grad(g.face_centroid[f]).trace(),
        })
        .collect();
    let grad_div = scalar_gauss_gradient(r, &div_faces);

    // ∇×(∇×a) from cell curls interpolated to faces
    let curl: Vec<Vec3> = grads.iter().map(hodge).collect();
    let curl_faces: Vec<Vec3> = (0..r.n_faces())
        .map(|f| match r.faces[f].neighbour {
            Some(nb) => g.weight[f] * curl[r.faces[f].owner] + (1.0 - g.weight[f]) * curl[nb],
            None => hodge(&poly_grad(g.face_centroid[f])),
        })
        .collect();
    let curl_curl = gauss_curl(r, &curl_faces);

    IdentitySides { curl_curl, grad_div, laplacian, div_grad, div_grad_t }
}

/// Max over cells at least 0.2 from the square's edges of `|lhs − rhs|`.
pub fn interior_max(r: &Region, lhs: &[Vec3], rhs: &[Vec3]) -> f64 {
    (0..r.n_cells)
        .filter(|&c| {
            let x = r.geometry.cell_centroid[c];
            x.x > 0.2 && x.x < 0.8 && x.y > 0.2 && x.y < 0.8
        })
        .map(|c| (lhs[c] - rhs[c]).norm())
        .fold(0.0, f64::max)
}

/// Errors of I03, I10 and I11 on one mesh.
pub fn identity_errors(m: &MultiRegionMesh) -> [f64; 3] {
    let r = &m.regions[0];
    let s = identity_sides(r);
    let rhs03: Vec<Vec3> = s.grad_div.iter().zip(&s.laplacian).map(|(a, b)| a - b).collect();
    [
        interior_max(r, &s.curl_curl, &rhs03),
        interior_max(r, &s.div_grad, &s.laplacian),
        interior_max(r, &s.div_grad_t, &s.grad_div),
    ]
}

/// Observed order between the coarsest and finest of `errs` at sizes `hs`.
pub fn observed_order(errs: &[f64], hs: &[f64]) -> f64 {
    let n = errs.len() - 1;
    (errs[0] / errs[n]).ln() / (hs[0] / hs[n]).ln()
}

/// Volume-weighted RMS over the same interior cells as [`interior_max`].
pub fn interior_rms(r: &Region, lhs: &[Vec3], rhs: &[Vec3]) -> f64 {
    let (mut s, mut v) = (0.0, 0.0);
    for c in 0..r.n_cells {
        let x = r.geometry.cell_centroid[c];
        if x.x > 0.2 && x.x < 0.8 && x.y > 0.2 && x.y < 0.8 {
            let w = r.geometry.cell_volume[c];
            s += w * (lhs[c] - rhs[c]).norm_squared();
            v += w;
        }
    }
    (s / v).sqrt()
}

pub fn identity_errors_rms(m: &MultiRegionMesh) -> [f64; 3] {
    let r = &m.regions[0];
    let s = identity_sides(r);
    let rhs03: Vec<Vec3> = s.grad_div.iter().zip(&s.laplacian).map(|(a, b)| a - b).collect();
    [
        interior_rms(r, &s.curl_curl, &rhs03),
        interior_rms(r, &s.div_grad, &s.laplacian),
        interior_rms(r, &s.div_grad_t, &s.grad_div),
    ]
}
