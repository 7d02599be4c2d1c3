//! Discrete operators on region fields.
//!
//! Conventions: `G[(i, j)] = ∂_i a_j` for the gradient of a vector field,
//! so the flux of `G` through an area vector `s` is `Gᵀ s` and a linear
//! field varies as `a(x) = a(x0) + Gᵀ (x − x0)`. Face sums skip planar
//! (front/back) faces; for one-cell-thick prisms their contributions cancel.
//!
//! Per-cell accumulations gather over each cell's own face list in a fixed
//! order, so parallel and sequential evaluation give identical results.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::field::{CellScalarField, CellVectorField};
use crate::geom::{hodge, outer, Tensor, Vec3};
use crate::mesh::{PatchKind, Region};

/// Values on every face of a region. Planar faces carry the owner value.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVectorField {
    pub values: Vec<Vec3>,
}

#[inline]
fn is_planar(region: &Region, f: usize) -> bool {
    f >= region.n_internal && region.boundary_kind(f) == PatchKind::Planar
}

/// Outward sign of face `f` for cell `c`.
#[inline]
fn sign(region: &Region, f: usize, c: usize) -> f64 {
    if region.faces[f].owner == c {
        1.0
    } else {
        -1.0
    }
}

/// Linear interpolation `φ_f = w φ_C + (1 − w) φ_E`; boundary faces take
/// the patch values.
pub fn interpolate_faces(region: &Region, field: &CellVectorField) -> FaceVectorField {
    let g = &region.geometry;
    let mut values = Vec::with_capacity(region.n_faces());
    for (fi, f) in region.faces.iter().enumerate() {
        values.push(match f.neighbour {
            Some(nb) => g.weight[fi] * field.cells[f.owner] + (1.0 - g.weight[fi]) * field.cells[nb],
            None if is_planar(region, fi) => field.cells[f.owner],
            None => field.boundary[fi - region.n_internal],
        });
    }
    FaceVectorField { values }
}

pub fn interpolate_scalar(region: &Region, field: &CellScalarField) -> Vec<f64> {
    let g = &region.geometry;
    region
        .faces
        .iter()
        .enumerate()
        .map(|(fi, f)| match f.neighbour {
            Some(nb) => g.weight[fi] * field.cells[f.owner] + (1.0 - g.weight[fi]) * field.cells[nb],
            None if is_planar(region, fi) => field.cells[f.owner],
            None => field.boundary[fi - region.n_internal],
        })
        .collect()
}

/// `(1/V) Σ_f s_f ⊗ φ_f`.
pub fn gauss_gradient_from_faces(region: &Region, face: &[Vec3]) -> Vec<Tensor> {
    let g = &region.geometry;
    (0..region.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut t = Tensor::zeros();
            for &f in &region.cell_faces[c] {
                if is_planar(region, f) {
                    continue;
                }
                t += outer(&(sign(region, f, c) * g.face_area[f]), &face[f]);
            }
            t / g.cell_volume[c]
        })
        .collect()
}

/// Plain Gauss gradient from linearly interpolated face values.
pub fn gauss_gradient_linear(region: &Region, field: &CellVectorField) -> Vec<Tensor> {
    gauss_gradient_from_faces(region, &interpolate_faces(region, field).values)
}

/// Gauss gradient with face values corrected for skewness,
/// `φ_f = φ_ip + (x_f − x_ip)·∇φ_f`, iterated to convergence (at most
/// `max_iter` corrections). Exact for linear fields on any mesh when the
/// boundary values are exact.
pub fn gauss_cell_gradient(region: &Region, field: &CellVectorField, max_iter: usize) -> Vec<Tensor> {
    let base = interpolate_faces(region, field).values;
    let mut grad = gauss_gradient_from_faces(region, &base);
    let g = &region.geometry;
    if g.skew.iter().all(|s| s.norm() == 0.0) {
        return grad;
    }
    let scale = grad.iter().map(|t| t.amax()).fold(0.0, f64::max);
    for _ in 0..max_iter {
        let mut faces = base.clone();
        for fi in 0..region.n_internal {
            let nb = region.faces[fi].neighbour.unwrap();
            let w = g.weight[fi];
            let gf = w * grad[region.faces[fi].owner] + (1.0 - w) * grad[nb];
            faces[fi] += gf.transpose() * g.skew[fi];
        }
        let next = gauss_gradient_from_faces(region, &faces);
        let change = next
            .iter()
            .zip(&grad)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        grad = next;
        if change <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    grad
}

/// Weighted least-squares gradient over face neighbours (boundary faces
/// contribute their face values).
pub fn least_squares_gradient(region: &Region, field: &CellVectorField) -> Vec<Tensor> {
    let g = &region.geometry;
    (0..region.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut m = Matrix3::<f64>::zeros();
            let mut rhs = Tensor::zeros();
            for &f in &region.cell_faces[c] {
                if is_planar(region, f) {
                    continue;
                }
                let face = &region.faces[f];
                let (d, dphi) = match face.neighbour {
                    Some(nb) => {
                        let other = if face.owner == c { nb } else { face.owner };
                        (
                            g.cell_centroid[other] - g.cell_centroid[c],
                            field.cells[other] - field.cells[c],
                        )
                    }
                    None => (
                        g.face_centroid[f] - g.cell_centroid[c],
                        field.boundary[f - region.n_internal] - field.cells[c],
                    ),
                };
                let w = 1.0 / d.norm_squared();
                m += w * d * d.transpose();
                rhs += w * outer(&d, &dphi);
            }
            let inv = m
                .pseudo_inverse(1e-12 * m.trace().abs().max(f64::MIN_POSITIVE))
                .unwrap_or_else(|_| Matrix3::zeros());
            inv * rhs
        })
        .collect()
}

/// Gauss gradient in which boundary values are extrapolated from the cell
/// with the gradient itself, `φ_b = φ_C + Gᵀ r_Cb`, i.e. `(I − P) G = G0`.
/// Used for fields without boundary values (the flux density).
pub fn extrapolated_gradient(region: &Region, cells: &[Vec3]) -> Vec<Tensor> {
    let g = &region.geometry;
    (0..region.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut g0 = Tensor::zeros();
            let mut p = Tensor::zeros();
            for &f in &region.cell_faces[c] {
                let face = &region.faces[f];
                match face.neighbour {
                    Some(nb) => {
                        let w = g.weight[f];
                        let v = w * cells[face.owner] + (1.0 - w) * cells[nb];
                        g0 += outer(&(sign(region, f, c) * g.face_area[f]), &v);
                    }
                    None if is_planar(region, f) => {}
                    None => {
                        g0 += outer(&g.face_area[f], &cells[c]);
                        p += outer(&g.face_area[f], &(g.face_centroid[f] - g.cell_centroid[c]));
                    }
                }
            }
            let v = g.cell_volume[c];
            let (g0, p) = (g0 / v, p / v);
            let a = Tensor::identity() - p;
            // planar prisms leave the z row of P empty, so `a` stays regular
            match a.try_inverse() {
                Some(inv) if a.determinant().abs() > 1e-3 => inv * g0,
                _ => g0,
            }
        })
        .collect()
}

/// Gauss gradient of a scalar field from given face values.
pub fn scalar_gauss_gradient(region: &Region, face: &[f64]) -> Vec<Vec3> {
    let g = &region.geometry;
    (0..region.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut v = Vec3::zeros();
            for &f in &region.cell_faces[c] {
                if !is_planar(region, f) {
                    v += sign(region, f, c) * face[f] * g.face_area[f];
                }
            }
            v / g.cell_volume[c]
        })
        .collect()
}

/// Interpolated face gradients `w ∇A_C + (1 − w) ∇A_E` on internal faces.
pub fn face_gradients(region: &Region, grads: &[Tensor]) -> Vec<Tensor> {
    let g = &region.geometry;
    (0..region.n_internal)
        .map(|fi| {
            let f = &region.faces[fi];
            let w = g.weight[fi];
            w * grads[f.owner] + (1.0 - w) * grads[f.neighbour.unwrap()]
        })
        .collect()
}

/// Internal face gradients whose normal derivative is the Laplacian's own
/// `(A_E − A_C)/|r| + limiter (n̂ − r̂)·∇A_f`, tangential part interpolated.
/// Explicit face fluxes built from these agree with the implicit operator,
/// so a lagged flux term has the spectrum of the Laplacian rather than of
/// the wider interpolated-gradient stencil.
pub fn consistent_face_gradients(region: &Region, grads: &[Tensor], cells: &[Vec3], limiter: f64) -> Vec<Tensor> {
    let g = &region.geometry;
    let interp = face_gradients(region, grads);
    interp
        .into_iter()
        .enumerate()
        .map(|(fi, gf)| {
            let f = &region.faces[fi];
            let n = g.face_normal[fi];
            let r = g.delta_unit[fi];
            let sn = sn_grad_orthogonal(&cells[f.owner], &cells[f.neighbour.unwrap()], g.delta_mag[fi])
                + limiter * non_orthogonal_correction(&gf, &n, &r);
            boundary_face_gradient(&gf, &n, &sn)
        })
        .collect()
}

/// Face gradient on a boundary face whose outward normal derivative `g`
/// is known: the cell gradient with its normal part replaced.
pub fn boundary_face_gradient(cell_grad: &Tensor, n: &Vec3, g: &Vec3) -> Tensor {
    cell_grad + outer(n, &(g - cell_grad.transpose() * n))
}

/// Orthogonal normal gradient `(A_E − A_C)/|r|`, oriented owner → neighbour.
pub fn sn_grad_orthogonal(a_c: &Vec3, a_e: &Vec3, r_mag: f64) -> Vec3 {
    (a_e - a_c) / r_mag
}

/// Explicit non-orthogonal part `(n̂ − r̂)·∇A_f`.
pub fn non_orthogonal_correction(face_grad: &Tensor, n: &Vec3, r_hat: &Vec3) -> Vec3 {
    face_grad.transpose() * (n - r_hat)
}

/// Linearised outward normal gradient on a boundary face:
/// `∂A/∂n = coeff (value − A_C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFlux {
    pub coeff: f64,
    pub value: Vec3,
}

impl BoundaryFlux {
    pub fn gradient(&self, a_c: &Vec3) -> Vec3 {
        self.coeff * (self.value - a_c)
    }
}

/// Discrete `Σ_f |s_f| ∂A/∂n` split into an implicit part (face
/// coefficients and boundary diagonal) and explicit sources, arranged for
/// the positive definite system `−Laplacian`:
///
/// `(Σ c_f + Σ b_f) A_P − Σ c_f A_nb = Σ boundary_source + non_orth_source`
#[derive(Debug, Clone)]
pub struct LaplacianStencil {
    /// `|s_f| / |r|` per internal face.
    pub face_coeff: Vec<f64>,
    /// `|s_f| coeff` per boundary face.
    pub boundary_diag: Vec<f64>,
    /// `|s_f| coeff value` per boundary face.
    pub boundary_source: Vec<Vec3>,
    /// Per cell `Σ ± |s_f| ψ (n̂ − r̂)·∇A_f` (outward sign).
    pub non_orth_source: Vec<Vec3>,
}

/// Assembles the Laplacian. `boundary` holds one linearisation per boundary
/// face (`None` for planar faces); `grads` are the lagged cell gradients for
/// the explicit non-orthogonal correction, scaled by `limiter ∈ [0, 1]`.
pub fn assemble_laplacian(
    region: &Region,
    boundary: &[Option<BoundaryFlux>],
    grads: Option<&[Tensor]>,
    limiter: f64,
) -> LaplacianStencil {
    let g = &region.geometry;
    let face_coeff: Vec<f64> = (0..region.n_internal)
        .map(|f| g.face_mag[f] / g.delta_mag[f])
        .collect();
    let mut boundary_diag = vec![0.0; region.n_boundary()];
    let mut boundary_source = vec![Vec3::zeros(); region.n_boundary()];
    for (b, lin) in boundary.iter().enumerate() {
        if let Some(lin) = lin {
            let s = g.face_mag[region.n_internal + b];
            boundary_diag[b] = s * lin.coeff;
            boundary_source[b] = s * lin.coeff * lin.value;
        }
    }
    let non_orth_source = match grads {
        Some(grads) if limiter > 0.0 => {
            let corr: Vec<Vec3> = (0..region.n_internal)
                .map(|fi| {
                    let f = &region.faces[fi];
                    let w = g.weight[fi];
                    let gf = w * grads[f.owner] + (1.0 - w) * grads[f.neighbour.unwrap()];
                    limiter * g.face_mag[fi] * non_orthogonal_correction(&gf, &g.face_normal[fi], &g.delta_unit[fi])
                })
                .collect();
            (0..region.n_cells)
                .into_par_iter()
                .map(|c| {
                    let mut v = Vec3::zeros();
                    for &f in &region.cell_faces[c] {
                        if f < region.n_internal {
                            v += sign(region, f, c) * corr[f];
                        }
                    }
                    v
                })
                .collect()
        }
        _ => vec![Vec3::zeros(); region.n_cells],
    };
    LaplacianStencil {
        face_coeff,
        boundary_diag,
        boundary_source,
        non_orth_source,
    }
}

impl LaplacianStencil {
    /// `Σ_f |s_f| ∂A/∂n` per cell for a given field, i.e. `V ∇²A`.
    pub fn apply(&self, region: &Region, cells: &[Vec3]) -> Vec<Vec3> {
        (0..region.n_cells)
            .map(|c| {
                let mut v = self.non_orth_source[c];
                for &f in &region.cell_faces[c] {
                    let face = &region.faces[f];
                    match face.neighbour {
                        Some(nb) => {
                            let other = if face.owner == c { nb } else { face.owner };
                            v += self.face_coeff[f] * (cells[other] - cells[c]);
                        }
                        None => {
                            let b = f - region.n_internal;
                            v += self.boundary_source[b] - self.boundary_diag[b] * cells[c];
                        }
                    }
                }
                v
            })
            .collect()
    }
}

/// Per cell `Σ_f χ_f (∇A_f − ∇A_fᵀ)ᵀ s_f` (outward `s_f`): the
/// volume-integrated `∇·(χ (∇A − ∇Aᵀ))`. `face_grads` holds one tensor per
/// face (internal and boundary); planar faces are skipped.
pub fn explicit_div_skew(region: &Region, chi_f: &[f64], face_grads: &[Tensor]) -> Vec<Vec3> {
    let g = &region.geometry;
    (0..region.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut v = Vec3::zeros();
            for &f in &region.cell_faces[c] {
                if is_planar(region, f) || chi_f[f] == 0.0 {
                    continue;
                }
                let w = face_grads[f] - face_grads[f].transpose();
                v += sign(region, f, c) * chi_f[f] * (w.transpose() * g.face_area[f]);
            }
            v
        })
        .collect()
}

/// Face susceptibilities: linear interpolation on internal faces, one-sided
/// extrapolation `χ_C + r_Cf·∇χ_C` on boundary faces, with `∇χ_C` the Gauss
/// gradient of the interpolated (and, on boundaries, cell) values.
pub fn susceptibility_face_values(region: &Region, chi: &CellScalarField) -> Vec<f64> {
    let g = &region.geometry;
    let mut face = interpolate_scalar(region, chi);
    for f in region.n_internal..region.n_faces() {
        face[f] = chi.cells[region.faces[f].owner];
    }
    let grad = scalar_gauss_gradient(region, &face);
    for f in region.n_internal..region.n_faces() {
        let c = region.faces[f].owner;
        face[f] = chi.cells[c] + (g.face_centroid[f] - g.cell_centroid[c]).dot(&grad[c]);
    }
    face
}

/// Axial vector of each gradient: `c_i = ε_ijk ∂_j a_k`, the curl.
pub fn curl_via_hodge(grads: &[Tensor]) -> Vec<Vec3> {
    grads.iter().map(hodge).collect()
}

/// `(1/V) Σ_f s_f × a_f`.
pub fn gauss_curl(region: &Region, face: &[Vec3]) -> Vec<Vec3> {
    let g = &region.geometry;
    (0..region.n_cells)
        .map(|c| {
            let mut v = Vec3::zeros();
            for &f in &region.cell_faces[c] {
                if !is_planar(region, f) {
                    v += sign(region, f, c) * g.face_area[f].cross(&face[f]);
                }
            }
            v / g.cell_volume[c]
        })
        .collect()
}

/// `(1/V) Σ_f s_f · a_f`.
pub fn gauss_divergence(region: &Region, face: &[Vec3]) -> Vec<f64> {
    let g = &region.geometry;
    (0..region.n_cells)
        .map(|c| {
            let mut v = 0.0;
            for &f in &region.cell_faces[c] {
                if !is_planar(region, f) {
                    v += sign(region, f, c) * g.face_area[f].dot(&face[f]);
                }
            }
            v / g.cell_volume[c]
        })
        .collect()
}
