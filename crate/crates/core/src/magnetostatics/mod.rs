//! Region-wise assembly of the balance law for `A`, interface coupling and
//! the block Gauss–Seidel outer iteration.
//!
//! Each region solves the positive definite system
//!
//! ```text
//! −Σ_f |s_f| ∂A/∂n = μ0 V J_f − μ0 Σ_f χ_f (∇A_f − ∇A_fᵀ)ᵀ s_f + μ0 V ∇×M
//! ```
//!
//! with every term on the right explicit (lagged). Interface faces take
//! their normal gradient from the two-sided flux match in [`interface`].

pub mod interface;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::RegionFields;
use crate::field::{BoundaryCondition, CellVectorField};
use crate::fvops::{self, BoundaryFlux};
use crate::geom::{Tensor, Vec3, MU0};
use crate::linalg::{self, CsrMatrix, LinalgError, SolveStatus, SolverConfig, SparseSystem};
use crate::mesh::{MultiRegionMesh, PatchKind, Region, Side};

pub use interface::{interface_face_value, interface_sn_grad, side_flux_density, surface_current, FluxMatch, SideState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationMode {
    /// Diagonal scaling of the region system (`C_PP/λ` with compensating source).
    #[default]
    Implicit,
    /// Under-relaxation of the bound-current source between iterations.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationApplication {
    /// Bound-current sources of all regions evaluated from the state at the
    /// start of the sweep.
    #[default]
    Simultaneous,
    /// Each region's bound-current source evaluated when it is solved.
    RegionWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientScheme {
    #[default]
    GaussLinear,
    LeastSquares,
}

/// Face gradient entering the explicit bound-current term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaceGradient {
    /// Interpolated tangential part, normal part from the Laplacian's own
    /// face-normal gradient.
    #[default]
    Consistent,
    /// Plain interpolation of the cell gradients.
    Interpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterControl {
    pub max_outer_iterations: usize,
    /// On the normalised L1 residual of every component in every region.
    pub tolerance: f64,
    /// `None`: 2 when the mesh is more than 5° non-orthogonal, else 0.
    pub non_orth_correctors: Option<usize>,
    pub lambda_div: f64,
    pub lambda_k: f64,
    pub relaxation_mode: RelaxationMode,
    pub relaxation_application: RelaxationApplication,
    /// Growth of the unscaled residual, relative to its peak over the first
    /// ten iterations, that counts as divergence.
    pub divergence_guard: f64,
    pub gradient: GradientScheme,
    pub face_gradient: FaceGradient,
    /// Skewness corrections of Gauss face values per gradient evaluation.
    pub skew_corrections: usize,
    /// Scales the explicit non-orthogonal correction, in `[0, 1]`.
    pub non_orth_limiter: f64,
    pub linear: SolverConfig,
}

impl Default for OuterControl {
    fn default() -> Self {
        OuterControl {
            max_outer_iterations: 3000,
            tolerance: 1e-6,
            non_orth_correctors: None,
            lambda_div: 0.8,
            lambda_k: 1.0,
            relaxation_mode: RelaxationMode::Implicit,
            relaxation_application: RelaxationApplication::Simultaneous,
            divergence_guard: 10.0,
            gradient: GradientScheme::GaussLinear,
            face_gradient: FaceGradient::Consistent,
            skew_corrections: 5,
            non_orth_limiter: 1.0,
            linear: SolverConfig::default(),
        }
    }
}

impl OuterControl {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::Config(m));
        for (name, l) in [("lambda_div", self.lambda_div), ("lambda_k", self.lambda_k)] {
            if !(l > 0.0 && l <= 1.0) {
                return bad(format!("{name} = {l} outside (0, 1]"));
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("tolerance {} outside (0, 1)", self.tolerance));
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be at least 1".into());
        }
        if !(self.divergence_guard > 1.0) {
            return bad(format!("divergence_guard {} must exceed 1", self.divergence_guard));
        }
        if !(0.0..=1.0).contains(&self.non_orth_limiter) {
            return bad(format!("non_orth_limiter {} outside [0, 1]", self.non_orth_limiter));
        }
        self.linear.validate().map_err(SolveError::Linear)
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver settings: {0}")]
    Config(String),
    #[error("region `{region}`: boundary patch `{patch}` has no usable condition")]
    Assembly { region: String, patch: String },
    #[error("linear solver breakdown in region `{region}` at outer iteration {iteration}")]
    Breakdown { region: String, iteration: usize },
    #[error(transparent)]
    Linear(#[from] LinalgError),
}

/// Explicit right-hand-side parts of one region system, per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBreakdown {
    /// `μ0 V J_f`
    pub free_current: Vec<Vec3>,
    /// `−μ0 Σ χ_f (∇A_f − ∇A_fᵀ)ᵀ s_f`
    pub bound_skew: Vec<Vec3>,
    /// `μ0 V ∇×M`
    pub magnet_curl: Vec<Vec3>,
    pub non_orth: Vec<Vec3>,
    /// Flux-match sources of interface faces.
    pub interface: Vec<Vec3>,
    /// Fixed-value wall sources.
    pub boundary: Vec<Vec3>,
}

pub const SOURCE_TERMS: [&str; 6] = ["free_current", "bound_skew", "magnet_curl", "non_orth", "interface", "boundary"];

impl SourceBreakdown {
    fn parts(&self) -> [&Vec<Vec3>; 6] {
        [&self.free_current, &self.bound_skew, &self.magnet_curl, &self.non_orth, &self.interface, &self.boundary]
    }

    pub fn total(&self) -> Vec<Vec3> {
        let n = self.free_current.len();
        (0..n).map(|i| self.parts().iter().map(|p| p[i]).sum()).collect()
    }

    /// L1 norm of each part, in [`SOURCE_TERMS`] order.
    pub fn norms(&self) -> [f64; 6] {
        self.parts().map(|p| p.iter().map(|v| v.abs().sum()).sum())
    }
}

/// Assembled (unrelaxed) system of one region.
#[derive(Debug, Clone)]
pub struct RegionSystem {
    pub region: usize,
    pub system: SparseSystem,
    pub breakdown: SourceBreakdown,
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub region: String,
    /// L1 norm of `C A_old − D` per component.
    pub residual: [f64; 3],
    pub normalized: [f64; 3],
    pub solver_residual: f64,
    pub solver_iterations: usize,
    pub lambda_div: f64,
    pub lambda_k: f64,
    pub k_max: f64,
}

pub const LOG_HEADER: &str = "iteration,region,res_x,res_y,res_z,norm_x,norm_y,norm_z,solver_residual,solver_iterations,lambda_div,lambda_k,k_max";

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.iteration, self.region)?;
        for v in self.residual.iter().chain(&self.normalized) {
            write!(f, ",{v:.6e}")?;
        }
        write!(
            f,
            ",{:.6e},{},{},{},{:.6e}",
            self.solver_residual, self.solver_iterations, self.lambda_div, self.lambda_k, self.k_max
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub iteration: usize,
    pub region: String,
    pub normalized_residual: f64,
    pub dominant_term: String,
    pub term_norms: Vec<(String, f64)>,
    pub reason: String,
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "diverged at outer iteration {} in region `{}` ({}); normalised residual {:.3e}",
            self.iteration, self.region, self.reason, self.normalized_residual
        )?;
        write!(f, "dominant source term: {}", self.dominant_term)?;
        for (n, v) in &self.term_norms {
            write!(f, "\n  {n:<13} {v:.4e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxIterations,
    Diverged(DivergenceReport),
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub outcome: Outcome,
    pub iterations: usize,
    /// Normalised residuals of the last iteration per region.
    pub final_residuals: Vec<(String, [f64; 3])>,
    pub lambda_div: f64,
    pub lambda_k: f64,
    pub relaxation_mode: RelaxationMode,
    pub non_orth_correctors: usize,
    pub wall_time_s: f64,
}

/// Gradient of `A` with the configured scheme.
pub fn cell_gradient(region: &Region, a: &CellVectorField, control: &OuterControl) -> Vec<Tensor> {
    match control.gradient {
        GradientScheme::GaussLinear => fvops::gauss_cell_gradient(region, a, control.skew_corrections),
        GradientScheme::LeastSquares => fvops::least_squares_gradient(region, a),
    }
}

/// `B = ∇×A` per cell.
pub fn compute_b(region: &Region, a: &CellVectorField, control: &OuterControl) -> Vec<Vec3> {
    fvops::curl_via_hodge(&cell_gradient(region, a, control))
}

/// Multi-region solver state. Owns the fields; borrows the mesh.
pub struct Magnetostatics<'m> {
    pub mesh: &'m MultiRegionMesh,
    pub fields: Vec<RegionFields>,
    pub control: OuterControl,
    /// Sweep order (region indices).
    pub order: Vec<usize>,
    /// Free surface current per interface pair.
    pub kf: Vec<Vec<Vec3>>,
    /// Generalised surface current per interface pair.
    pub k: Vec<Vec<Vec3>>,
    pub log: Vec<IterationRecord>,
    grads: Vec<Vec<Tensor>>,
    grad_b: Vec<Vec<Tensor>>,
    chi_face: Vec<Vec<f64>>,
    curl_m: Vec<Vec<Vec3>>,
    matrices: Vec<CsrMatrix>,
    relaxed: Vec<bool>,
    div_memory: Vec<Option<Vec<Vec3>>>,
    /// Largest component L1 residual of each outer iteration, per region.
    raw_history: Vec<Vec<f64>>,
    n_correctors: usize,
}

impl<'m> Magnetostatics<'m> {
    /// `order`: sweep order; `None` puts regions with larger susceptibility
    /// first, ties in mesh order.
    pub fn new(
        mesh: &'m MultiRegionMesh,
        fields: Vec<RegionFields>,
        control: OuterControl,
        order: Option<Vec<usize>>,
    ) -> Result<Self, SolveError> {
        control.validate()?;
        let nr = mesh.regions.len();
        if fields.len() != nr {
            return Err(SolveError::Config(format!("{} field sets for {} regions", fields.len(), nr)));
        }
        let order = match order {
            Some(o) => {
                let mut seen = o.clone();
                seen.sort_unstable();
                if seen != (0..nr).collect::<Vec<_>>() {
                    return Err(SolveError::Config("region order must list every region once".into()));
                }
                o
            }
            None => {
                let mut o: Vec<usize> = (0..nr).collect();
                let chi_max = |r: usize| fields[r].chi.cells.iter().copied().fold(0.0, f64::max);
                o.sort_by(|&a, &b| chi_max(b).total_cmp(&chi_max(a)));
                o
            }
        };
        let n_correctors = control
            .non_orth_correctors
            .unwrap_or(if mesh.max_non_orthogonality() > 5.0 { 2 } else { 0 });

        let mut matrices = Vec::with_capacity(nr);
        let mut chi_face = Vec::with_capacity(nr);
        let mut curl_m = Vec::with_capacity(nr);
        let mut relaxed = Vec::with_capacity(nr);
        for (ri, region) in mesh.regions.iter().enumerate() {
            let f = &fields[ri];
            if f.bcs.len() != region.patches.len() {
                return Err(SolveError::Config(format!("region `{}`: condition count mismatch", region.name)));
            }
            matrices.push(Self::build_matrix(mesh, ri, &f.bcs)?);
            chi_face.push(fvops::susceptibility_face_values(region, &f.chi));
            let mut m = f.m.clone();
            for (b, v) in m.boundary.iter_mut().enumerate() {
                *v = m.cells[region.faces[region.n_internal + b].owner];
            }
            let gm = fvops::gauss_cell_gradient(region, &m, control.skew_corrections);
            curl_m.push(
                fvops::curl_via_hodge(&gm)
                    .iter()
                    .zip(&region.geometry.cell_volume)
                    .map(|(c, v)| MU0 * v * c)
                    .collect(),
            );
            relaxed.push(f.chi.cells.iter().any(|&c| c != 0.0));
        }
        let k: Vec<Vec<Vec3>> = mesh.interfaces.iter().map(|i| vec![Vec3::zeros(); i.pairs.len()]).collect();
        let mut s = Magnetostatics {
            mesh,
            grads: mesh.regions.iter().map(|r| vec![Tensor::zeros(); r.n_cells]).collect(),
            grad_b: mesh.regions.iter().map(|r| vec![Tensor::zeros(); r.n_cells]).collect(),
            fields,
            order,
            kf: k.clone(),
            k,
            log: Vec::new(),
            chi_face,
            curl_m,
            matrices,
            relaxed,
            div_memory: vec![None; nr],
            raw_history: vec![Vec::new(); nr],
            n_correctors,
            control,
        };
        for r in 0..nr {
            s.refresh_region(r);
        }
        Ok(s)
    }

    pub fn non_orth_correctors(&self) -> usize {
        self.n_correctors
    }

    pub fn gradients(&self, region: usize) -> &[Tensor] {
        &self.grads[region]
    }

    pub fn chi_faces(&self, region: usize) -> &[f64] {
        &self.chi_face[region]
    }

    pub fn matrix(&self, region: usize) -> &CsrMatrix {
        &self.matrices[region]
    }

    fn build_matrix(mesh: &MultiRegionMesh, ri: usize, bcs: &[BoundaryCondition]) -> Result<CsrMatrix, SolveError> {
        let region = &mesh.regions[ri];
        let g = &region.geometry;
        let mut diag = vec![0.0; region.n_cells];
        let mut trip = Vec::with_capacity(2 * region.n_internal + region.n_cells);
        for fi in 0..region.n_internal {
            let f = &region.faces[fi];
            let nb = f.neighbour.unwrap();
            let c = g.face_mag[fi] / g.delta_mag[fi];
            trip.push((f.owner, nb, -c));
            trip.push((nb, f.owner, -c));
            diag[f.owner] += c;
            diag[nb] += c;
        }
        for fi in region.n_internal..region.n_faces() {
            let b = fi - region.n_internal;
            let owner = region.faces[fi].owner;
            let s = g.face_mag[fi];
            let patch = region.face_patch[b];
            diag[owner] += match bcs[patch] {
                BoundaryCondition::FixedValue(_) => s / g.bnd_dist[b],
                BoundaryCondition::ZeroNormalGradient | BoundaryCondition::PlanarExcluded => 0.0,
                BoundaryCondition::InterfaceCoupled => {
                    let (re, fe) = mesh.partner(ri, fi).ok_or_else(|| SolveError::Assembly {
                        region: region.name.clone(),
                        patch: region.patches[patch].name.clone(),
                    })?;
                    let other = &mesh.regions[re];
                    s / (g.bnd_dist[b] + other.geometry.bnd_dist[fe - other.n_internal])
                }
            };
        }
        for (i, d) in diag.into_iter().enumerate() {
            trip.push((i, i, d));
        }
        Ok(CsrMatrix::from_triplets(region.n_cells, &trip))
    }

    /// Linearised outward normal gradient of every boundary face of a region.
    pub fn boundary_fluxes(&self, ri: usize) -> Vec<Option<BoundaryFlux>> {
        let region = &self.mesh.regions[ri];
        let g = &region.geometry;
        let grads = &self.grads[ri];
        (region.n_internal..region.n_faces())
            .map(|fi| {
                let b = fi - region.n_internal;
                let c = region.faces[fi].owner;
                let t = g.bnd_offset[b];
                match self.fields[ri].bcs[region.face_patch[b]] {
                    BoundaryCondition::PlanarExcluded => None,
                    BoundaryCondition::ZeroNormalGradient => Some(BoundaryFlux { coeff: 0.0, value: Vec3::zeros() }),
                    BoundaryCondition::FixedValue(lv) => Some(BoundaryFlux {
                        coeff: 1.0 / g.bnd_dist[b],
                        value: lv.at(&g.face_centroid[fi]) - grads[c].transpose() * t,
                    }),
                    BoundaryCondition::InterfaceCoupled => {
                        let (ae, de, k) = self.partner_state(ri, fi);
                        let dc = g.bnd_dist[b];
                        Some(BoundaryFlux {
                            coeff: 1.0 / (dc + de),
                            value: ae + de * MU0 * k - grads[c].transpose() * t,
                        })
                    }
                }
            })
            .collect()
    }

    /// Shifted partner value, partner distance and `K` for an interface face.
    fn partner_state(&self, ri: usize, fi: usize) -> (Vec3, f64, Vec3) {
        let link = self.mesh.link(ri, fi).expect("interface face is paired");
        let (re, fe) = self.mesh.partner(ri, fi).unwrap();
        let other = &self.mesh.regions[re];
        let ce = other.faces[fe].owner;
        let ae = interface::shifted_value(other, fe, &self.fields[re].a.cells[ce], &self.grads[re][ce]);
        let de = other.geometry.bnd_dist[fe - other.n_internal];
        (ae, de, self.k[link.interface][link.pair])
    }

    /// Boundary values of `A`, gradient and `B` of a region from its cell values.
    fn refresh_region(&mut self, ri: usize) {
        let region = &self.mesh.regions[ri];
        self.update_boundary_values(ri);
        self.grads[ri] = cell_gradient(region, &self.fields[ri].a, &self.control);
        self.update_boundary_values(ri);
        self.update_b(ri);
    }

    fn update_boundary_values(&mut self, ri: usize) {
        let region = &self.mesh.regions[ri];
        let g = &region.geometry;
        let mut vals = Vec::with_capacity(region.n_boundary());
        for fi in region.n_internal..region.n_faces() {
            let b = fi - region.n_internal;
            let c = region.faces[fi].owner;
            let a_c = self.fields[ri].a.cells[c];
            vals.push(match self.fields[ri].bcs[region.face_patch[b]] {
                BoundaryCondition::FixedValue(lv) => lv.at(&g.face_centroid[fi]),
                BoundaryCondition::PlanarExcluded => a_c,
                BoundaryCondition::ZeroNormalGradient => interface::shifted_value(region, fi, &a_c, &self.grads[ri][c]),
                BoundaryCondition::InterfaceCoupled => {
                    let (ae, de, k) = self.partner_state(ri, fi);
                    let ac = interface::shifted_value(region, fi, &a_c, &self.grads[ri][c]);
                    interface_face_value(&ac, &ae, g.bnd_dist[b], de, &k)
                }
            });
        }
        self.fields[ri].a.boundary = vals;
    }

    fn update_b(&mut self, ri: usize) {
        let region = &self.mesh.regions[ri];
        let cells = fvops::curl_via_hodge(&self.grads[ri]);
        self.grad_b[ri] = fvops::extrapolated_gradient(region, &cells);
        let lin = self.boundary_fluxes(ri);
        let g = &region.geometry;
        let boundary = (region.n_internal..region.n_faces())
            .map(|fi| {
                let b = fi - region.n_internal;
                let c = region.faces[fi].owner;
                let r_cf = g.face_centroid[fi] - g.cell_centroid[c];
                match lin[b] {
                    Some(l) if region.boundary_kind(fi) != PatchKind::Planar => side_flux_density(
                        &g.face_normal[fi],
                        &self.grads[ri][c],
                        &l.gradient(&self.fields[ri].a.cells[c]),
                        &cells[c],
                        &self.grad_b[ri][c],
                        &r_cf,
                    ),
                    _ => cells[c] + self.grad_b[ri][c].transpose() * r_cf,
                }
            })
            .collect();
        self.fields[ri].b = CellVectorField { cells, boundary };
    }

    fn side_state(&self, ri: usize, fi: usize) -> SideState {
        let region = &self.mesh.regions[ri];
        let c = region.faces[fi].owner;
        SideState {
            chi: self.chi_face[ri][fi],
            b: self.fields[ri].b.boundary[fi - region.n_internal],
            m: self.fields[ri].m.cells[c],
        }
    }

    /// Re-evaluates `K` on every interface touching region `ri`, relaxed by
    /// `λ_K`. Returns the largest `|K|`.
    fn update_k(&mut self, ri: usize) -> f64 {
        let mut kmax: f64 = 0.0;
        for (ii, itf) in self.mesh.interfaces.iter().enumerate() {
            if itf.region_a != ri && itf.region_b != ri {
                continue;
            }
            for p in 0..itf.pairs.len() {
                let sa = self.side_state(itf.region(Side::A), itf.face(p, Side::A));
                let sb = self.side_state(itf.region(Side::B), itf.face(p, Side::B));
                let new = surface_current(&self.kf[ii][p], &sa, &sb, &itf.normal[p]);
                let old = self.k[ii][p];
                self.k[ii][p] = old + self.control.lambda_k * (new - old);
                kmax = kmax.max(self.k[ii][p].norm());
            }
        }
        kmax
    }

    /// Face gradients (internal interpolated, boundary with the linearised
    /// normal derivative) of region `ri`.
    fn face_gradients(&self, ri: usize, lin: &[Option<BoundaryFlux>]) -> Vec<Tensor> {
        let region = &self.mesh.regions[ri];
        let grads = &self.grads[ri];
        let mut fg = match self.control.face_gradient {
            FaceGradient::Consistent => fvops::consistent_face_gradients(region, grads, &self.fields[ri].a.cells, self.control.non_orth_limiter),
            FaceGradient::Interpolated => fvops::face_gradients(region, grads),
        };
        for fi in region.n_internal..region.n_faces() {
            let c = region.faces[fi].owner;
            fg.push(match lin[fi - region.n_internal] {
                Some(l) => fvops::boundary_face_gradient(
                    &grads[c],
                    &region.geometry.face_normal[fi],
                    &l.gradient(&self.fields[ri].a.cells[c]),
                ),
                None => grads[c],
            });
        }
        fg
    }

    /// `−μ0 Σ χ_f (∇A_f − ∇A_fᵀ)ᵀ s_f` per cell.
    pub fn bound_skew_source(&self, ri: usize) -> Vec<Vec3> {
        let region = &self.mesh.regions[ri];
        if self.chi_face[ri].iter().all(|&c| c == 0.0) {
            return vec![Vec3::zeros(); region.n_cells];
        }
        let lin = self.boundary_fluxes(ri);
        let fg = self.face_gradients(ri, &lin);
        fvops::explicit_div_skew(region, &self.chi_face[ri], &fg)
            .into_iter()
            .map(|v| -MU0 * v)
            .collect()
    }

    fn breakdown(&self, ri: usize, bound_skew: Vec<Vec3>) -> SourceBreakdown {
        let region = &self.mesh.regions[ri];
        let lin = self.boundary_fluxes(ri);
        let st = fvops::assemble_laplacian(region, &lin, Some(&self.grads[ri]), self.control.non_orth_limiter);
        let mut interface = vec![Vec3::zeros(); region.n_cells];
        let mut boundary = vec![Vec3::zeros(); region.n_cells];
        for fi in region.n_internal..region.n_faces() {
            let b = fi - region.n_internal;
            let c = region.faces[fi].owner;
            match region.boundary_kind(fi) {
                PatchKind::Interface => interface[c] += st.boundary_source[b],
                _ => boundary[c] += st.boundary_source[b],
            }
        }
        let f = &self.fields[ri];
        SourceBreakdown {
            free_current: f
                .j
                .cells
                .iter()
                .zip(&region.geometry.cell_volume)
                .map(|(j, v)| MU0 * v * j)
                .collect(),
            bound_skew,
            magnet_curl: self.curl_m[ri].clone(),
            non_orth: st.non_orth_source,
            interface,
            boundary,
        }
    }

    /// The region's unrelaxed system at the current state.
    pub fn assemble_region(&self, ri: usize) -> RegionSystem {
        let breakdown = self.breakdown(ri, self.bound_skew_source(ri));
        RegionSystem {
            region: ri,
            system: SparseSystem {
                matrix: self.matrices[ri].clone(),
                source: breakdown.total(),
            },
            breakdown,
        }
    }

    fn record_residual(&mut self, ri: usize, sys: &SparseSystem) -> ([f64; 3], [f64; 3]) {
        let (l1, norm) = linalg::scaled_residuals(sys, &self.fields[ri].a.cells);
        self.raw_history[ri].push(max3(&l1));
        (l1, norm)
    }

    /// Assembles, relaxes and solves one region, then refreshes its derived
    /// fields. `bound_skew` is the (unrelaxed) bound-current source.
    fn solve_region(&mut self, ri: usize, iteration: usize, bound_skew: Vec<Vec3>, k_max: f64) -> Result<SourceBreakdown, SolveError> {
        let relax = self.relaxed[ri] && self.control.lambda_div < 1.0;
        let lambda = if relax { self.control.lambda_div } else { 1.0 };
        let bound_skew = match self.control.relaxation_mode {
            RelaxationMode::Explicit if relax => {
                let relaxed = match &self.div_memory[ri] {
                    Some(old) => linalg::explicit_relax(&bound_skew, old, lambda)?,
                    None => bound_skew,
                };
                self.div_memory[ri] = Some(relaxed.clone());
                relaxed
            }
            _ => bound_skew,
        };
        let a_old = self.fields[ri].a.cells.clone();
        let mut breakdown = self.breakdown(ri, bound_skew);
        let mut sys = SparseSystem {
            matrix: self.matrices[ri].clone(),
            source: breakdown.total(),
        };
        let (res, norm) = self.record_residual(ri, &sys);
        let mut solver_residual = 0.0;
        let mut solver_iterations = 0;
        for pass in 0..=self.n_correctors {
            if pass > 0 {
                self.refresh_region(ri);
                let bs = std::mem::take(&mut breakdown.bound_skew);
                breakdown = self.breakdown(ri, bs);
                sys.source = breakdown.total();
            }
            let to_solve = match self.control.relaxation_mode {
                RelaxationMode::Implicit if relax => linalg::implicit_relax(&sys, &a_old, lambda)?,
                _ => sys.clone(),
            };
            let (x, rep) = to_solve.solve(&self.fields[ri].a.cells, &self.control.linear)?;
            if rep.status == SolveStatus::Breakdown {
                return Err(SolveError::Breakdown {
                    region: self.mesh.regions[ri].name.clone(),
                    iteration,
                });
            }
            if rep.status == SolveStatus::MaxIterations {
                log::debug!("region {}: linear solver hit its iteration cap", self.mesh.regions[ri].name);
            }
            solver_residual = rep.final_residual;
            solver_iterations += rep.iterations;
            self.fields[ri].a.cells = x;
        }
        self.refresh_region(ri);
        self.log.push(IterationRecord {
            iteration,
            region: self.mesh.regions[ri].name.clone(),
            residual: res,
            normalized: norm,
            solver_residual,
            solver_iterations,
            lambda_div: lambda,
            lambda_k: self.control.lambda_k,
            k_max,
        });
        Ok(breakdown)
    }

    /// Runs the block Gauss–Seidel outer iteration.
    pub fn run(&mut self) -> Result<SolveSummary, SolveError> {
        let start = Instant::now();
        let nr = self.mesh.regions.len();
        let mut last: Vec<[f64; 3]> = vec![[0.0; 3]; nr];
        let mut outcome = Outcome::MaxIterations;
        let mut iterations = 0;
        for it in 1..=self.control.max_outer_iterations {
            iterations = it;
            let snapshot: Option<Vec<Vec<Vec3>>> = match self.control.relaxation_application {
                RelaxationApplication::Simultaneous => Some((0..nr).map(|r| self.bound_skew_source(r)).collect()),
                RelaxationApplication::RegionWise => None,
            };
            let mut breakdowns = vec![None; nr];
            for idx in 0..nr {
                let r = self.order[idx];
                let k_max = self.update_k(r);
                let bs = match &snapshot {
                    Some(s) => s[r].clone(),
                    None => self.bound_skew_source(r),
                };
                breakdowns[r] = Some(self.solve_region(r, it, bs, k_max)?);
                last[r] = self.log.last().unwrap().normalized;
            }
            let current = last.iter().map(max3).fold(0.0, f64::max);
            let verdict = (0..nr).find_map(|r| {
                let finite = max3(&last[r]).is_finite() && self.fields[r].a.is_finite();
                self.diverged(r, finite).map(|why| (r, why))
            });
            if let Some((worst, reason)) = verdict {
                let bd = breakdowns[worst].as_ref().unwrap();
                let norms = bd.norms();
                let (dom, _) = norms
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap();
                outcome = Outcome::Diverged(DivergenceReport {
                    iteration: it,
                    region: self.mesh.regions[worst].name.clone(),
                    normalized_residual: max3(&last[worst]),
                    dominant_term: SOURCE_TERMS[dom].to_string(),
                    term_norms: SOURCE_TERMS.iter().map(|s| s.to_string()).zip(norms).collect(),
                    reason,
                });
                break;
            }
            if current < self.control.tolerance {
                outcome = Outcome::Converged;
                break;
            }
        }
        Ok(SolveSummary {
            outcome,
            iterations,
            final_residuals: self.mesh.regions.iter().map(|r| r.name.clone()).zip(last).collect(),
            lambda_div: self.control.lambda_div,
            lambda_k: self.control.lambda_k,
            relaxation_mode: self.control.relaxation_mode,
            non_orth_correctors: self.n_correctors,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    /// Growth test on the unscaled residuals (the scaled ones are bounded
    /// by one and cannot show a blow-up). The reference is the largest
    /// residual of the first `EARLY` iterations, so the transient while
    /// interface data first reaches a region does not count as growth.
    fn diverged(&self, ri: usize, finite: bool) -> Option<String> {
        const EARLY: usize = 10;
        const WINDOW: usize = 6;
        if !finite {
            return Some("non-finite values".into());
        }
        let h = &self.raw_history[ri];
        let n = h.len();
        if n <= EARLY {
            return None;
        }
        let g = self.control.divergence_guard;
        let reference = h[..EARLY].iter().copied().fold(0.0, f64::max);
        let cur = h[n - 1];
        if cur > g.powi(4) * reference {
            return Some(format!("residual exceeded {:e} times its early peak", g.powi(4)));
        }
        if n >= EARLY + WINDOW {
            let rising = h[n - WINDOW..].windows(2).all(|w| w[1] > w[0]);
            if rising && cur > g * reference {
                return Some(format!("residual rose for {} iterations to more than {g} times its early peak", WINDOW - 1));
            }
        }
        None
    }

    /// Iteration log as delimited text, header first.
    pub fn log_text(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.log {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }
}

fn max3(v: &[f64; 3]) -> f64 {
    v[0].max(v[1]).max(v[2])
}

/// Discrete `∇·B` and `∇·A` of one region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceDiagnostics {
    pub region: String,
    pub max_div_b: f64,
    pub l2_div_b: f64,
    pub max_div_a: f64,
    pub l2_div_a: f64,
}

/// Gauss divergences of interpolated face values (diagnostic only).
pub fn divergence_diagnostics(mesh: &MultiRegionMesh, fields: &[RegionFields]) -> Vec<DivergenceDiagnostics> {
    mesh.regions
        .iter()
        .zip(fields)
        .map(|(region, f)| {
            let stats = |field: &CellVectorField| {
                let faces = fvops::interpolate_faces(region, field).values;
                let div = fvops::gauss_divergence(region, &faces);
                let vol = region.total_volume();
                let max = div.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
                let l2 = (div.iter().zip(&region.geometry.cell_volume).map(|(d, v)| d * d * v).sum::<f64>() / vol).sqrt();
                (max, l2)
            };
            let (max_div_b, l2_div_b) = stats(&f.b);
            let (max_div_a, l2_div_a) = stats(&f.a);
            DivergenceDiagnostics {
                region: region.name.clone(),
                max_div_b,
                l2_div_b,
                max_div_a,
                l2_div_a,
            }
        })
        .collect()
}
