//! Cell-centred fields, material properties and boundary conditions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geom::{Tensor, Vec3, MU0};
use crate::mesh::{MultiRegionMesh, PatchKind, Region};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("relative permeability must be positive, got {0}")]
    NonPositiveMuR(f64),
    #[error("no material given for mesh region(s): {0}")]
    MissingRegions(String),
    #[error("material given for unknown region `{0}`")]
    UnknownRegion(String),
    #[error("no boundary condition for patch `{patch}` of region `{region}`")]
    MissingBoundary { region: String, patch: String },
    #[error("boundary condition given for unknown patch `{0}`")]
    UnknownPatch(String),
    #[error("patch `{0}` has more than one boundary condition")]
    DuplicateBoundary(String),
    #[error("boundary condition for `{0}` must target an outer wall patch")]
    NotAWall(String),
}

/// Normalised susceptibility `χ = (μr − 1)/(μr μ0)`.
pub fn chi_from_mu_r(mu_r: f64) -> Result<f64, FieldError> {
    if !(mu_r > 0.0) {
        return Err(FieldError::NonPositiveMuR(mu_r));
    }
    Ok((mu_r - 1.0) / (mu_r * MU0))
}

/// Inverse of [`chi_from_mu_r`]. The map is ill-conditioned for large
/// `μr` (condition number ≈ μr): adjacent doubles of χ near 1/μ0 are
/// `μr · 2.2e-16` apart in relative `μr`.
pub fn mu_r_from_chi(chi: f64) -> f64 {
    1.0 / (-MU0).mul_add(chi, 1.0)
}

/// Induced magnetisation `M_i = χ B`.
pub fn magnetization_from_b(chi: f64, b: Vec3) -> Vec3 {
    chi * b
}

/// Vector values on cells and boundary faces of one region. Boundary
/// entries are indexed by `face − n_internal`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellVectorField {
    pub cells: Vec<Vec3>,
    pub boundary: Vec<Vec3>,
}

impl CellVectorField {
    pub fn zeros(region: &Region) -> Self {
        Self::uniform(region, Vec3::zeros())
    }

    pub fn uniform(region: &Region, v: Vec3) -> Self {
        CellVectorField {
            cells: vec![v; region.n_cells],
            boundary: vec![v; region.n_boundary()],
        }
    }

    pub fn from_fn(region: &Region, f: impl Fn(Vec3) -> Vec3) -> Self {
        let g = &region.geometry;
        CellVectorField {
            cells: g.cell_centroid.iter().map(|&x| f(x)).collect(),
            boundary: (region.n_internal..region.n_faces())
                .map(|fi| f(g.face_centroid[fi]))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        CellVectorField {
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| a + b).collect(),
            boundary: self.boundary.iter().zip(&other.boundary).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        CellVectorField {
            cells: self.cells.iter().map(|a| a * s).collect(),
            boundary: self.boundary.iter().map(|a| a * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.cells
            .iter()
            .chain(&self.boundary)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.cells.iter().map(|v| v[c]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScalarField {
    pub cells: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl CellScalarField {
    pub fn uniform(region: &Region, v: f64) -> Self {
        CellScalarField {
            cells: vec![v; region.n_cells],
            boundary: vec![v; region.n_boundary()],
        }
    }

    pub fn from_fn(region: &Region, f: impl Fn(Vec3) -> f64) -> Self {
        let g = &region.geometry;
        CellScalarField {
            cells: g.cell_centroid.iter().map(|&x| f(x)).collect(),
            boundary: (region.n_internal..region.n_faces())
                .map(|fi| f(g.face_centroid[fi]))
                .collect(),
        }
    }
}

/// Fixed value `A(x) = value + Gᵀ x`, with `G[(i, j)] = ∂_i A_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearValue {
    pub value: Vec3,
    pub gradient: Tensor,
}

impl LinearValue {
    pub fn constant(value: Vec3) -> Self {
        LinearValue {
            value,
            gradient: Tensor::zeros(),
        }
    }

    pub fn at(&self, x: &Vec3) -> Vec3 {
        self.value + self.gradient.transpose() * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    FixedValue(LinearValue),
    ZeroNormalGradient,
    InterfaceCoupled,
    PlanarExcluded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSpec {
    pub mu_r: f64,
    pub magnetization: Vec3,
    pub current_density: Vec3,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec {
            mu_r: 1.0,
            magnetization: Vec3::zeros(),
            current_density: Vec3::zeros(),
        }
    }
}

/// Material and boundary data of one region; A and B start at zero.
#[derive(Debug, Clone)]
pub struct RegionFields {
    pub material: MaterialSpec,
    pub chi: CellScalarField,
    pub mu_r: CellScalarField,
    pub m: CellVectorField,
    pub j: CellVectorField,
    pub a: CellVectorField,
    pub b: CellVectorField,
    /// One condition per patch of the region.
    pub bcs: Vec<BoundaryCondition>,
}

pub struct FieldSet {
    pub regions: Vec<RegionFields>,
    pub warnings: Vec<String>,
}

/// Builds uniform per-region fields from named materials and wall patch
/// conditions. Interface and planar patches are classified automatically.
pub fn map_config_to_fields(
    mesh: &MultiRegionMesh,
    materials: &[(String, MaterialSpec)],
    walls: &[(String, BoundaryCondition)],
) -> Result<FieldSet, FieldError> {
    let mut by_name: BTreeMap<&str, &MaterialSpec> = BTreeMap::new();
    for (name, spec) in materials {
        if mesh.region_index(name).is_none() {
            return Err(FieldError::UnknownRegion(name.clone()));
        }
        by_name.insert(name, spec);
    }
    let missing: Vec<&str> = mesh
        .regions
        .iter()
        .map(|r| r.name.as_str())
        .filter(|n| !by_name.contains_key(n))
        .collect();
    if !missing.is_empty() {
        return Err(FieldError::MissingRegions(missing.join(", ")));
    }

    let mut wall_bc: BTreeMap<&str, BoundaryCondition> = BTreeMap::new();
    for (patch, bc) in walls {
        let kinds: Vec<PatchKind> = mesh
            .regions
            .iter()
            .filter_map(|r| r.patch_by_name(patch).map(|p| r.patches[p].kind))
            .collect();
        if kinds.is_empty() {
            return Err(FieldError::UnknownPatch(patch.clone()));
        }
        if kinds.iter().any(|k| *k != PatchKind::Wall) {
            return Err(FieldError::NotAWall(patch.clone()));
        }
        if wall_bc.insert(patch, *bc).is_some() {
            return Err(FieldError::DuplicateBoundary(patch.clone()));
        }
    }

    let mut warnings = Vec::new();
    let mut regions = Vec::with_capacity(mesh.regions.len());
    for r in &mesh.regions {
        let spec = *by_name[r.name.as_str()];
        let chi = chi_from_mu_r(spec.mu_r)?;
        if spec.mu_r != 1.0 && spec.magnetization != Vec3::zeros() {
            let msg = format!(
                "region {}: permeable (mu_r = {}) and permanently magnetised; the combined \
                 law assumes permeable media carry no permanent magnetisation",
                r.name, spec.mu_r
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let mut bcs = Vec::with_capacity(r.patches.len());
        for p in &r.patches {
            bcs.push(match p.kind {
                PatchKind::Interface => BoundaryCondition::InterfaceCoupled,
                PatchKind::Planar => BoundaryCondition::PlanarExcluded,
                PatchKind::Wall => {
                    *wall_bc
                        .get(p.name.as_str())
                        .ok_or_else(|| FieldError::MissingBoundary {
                            region: r.name.clone(),
                            patch: p.name.clone(),
                        })?
                }
            });
        }
        regions.push(RegionFields {
            material: spec,
            chi: CellScalarField::uniform(r, chi),
            mu_r: CellScalarField::uniform(r, spec.mu_r),
            m: CellVectorField::uniform(r, spec.magnetization),
            j: CellVectorField::uniform(r, spec.current_density),
            a: CellVectorField::zeros(r),
            b: CellVectorField::zeros(r),
            bcs,
        });
    }
    Ok(FieldSet { regions, warnings })
}
