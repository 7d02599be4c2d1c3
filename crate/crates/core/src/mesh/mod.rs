//! Multi-region polyhedral meshes.
//!
//! Each [`Region`] owns its cells and faces with OpenFOAM-style owner /
//! neighbour addressing: internal faces come first (area vector pointing
//! from owner to neighbour), followed by boundary faces grouped into
//! contiguous [`Patch`]es. Regions share the global point list. Faces on
//! conformal region interfaces are paired 1:1 into [`InterfacePatch`]es.
//!
//! Planar (2D) meshes are stored as one-cell-thick prisms; their front and
//! back faces live in a [`PatchKind::Planar`] patch that the operators skip.

mod geometry;
pub mod generate;
pub mod gmsh;
pub mod planar;
pub mod quality;
pub mod text;

use std::collections::HashMap;

use thiserror::Error;

use crate::geom::Vec3;

pub use geometry::{polygon_area_centroid, GeometryCache};
pub use quality::{check_quality, FaceFlag, QualityReport, QualityThresholds};

/// Default relative tolerance for interface centroid matching, scaled by the
/// domain bounding-box diagonal.
pub const DEFAULT_PAIRING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported mesh format version {0}")]
    UnsupportedVersion(String),
    #[error("{0}")]
    MissingPhysicalTag(String),
    #[error("unsupported element: {0}")]
    UnsupportedElement(String),
    #[error("non-conformal interface: {0}")]
    NonConformal(String),
    #[error("region {region}: degenerate face {face} (area {area:e})")]
    DegenerateFace {
        region: String,
        face: usize,
        area: f64,
    },
    #[error("region {region}: inverted cell {cell} (volume {volume:e})")]
    InvertedCell {
        region: String,
        cell: usize,
        volume: f64,
    },
    #[error("region {region}: {msg}")]
    Topology { region: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    /// Outer boundary; takes a user boundary condition.
    Wall,
    /// Faces shared with another region.
    Interface,
    /// Front/back faces of an extruded planar mesh.
    Planar,
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub name: String,
    pub kind: PatchKind,
    /// First face id of the patch.
    pub start: usize,
    pub size: usize,
}

impl Patch {
    pub fn faces(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub vertices: Vec<usize>,
    pub owner: usize,
    pub neighbour: Option<usize>,
}

/// Face description used while building a region.
#[derive(Debug, Clone)]
pub struct RawFace {
    pub vertices: Vec<usize>,
    pub owner: usize,
    pub neighbour: Option<usize>,
    /// Patch name for boundary faces.
    pub patch: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Region {
    pub name: String,
    pub faces: Vec<Face>,
    pub n_internal: usize,
    pub n_cells: usize,
    pub cell_faces: Vec<Vec<usize>>,
    pub patches: Vec<Patch>,
    /// Patch index for every boundary face (`face − n_internal`).
    pub face_patch: Vec<usize>,
    pub geometry: GeometryCache,
    /// For extruded meshes: the CCW base polygon (global point ids) of each cell.
    pub planar_cells: Option<Vec<Vec<usize>>>,
}

impl Region {
    /// Builds a region from unordered faces; internal faces are renumbered
    /// to come first and boundary faces are grouped by `patch_defs` order.
    pub fn build(
        name: &str,
        points: &[Vec3],
        n_cells: usize,
        raw: Vec<RawFace>,
        patch_defs: &[(String, PatchKind)],
    ) -> Result<Region, MeshError> {
        let topo = |msg: String| MeshError::Topology {
            region: name.to_string(),
            msg,
        };
        let mut internal = Vec::new();
        let mut by_patch: Vec<Vec<Face>> = vec![Vec::new(); patch_defs.len()];
        let patch_index: HashMap<&str, usize> = patch_defs
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.as_str(), i))
            .collect();

        for (fi, f) in raw.into_iter().enumerate() {
            if f.vertices.len() < 3 {
                return Err(topo(format!("face {fi} has fewer than 3 vertices")));
            }
            if let Some(&v) = f.vertices.iter().find(|&&v| v >= points.len()) {
                return Err(topo(format!("face {fi} references missing point {v}")));
            }
            if f.owner >= n_cells {
                return Err(topo(format!("face {fi} owner {} out of range", f.owner)));
            }
            match f.neighbour {
                Some(nb) => {
                    if nb >= n_cells || nb == f.owner {
                        return Err(topo(format!("face {fi} has invalid neighbour {nb}")));
                    }
                    let (owner, neighbour, mut verts) = (f.owner, nb, f.vertices);
                    if owner > neighbour {
                        verts.reverse();
                        internal.push(Face {
                            vertices: verts,
                            owner: neighbour,
                            neighbour: Some(owner),
                        });
                    } else {
                        internal.push(Face {
                            vertices: verts,
                            owner,
                            neighbour: Some(neighbour),
                        });
                    }
                }
                None => {
                    let pname = f
                        .patch
                        .ok_or_else(|| topo(format!("boundary face {fi} has no patch")))?;
                    let pi = *patch_index
                        .get(pname.as_str())
                        .ok_or_else(|| topo(format!("boundary face {fi}: unknown patch {pname}")))?;
                    by_patch[pi].push(Face {
                        vertices: f.vertices,
                        owner: f.owner,
                        neighbour: None,
                    });
                }
            }
        }
        internal.sort_by_key(|f| (f.owner, f.neighbour));
        let n_internal = internal.len();
        let mut faces = internal;
        let mut patches = Vec::new();
        let mut face_patch = Vec::new();
        for (pi, (pname, kind)) in patch_defs.iter().enumerate() {
            let start = faces.len();
            let size = by_patch[pi].len();
            faces.append(&mut by_patch[pi]);
            face_patch.extend(std::iter::repeat(pi).take(size));
            patches.push(Patch {
                name: pname.clone(),
                kind: *kind,
                start,
                size,
            });
        }

        let mut cell_faces = vec![Vec::new(); n_cells];
        for (fi, f) in faces.iter().enumerate() {
            cell_faces[f.owner].push(fi);
            if let Some(nb) = f.neighbour {
                cell_faces[nb].push(fi);
            }
        }
        if let Some(c) = cell_faces.iter().position(|cf| cf.len() < 4) {
            return Err(topo(format!("cell {c} is not closed (fewer than 4 faces)")));
        }

        let geometry = geometry::compute(points, &faces, n_internal, n_cells, &cell_faces)
            .map_err(|e| match e {
                geometry::GeometryError::DegenerateFace { face, area } => {
                    MeshError::DegenerateFace {
                        region: name.to_string(),
                        face,
                        area,
                    }
                }
                geometry::GeometryError::InvertedCell { cell, volume } => {
                    MeshError::InvertedCell {
                        region: name.to_string(),
                        cell,
                        volume,
                    }
                }
                geometry::GeometryError::Orientation { face } => {
                    topo(format!("face {face} area vector does not point away from its owner"))
                }
            })?;

        Ok(Region {
            name: name.to_string(),
            faces,
            n_internal,
            n_cells,
            cell_faces,
            patches,
            face_patch,
            geometry,
            planar_cells: None,
        })
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.faces.len() - self.n_internal
    }

    pub fn is_internal(&self, face: usize) -> bool {
        face < self.n_internal
    }

    pub fn patch_of(&self, face: usize) -> Option<&Patch> {
        (face >= self.n_internal).then(|| &self.patches[self.face_patch[face - self.n_internal]])
    }

    pub fn boundary_kind(&self, face: usize) -> PatchKind {
        self.patches[self.face_patch[face - self.n_internal]].kind
    }

    pub fn patch_by_name(&self, name: &str) -> Option<usize> {
        self.patches.iter().position(|p| p.name == name)
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.cell_volume.iter().sum()
    }

    /// Largest `|Σ_f s_f| / Σ_f |s_f|` over the cells (should be round-off).
    pub fn max_closure_error(&self) -> f64 {
        let g = &self.geometry;
        (0..self.n_cells)
            .map(|c| {
                let mut sum = Vec3::zeros();
                let mut mag = 0.0;
                for &f in &self.cell_faces[c] {
                    let sign = if self.faces[f].owner == c { 1.0 } else { -1.0 };
                    sum += sign * g.face_area[f];
                    mag += g.face_mag[f];
                }
                sum.norm() / mag
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Paired faces between two regions. `normal` points from region A into
/// region B.
#[derive(Debug, Clone)]
pub struct InterfacePatch {
    pub region_a: usize,
    pub region_b: usize,
    /// `(face id in region A, face id in region B)`.
    pub pairs: Vec<(usize, usize)>,
    pub normal: Vec<Vec3>,
    pub dist_a: Vec<f64>,
    pub dist_b: Vec<f64>,
}

impl InterfacePatch {
    pub fn region(&self, side: Side) -> usize {
        match side {
            Side::A => self.region_a,
            Side::B => self.region_b,
        }
    }

    pub fn face(&self, pair: usize, side: Side) -> usize {
        match side {
            Side::A => self.pairs[pair].0,
            Side::B => self.pairs[pair].1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceLink {
    pub interface: usize,
    pub pair: usize,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct MultiRegionMesh {
    pub points: Vec<Vec3>,
    pub regions: Vec<Region>,
    pub interfaces: Vec<InterfacePatch>,
    /// Per region, per boundary face: the interface pair it belongs to.
    pub links: Vec<Vec<Option<InterfaceLink>>>,
    /// Extrusion thickness for planar meshes.
    pub thickness: Option<f64>,
}

impl MultiRegionMesh {
    /// Pairs every face of every [`PatchKind::Interface`] patch with a
    /// coincident face of another region.
    pub fn assemble(
        points: Vec<Vec3>,
        regions: Vec<Region>,
        pairing_tolerance: f64,
    ) -> Result<MultiRegionMesh, MeshError> {
        let diag = bounding_diagonal(&points);
        let tol = pairing_tolerance * diag.max(f64::MIN_POSITIVE);
        let bucket = tol * 8.0;
        let key = |x: &Vec3| {
            [
                (x.x / bucket).floor() as i64,
                (x.y / bucket).floor() as i64,
                (x.z / bucket).floor() as i64,
            ]
        };

        let mut grid: HashMap<[i64; 3], Vec<(usize, usize)>> = HashMap::new();
        for (ri, r) in regions.iter().enumerate() {
            for p in r.patches.iter().filter(|p| p.kind == PatchKind::Interface) {
                for f in p.faces() {
                    grid.entry(key(&r.geometry.face_centroid[f]))
                        .or_default()
                        .push((ri, f));
                }
            }
        }

        let mut groups: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (ri, r) in regions.iter().enumerate() {
            for p in r.patches.iter().filter(|p| p.kind == PatchKind::Interface) {
                for f in p.faces() {
                    let xc = r.geometry.face_centroid[f];
                    let k = key(&xc);
                    let mut found = Vec::new();
                    for dx in -1..=1 {
                        for dy in -1..=1 {
                            for dz in -1..=1 {
                                if let Some(list) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                                    for &(rj, g) in list {
                                        if rj != ri
                                            && (regions[rj].geometry.face_centroid[g] - xc).norm()
                                                <= tol
                                        {
                                            found.push((rj, g));
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let (rj, g) = match found.as_slice() {
                        [one] => *one,
                        [] => {
                            return Err(MeshError::NonConformal(format!(
                                "region {} face {} (patch {}) at ({:.6}, {:.6}, {:.6}) has no partner face",
                                r.name, f, p.name, xc.x, xc.y, xc.z
                            )))
                        }
                        _ => {
                            return Err(MeshError::NonConformal(format!(
                                "region {} face {} (patch {}) matches {} faces",
                                r.name,
                                f,
                                p.name,
                                found.len()
                            )))
                        }
                    };
                    let sa = r.geometry.face_area[f];
                    let sb = regions[rj].geometry.face_area[g];
                    if (sa + sb).norm() > 1e-8 * sa.norm() {
                        return Err(MeshError::NonConformal(format!(
                            "region {} face {} and region {} face {} are not anti-parallel",
                            r.name, f, regions[rj].name, g
                        )));
                    }
                    if ri < rj {
                        groups.entry((ri, rj)).or_default().push((f, g));
                    }
                }
            }
        }

        let mut keys: Vec<_> = groups.keys().copied().collect();
        keys.sort_unstable();
        let mut interfaces = Vec::new();
        let mut links: Vec<Vec<Option<InterfaceLink>>> =
            regions.iter().map(|r| vec![None; r.n_boundary()]).collect();
        for (ii, (ra, rb)) in keys.into_iter().enumerate() {
            let mut pairs = groups.remove(&(ra, rb)).unwrap();
            pairs.sort_unstable();
            let (ga, gb) = (&regions[ra].geometry, &regions[rb].geometry);
            let mut normal = Vec::with_capacity(pairs.len());
            let mut dist_a = Vec::with_capacity(pairs.len());
            let mut dist_b = Vec::with_capacity(pairs.len());
            for (pi, &(fa, fb)) in pairs.iter().enumerate() {
                let n = ga.face_normal[fa];
                let xf = ga.face_centroid[fa];
                let ca = regions[ra].faces[fa].owner;
                let cb = regions[rb].faces[fb].owner;
                let da = n.dot(&(xf - ga.cell_centroid[ca]));
                let db = n.dot(&(gb.cell_centroid[cb] - xf));
                if !(da > 0.0 && db > 0.0) {
                    return Err(MeshError::Topology {
                        region: regions[ra].name.clone(),
                        msg: format!("interface face {fa}: non-positive centroid distance"),
                    });
                }
                normal.push(n);
                dist_a.push(da);
                dist_b.push(db);
                links[ra][fa - regions[ra].n_internal] = Some(InterfaceLink {
                    interface: ii,
                    pair: pi,
                    side: Side::A,
                });
                links[rb][fb - regions[rb].n_internal] = Some(InterfaceLink {
                    interface: ii,
                    pair: pi,
                    side: Side::B,
                });
            }
            interfaces.push(InterfacePatch {
                region_a: ra,
                region_b: rb,
                pairs,
                normal,
                dist_a,
                dist_b,
            });
        }

        Ok(MultiRegionMesh {
            points,
            regions,
            interfaces,
            links,
            thickness: None,
        })
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    pub fn n_cells(&self) -> usize {
        self.regions.iter().map(|r| r.n_cells).sum()
    }

    pub fn link(&self, region: usize, face: usize) -> Option<InterfaceLink> {
        let r = &self.regions[region];
        if face < r.n_internal {
            None
        } else {
            self.links[region][face - r.n_internal]
        }
    }

    /// The face paired with `(region, face)` on the other side of an interface.
    pub fn partner(&self, region: usize, face: usize) -> Option<(usize, usize)> {
        let l = self.link(region, face)?;
        let i = &self.interfaces[l.interface];
        Some(match l.side {
            Side::A => (i.region_b, i.pairs[l.pair].1),
            Side::B => (i.region_a, i.pairs[l.pair].0),
        })
    }

    pub fn bounding_diagonal(&self) -> f64 {
        bounding_diagonal(&self.points)
    }

    pub fn max_non_orthogonality(&self) -> f64 {
        self.regions
            .iter()
            .flat_map(|r| r.geometry.non_orth_deg.iter().copied())
            .fold(0.0, f64::max)
    }
}

pub fn bounding_diagonal(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Loads a mesh by file extension: `.msh` (Gmsh ASCII) or anything else as
/// the internal text format.
pub fn load(path: &std::path::Path) -> Result<MultiRegionMesh, MeshError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("msh") => gmsh::load_gmsh(path),
        _ => text::load_text(path),
    }
}
