//! Line sampling, interface jump diagnostics and export (legacy VTK, CSV).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::field::RegionFields;
use crate::geom::{Vec3, MU0};
use crate::mesh::{MultiRegionMesh, PatchKind, Region, Side};

#[derive(Debug, thiserror::Error)]
pub enum PostError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PostError + '_ {
    move |source| PostError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Finds the cell containing a point. Cells are treated as convex; the
/// front and back faces of planar meshes are ignored so any `z` works.
pub struct CellLocator<'m> {
    mesh: &'m MultiRegionMesh,
    /// Per region, per cell: bounding box `(lo, hi)` in the plane (or space).
    boxes: Vec<Vec<(Vec3, Vec3)>>,
    /// Region indices sorted by name, for an order-independent tie break.
    by_name: Vec<usize>,
    tol: f64,
}

impl<'m> CellLocator<'m> {
    pub fn new(mesh: &'m MultiRegionMesh) -> Self {
        let boxes = mesh
            .regions
            .iter()
            .map(|r| {
                (0..r.n_cells)
                    .map(|c| {
                        let mut lo = Vec3::repeat(f64::INFINITY);
                        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
                        for &f in &r.cell_faces[c] {
                            for &v in &r.faces[f].vertices {
                                lo = lo.inf(&mesh.points[v]);
                                hi = hi.sup(&mesh.points[v]);
                            }
                        }
                        (lo, hi)
                    })
                    .collect()
            })
            .collect();
        let mut by_name: Vec<usize> = (0..mesh.regions.len()).collect();
        by_name.sort_by(|&a, &b| mesh.regions[a].name.cmp(&mesh.regions[b].name));
        CellLocator {
            mesh,
            boxes,
            by_name,
            tol: 1e-10 * mesh.bounding_diagonal(),
        }
    }

    /// Distance of `p` inside the cell's faces (negative when outside).
    fn margin(&self, region: &Region, c: usize, p: &Vec3) -> f64 {
        let g = &region.geometry;
        let mut m = f64::INFINITY;
        for &f in &region.cell_faces[c] {
            if f >= region.n_internal && region.boundary_kind(f) == PatchKind::Planar {
                continue;
            }
            let sign = if region.faces[f].owner == c { 1.0 } else { -1.0 };
            m = m.min(-sign * g.face_normal[f].dot(&(p - g.face_centroid[f])));
        }
        m
    }

    /// `(region, cell)` containing `p`; on a shared face the cell with the
    /// larger margin wins, then the lower region name and cell index.
    pub fn locate(&self, p: &Vec3) -> Option<(usize, usize)> {
        let planar = self.mesh.thickness.is_some();
        let mut best: Option<(f64, usize, usize)> = None;
        for &ri in &self.by_name {
            let region = &self.mesh.regions[ri];
            for (c, (lo, hi)) in self.boxes[ri].iter().enumerate() {
                let outside = (0..if planar { 2 } else { 3 }).any(|k| p[k] < lo[k] - self.tol || p[k] > hi[k] + self.tol);
                if outside {
                    continue;
                }
                let m = self.margin(region, c, p);
                if m >= -self.tol && best.is_none_or(|(bm, _, _)| m > bm) {
                    best = Some((m, ri, c));
                }
            }
        }
        best.map(|(_, r, c)| (r, c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    /// Arc length from the start point.
    pub s: f64,
    pub point: Vec3,
    /// `None` for points outside every region.
    pub region: Option<String>,
    pub value: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SampleTable {
    pub name: String,
    pub rows: Vec<SampleRow>,
}

/// Cell-centroid values (no interpolation) at `n` evenly spaced points of
/// the segment `p0`–`p1`. `values[r]` holds the cell values of region `r`.
pub fn sample_line(mesh: &MultiRegionMesh, values: &[&[Vec3]], p0: Vec3, p1: Vec3, n: usize) -> Result<SampleTable, PostError> {
    if n < 2 {
        return Err(PostError::Invalid(format!("need at least 2 sample points, got {n}")));
    }
    if values.len() != mesh.regions.len() {
        return Err(PostError::Invalid("one value array per region expected".into()));
    }
    let loc = CellLocator::new(mesh);
    let len = (p1 - p0).norm();
    let rows = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let point = p0 + t * (p1 - p0);
            let hit = loc.locate(&point);
            SampleRow {
                s: t * len,
                point,
                region: hit.map(|(r, _)| mesh.regions[r].name.clone()),
                value: hit.map(|(r, c)| values[r][c]),
            }
        })
        .collect();
    Ok(SampleTable { name: String::new(), rows })
}

/// Writes `s,x,y,z,<name>_x,<name>_y,<name>_z`; absent samples leave the
/// value fields empty.
pub fn write_csv_samples(table: &SampleTable, value_name: &str, path: &Path) -> Result<(), PostError> {
    let mut out = format!("s,x,y,z,{value_name}_x,{value_name}_y,{value_name}_z\n");
    for r in &table.rows {
        let _ = write!(out, "{:e},{:e},{:e},{:e}", r.s, r.point.x, r.point.y, r.point.z);
        match r.value {
            Some(v) => {
                let _ = writeln!(out, ",{:e},{:e},{:e}", v.x, v.y, v.z);
            }
            None => out.push_str(",,,\n"),
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Jumps at one interface face pair; `Δ` is side B minus side A, `e_n`
/// points from A to B.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRow {
    pub interface: usize,
    pub pair: usize,
    pub centroid: Vec3,
    pub area: f64,
    pub normal_jump: f64,
    pub tangential_jump: Vec3,
    /// `μ0 K × e_n`, the jump the interface condition prescribes.
    pub expected: Vec3,
    /// `|ΔB − μ0 K × e_n|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct JumpReport {
    pub rows: Vec<JumpRow>,
    pub max_normal_jump: f64,
    /// Area-weighted root mean square values.
    pub l2_normal_jump: f64,
    pub max_residual: f64,
    pub l2_residual: f64,
    pub l2_mu0_k: f64,
    pub max_b: f64,
}

fn rms(values: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = values.fold((0.0, 0.0), |(n, d), (v, w)| (n + v * v * w, d + w));
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Per-face check of the interface laws `ΔB·e_n = 0` and
/// `ΔB = μ0 K × e_n`, from the one-sided face values of `B`.
pub fn interface_jump_report(mesh: &MultiRegionMesh, fields: &[RegionFields], k: &[Vec<Vec3>]) -> JumpReport {
    let mut rows = Vec::new();
    for (ii, itf) in mesh.interfaces.iter().enumerate() {
        let (ra, rb) = (itf.region(Side::A), itf.region(Side::B));
        for p in 0..itf.pairs.len() {
            let (fa, fb) = (itf.face(p, Side::A), itf.face(p, Side::B));
            let reg_a = &mesh.regions[ra];
            let b_a = fields[ra].b.boundary[fa - reg_a.n_internal];
            let b_b = fields[rb].b.boundary[fb - mesh.regions[rb].n_internal];
            let n = itf.normal[p];
            let jump = b_b - b_a;
            let normal_jump = jump.dot(&n);
            let expected = MU0 * k[ii][p].cross(&n);
            rows.push(JumpRow {
                interface: ii,
                pair: p,
                centroid: reg_a.geometry.face_centroid[fa],
                area: reg_a.geometry.face_mag[fa],
                normal_jump,
                tangential_jump: jump - normal_jump * n,
                expected,
                residual: (jump - expected).norm(),
            });
        }
    }
    let max_b = fields
        .iter()
        .flat_map(|f| f.b.cells.iter())
        .fold(0.0_f64, |m, b| m.max(b.norm()));
    JumpReport {
        max_normal_jump: rows.iter().fold(0.0_f64, |m, r| m.max(r.normal_jump.abs())),
        l2_normal_jump: rms(rows.iter().map(|r| (r.normal_jump, r.area))),
        max_residual: rows.iter().fold(0.0_f64, |m, r| m.max(r.residual)),
        l2_residual: rms(rows.iter().map(|r| (r.residual, r.area))),
        l2_mu0_k: rms(rows.iter().map(|r| (r.expected.norm(), r.area))),
        max_b,
        rows,
    }
}

/// Cells of a region as VTK `(type, point ids)`: base polygons for planar
/// meshes, convex point sets otherwise.
fn vtk_cells(region: &Region) -> Vec<(u8, Vec<usize>)> {
    match &region.planar_cells {
        Some(polys) => polys
            .iter()
            .map(|p| {
                let t = match p.len() {
                    3 => 5,
                    4 => 9,
                    _ => 7,
                };
                (t, p.clone())
            })
            .collect(),
        None => (0..region.n_cells)
            .map(|c| {
                let mut ids: Vec<usize> = region.cell_faces[c]
                    .iter()
                    .flat_map(|&f| region.faces[f].vertices.iter().copied())
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                (41, ids)
            })
            .collect(),
    }
}

fn vtk_document(mesh: &MultiRegionMesh, fields: &[RegionFields], regions: &[usize], title: &str) -> String {
    let cells: Vec<(usize, Vec<(u8, Vec<usize>)>)> = regions.iter().map(|&r| (r, vtk_cells(&mesh.regions[r]))).collect();
    // compact point numbering in first-use order
    let mut map = vec![usize::MAX; mesh.points.len()];
    let mut used = Vec::new();
    for (_, cs) in &cells {
        for (_, ids) in cs {
            for &v in ids {
                if map[v] == usize::MAX {
                    map[v] = used.len();
                    used.push(v);
                }
            }
        }
    }
    let n_cells: usize = cells.iter().map(|(_, c)| c.len()).sum();
    let size: usize = cells.iter().flat_map(|(_, c)| c.iter()).map(|(_, ids)| ids.len() + 1).sum();

    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", used.len());
    for &v in &used {
        let p = mesh.points[v];
        let _ = writeln!(s, "{:e} {:e} {:e}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "CELLS {n_cells} {size}");
    for (_, cs) in &cells {
        for (_, ids) in cs {
            s.push_str(&ids.len().to_string());
            for v in ids {
                let _ = write!(s, " {}", map[*v]);
            }
            s.push('\n');
        }
    }
    let _ = writeln!(s, "CELL_TYPES {n_cells}");
    for (_, cs) in &cells {
        for (t, _) in cs {
            let _ = writeln!(s, "{t}");
        }
    }
    let _ = writeln!(s, "CELL_DATA {n_cells}");
    let vectors: [(&str, fn(&RegionFields) -> &[Vec3]); 4] = [
        ("A", |f| &f.a.cells),
        ("B", |f| &f.b.cells),
        ("M", |f| &f.m.cells),
        ("J_f", |f| &f.j.cells),
    ];
    for (name, get) in vectors {
        let _ = writeln!(s, "VECTORS {name} double");
        for &r in regions {
            for v in get(&fields[r]) {
                let _ = writeln!(s, "{:e} {:e} {:e}", v.x, v.y, v.z);
            }
        }
    }
    let _ = writeln!(s, "SCALARS chi double 1\nLOOKUP_TABLE default");
    for &r in regions {
        for v in &fields[r].chi.cells {
            let _ = writeln!(s, "{v:e}");
        }
    }
    let _ = writeln!(s, "SCALARS region int 1\nLOOKUP_TABLE default");
    for &r in regions {
        for _ in 0..mesh.regions[r].n_cells {
            let _ = writeln!(s, "{r}");
        }
    }
    s
}

/// Writes `<stem>_<region>.vtk` per region and `<stem>.vtk` with all
/// regions into `dir`; returns the written paths, combined file last.
pub fn write_vtk(mesh: &MultiRegionMesh, fields: &[RegionFields], dir: &Path, stem: &str) -> Result<Vec<PathBuf>, PostError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, doc: String| -> Result<(), PostError> {
        let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(doc.as_bytes()).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    for (ri, r) in mesh.regions.iter().enumerate() {
        put(dir.join(format!("{stem}_{}.vtk", r.name)), vtk_document(mesh, fields, &[ri], &r.name))?;
    }
    let all: Vec<usize> = (0..mesh.regions.len()).collect();
    put(dir.join(format!("{stem}.vtk")), vtk_document(mesh, fields, &all, stem))?;
    Ok(written)
}
