//! Extrusion of 2D polygon meshes into one-cell-thick prism meshes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::geom::Vec3;

use super::{MeshError, MultiRegionMesh, PatchKind, RawFace, Region, DEFAULT_PAIRING_TOLERANCE};

/// Name of the patch holding the front and back faces of extruded meshes.
pub const PLANAR_PATCH: &str = "frontAndBack";

/// A 2D mesh of polygons in the xy-plane, partitioned into named regions.
#[derive(Debug, Clone, Default)]
pub struct PlanarMesh {
    pub points: Vec<[f64; 2]>,
    /// Polygon vertex lists; either orientation is accepted.
    pub cells: Vec<Vec<usize>>,
    pub cell_region: Vec<usize>,
    pub region_names: Vec<String>,
    /// Patch name of boundary edges, keyed by sorted vertex pair.
    pub edge_tags: HashMap<(usize, usize), String>,
    /// Patch used for boundary edges without a tag; `None` makes them an error.
    pub default_patch: Option<String>,
}

pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(pts: &[[f64; 2]], poly: &[usize]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let p = pts[poly[i]];
            let q = pts[poly[(i + 1) % n]];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        * 0.5
}

struct EdgeUse {
    cell: usize,
    /// Direction in which the cell traverses the edge counter-clockwise.
    from: usize,
    to: usize,
}

/// Extrudes `mesh` by `thickness` along +z. Edges shared by cells of
/// different regions become interface patches named `interface_<other>`.
pub fn extrude(mesh: &PlanarMesh, thickness: f64) -> Result<MultiRegionMesh, MeshError> {
    let np = mesh.points.len();
    let mut points = Vec::with_capacity(2 * np);
    for p in &mesh.points {
        points.push(Vec3::new(p[0], p[1], 0.0));
    }
    for p in &mesh.points {
        points.push(Vec3::new(p[0], p[1], thickness));
    }

    let ccw: Vec<Vec<usize>> = mesh
        .cells
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if signed_area(&mesh.points, &c) < 0.0 {
                c.reverse();
            }
            c
        })
        .collect();

    let mut edges: BTreeMap<(usize, usize), Vec<EdgeUse>> = BTreeMap::new();
    for (ci, poly) in ccw.iter().enumerate() {
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            edges.entry(edge_key(a, b)).or_default().push(EdgeUse {
                cell: ci,
                from: a,
                to: b,
            });
        }
    }

    let nreg = mesh.region_names.len();
    let mut local = vec![usize::MAX; mesh.cells.len()];
    let mut counts = vec![0usize; nreg];
    for (ci, &r) in mesh.cell_region.iter().enumerate() {
        if r >= nreg {
            return Err(MeshError::Topology {
                region: format!("#{r}"),
                msg: format!("cell {ci} references an unknown region"),
            });
        }
        local[ci] = counts[r];
        counts[r] += 1;
    }

    let mut raw: Vec<Vec<RawFace>> = vec![Vec::new(); nreg];
    let mut patch_names: Vec<BTreeSet<String>> = vec![BTreeSet::new(); nreg];
    let mut iface_names: Vec<BTreeSet<String>> = vec![BTreeSet::new(); nreg];
    let side = |u: &EdgeUse| vec![u.from, u.to, u.to + np, u.from + np];

    for (key, uses) in &edges {
        match uses.as_slice() {
            [u] => {
                let r = mesh.cell_region[u.cell];
                let name = mesh
                    .edge_tags
                    .get(key)
                    .or(mesh.default_patch.as_ref())
                    .ok_or_else(|| MeshError::MissingPhysicalTag(format!(
                        "boundary edge ({}, {}) of region {} has no patch tag",
                        key.0, key.1, mesh.region_names[r]
                    )))?
                    .clone();
                patch_names[r].insert(name.clone());
                raw[r].push(RawFace {
                    vertices: side(u),
                    owner: local[u.cell],
                    neighbour: None,
                    patch: Some(name),
                });
            }
            [u, v] => {
                let (ru, rv) = (mesh.cell_region[u.cell], mesh.cell_region[v.cell]);
                if u.from == v.from {
                    return Err(MeshError::Topology {
                        region: mesh.region_names[ru].clone(),
                        msg: format!(
                            "cells {} and {} overlap along edge ({}, {})",
                            u.cell, v.cell, key.0, key.1
                        ),
                    });
                }
                if ru == rv {
                    raw[ru].push(RawFace {
                        vertices: side(u),
                        owner: local[u.cell],
                        neighbour: Some(local[v.cell]),
                        patch: None,
                    });
                } else {
                    for (me, other) in [(u, rv), (v, ru)] {
                        let r = mesh.cell_region[me.cell];
                        let name = format!("interface_{}", mesh.region_names[other]);
                        iface_names[r].insert(name.clone());
                        raw[r].push(RawFace {
                            vertices: side(me),
                            owner: local[me.cell],
                            neighbour: None,
                            patch: Some(name),
                        });
                    }
                }
            }
            _ => {
                return Err(MeshError::Topology {
                    region: mesh.region_names[mesh.cell_region[uses[0].cell]].clone(),
                    msg: format!("edge ({}, {}) is shared by {} cells", key.0, key.1, uses.len()),
                })
            }
        }
    }

    let mut regions = Vec::with_capacity(nreg);
    let mut planar_cells: Vec<Vec<Vec<usize>>> = vec![Vec::new(); nreg];
    for (ci, poly) in ccw.iter().enumerate() {
        let r = mesh.cell_region[ci];
        let mut back = poly.clone();
        back.reverse();
        raw[r].push(RawFace {
            vertices: back,
            owner: local[ci],
            neighbour: None,
            patch: Some(PLANAR_PATCH.into()),
        });
        raw[r].push(RawFace {
            vertices: poly.iter().map(|&v| v + np).collect(),
            owner: local[ci],
            neighbour: None,
            patch: Some(PLANAR_PATCH.into()),
        });
        planar_cells[r].push(poly.clone());
    }
    for (r, faces) in raw.into_iter().enumerate() {
        let mut defs: Vec<(String, PatchKind)> = patch_names[r]
            .iter()
            .map(|n| (n.clone(), PatchKind::Wall))
            .collect();
        defs.extend(iface_names[r].iter().map(|n| (n.clone(), PatchKind::Interface)));
        defs.push((PLANAR_PATCH.into(), PatchKind::Planar));
        let mut region = Region::build(&mesh.region_names[r], &points, counts[r], faces, &defs)?;
        region.planar_cells = Some(std::mem::take(&mut planar_cells[r]));
        regions.push(region);
    }
    let mut m = MultiRegionMesh::assemble(points, regions, DEFAULT_PAIRING_TOLERANCE)?;
    m.thickness = Some(thickness);
    Ok(m)
}

/// Merges points closer than `tol`; returns the unique points and the map
/// from input index to unique index.
pub fn merge_points(points: &[[f64; 2]], tol: f64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let cell = tol.max(f64::MIN_POSITIVE) * 4.0;
    let key = |p: &[f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut unique: Vec<[f64; 2]> = Vec::new();
    let mut map = Vec::with_capacity(points.len());
    for p in points {
        let (kx, ky) = key(p);
        let mut hit = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = grid.get(&(kx + dx, ky + dy)) {
                    for &u in list {
                        let q = unique[u];
                        if (q[0] - p[0]).hypot(q[1] - p[1]) <= tol {
                            hit = Some(u);
                            break 'search;
                        }
                    }
                }
            }
        }
        let id = hit.unwrap_or_else(|| {
            unique.push(*p);
            grid.entry((kx, ky)).or_default().push(unique.len() - 1);
            unique.len() - 1
        });
        map.push(id);
    }
    (unique, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit square split along the diagonal (0,0)-(1,1).
    pub(crate) fn two_triangle_square() -> PlanarMesh {
        let mut tags = HashMap::new();
        for (a, b, n) in [(0, 1, "bottom"), (1, 2, "right"), (2, 3, "top"), (3, 0, "left")] {
            tags.insert(edge_key(a, b), n.to_string());
        }
        PlanarMesh {
            points: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            cells: vec![vec![0, 1, 2], vec![0, 2, 3]],
            cell_region: vec![0, 0],
            region_names: vec!["square".into()],
            edge_tags: tags,
            default_patch: None,
        }
    }

    #[test]
    fn minimal_square_topology() {
        let m = extrude(&two_triangle_square(), 1.0).unwrap();
        let r = &m.regions[0];
        assert_eq!(r.n_cells, 2);
        assert_eq!(r.n_internal, 1);
        let walls: usize = r
            .patches
            .iter()
            .filter(|p| p.kind == PatchKind::Wall)
            .map(|p| p.size)
            .sum();
        assert_eq!(walls, 4);
        assert_eq!(r.patches.iter().filter(|p| p.kind == PatchKind::Wall).count(), 4);
    }

    #[test]
    fn minimal_square_hand_geometry() {
        let m = extrude(&two_triangle_square(), 1.0).unwrap();
        let g = &m.regions[0].geometry;
        // lower-right triangle (0,0),(1,0),(1,1): centroid (2/3, 1/3)
        let c0 = Vec3::new(2.0 / 3.0, 1.0 / 3.0, 0.5);
        let c1 = Vec3::new(1.0 / 3.0, 2.0 / 3.0, 0.5);
        assert!((g.cell_centroid[0] - c0).norm() < 1e-14);
        assert!((g.cell_centroid[1] - c1).norm() < 1e-14);
        assert!((g.cell_volume[0] - 0.5).abs() < 1e-14);
        // diagonal face: n = (−1, 1, 0)/√2, r = (−1/3, 1/3, 0) is parallel to n
        let n = Vec3::new(-1.0, 1.0, 0.0) / 2f64.sqrt();
        assert!((g.face_normal[0] - n).norm() < 1e-14);
        assert!((g.delta[0] - Vec3::new(-1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-14);
        assert!((g.weight[0] - 0.5).abs() < 1e-14);
        assert!(g.non_orth_deg[0].abs() < 1e-6);
    }

    #[test]
    fn skewed_pair_has_positive_non_orthogonality() {
        // split the unit square into triangles (0,0),(1,0),(0,1) and (1,0),(1.5,1),(0,1)
        let mut tags = HashMap::new();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            tags.insert(edge_key(a, b), "wall".to_string());
        }
        let pm = PlanarMesh {
            points: vec![[0.0, 0.0], [1.0, 0.0], [1.5, 1.0], [0.0, 1.0]],
            cells: vec![vec![0, 1, 3], vec![1, 2, 3]],
            cell_region: vec![0, 0],
            region_names: vec!["r".into()],
            edge_tags: tags,
            default_patch: None,
        };
        let m = extrude(&pm, 1.0).unwrap();
        let g = &m.regions[0].geometry;
        // hand computation: centroids (1/3, 1/3) and (5/6, 2/3); face normal (1,1)/√2
        let r = Vec3::new(0.5, 1.0 / 3.0, 0.0);
        assert!((g.delta[0] - r).norm() < 1e-14);
        let expect = (Vec3::new(1.0, 1.0, 0.0).normalize().dot(&r.normalize()))
            .acos()
            .to_degrees();
        assert!((g.non_orth_deg[0] - expect).abs() < 1e-10);
        assert!(expect > 10.0);
    }

    #[test]
    fn two_regions_get_paired_interface() {
        let mut pm = two_triangle_square();
        pm.cell_region = vec![0, 1];
        pm.region_names = vec!["a".into(), "b".into()];
        let m = extrude(&pm, 1.0).unwrap();
        assert_eq!(m.interfaces.len(), 1);
        assert_eq!(m.interfaces[0].pairs.len(), 1);
        assert!(m.regions[0].patch_by_name("interface_b").is_some());
        let d = m.interfaces[0].dist_a[0];
        assert!((d - 1.0 / (3.0 * 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn untagged_boundary_edge_is_rejected() {
        let mut pm = two_triangle_square();
        pm.edge_tags.remove(&(0, 1));
        assert!(matches!(extrude(&pm, 1.0), Err(MeshError::MissingPhysicalTag(_))));
    }

    #[test]
    fn merging_coincident_points() {
        let (u, map) = merge_points(&[[0.0, 0.0], [1.0, 0.0], [1e-15, 0.0]], 1e-12);
        assert_eq!(u.len(), 2);
        assert_eq!(map, vec![0, 1, 0]);
    }
}
