//! Graded unstructured triangle meshes from a constrained Delaunay
//! triangulation of seeded points.
//!
//! Outlines of the box and of every shape are sampled and inserted as
//! constraint edges, interior seeds come from a quadtree refined towards
//! the outlines, and a few Laplacian smoothing passes (each followed by a
//! fresh triangulation) even out the triangle shapes.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::structured::OUTER_PATCH;
use super::{region_names, Shape};
use crate::mesh::planar::{edge_key, PlanarMesh};
use crate::mesh::MeshError;

#[derive(Debug, Clone)]
pub struct CdtSpec {
    pub box_lo: [f64; 2],
    pub box_hi: [f64; 2],
    pub background: String,
    pub shapes: Vec<Shape>,
    /// Edge length on shape outlines.
    pub h_near: f64,
    /// Largest edge length, reached far from the shapes.
    pub h_far: f64,
    /// Increase of the edge length per unit distance from the nearest outline.
    pub growth: f64,
    pub seed: u64,
    pub smoothing: usize,
}

impl CdtSpec {
    /// Target edge length: `h_near` inside every shape, graded outside.
    pub fn size_at(&self, p: [f64; 2]) -> f64 {
        if self.shapes.iter().any(|s| s.contains(p)) {
            return self.h_near;
        }
        let d = self
            .shapes
            .iter()
            .map(|s| s.distance(p))
            .fold(f64::INFINITY, f64::min);
        if d.is_finite() {
            (self.h_near + self.growth * d).min(self.h_far)
        } else {
            self.h_far
        }
    }
}

fn segment(out: &mut Vec<[f64; 2]>, a: [f64; 2], b: [f64; 2], h: impl Fn([f64; 2]) -> f64) {
    // sample with the local size at the segment midpoint; good enough for
    // the mild grading used on the outer box
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let n = (len / h(mid)).round().max(1.0) as usize;
    for i in 0..n {
        let t = i as f64 / n as f64;
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
}

/// Closed outlines as point loops.
fn outlines(spec: &CdtSpec) -> Vec<Vec<[f64; 2]>> {
    let mut loops = Vec::new();
    let (lo, hi) = (spec.box_lo, spec.box_hi);
    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    let mut outer = Vec::new();
    for i in 0..4 {
        segment(&mut outer, corners[i], corners[(i + 1) % 4], |p| spec.size_at(p));
    }
    loops.push(outer);
    for s in &spec.shapes {
        let mut l = Vec::new();
        match s {
            Shape::Rect { center, size, .. } => {
                let (hx, hy) = (size[0] / 2.0, size[1] / 2.0);
                let c = [
                    [center[0] - hx, center[1] - hy],
                    [center[0] + hx, center[1] - hy],
                    [center[0] + hx, center[1] + hy],
                    [center[0] - hx, center[1] + hy],
                ];
                for i in 0..4 {
                    segment(&mut l, c[i], c[(i + 1) % 4], |_| spec.h_near);
                }
            }
            Shape::Disc { center, radius, .. } => {
                let n = ((2.0 * std::f64::consts::PI * radius / spec.h_near).round() as usize).max(8);
                let th = 2.0 * std::f64::consts::PI / n as f64;
                // inscribed polygon with the disc's area
                let r = radius * (th / th.sin()).sqrt();
                for i in 0..n {
                    let a = th * i as f64;
                    l.push([center[0] + r * a.cos(), center[1] + r * a.sin()]);
                }
            }
        }
        loops.push(l);
    }
    loops
}

fn triangulate(points: &[[f64; 2]], constraints: &[[usize; 2]]) -> Result<Vec<[usize; 3]>, MeshError> {
    let verts: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(verts, constraints.to_vec())
        .map_err(|e| MeshError::Topology {
            region: "generator".into(),
            msg: format!("triangulation failed: {e:?}"),
        })?;
    if cdt.num_vertices() != points.len() {
        return Err(MeshError::Topology {
            region: "generator".into(),
            msg: "duplicate seed points".into(),
        });
    }
    Ok(cdt
        .inner_faces()
        .map(|f| {
            let v = f.vertices();
            [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()]
        })
        .collect())
}

pub fn generate(spec: &CdtSpec) -> Result<PlanarMesh, MeshError> {
    if !(spec.h_near > 0.0 && spec.h_far >= spec.h_near && spec.growth >= 0.0) {
        return Err(MeshError::Topology {
            region: "generator".into(),
            msg: "need 0 < h_near <= h_far and growth >= 0".into(),
        });
    }
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut constraints = Vec::new();
    let mut outline_pts = Vec::new();
    let mut n_outer = 0;
    for l in outlines(spec) {
        if n_outer == 0 {
            n_outer = l.len();
        }
        let start = points.len();
        for (i, p) in l.iter().enumerate() {
            points.push(*p);
            constraints.push([start + i, start + (i + 1) % l.len()]);
        }
        outline_pts.extend(l);
    }
    let n_fixed = points.len();

    // cheap spatial hash of outline points for the clearance test
    let bucket = spec.h_far;
    let key = |p: [f64; 2]| ((p[0] / bucket).floor() as i64, (p[1] / bucket).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in outline_pts.iter().enumerate() {
        grid.entry(key(*p)).or_default().push(i);
    }
    let near_outline = |p: [f64; 2], r: f64| {
        let (kx, ky) = key(p);
        let reach = (r / bucket).ceil() as i64;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(list) = grid.get(&(kx + dx, ky + dy)) {
                    if list.iter().any(|&i| {
                        let q = outline_pts[i];
                        (q[0] - p[0]).hypot(q[1] - p[1]) < r
                    }) {
                        return true;
                    }
                }
            }
        }
        false
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = (spec.box_lo, spec.box_hi);
    let root = spec.h_far;
    let nx = ((hi[0] - lo[0]) / root).ceil() as usize;
    let ny = ((hi[1] - lo[1]) / root).ceil() as usize;
    let mut stack: Vec<([f64; 2], f64)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            stack.push(([lo[0] + i as f64 * root, lo[1] + j as f64 * root], root));
        }
    }
    while let Some((corner, s)) = stack.pop() {
        let c = [corner[0] + s / 2.0, corner[1] + s / 2.0];
        // size at the closest point of the square to the outlines
        let h = (spec.size_at(c) - spec.growth * s * 0.71).max(spec.h_near);
        if s > 1.5 * h && s > spec.h_near {
            let hs = s / 2.0;
            for (dx, dy) in [(0.0, 0.0), (hs, 0.0), (0.0, hs), (hs, hs)] {
                stack.push(([corner[0] + dx, corner[1] + dy], hs));
            }
            continue;
        }
        let p = [
            c[0] + 0.15 * s * rng.gen_range(-1.0..1.0),
            c[1] + 0.15 * s * rng.gen_range(-1.0..1.0),
        ];
        let hp = spec.size_at(p);
        let inside_box = p[0] > lo[0] + 0.5 * hp
            && p[0] < hi[0] - 0.5 * hp
            && p[1] > lo[1] + 0.5 * hp
            && p[1] < hi[1] - 0.5 * hp;
        if inside_box && !near_outline(p, 0.6 * hp) {
            points.push(p);
        }
    }
    // deterministic order regardless of the quadtree traversal
    points[n_fixed..].sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));

    let mut tris = triangulate(&points, &constraints)?;
    for _ in 0..spec.smoothing {
        let mut sum = vec![[0.0f64; 2]; points.len()];
        let mut cnt = vec![0usize; points.len()];
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                for (u, v) in [(a, b), (b, a)] {
                    sum[u][0] += points[v][0];
                    sum[u][1] += points[v][1];
                    cnt[u] += 1;
                }
            }
        }
        for i in n_fixed..points.len() {
            if cnt[i] > 0 {
                points[i] = [sum[i][0] / cnt[i] as f64, sum[i][1] / cnt[i] as f64];
            }
        }
        tris = triangulate(&points, &constraints)?;
    }

    let names = region_names(&spec.background, &spec.shapes);
    let cell_region: Vec<usize> = tris
        .iter()
        .map(|t| {
            let c = [
                (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) / 3.0,
                (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) / 3.0,
            ];
            classify_polygon(spec, &names, c)
        })
        .collect();
    let mut edge_tags = HashMap::new();
    for c in &constraints[..n_outer] {
        edge_tags.insert(edge_key(c[0], c[1]), OUTER_PATCH.to_string());
    }
    Ok(PlanarMesh {
        points,
        cells: tris.into_iter().map(|t| t.to_vec()).collect(),
        cell_region,
        region_names: names,
        edge_tags,
        default_patch: None,
    })
}

/// Region of a triangle centroid; discs are tested against their polygonal
/// outline so cells just inside a flat chord are not misassigned.
fn classify_polygon(spec: &CdtSpec, names: &[String], c: [f64; 2]) -> usize {
    for s in spec.shapes.iter().rev() {
        let inside = match s {
            Shape::Disc { center, radius, .. } => {
                let n = ((2.0 * std::f64::consts::PI * radius / spec.h_near).round() as usize).max(8);
                let th = 2.0 * std::f64::consts::PI / n as f64;
                let r = radius * (th / th.sin()).sqrt();
                let (dx, dy) = (c[0] - center[0], c[1] - center[1]);
                let ang = dy.atan2(dx).rem_euclid(th);
                // distance to the chord of the containing sector
                let rho = dx.hypot(dy);
                rho * (ang - th / 2.0).cos() < r * (th / 2.0).cos()
            }
            _ => s.contains(c),
        };
        if inside {
            return names.iter().position(|n| n == s.region()).unwrap_or(0);
        }
    }
    0
}
