//! Rectilinear block meshes, optionally split into triangles or perturbed.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec3;
use crate::mesh::planar::{edge_key, extrude, PlanarMesh};
use crate::mesh::{MeshError, MultiRegionMesh};

/// Boundary patch name of generated meshes.
pub const OUTER_PATCH: &str = "outer";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Each quad split along its (i, j)–(i+1, j+1) diagonal.
    Triangles,
}

/// Quads (or triangles) on the tensor grid `xs × ys`; each cell goes to
/// `region_of(centroid)`.
pub fn rectilinear_planar(
    xs: &[f64],
    ys: &[f64],
    region_of: impl Fn(Vec3) -> usize,
    names: &[&str],
    split: Option<Split>,
) -> PlanarMesh {
    let nx = xs.len();
    let id = |i: usize, j: usize| j * nx + i;
    let mut points = Vec::with_capacity(nx * ys.len());
    for &y in ys {
        for &x in xs {
            points.push([x, y]);
        }
    }
    let mut cells = Vec::new();
    let mut cell_region = Vec::new();
    for j in 0..ys.len() - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let polys = match split {
                None => vec![vec![a, b, c, d]],
                Some(Split::Triangles) => vec![vec![a, b, c], vec![a, c, d]],
            };
            for poly in polys {
                let n = poly.len() as f64;
                let cx = poly.iter().map(|&v| points[v][0]).sum::<f64>() / n;
                let cy = poly.iter().map(|&v| points[v][1]).sum::<f64>() / n;
                cell_region.push(region_of(Vec3::new(cx, cy, 0.0)));
                cells.push(poly);
            }
        }
    }
    let mut edge_tags = HashMap::new();
    let ny = ys.len();
    for i in 0..nx - 1 {
        edge_tags.insert(edge_key(id(i, 0), id(i + 1, 0)), OUTER_PATCH.to_string());
        edge_tags.insert(edge_key(id(i, ny - 1), id(i + 1, ny - 1)), OUTER_PATCH.to_string());
    }
    for j in 0..ny - 1 {
        edge_tags.insert(edge_key(id(0, j), id(0, j + 1)), OUTER_PATCH.to_string());
        edge_tags.insert(edge_key(id(nx - 1, j), id(nx - 1, j + 1)), OUTER_PATCH.to_string());
    }
    // drop regions that received no cells so every region is non-empty
    let mut used = vec![false; names.len()];
    for &r in &cell_region {
        used[r] = true;
    }
    let mut remap = vec![usize::MAX; names.len()];
    let mut region_names = Vec::new();
    for (i, n) in names.iter().enumerate() {
        if used[i] {
            remap[i] = region_names.len();
            region_names.push(n.to_string());
        }
    }
    for r in cell_region.iter_mut() {
        *r = remap[*r];
    }
    PlanarMesh {
        points,
        cells,
        cell_region,
        region_names,
        edge_tags,
        default_patch: None,
    }
}

pub fn rectilinear(
    xs: &[f64],
    ys: &[f64],
    region_of: impl Fn(Vec3) -> usize,
    names: &[&str],
    split: Option<Split>,
) -> Result<MultiRegionMesh, MeshError> {
    extrude(&rectilinear_planar(xs, ys, region_of, names, split), 1.0)
}

/// `n + 1` equally spaced coordinates on `[lo, hi]`.
pub fn uniform_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn grown_steps(len: f64, h0: f64, growth: f64, h_max: f64) -> Vec<f64> {
    let mut steps = Vec::new();
    let mut total = 0.0;
    let mut h = h0;
    while total < len {
        h = (h * growth).min(h_max);
        steps.push(h);
        total += h;
    }
    // drop a tiny last step, then stretch everything to fit exactly
    if steps.len() > 1 && total - len > 0.5 * steps[steps.len() - 1] {
        total -= steps.pop().unwrap();
    }
    steps.iter().map(|s| s * len / total).collect()
}

/// Coordinates on `[lo, hi]` that hit every breakpoint, with spacing at most
/// `h_core` between the outermost breakpoints and geometric growth (capped
/// at `h_max`) towards the ends.
pub fn graded_axis(lo: f64, hi: f64, breaks: &[f64], h_core: f64, growth: f64, h_max: f64) -> Vec<f64> {
    let mut b: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-12 * (hi - lo));
    if b.is_empty() {
        return uniform_axis(lo, hi, ((hi - lo) / h_max).ceil().max(1.0) as usize);
    }
    let mut core = vec![b[0]];
    for w in b.windows(2) {
        let n = ((w[1] - w[0]) / h_core).ceil().max(1.0) as usize;
        core.extend(uniform_axis(w[0], w[1], n).into_iter().skip(1));
    }
    let mut out = Vec::new();
    let left = grown_steps(b[0] - lo, h_core, growth, h_max);
    let mut x = b[0];
    let mut rev = vec![];
    for s in &left {
        x -= s;
        rev.push(x);
    }
    rev.pop();
    out.push(lo);
    out.extend(rev.into_iter().rev());
    out.extend(core);
    let last = *b.last().unwrap();
    let right = grown_steps(hi - last, h_core, growth, h_max);
    let mut x = last;
    for s in &right[..right.len() - 1] {
        x += s;
        out.push(x);
    }
    out.push(hi);
    out
}

/// Moves every node that is neither on the outer boundary nor on a region
/// boundary by up to `fraction` of its shortest incident edge.
pub fn perturb(pm: &mut PlanarMesh, fraction: f64, seed: u64) {
    let n = pm.points.len();
    let mut fixed = vec![false; n];
    let mut shortest = vec![f64::INFINITY; n];
    let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (ci, c) in pm.cells.iter().enumerate() {
        for i in 0..c.len() {
            let (a, b) = (c[i], c[(i + 1) % c.len()]);
            edge_cells.entry(edge_key(a, b)).or_default().push(ci);
            let l = (pm.points[a][0] - pm.points[b][0]).hypot(pm.points[a][1] - pm.points[b][1]);
            shortest[a] = shortest[a].min(l);
            shortest[b] = shortest[b].min(l);
        }
    }
    for (&(a, b), cells) in &edge_cells {
        let boundary = cells.len() == 1
            || cells.iter().any(|&c| pm.cell_region[c] != pm.cell_region[cells[0]]);
        if boundary {
            fixed[a] = true;
            fixed[b] = true;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let dx: f64 = rng.gen_range(-1.0..1.0);
        let dy: f64 = rng.gen_range(-1.0..1.0);
        if !fixed[i] {
            pm.points[i][0] += fraction * shortest[i] * dx;
            pm.points[i][1] += fraction * shortest[i] * dy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_axis_hits_breakpoints_and_ends() {
        let xs = graded_axis(-0.5, 0.5, &[-0.05, 0.05, 0.0], 0.01, 1.2, 0.05);
        assert_eq!(xs[0], -0.5);
        assert_eq!(*xs.last().unwrap(), 0.5);
        for b in [-0.05, 0.0, 0.05] {
            assert!(xs.iter().any(|&x| (x - b).abs() < 1e-15));
        }
        for w in xs.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] <= 0.05 * 1.3);
        }
        let core = xs.iter().filter(|&&x| (-0.05..=0.05).contains(&x)).count();
        assert_eq!(core, 11);
    }

    #[test]
    fn regions_follow_centroids() {
        let xs = uniform_axis(0.0, 1.0, 4);
        let m = rectilinear(&xs, &xs, |c| usize::from(c.x > 0.5), &["a", "b"], None).unwrap();
        assert_eq!(m.regions.len(), 2);
        assert_eq!(m.regions[0].n_cells, 8);
        assert_eq!(m.interfaces[0].pairs.len(), 4);
        let total: f64 = m.regions.iter().map(|r| r.total_volume()).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn perturbation_keeps_boundaries() {
        let xs = uniform_axis(0.0, 1.0, 6);
        let mut pm =
            rectilinear_planar(&xs, &xs, |c| usize::from(c.x > 0.5), &["a", "b"], Some(Split::Triangles));
        let before = pm.points.clone();
        perturb(&mut pm, 0.2, 7);
        for (p, q) in before.iter().zip(&pm.points) {
            let on_edge = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0 || p[0] == 0.5;
            if on_edge {
                assert_eq!(p, q);
            }
        }
        assert!(before.iter().zip(&pm.points).any(|(p, q)| p != q));
        let m = extrude(&pm, 1.0).unwrap();
        let a: f64 = m.regions[0].total_volume();
        assert!((a - 0.5).abs() < 1e-12);
    }
}
