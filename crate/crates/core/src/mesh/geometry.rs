use crate::geom::Vec3;

use super::Face;

/// Geometric quantities the discretisation needs, computed once per region.
///
/// Internal-face arrays are indexed by face id; boundary arrays by
/// `face − n_internal`.
#[derive(Debug, Clone, Default)]
pub struct GeometryCache {
    pub face_area: Vec<Vec3>,
    pub face_mag: Vec<f64>,
    pub face_normal: Vec<Vec3>,
    pub face_centroid: Vec<Vec3>,
    pub cell_centroid: Vec<Vec3>,
    pub cell_volume: Vec<f64>,

    /// Owner → neighbour centroid connector.
    pub delta: Vec<Vec3>,
    pub delta_mag: Vec<f64>,
    pub delta_unit: Vec<Vec3>,
    /// Owner weight: `φ_f = w φ_C + (1 − w) φ_E`.
    pub weight: Vec<f64>,
    pub non_orth_deg: Vec<f64>,
    /// Face centroid minus the point where the connector crosses the face plane.
    pub skew: Vec<Vec3>,

    /// Normal distance from the owner centroid to a boundary face.
    pub bnd_dist: Vec<f64>,
    /// Tangential offset `x_f − d n̂ − x_C` of a boundary face.
    pub bnd_offset: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum GeometryError {
    DegenerateFace { face: usize, area: f64 },
    InvertedCell { cell: usize, volume: f64 },
    Orientation { face: usize },
}

/// Area vector and centroid of a polygon, by fan triangulation about the
/// vertex average.
pub fn polygon_area_centroid(pts: &[Vec3]) -> (Vec3, Vec3) {
    let n = pts.len();
    let centre = pts.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n as f64;
    if n == 3 {
        let s = 0.5 * (pts[1] - pts[0]).cross(&(pts[2] - pts[0]));
        return (s, centre);
    }
    let mut area = Vec3::zeros();
    let mut tris = Vec::with_capacity(n);
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let s = 0.5 * (a - centre).cross(&(b - centre));
        area += s;
        tris.push((s, (centre + a + b) / 3.0));
    }
    let mag = area.norm();
    if mag == 0.0 {
        return (area, centre);
    }
    let unit = area / mag;
    let mut wsum = 0.0;
    let mut c = Vec3::zeros();
    for (s, tc) in tris {
        let w = s.dot(&unit);
        wsum += w;
        c += w * tc;
    }
    (area, if wsum.abs() > 0.0 { c / wsum } else { centre })
}

pub(crate) fn compute(
    points: &[Vec3],
    faces: &[Face],
    n_internal: usize,
    n_cells: usize,
    cell_faces: &[Vec<usize>],
) -> Result<GeometryCache, GeometryError> {
    let nf = faces.len();
    let mut g = GeometryCache {
        face_area: Vec::with_capacity(nf),
        face_mag: Vec::with_capacity(nf),
        face_normal: Vec::with_capacity(nf),
        face_centroid: Vec::with_capacity(nf),
        ..Default::default()
    };
    let mut scratch = Vec::new();
    for (fi, f) in faces.iter().enumerate() {
        scratch.clear();
        scratch.extend(f.vertices.iter().map(|&v| points[v]));
        let (s, c) = polygon_area_centroid(&scratch);
        let mag = s.norm();
        let extent = scratch
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0_f64, f64::max);
        if !(mag > 1e-14 * extent * extent) || !mag.is_finite() {
            return Err(GeometryError::DegenerateFace { face: fi, area: mag });
        }
        g.face_area.push(s);
        g.face_mag.push(mag);
        g.face_normal.push(s / mag);
        g.face_centroid.push(c);
    }

    g.cell_centroid = Vec::with_capacity(n_cells);
    g.cell_volume = Vec::with_capacity(n_cells);
    for (ci, cf) in cell_faces.iter().enumerate() {
        let approx =
            cf.iter().fold(Vec3::zeros(), |acc, &f| acc + g.face_centroid[f]) / cf.len() as f64;
        let mut vol = 0.0;
        let mut centroid = Vec3::zeros();
        for &f in cf {
            let sign = if faces[f].owner == ci { 1.0 } else { -1.0 };
            let pyr = sign * g.face_area[f].dot(&(g.face_centroid[f] - approx)) / 3.0;
            vol += pyr;
            centroid += pyr * (0.75 * g.face_centroid[f] + 0.25 * approx);
        }
        if !(vol > 0.0) || !vol.is_finite() {
            return Err(GeometryError::InvertedCell { cell: ci, volume: vol });
        }
        g.cell_volume.push(vol);
        g.cell_centroid.push(centroid / vol);
    }

    for (fi, f) in faces.iter().enumerate().take(n_internal) {
        let nb = f.neighbour.expect("internal face has a neighbour");
        let xc = g.cell_centroid[f.owner];
        let xe = g.cell_centroid[nb];
        let d = xe - xc;
        let n = g.face_normal[fi];
        let dn = n.dot(&d);
        if !(dn > 0.0) {
            return Err(GeometryError::Orientation { face: fi });
        }
        // connector / face-plane intersection
        let w = n.dot(&(xe - g.face_centroid[fi])) / dn;
        let ip = xe - w * d;
        let mag = d.norm();
        let unit = d / mag;
        g.delta.push(d);
        g.delta_mag.push(mag);
        g.delta_unit.push(unit);
        g.weight.push(w);
        g.non_orth_deg.push(n.cross(&unit).norm().atan2(n.dot(&unit)).to_degrees());
        g.skew.push(g.face_centroid[fi] - ip);
    }
    for (fi, f) in faces.iter().enumerate().skip(n_internal) {
        let xc = g.cell_centroid[f.owner];
        let n = g.face_normal[fi];
        let r = g.face_centroid[fi] - xc;
        let d = n.dot(&r);
        if !(d > 0.0) {
            return Err(GeometryError::Orientation { face: fi });
        }
        g.bnd_dist.push(d);
        g.bnd_offset.push(r - d * n);
    }
    Ok(g)
}
