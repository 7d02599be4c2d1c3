//! Case pipeline shared by the command-line driver and the tests: mesh
//! construction, solving, sampling, solved-state files and the built-in
//! analytic verification cases.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{BoundaryConfig, CaseConfig, CdtConfig, Generator, MaterialConfig, MeshFormat, SampleField, SampleSpec, StructuredConfig};
use crate::field::{map_config_to_fields, FieldError, RegionFields};
use crate::geom::Vec3;
use crate::magnetostatics::{Magnetostatics, Outcome, SolveError, SolveSummary};
use crate::mesh::generate::{cdt, classify, region_names, structured, Shape};
use crate::mesh::planar::extrude;
use crate::mesh::{self, MeshError, MultiRegionMesh, Side};
use crate::oracles::{analytic_b, AnalyticCase};
use crate::postproc::{self, interface_jump_report, sample_line, JumpReport, PostError, SampleTable};

pub const STATE_FILE: &str = "state.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_FILE: &str = "iterations.csv";

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("fields: {0}")]
    Field(#[from] FieldError),
    #[error("solver: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Post(#[from] PostError),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("state file does not match the mesh: {0}")]
    State(String),
}

impl CaseError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CaseError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Input/output failures, as opposed to invalid input.
    pub fn is_io(&self) -> bool {
        matches!(self, CaseError::Io { .. } | CaseError::Post(PostError::Io { .. }))
            || matches!(self, CaseError::Config(crate::config::ConfigError::Io { .. }))
            || matches!(self, CaseError::Mesh(MeshError::Io { .. }))
    }
}

/// Breakpoints of a structured grid: every shape's extent along one axis.
fn shape_breaks(shapes: &[Shape], axis: usize) -> Vec<f64> {
    shapes
        .iter()
        .flat_map(|s| match s {
            Shape::Rect { center, size, .. } => [center[axis] - 0.5 * size[axis], center[axis] + 0.5 * size[axis]],
            Shape::Disc { center, radius, .. } => [center[axis] - radius, center[axis] + radius],
        })
        .collect()
}

pub fn generate_mesh(g: &Generator) -> Result<MultiRegionMesh, MeshError> {
    match g {
        Generator::Cdt(c) => {
            let spec = cdt::CdtSpec {
                box_lo: c.box_lo,
                box_hi: c.box_hi,
                background: c.background.clone(),
                shapes: c.shapes.clone(),
                h_near: c.h_near,
                h_far: c.h_far,
                growth: c.growth,
                seed: c.seed,
                smoothing: c.smoothing,
            };
            extrude(&cdt::generate(&spec)?, c.thickness)
        }
        Generator::Structured(c) => {
            let axis = |k: usize| structured::graded_axis(c.box_lo[k], c.box_hi[k], &shape_breaks(&c.shapes, k), c.h, c.stretch, c.h_max);
            let names = region_names(&c.background, &c.shapes);
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let split = c.triangles.then_some(structured::Split::Triangles);
            let mut pm = structured::rectilinear_planar(&axis(0), &axis(1), |p| classify(&c.shapes, &names, [p.x, p.y]), &refs, split);
            if c.perturb > 0.0 {
                structured::perturb(&mut pm, c.perturb, c.seed);
            }
            extrude(&pm, c.thickness)
        }
    }
}

/// The mesh of a case: read from file (relative to `dir`) or generated.
pub fn build_mesh(config: &CaseConfig, dir: &Path) -> Result<MultiRegionMesh, CaseError> {
    if let Some(g) = &config.mesh.generator {
        return Ok(generate_mesh(g)?);
    }
    let file = config.mesh.file.as_ref().expect("validated config has a mesh source");
    let path = dir.join(file);
    if !path.is_file() {
        return Err(CaseError::io(&path, "mesh file not found"));
    }
    Ok(match config.mesh.format {
        MeshFormat::Auto => mesh::load(&path)?,
        MeshFormat::Gmsh => mesh::gmsh::load_gmsh(&path)?,
        MeshFormat::Text => mesh::text::load_text(&path)?,
    })
}

pub fn build_fields(config: &CaseConfig, mesh: &MultiRegionMesh) -> Result<Vec<RegionFields>, CaseError> {
    let set = map_config_to_fields(mesh, &config.materials(), &config.walls())?;
    Ok(set.regions)
}

pub struct Solved {
    pub summary: SolveSummary,
    pub log: String,
    pub fields: Vec<RegionFields>,
    pub k: Vec<Vec<Vec3>>,
}

impl Solved {
    pub fn jump_report(&self, mesh: &MultiRegionMesh) -> JumpReport {
        interface_jump_report(mesh, &self.fields, &self.k)
    }
}

pub fn solve(config: &CaseConfig, mesh: &MultiRegionMesh) -> Result<Solved, CaseError> {
    let fields = build_fields(config, mesh)?;
    let mut s = Magnetostatics::new(mesh, fields, config.solver.clone(), None)?;
    let summary = s.run()?;
    Ok(Solved {
        log: s.log_text(),
        summary,
        fields: std::mem::take(&mut s.fields),
        k: std::mem::take(&mut s.k),
    })
}

pub fn field_values(fields: &[RegionFields], which: SampleField) -> Vec<&[Vec3]> {
    fields
        .iter()
        .map(|f| match which {
            SampleField::A => f.a.cells.as_slice(),
            SampleField::B => f.b.cells.as_slice(),
            SampleField::M => f.m.cells.as_slice(),
            SampleField::J => f.j.cells.as_slice(),
        })
        .collect()
}

pub fn run_sample(mesh: &MultiRegionMesh, fields: &[RegionFields], spec: &SampleSpec) -> Result<SampleTable, CaseError> {
    let mut t = sample_line(mesh, &field_values(fields, spec.field), Vec3::from(spec.start), Vec3::from(spec.end), spec.points)?;
    t.name = spec.name.clone();
    Ok(t)
}

/// Writes every configured sample as `<dir>/<name>.csv`.
pub fn write_samples(config: &CaseConfig, mesh: &MultiRegionMesh, fields: &[RegionFields], dir: &Path) -> Result<Vec<PathBuf>, CaseError> {
    std::fs::create_dir_all(dir).map_err(|e| CaseError::io(dir, e))?;
    let mut out = Vec::new();
    for spec in &config.samples {
        let t = run_sample(mesh, fields, spec)?;
        let path = dir.join(format!("{}.csv", spec.name));
        postproc::write_csv_samples(&t, spec.field.label(), &path)?;
        out.push(path);
    }
    Ok(out)
}

/// Solved cell values, enough to sample or export without solving again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedState {
    pub regions: Vec<RegionState>,
    pub k: Vec<Vec<Vec3>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionState {
    pub name: String,
    pub a: Vec<Vec3>,
    pub b: Vec<Vec3>,
    pub a_boundary: Vec<Vec3>,
    pub b_boundary: Vec<Vec3>,
}

impl SolvedState {
    pub fn capture(mesh: &MultiRegionMesh, fields: &[RegionFields], k: &[Vec<Vec3>]) -> Self {
        SolvedState {
            regions: mesh
                .regions
                .iter()
                .zip(fields)
                .map(|(r, f)| RegionState {
                    name: r.name.clone(),
                    a: f.a.cells.clone(),
                    b: f.b.cells.clone(),
                    a_boundary: f.a.boundary.clone(),
                    b_boundary: f.b.boundary.clone(),
                })
                .collect(),
            k: k.to_vec(),
        }
    }

    /// Copies the solved values into freshly built fields.
    pub fn restore(&self, mesh: &MultiRegionMesh, fields: &mut [RegionFields]) -> Result<(), CaseError> {
        if self.regions.len() != mesh.regions.len() || self.k.len() != mesh.interfaces.len() {
            return Err(CaseError::State("region or interface count differs".into()));
        }
        for ((s, r), f) in self.regions.iter().zip(&mesh.regions).zip(fields.iter_mut()) {
            let sizes_ok = s.name == r.name
                && s.a.len() == r.n_cells
                && s.b.len() == r.n_cells
                && s.a_boundary.len() == r.n_boundary()
                && s.b_boundary.len() == r.n_boundary();
            if !sizes_ok {
                return Err(CaseError::State(format!("region `{}`", r.name)));
            }
            f.a.cells.clone_from(&s.a);
            f.b.cells.clone_from(&s.b);
            f.a.boundary.clone_from(&s.a_boundary);
            f.b.boundary.clone_from(&s.b_boundary);
        }
        for (k, itf) in self.k.iter().zip(&mesh.interfaces) {
            if k.len() != itf.pairs.len() {
                return Err(CaseError::State("interface size differs".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CaseError> {
        let text = serde_json::to_string(self).map_err(|e| CaseError::io(path, e))?;
        std::fs::write(path, text).map_err(|e| CaseError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CaseError> {
        let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CaseError::io(path, e))
    }
}

/// Mesh family of a built-in verification case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeshVariant {
    /// Graded constrained-Delaunay triangles.
    #[default]
    Triangles,
    /// Tensor-product quads; curved outlines become staircases.
    Orthogonal,
    /// Tensor-product grid split into triangles with randomly shifted nodes.
    Perturbed,
}

impl MeshVariant {
    pub const NAMES: [&'static str; 3] = ["triangles", "orthogonal", "perturbed"];

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "triangles" => Some(MeshVariant::Triangles),
            "orthogonal" => Some(MeshVariant::Orthogonal),
            "perturbed" => Some(MeshVariant::Perturbed),
            _ => None,
        }
    }
}

/// Configuration of an analytic case: a cylinder of the case's radius at
/// the origin inside a 1 m air box, edge length `h` on and inside it.
pub fn oracle_config(case: &AnalyticCase, variant: MeshVariant, h: f64) -> CaseConfig {
    let a = case.radius();
    let inner = match case {
        AnalyticCase::MagnetizedCylinder { .. } => "magnet",
        AnalyticCase::CurrentWire { .. } => "wire",
        AnalyticCase::PermeableCylinderUniformField { .. } => "ferro",
    };
    let shapes = vec![Shape::Disc {
        region: inner.into(),
        center: [0.0, 0.0],
        radius: a,
    }];
    // the wire is compared out to 5a, so its mesh grades slowly
    let growth = match case {
        AnalyticCase::CurrentWire { .. } => 0.05,
        _ => CdtConfig::default().growth,
    };
    let generator = match variant {
        MeshVariant::Triangles => Generator::Cdt(CdtConfig {
            shapes,
            h_near: h,
            growth,
            ..Default::default()
        }),
        MeshVariant::Orthogonal | MeshVariant::Perturbed => Generator::Structured(StructuredConfig {
            shapes,
            h,
            triangles: variant == MeshVariant::Perturbed,
            perturb: if variant == MeshVariant::Perturbed { 0.2 } else { 0.0 },
            ..Default::default()
        }),
    };
    let material = match *case {
        AnalyticCase::MagnetizedCylinder { magnetization, .. } => MaterialConfig {
            magnetization: [magnetization[0], magnetization[1], 0.0],
            ..Default::default()
        },
        AnalyticCase::CurrentWire { current_density, .. } => MaterialConfig {
            current_density: [0.0, 0.0, current_density],
            ..Default::default()
        },
        AnalyticCase::PermeableCylinderUniformField { mu_r, .. } => MaterialConfig {
            mu_r,
            ..Default::default()
        },
    };
    // A_z = b0_x y − b0_y x gives a uniform (b0_x, b0_y) far away
    let mut gradient = [[0.0; 3]; 3];
    if let AnalyticCase::PermeableCylinderUniformField { b0, .. } = *case {
        gradient[0][2] = -b0[1];
        gradient[1][2] = b0[0];
    }
    let mut config = CaseConfig {
        title: format!("{case:?}"),
        mesh: crate::config::MeshConfig {
            generator: Some(generator),
            ..Default::default()
        },
        regions: [("air".to_string(), MaterialConfig::default()), (inner.to_string(), material)].into(),
        boundaries: [(structured::OUTER_PATCH.to_string(), BoundaryConfig::FixedValue { value: [0.0; 3], gradient })].into(),
        solver: Default::default(),
        samples: Vec::new(),
        outputs: Default::default(),
    };
    // a single convex inclusion converges unrelaxed
    config.solver.lambda_div = 1.0;
    config
}

/// Default edge length of each verification case.
pub fn default_h(case: &AnalyticCase) -> f64 {
    match case {
        AnalyticCase::CurrentWire { .. } => 0.0035,
        _ => 0.005,
    }
}

/// Tolerances of the verification cases.
pub const MAGNET_TOL: f64 = 0.05;
pub const WIRE_TOL: f64 = 0.02;
pub const WIRE_A_JUMP_TOL: f64 = 1e-3;
pub const PERMEABLE_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Metric {
    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub case: AnalyticCase,
    pub variant: MeshVariant,
    pub cells: usize,
    pub outcome: Outcome,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Values checked against their limits.
    pub metrics: Vec<Metric>,
    /// Other error measures, for information.
    pub info: Vec<(String, f64)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Converged && self.metrics.iter().all(Metric::passed)
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = match &self.outcome {
            Outcome::Converged => "converged",
            Outcome::MaxIterations => "max iterations",
            Outcome::Diverged(_) => "diverged",
        };
        writeln!(
            f,
            "{:?} on {:?} mesh: {} cells, {status} after {} iterations ({:.1} s)",
            self.case, self.variant, self.cells, self.iterations, self.wall_time_s
        )?;
        writeln!(f, "{:<28} {:>12} {:>12}  result", "metric", "value", "limit")?;
        for m in &self.metrics {
            let r = if m.passed() { "pass" } else { "FAIL" };
            writeln!(f, "{:<28} {:>12.4e} {:>12.4e}  {r}", m.name, m.value, m.limit)?;
        }
        for (n, v) in &self.info {
            writeln!(f, "{n:<28} {v:>12.4e}")?;
        }
        Ok(())
    }
}

/// Cells of `region` whose centroids lie more than `margin` inside radius `a`.
fn interior_cells<'a>(mesh: &'a MultiRegionMesh, region: usize, a: f64, margin: f64) -> impl Iterator<Item = (Vec3, usize)> + 'a {
    let g = &mesh.regions[region].geometry;
    (0..mesh.regions[region].n_cells)
        .map(move |c| (g.cell_centroid[c], c))
        .filter(move |(p, _)| p.x.hypot(p.y) < a - margin)
}

/// Solves an analytic case and compares against the closed form.
pub fn verify(case: &AnalyticCase, variant: MeshVariant, h: f64) -> Result<VerifyReport, CaseError> {
    verify_with(case, variant, h, &oracle_config(case, variant, h))
}

/// [`verify`] with a modified configuration; `h` sets the interior margin.
pub fn verify_with(case: &AnalyticCase, variant: MeshVariant, h: f64, config: &CaseConfig) -> Result<VerifyReport, CaseError> {
    case.validate().map_err(|e| crate::config::ConfigError::Invalid(e.to_string()))?;
    let config = config.clone();
    let mesh = generate_mesh(config.mesh.generator.as_ref().unwrap())?;
    let solved = solve(&config, &mesh)?;
    let a = case.radius();
    let inner = 1;
    let fields = &solved.fields;
    let mut metrics = Vec::new();
    let mut info = Vec::new();
    let rel_errors = |scale: f64, exact: &dyn Fn(&Vec3) -> Vec3| -> (f64, f64) {
        let mut max: f64 = 0.0;
        let (mut num, mut den) = (0.0, 0.0);
        for (p, c) in interior_cells(&mesh, inner, a, 2.0 * h) {
            let e = (fields[inner].b.cells[c] - exact(&p)).norm();
            max = max.max(e / scale);
            num += e * e;
            den += scale * scale;
        }
        (max, if den > 0.0 { (num / den).sqrt() } else { f64::NAN })
    };
    match *case {
        AnalyticCase::MagnetizedCylinder { .. } => {
            let exact = |p: &Vec3| analytic_b(case, p);
            let scale = exact(&Vec3::zeros()).norm();
            let (max, l2) = rel_errors(scale, &exact);
            metrics.push(Metric { name: "interior max rel error".into(), value: max, limit: MAGNET_TOL });
            info.push(("interior rel L2 error".into(), l2));
        }
        AnalyticCase::PermeableCylinderUniformField { .. } => {
            let exact = |p: &Vec3| analytic_b(case, p);
            let scale = exact(&Vec3::zeros()).norm();
            let mut max: f64 = 0.0;
            for (_, c) in interior_cells(&mesh, inner, a, 2.0 * h) {
                max = max.max((fields[inner].b.cells[c].norm() - scale).abs() / scale);
            }
            metrics.push(Metric { name: "interior max rel |B| error".into(), value: max, limit: PERMEABLE_TOL });
            let (vmax, l2) = rel_errors(scale, &exact);
            info.push(("interior max rel B error".into(), vmax));
            info.push(("interior rel L2 error".into(), l2));
        }
        AnalyticCase::CurrentWire { .. } => {
            let z = 0.5 * mesh.thickness.unwrap_or(0.0);
            let b = field_values(fields, SampleField::B);
            // the reference is taken at the centroid of the sampled cell,
            // like the cell-value comparison it is meant to assess
            let centroids: Vec<&[Vec3]> = mesh.regions.iter().map(|r| r.geometry.cell_centroid.as_slice()).collect();
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..8 {
                let t = (k as f64 + 0.5) * std::f64::consts::TAU / 8.0;
                let dir = Vec3::new(t.cos(), t.sin(), 0.0);
                let p0 = 0.2 * a * dir + Vec3::new(0.0, 0.0, z);
                let p1 = 5.0 * a * dir + Vec3::new(0.0, 0.0, z);
                let at = sample_line(&mesh, &centroids, p0, p1, 97)?;
                for (row, c) in sample_line(&mesh, &b, p0, p1, 97)?.rows.iter().zip(&at.rows) {
                    let (Some(v), Some(c)) = (row.value, c.value) else { continue };
                    let theta = Vec3::new(-c.y, c.x, 0.0) / c.x.hypot(c.y);
                    let exact = analytic_b(case, &c).dot(&theta);
                    num += (v.dot(&theta) - exact).powi(2);
                    den += exact * exact;
                }
            }
            metrics.push(Metric { name: "B_theta rel L2 (0.2a..5a)".into(), value: (num / den).sqrt(), limit: WIRE_TOL });
            let a_max = fields.iter().flat_map(|f| &f.a.cells).fold(0.0_f64, |m, v| m.max(v.z.abs()));
            let mut jump: f64 = 0.0;
            for itf in &mesh.interfaces {
                let (ra, rb) = (itf.region(Side::A), itf.region(Side::B));
                for p in 0..itf.pairs.len() {
                    let fa = itf.face(p, Side::A) - mesh.regions[ra].n_internal;
                    let fb = itf.face(p, Side::B) - mesh.regions[rb].n_internal;
                    jump = jump.max((fields[ra].a.boundary[fa].z - fields[rb].a.boundary[fb].z).abs());
                }
            }
            metrics.push(Metric { name: "A_z interface jump / max".into(), value: jump / a_max, limit: WIRE_A_JUMP_TOL });
            let exact = |p: &Vec3| analytic_b(case, p);
            let scale = exact(&Vec3::new(a, 0.0, 0.0)).norm();
            let (max, l2) = rel_errors(scale, &exact);
            info.push(("interior max rel error".into(), max));
            info.push(("interior rel L2 error".into(), l2));
        }
    }
    Ok(VerifyReport {
        case: *case,
        variant,
        cells: mesh.n_cells(),
        outcome: solved.summary.outcome,
        iterations: solved.summary.iterations,
        wall_time_s: solved.summary.wall_time_s,
        metrics,
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CaseConfig;

    fn small_case() -> CaseConfig {
        let text = r#"
            [mesh.generator]
            kind = "structured"
            h = 0.05
            h_max = 0.2
            [[mesh.generator.shapes]]
            kind = "rect"
            region = "magnet"
            center = [0.0, 0.0]
            size = [0.2, 0.2]
            [regions.air]
            [regions.magnet]
            magnetization = [0.0, 1e5, 0.0]
            [boundaries.outer]
            type = "fixed_value"
            [solver]
            lambda_div = 1.0
            [[samples]]
            name = "mid"
            start = [0.0, -0.4, 0.005]
            end = [0.0, 0.4, 0.005]
            points = 9
        "#;
        CaseConfig::from_str_with(text, &[], "test").unwrap()
    }

    #[test]
    fn structured_generator_hits_shape_edges() {
        let c = small_case();
        let mesh = build_mesh(&c, Path::new(".")).unwrap();
        assert_eq!(mesh.regions.len(), 2);
        let magnet = &mesh.regions[mesh.region_index("magnet").unwrap()];
        assert!((magnet.total_volume() - 0.2 * 0.2 * 0.01).abs() < 1e-12);
        assert!(mesh.max_non_orthogonality() < 1e-6);
    }

    #[test]
    fn solve_sample_and_state_round_trip() {
        let c = small_case();
        let mesh = build_mesh(&c, Path::new(".")).unwrap();
        let solved = solve(&c, &mesh).unwrap();
        assert_eq!(solved.summary.outcome, Outcome::Converged);
        let t = run_sample(&mesh, &solved.fields, &c.samples[0]).unwrap();
        assert_eq!(t.rows.len(), 9);
        // the field inside the magnet points along +y
        assert!(t.rows[4].value.unwrap().y > 0.0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(STATE_FILE);
        SolvedState::capture(&mesh, &solved.fields, &solved.k).save(&path).unwrap();
        let mut fresh = build_fields(&c, &mesh).unwrap();
        SolvedState::load(&path).unwrap().restore(&mesh, &mut fresh).unwrap();
        for (f, s) in fresh.iter().zip(&solved.fields) {
            assert_eq!(f.a, s.a);
            assert_eq!(f.b, s.b);
        }
        let again = run_sample(&mesh, &fresh, &c.samples[0]).unwrap();
        assert_eq!(again, t);
        let written = write_samples(&c, &mesh, &fresh, dir.path()).unwrap();
        assert_eq!(written.len(), 1);
        let text = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn state_for_another_mesh_is_rejected() {
        let c = small_case();
        let mesh = build_mesh(&c, Path::new(".")).unwrap();
        let fields = build_fields(&c, &mesh).unwrap();
        let k: Vec<Vec<Vec3>> = mesh.interfaces.iter().map(|i| vec![Vec3::zeros(); i.pairs.len()]).collect();
        let mut state = SolvedState::capture(&mesh, &fields, &k);
        state.regions[0].a.pop();
        let mut f = fields.clone();
        assert!(matches!(state.restore(&mesh, &mut f), Err(CaseError::State(_))));
    }

    #[test]
    fn missing_mesh_file_is_io() {
        let text = "[mesh]\nfile = \"nowhere.msh\"\n";
        let c = CaseConfig::from_str_with(text, &[], "t").unwrap();
        let err = build_mesh(&c, Path::new("/nonexistent")).unwrap_err();
        assert!(err.is_io(), "{err}");
    }

    #[test]
    fn oracle_configs_are_valid() {
        for name in AnalyticCase::KINDS {
            let case = AnalyticCase::by_name(name).unwrap();
            for v in MeshVariant::NAMES {
                let c = oracle_config(&case, MeshVariant::by_name(v).unwrap(), 0.01);
                c.validate().unwrap();
                let again = CaseConfig::from_str_with(&c.to_toml(), &[], "t").unwrap();
                assert_eq!(again, c);
            }
        }
    }

    #[test]
    fn coarse_wire_verification_runs() {
        let case = AnalyticCase::by_name("current_wire").unwrap();
        let r = verify(&case, MeshVariant::Triangles, 0.0125).unwrap();
        assert_eq!(r.outcome, Outcome::Converged);
        assert_eq!(r.metrics.len(), 2);
        assert!(r.metrics.iter().all(|m| m.value.is_finite()));
        assert!(r.to_string().contains("B_theta"));
    }
}
