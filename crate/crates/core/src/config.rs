//! Case configuration: a TOML file (`case.toml`) with dotted-key sections.
//!
//! Unknown keys anywhere are an error. Every key below shows its default;
//! keys without one are required.
//!
//! ```toml
//! title = ""
//!
//! [mesh]
//! file = "mesh.msh"          # relative to the case directory; or use [mesh.generator]
//! format = "auto"            # auto (by extension) | gmsh | text
//! quality_warn_deg = 70.0
//! quality_error_deg = 85.0
//!
//! [mesh.generator]           # planar mesh, extruded one cell thick
//! kind = "cdt"               # cdt (graded triangles) | structured (tensor grid)
//! box_lo = [-0.5, -0.5]
//! box_hi = [0.5, 0.5]
//! background = "air"
//! thickness = 0.01
//! seed = 1
//! # cdt only
//! h_near = 0.005             # edge length on and inside the shapes
//! h_far = 0.05
//! growth = 0.3               # edge length increase per metre from the shapes
//! smoothing = 3
//! # structured only
//! h = 0.005                  # spacing across the shapes' bounding extents
//! stretch = 1.1              # geometric growth towards the box
//! h_max = 0.05
//! triangles = false          # split each quad along its diagonal
//! perturb = 0.0              # random node shift, fraction of the shortest edge
//!
//! [[mesh.generator.shapes]]  # later shapes win where they overlap
//! kind = "disc"              # disc {center, radius} | rect {center, size}
//! region = "magnet"
//! center = [0.0, 0.0]
//! radius = 0.0375
//!
//! [regions.<name>]           # one table per mesh region
//! mu_r = 1.0
//! magnetization = [0.0, 0.0, 0.0]     # A/m
//! current_density = [0.0, 0.0, 0.0]   # A/m²
//!
//! [boundaries.<patch>]       # one table per outer wall patch
//! type = "fixed_value"       # fixed_value | zero_normal_gradient
//! value = [0.0, 0.0, 0.0]    # A = value + gradientᵀ x
//! gradient = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]  # rows ∂_i A
//!
//! [solver]
//! max_outer_iterations = 3000
//! tolerance = 1e-6
//! non_orth_correctors = 2    # default: 2 above 5° non-orthogonality, else 0
//! lambda_div = 0.8
//! lambda_k = 1.0
//! relaxation_mode = "implicit"               # implicit | explicit
//! relaxation_application = "simultaneous"    # simultaneous | region_wise
//! divergence_guard = 10.0
//! gradient = "gauss_linear"                  # gauss_linear | least_squares
//! face_gradient = "consistent"               # consistent | interpolated
//! skew_corrections = 5
//! non_orth_limiter = 1.0
//!
//! [solver.linear]
//! method = "conjugate_gradient"   # conjugate_gradient | bicgstab | gauss_seidel
//! tolerance = 1e-3                # relative, per outer iteration
//! max_iterations = 5000
//! preconditioner = "diagonal"     # diagonal | none
//!
//! [[samples]]
//! name = "centerline"        # CSV file stem
//! field = "b"                # a | b | m | j
//! start = [0.0, -0.5, 0.005]
//! end = [0.0, 0.5, 0.005]
//! points = 201
//!
//! [outputs]
//! dir = "output"             # relative to the case directory
//! vtk = true
//! csv = true                 # write the samples after solving
//! ```
//!
//! Overrides (`--set key=value`) use the same dotted paths, e.g.
//! `solver.lambda_div=1.0` or `samples.0.points=51`; the value is parsed as
//! a TOML value, falling back to a bare string.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::field::{BoundaryCondition, LinearValue, MaterialSpec};
use crate::geom::{Tensor, Vec3};
use crate::magnetostatics::OuterControl;
use crate::mesh::generate::Shape;
use crate::mesh::quality::QualityThresholds;

pub const CONFIG_FILE: &str = "case.toml";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default)]
    pub title: String,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub regions: BTreeMap<String, MaterialConfig>,
    #[serde(default)]
    pub boundaries: BTreeMap<String, BoundaryConfig>,
    #[serde(default)]
    pub solver: OuterControl,
    #[serde(default)]
    pub samples: Vec<SampleSpec>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    #[default]
    Auto,
    Gmsh,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub file: Option<PathBuf>,
    pub format: MeshFormat,
    pub generator: Option<Generator>,
    pub quality_warn_deg: f64,
    pub quality_error_deg: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        let q = QualityThresholds::default();
        MeshConfig {
            file: None,
            format: MeshFormat::Auto,
            generator: None,
            quality_warn_deg: q.warn_deg,
            quality_error_deg: q.error_deg,
        }
    }
}

impl MeshConfig {
    pub fn thresholds(&self) -> QualityThresholds {
        QualityThresholds {
            warn_deg: self.quality_warn_deg,
            error_deg: self.quality_error_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Cdt(CdtConfig),
    Structured(StructuredConfig),
}

impl Generator {
    pub fn shapes(&self) -> &[Shape] {
        match self {
            Generator::Cdt(c) => &c.shapes,
            Generator::Structured(c) => &c.shapes,
        }
    }

    pub fn background(&self) -> &str {
        match self {
            Generator::Cdt(c) => &c.background,
            Generator::Structured(c) => &c.background,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdtConfig {
    pub box_lo: [f64; 2],
    pub box_hi: [f64; 2],
    pub background: String,
    pub thickness: f64,
    pub seed: u64,
    pub shapes: Vec<Shape>,
    pub h_near: f64,
    pub h_far: f64,
    pub growth: f64,
    pub smoothing: usize,
}

impl Default for CdtConfig {
    fn default() -> Self {
        CdtConfig {
            box_lo: [-0.5, -0.5],
            box_hi: [0.5, 0.5],
            background: "air".into(),
            thickness: 0.01,
            seed: 1,
            shapes: Vec::new(),
            h_near: 0.005,
            h_far: 0.05,
            growth: 0.3,
            smoothing: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructuredConfig {
    pub box_lo: [f64; 2],
    pub box_hi: [f64; 2],
    pub background: String,
    pub thickness: f64,
    pub seed: u64,
    pub shapes: Vec<Shape>,
    pub h: f64,
    pub stretch: f64,
    pub h_max: f64,
    pub triangles: bool,
    pub perturb: f64,
}

impl Default for StructuredConfig {
    fn default() -> Self {
        StructuredConfig {
            box_lo: [-0.5, -0.5],
            box_hi: [0.5, 0.5],
            background: "air".into(),
            thickness: 0.01,
            seed: 1,
            shapes: Vec::new(),
            h: 0.005,
            stretch: 1.1,
            h_max: 0.05,
            triangles: false,
            perturb: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub mu_r: f64,
    pub magnetization: [f64; 3],
    pub current_density: [f64; 3],
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig {
            mu_r: 1.0,
            magnetization: [0.0; 3],
            current_density: [0.0; 3],
        }
    }
}

impl MaterialConfig {
    pub fn spec(&self) -> MaterialSpec {
        MaterialSpec {
            mu_r: self.mu_r,
            magnetization: Vec3::from(self.magnetization),
            current_density: Vec3::from(self.current_density),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    FixedValue {
        #[serde(default)]
        value: [f64; 3],
        #[serde(default)]
        gradient: [[f64; 3]; 3],
    },
    ZeroNormalGradient,
}

impl BoundaryConfig {
    pub fn condition(&self) -> BoundaryCondition {
        match *self {
            BoundaryConfig::FixedValue { value, gradient } => BoundaryCondition::FixedValue(LinearValue {
                value: Vec3::from(value),
                gradient: Tensor::from_fn(|i, j| gradient[i][j]),
            }),
            BoundaryConfig::ZeroNormalGradient => BoundaryCondition::ZeroNormalGradient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleField {
    A,
    #[default]
    B,
    M,
    J,
}

impl SampleField {
    pub fn label(&self) -> &'static str {
        match self {
            SampleField::A => "A",
            SampleField::B => "B",
            SampleField::M => "M",
            SampleField::J => "J",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub name: String,
    #[serde(default)]
    pub field: SampleField,
    pub start: [f64; 3],
    pub end: [f64; 3],
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("output"),
            vtk: true,
            csv: true,
        }
    }
}

/// Parses `value` as a TOML value; anything that does not parse is a string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Applies one `key.path=value` override to a parsed document. Missing
/// tables are created; numeric segments index into arrays.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let bad = |m: &str| ConfigError::Override(assignment.to_string(), m.to_string());
    let (key, value) = assignment.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let value = parse_value(value.trim());
    let (last, parents) = path.split_last().unwrap();
    let mut node: &mut toml::Value = doc
        .entry(path[0])
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if parents.is_empty() {
        *node = value;
        return Ok(());
    }
    for seg in &parents[1..] {
        node = step(node, seg).map_err(|m| bad(&m))?;
    }
    match node {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        toml::Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| bad("array index expected"))?;
            *a.get_mut(i).ok_or_else(|| bad("array index out of range"))? = value;
        }
        _ => return Err(bad("cannot descend into a scalar")),
    }
    Ok(())
}

fn step<'a>(node: &'a mut toml::Value, seg: &str) -> Result<&'a mut toml::Value, String> {
    match node {
        toml::Value::Table(t) => Ok(t
            .entry(seg)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))),
        toml::Value::Array(a) => {
            let i: usize = seg.parse().map_err(|_| format!("array index expected at `{seg}`"))?;
            a.get_mut(i).ok_or_else(|| format!("array index {i} out of range"))
        }
        _ => Err(format!("`{seg}` is below a scalar")),
    }
}

impl CaseConfig {
    /// Parses a configuration document and applies overrides in order.
    pub fn from_str_with(text: &str, overrides: &[String], origin: &str) -> Result<Self, ConfigError> {
        let parse = |message: String| ConfigError::Parse {
            path: origin.to_string(),
            message,
        };
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| parse(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: CaseConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `case.toml` from a case directory.
    pub fn load(dir: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let path = dir.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_with(&text, overrides, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Checks that need no mesh; region and patch names are checked
    /// against the mesh when fields are built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        match (&self.mesh.file, &self.mesh.generator) {
            (Some(_), Some(_)) => return bad("mesh: give either `file` or `generator`, not both".into()),
            (None, None) => return bad("mesh: one of `file` or `generator` is required".into()),
            _ => {}
        }
        if let Some(g) = &self.mesh.generator {
            validate_generator(g)?;
        }
        if !(self.mesh.quality_warn_deg <= self.mesh.quality_error_deg) {
            return bad("mesh: quality_warn_deg must not exceed quality_error_deg".into());
        }
        self.solver.validate().map_err(|e| ConfigError::Invalid(format!("solver: {e}")))?;
        for (name, m) in &self.regions {
            let finite = m.magnetization.iter().chain(&m.current_density).all(|v| v.is_finite());
            if !(m.mu_r > 0.0 && m.mu_r.is_finite()) || !finite {
                return bad(format!("region `{name}`: mu_r must be positive and all values finite"));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.samples {
            if s.points < 2 {
                return bad(format!("sample `{}`: points must be at least 2", s.name));
            }
            let ok = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
            if !ok {
                return bad(format!("sample name `{}` must be a plain file stem", s.name));
            }
            if !names.insert(&s.name) {
                return bad(format!("duplicate sample name `{}`", s.name));
            }
        }
        Ok(())
    }

    pub fn materials(&self) -> Vec<(String, MaterialSpec)> {
        self.regions.iter().map(|(n, m)| (n.clone(), m.spec())).collect()
    }

    pub fn walls(&self) -> Vec<(String, BoundaryCondition)> {
        self.boundaries.iter().map(|(n, b)| (n.clone(), b.condition())).collect()
    }
}

fn validate_generator(g: &Generator) -> Result<(), ConfigError> {
    let bad = |m: String| Err(ConfigError::Invalid(format!("mesh.generator: {m}")));
    let (lo, hi, thickness) = match g {
        Generator::Cdt(c) => (c.box_lo, c.box_hi, c.thickness),
        Generator::Structured(c) => (c.box_lo, c.box_hi, c.thickness),
    };
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return bad("box_lo must be below box_hi".into());
    }
    if !(thickness > 0.0) {
        return bad("thickness must be positive".into());
    }
    let positive = match g {
        Generator::Cdt(c) => c.h_near > 0.0 && c.h_far >= c.h_near && c.growth >= 0.0,
        Generator::Structured(c) => c.h > 0.0 && c.h_max >= c.h && c.stretch >= 1.0 && (0.0..0.5).contains(&c.perturb),
    };
    if !positive {
        return bad("sizes must be positive and ordered, growth non-negative, perturb in [0, 0.5)".into());
    }
    for s in g.shapes() {
        if s.region() == g.background() {
            return bad(format!("shape region `{}` clashes with the background", s.region()));
        }
        let ok = match s {
            Shape::Rect { size, .. } => size[0] > 0.0 && size[1] > 0.0,
            Shape::Disc { radius, .. } => *radius > 0.0,
        };
        if !ok {
            return bad(format!("shape `{}` has a non-positive size", s.region()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        [mesh]
        file = "mesh.msh"
        [regions.air]
        [regions.magnet]
        magnetization = [0.0, 9.75e5, 0.0]
        [boundaries.outer]
        type = "fixed_value"
    "#;

    #[test]
    fn defaults_fill_missing_keys() {
        let c = CaseConfig::from_str_with(BASIC, &[], "t").unwrap();
        assert_eq!(c.solver, OuterControl::default());
        assert_eq!(c.outputs, OutputConfig::default());
        assert_eq!(c.regions["air"], MaterialConfig::default());
        assert_eq!(c.regions["magnet"].spec().magnetization, Vec3::new(0.0, 9.75e5, 0.0));
        assert_eq!(c.walls()[0].1, BoundaryCondition::FixedValue(LinearValue::constant(Vec3::zeros())));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for extra in ["[solver]\nlamda_div = 0.8", "[outputs]\nvtkk = true", "typo = 1", "[regions.other]\nmur = 2.0"] {
            let text = format!("{BASIC}\n{extra}");
            let err = CaseConfig::from_str_with(&text, &[], "t");
            assert!(err.is_err(), "accepted {extra}");
        }
        let err = CaseConfig::from_str_with(BASIC, &["solver.lamda_div=1".into()], "t").unwrap_err();
        assert!(err.to_string().contains("lamda_div"), "{err}");
    }

    #[test]
    fn overrides_take_precedence() {
        let o = vec![
            "solver.lambda_div=1.0".to_string(),
            "solver.relaxation_mode=explicit".into(),
            "solver.linear.tolerance = 1e-9".into(),
            "outputs.dir=out/run 1".into(),
            "regions.magnet.mu_r=2".into(),
        ];
        let c = CaseConfig::from_str_with(BASIC, &o, "t").unwrap();
        assert_eq!(c.solver.lambda_div, 1.0);
        assert_eq!(c.solver.relaxation_mode, crate::magnetostatics::RelaxationMode::Explicit);
        assert_eq!(c.solver.linear.tolerance, 1e-9);
        assert_eq!(c.outputs.dir, PathBuf::from("out/run 1"));
        assert_eq!(c.regions["magnet"].mu_r, 2.0);
    }

    #[test]
    fn override_into_arrays() {
        let text = format!("{BASIC}\n[[samples]]\nname = \"l\"\nstart = [0.0, 0.0, 0.0]\nend = [1.0, 0.0, 0.0]\n");
        let c = CaseConfig::from_str_with(&text, &["samples.0.points=11".into()], "t").unwrap();
        assert_eq!(c.samples[0].points, 11);
        assert_eq!(c.samples[0].field, SampleField::B);
        assert!(CaseConfig::from_str_with(&text, &["samples.3.points=11".into()], "t").is_err());
        assert!(CaseConfig::from_str_with(&text, &["samples".into()], "t").is_err());
        assert!(CaseConfig::from_str_with(&text, &["title.x=1".into()], "t").is_err());
    }

    #[test]
    fn lambda_outside_range_is_invalid() {
        for l in ["0.0", "1.5", "-1.0"] {
            let err = CaseConfig::from_str_with(BASIC, &[format!("solver.lambda_div={l}")], "t").unwrap_err();
            assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
        }
    }

    #[test]
    fn mesh_source_is_exclusive() {
        let both = format!("{BASIC}\n[mesh.generator]\nkind = \"cdt\"\n");
        assert!(CaseConfig::from_str_with(&both, &[], "t").is_err());
        let none = BASIC.replace("file = \"mesh.msh\"", "");
        assert!(CaseConfig::from_str_with(&none, &[], "t").is_err());
    }

    #[test]
    fn generator_round_trip() {
        let text = r#"
            [mesh.generator]
            kind = "structured"
            h = 0.01
            triangles = true
            [[mesh.generator.shapes]]
            kind = "disc"
            region = "wire"
            center = [0.0, 0.0]
            radius = 0.0375
            [regions.air]
            [regions.wire]
            current_density = [0.0, 0.0, 2.5e7]
            [boundaries.outer]
            type = "zero_normal_gradient"
        "#;
        let c = CaseConfig::from_str_with(text, &[], "t").unwrap();
        match &c.mesh.generator {
            Some(Generator::Structured(s)) => {
                assert_eq!((s.h, s.triangles, s.h_max), (0.01, true, 0.05));
                assert_eq!(s.shapes.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        let again = CaseConfig::from_str_with(&c.to_toml(), &[], "t").unwrap();
        assert_eq!(again, c);
        let bad = text.replace("h = 0.01", "hh = 0.01");
        assert!(CaseConfig::from_str_with(&bad, &[], "t").is_err());
    }

    #[test]
    fn bad_samples() {
        let s = |body: &str| format!("{BASIC}\n[[samples]]\nstart = [0.0, 0.0, 0.0]\nend = [1.0, 0.0, 0.0]\n{body}");
        assert!(CaseConfig::from_str_with(&s("name = \"a\"\npoints = 1"), &[], "t").is_err());
        assert!(CaseConfig::from_str_with(&s("name = \"../x\""), &[], "t").is_err());
        let dup = format!("{}\n[[samples]]\nname = \"a\"\nstart = [0.0, 0.0, 0.0]\nend = [1.0, 0.0, 0.0]\n", s("name = \"a\""));
        assert!(CaseConfig::from_str_with(&dup, &[], "t").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(CaseConfig::load(dir.path(), &[]), Err(ConfigError::Io { .. })));
    }
}
