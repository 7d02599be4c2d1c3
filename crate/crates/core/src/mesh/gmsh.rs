//! Gmsh MSH ASCII reader (format versions 2.2 and 4.1) for planar meshes.
//!
//! Triangles and quadrangles are grouped into regions by physical surface;
//! line elements name boundary patches by physical curve. The 2D mesh is
//! then extruded to unit-thickness prisms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::planar::{edge_key, extrude, merge_points, PlanarMesh};
use super::{MeshError, MultiRegionMesh};

#[derive(Debug, Default)]
struct Raw {
    nodes: Vec<(usize, [f64; 3])>,
    /// (element type, physical tag, entity tag, node ids)
    elements: Vec<(u32, Option<i64>, i64, Vec<usize>)>,
    names: HashMap<(u32, i64), String>,
}

struct Tokens<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn line(&mut self) -> Result<(usize, &'a str), MeshError> {
        let l = self.lines.get(self.pos).copied().ok_or(MeshError::Parse {
            line: self.lines.last().map_or(0, |l| l.0),
            msg: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(l)
    }

    fn fields(&mut self) -> Result<(usize, Vec<&'a str>), MeshError> {
        let (n, l) = self.line()?;
        Ok((n, l.split_whitespace().collect()))
    }

    fn skip_section(&mut self, name: &str) -> Result<(), MeshError> {
        let end = format!("$End{}", &name[1..]);
        loop {
            let (_, l) = self.line()?;
            if l.trim() == end {
                return Ok(());
            }
        }
    }

    fn expect_end(&mut self, name: &str) -> Result<(), MeshError> {
        let (n, l) = self.line()?;
        if l.trim() != name {
            return Err(MeshError::Parse {
                line: n,
                msg: format!("expected {name}"),
            });
        }
        Ok(())
    }
}

fn p<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, MeshError> {
    s.parse().map_err(|_| MeshError::Parse {
        line,
        msg: format!("invalid number `{s}`"),
    })
}

fn element_dim(ty: u32, line: usize) -> Result<u32, MeshError> {
    match ty {
        15 => Ok(0),
        1 => Ok(1),
        2 | 3 => Ok(2),
        4 | 5 | 6 | 7 => Err(MeshError::UnsupportedElement(format!(
            "volume element type {ty} (line {line}); only 2D meshes are read"
        ))),
        _ => Err(MeshError::UnsupportedElement(format!(
            "element type {ty} (line {line}); only linear points, lines, triangles and quadrangles are read"
        ))),
    }
}

fn nodes_per(ty: u32) -> usize {
    match ty {
        15 => 1,
        1 => 2,
        2 => 3,
        3 => 4,
        _ => 0,
    }
}

fn read_physical_names(t: &mut Tokens, raw: &mut Raw) -> Result<(), MeshError> {
    let (n, f) = t.fields()?;
    let count: usize = p(f[0], n)?;
    for _ in 0..count {
        let (n, l) = t.line()?;
        let mut it = l.split_whitespace();
        let dim: u32 = p(it.next().unwrap_or(""), n)?;
        let tag: i64 = p(it.next().unwrap_or(""), n)?;
        let name = l
            .split('"')
            .nth(1)
            .ok_or(MeshError::Parse {
                line: n,
                msg: "physical name must be quoted".into(),
            })?
            .to_string();
        raw.names.insert((dim, tag), name);
    }
    t.expect_end("$EndPhysicalNames")
}

fn read_v2(t: &mut Tokens, raw: &mut Raw, section: &str) -> Result<(), MeshError> {
    match section {
        "$Nodes" => {
            let (n, f) = t.fields()?;
            let count: usize = p(f[0], n)?;
            for _ in 0..count {
                let (n, f) = t.fields()?;
                if f.len() < 4 {
                    return Err(MeshError::Parse {
                        line: n,
                        msg: "node line needs id x y z".into(),
                    });
                }
                raw.nodes
                    .push((p(f[0], n)?, [p(f[1], n)?, p(f[2], n)?, p(f[3], n)?]));
            }
            t.expect_end("$EndNodes")
        }
        "$Elements" => {
            let (n, f) = t.fields()?;
            let count: usize = p(f[0], n)?;
            for _ in 0..count {
                let (n, f) = t.fields()?;
                if f.len() < 3 {
                    return Err(MeshError::Parse {
                        line: n,
                        msg: "element line too short".into(),
                    });
                }
                let id: i64 = p(f[0], n)?;
                let ty: u32 = p(f[1], n)?;
                let ntags: usize = p(f[2], n)?;
                element_dim(ty, n)?;
                let nn = nodes_per(ty);
                if f.len() != 3 + ntags + nn {
                    return Err(MeshError::Parse {
                        line: n,
                        msg: format!("element {id}: wrong number of fields"),
                    });
                }
                let tags: Vec<i64> = f[3..3 + ntags]
                    .iter()
                    .map(|s| p(s, n))
                    .collect::<Result<_, _>>()?;
                let phys = tags.first().copied().filter(|&x| x != 0);
                let entity = tags.get(1).copied().unwrap_or(-id);
                let nodes = f[3 + ntags..]
                    .iter()
                    .map(|s| p(s, n))
                    .collect::<Result<_, _>>()?;
                raw.elements.push((ty, phys, entity, nodes));
            }
            t.expect_end("$EndElements")
        }
        s => t.skip_section(s),
    }
}

fn read_v4(
    t: &mut Tokens,
    raw: &mut Raw,
    section: &str,
    entity_phys: &mut HashMap<(u32, i64), Option<i64>>,
) -> Result<(), MeshError> {
    match section {
        "$Entities" => {
            let (n, f) = t.fields()?;
            let counts: Vec<usize> = f.iter().map(|s| p(s, n)).collect::<Result<_, _>>()?;
            if counts.len() != 4 {
                return Err(MeshError::Parse {
                    line: n,
                    msg: "expected four entity counts".into(),
                });
            }
            for (dim, &count) in counts.iter().enumerate() {
                for _ in 0..count {
                    let (n, f) = t.fields()?;
                    let tag: i64 = p(f[0], n)?;
                    // points carry 3 coordinates, higher entities a 6-value box
                    let at = if dim == 0 { 4 } else { 7 };
                    let np: usize = p(f.get(at).copied().unwrap_or(""), n)?;
                    let phys = if np > 0 {
                        Some(p::<i64>(f.get(at + 1).copied().unwrap_or(""), n)?)
                    } else {
                        None
                    };
                    entity_phys.insert((dim as u32, tag), phys);
                }
            }
            t.expect_end("$EndEntities")
        }
        "$Nodes" => {
            let (n, f) = t.fields()?;
            let blocks: usize = p(f[0], n)?;
            for _ in 0..blocks {
                let (n, f) = t.fields()?;
                if f.len() != 4 {
                    return Err(MeshError::Parse {
                        line: n,
                        msg: "node block header needs 4 fields".into(),
                    });
                }
                let parametric: u32 = p(f[2], n)?;
                let count: usize = p(f[3], n)?;
                let mut ids = Vec::with_capacity(count);
                for _ in 0..count {
                    let (n, l) = t.line()?;
                    ids.push(p::<usize>(l.trim(), n)?);
                }
                for id in ids {
                    let (n, f) = t.fields()?;
                    if f.len() < 3 || (parametric == 0 && f.len() != 3) {
                        return Err(MeshError::Parse {
                            line: n,
                            msg: "bad node coordinates".into(),
                        });
                    }
                    raw.nodes.push((id, [p(f[0], n)?, p(f[1], n)?, p(f[2], n)?]));
                }
            }
            t.expect_end("$EndNodes")
        }
        "$Elements" => {
            let (n, f) = t.fields()?;
            let blocks: usize = p(f[0], n)?;
            for _ in 0..blocks {
                let (n, f) = t.fields()?;
                if f.len() != 4 {
                    return Err(MeshError::Parse {
                        line: n,
                        msg: "element block header needs 4 fields".into(),
                    });
                }
                let dim: u32 = p(f[0], n)?;
                let entity: i64 = p(f[1], n)?;
                let ty: u32 = p(f[2], n)?;
                let count: usize = p(f[3], n)?;
                let edim = element_dim(ty, n)?;
                if edim != dim {
                    return Err(MeshError::Parse {
                        line: n,
                        msg: format!("element type {ty} in a dimension-{dim} block"),
                    });
                }
                let phys = match entity_phys.get(&(dim, entity)) {
                    Some(ph) => *ph,
                    None => None,
                };
                let nn = nodes_per(ty);
                for _ in 0..count {
                    let (n, f) = t.fields()?;
                    if f.len() != 1 + nn {
                        return Err(MeshError::Parse {
                            line: n,
                            msg: "wrong number of element nodes".into(),
                        });
                    }
                    let nodes = f[1..].iter().map(|s| p(s, n)).collect::<Result<_, _>>()?;
                    raw.elements.push((ty, phys, entity, nodes));
                }
            }
            t.expect_end("$EndElements")
        }
        s => t.skip_section(s),
    }
}

fn parse_raw(src: &str) -> Result<Raw, MeshError> {
    let mut t = Tokens {
        lines: src
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect(),
        pos: 0,
    };
    let (n, l) = t.line()?;
    if l.trim() != "$MeshFormat" {
        return Err(MeshError::Parse {
            line: n,
            msg: "missing $MeshFormat".into(),
        });
    }
    let (n, f) = t.fields()?;
    let version = f.first().copied().unwrap_or("");
    let v4 = match version {
        "2.2" => false,
        "4.1" => true,
        v => return Err(MeshError::UnsupportedVersion(v.to_string())),
    };
    if f.get(1).copied() != Some("0") {
        return Err(MeshError::Parse {
            line: n,
            msg: "only ASCII files are supported".into(),
        });
    }
    t.expect_end("$EndMeshFormat")?;

    let mut raw = Raw::default();
    let mut entity_phys = HashMap::new();
    while t.pos < t.lines.len() {
        let (n, l) = t.line()?;
        let section = l.trim();
        if !section.starts_with('$') {
            return Err(MeshError::Parse {
                line: n,
                msg: format!("expected a section header, found `{section}`"),
            });
        }
        if section == "$PhysicalNames" {
            read_physical_names(&mut t, &mut raw)?;
        } else if v4 {
            read_v4(&mut t, &mut raw, section, &mut entity_phys)?;
        } else {
            read_v2(&mut t, &mut raw, section)?;
        }
    }
    Ok(raw)
}

fn build(raw: Raw) -> Result<MultiRegionMesh, MeshError> {
    if raw.nodes.is_empty() {
        return Err(MeshError::Parse {
            line: 0,
            msg: "no nodes".into(),
        });
    }
    let coords: Vec<[f64; 2]> = raw.nodes.iter().map(|(_, x)| [x[0], x[1]]).collect();
    let (mut lo, mut hi) = (coords[0], coords[0]);
    for c in &coords {
        lo = [lo[0].min(c[0]), lo[1].min(c[1])];
        hi = [hi[0].max(c[0]), hi[1].max(c[1])];
    }
    let diag = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    let zspan = raw
        .nodes
        .iter()
        .map(|(_, x)| x[2])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z), b.max(z)));
    if zspan.1 - zspan.0 > 1e-9 * diag.max(1.0) {
        return Err(MeshError::UnsupportedElement(
            "nodes are not coplanar in z; only planar meshes are read".into(),
        ));
    }
    let (points, merged) = merge_points(&coords, 1e-12 * diag);
    let id_map: HashMap<usize, usize> = raw
        .nodes
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (*id, merged[i]))
        .collect();
    let node = |id: usize| {
        id_map.get(&id).copied().ok_or(MeshError::Parse {
            line: 0,
            msg: format!("element references unknown node {id}"),
        })
    };

    let mut surfaces: BTreeMap<i64, usize> = BTreeMap::new();
    let mut region_names = Vec::new();
    let mut cells = Vec::new();
    let mut cell_region = Vec::new();
    let mut line_elems = Vec::new();
    for (ty, phys, entity, nodes) in &raw.elements {
        match ty {
            2 | 3 => {
                let tag = phys.ok_or_else(|| {
                    MeshError::MissingPhysicalTag(format!(
                        "surface {entity} has elements but no physical surface tag"
                    ))
                })?;
                let r = *surfaces.entry(tag).or_insert_with(|| {
                    region_names.push(
                        raw.names
                            .get(&(2, tag))
                            .cloned()
                            .unwrap_or_else(|| format!("region{tag}")),
                    );
                    region_names.len() - 1
                });
                cells.push(nodes.iter().map(|&v| node(v)).collect::<Result<Vec<_>, _>>()?);
                cell_region.push(r);
            }
            1 => line_elems.push((*phys, *entity, node(nodes[0])?, node(nodes[1])?)),
            _ => {}
        }
    }
    if cells.is_empty() {
        return Err(MeshError::Parse {
            line: 0,
            msg: "no triangle or quadrangle elements".into(),
        });
    }

    let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (ci, c) in cells.iter().enumerate() {
        for i in 0..c.len() {
            edge_cells
                .entry(edge_key(c[i], c[(i + 1) % c.len()]))
                .or_default()
                .push(ci);
        }
    }

    let mut edge_tags = HashMap::new();
    let mut curve_regions: BTreeMap<i64, BTreeSet<usize>> = BTreeMap::new();
    for &(phys, entity, a, b) in &line_elems {
        let key = edge_key(a, b);
        let Some(adj) = edge_cells.get(&key) else {
            continue;
        };
        if adj.len() != 1 {
            continue;
        }
        curve_regions
            .entry(entity)
            .or_default()
            .insert(cell_region[adj[0]]);
        let tag = phys.ok_or_else(|| {
            MeshError::MissingPhysicalTag(format!(
                "curve {entity} bounds the mesh but has no physical curve tag"
            ))
        })?;
        let name = raw
            .names
            .get(&(1, tag))
            .cloned()
            .unwrap_or_else(|| format!("patch{tag}"));
        edge_tags.insert(key, name);
    }
    if let Some((curve, _)) = curve_regions.iter().find(|(_, r)| r.len() > 1) {
        return Err(MeshError::NonConformal(format!(
            "curve {curve} separates two regions but their element edges do not coincide"
        )));
    }

    let pm = PlanarMesh {
        points,
        cells,
        cell_region,
        region_names,
        edge_tags,
        default_patch: None,
    };
    extrude(&pm, 1.0)
}

pub fn parse_gmsh(src: &str) -> Result<MultiRegionMesh, MeshError> {
    build(parse_raw(src)?)
}

pub fn load_gmsh(path: &Path) -> Result<MultiRegionMesh, MeshError> {
    let src = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_gmsh(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SQUARE_V22: &str = r#"$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
5
1 1 "bottom"
1 2 "right"
1 3 "top"
1 4 "left"
2 10 "square"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 2 2 2 3
3 1 2 3 3 3 4
4 1 2 4 4 4 1
5 2 2 10 1 1 2 3
6 2 2 10 1 1 3 4
$EndElements
"#;

    const SQUARE_V41: &str = r#"$MeshFormat
4.1 0 8
$EndMeshFormat
$PhysicalNames
2
1 7 "outer"
2 10 "square"
$EndPhysicalNames
$Entities
0 4 1 0
1 0 0 0 1 0 0 1 7 0
2 1 0 0 1 1 0 1 7 0
3 0 1 0 1 1 0 1 7 0
4 0 0 0 0 1 0 1 7 0
1 0 0 0 1 1 0 1 10 0
$EndEntities
$Nodes
1 4 1 4
2 1 0 4
1
2
3
4
0 0 0
1 0 0
1 1 0
0 1 0
$EndNodes
$Elements
5 6 1 6
1 1 1 1
1 1 2
1 2 1 1
2 2 3
1 3 1 1
3 3 4
1 4 1 1
4 4 1
2 1 2 2
5 1 2 3
6 1 3 4
$EndElements
"#;

    #[test]
    fn two_triangle_square_v22() {
        let m = parse_gmsh(SQUARE_V22).unwrap();
        assert_eq!(m.regions.len(), 1);
        let r = &m.regions[0];
        assert_eq!(r.name, "square");
        assert_eq!(r.n_cells, 2);
        assert_eq!(r.n_internal, 1);
        let walls: usize = r
            .patches
            .iter()
            .filter(|p| p.kind == super::super::PatchKind::Wall)
            .map(|p| p.size)
            .sum();
        assert_eq!(walls, 4);
    }

    #[test]
    fn two_triangle_square_v41() {
        let m = parse_gmsh(SQUARE_V41).unwrap();
        let r = &m.regions[0];
        assert_eq!(r.n_cells, 2);
        assert_eq!(r.n_internal, 1);
        assert_eq!(r.patches[r.patch_by_name("outer").unwrap()].size, 4);
    }

    #[test]
    fn unknown_version() {
        let src = SQUARE_V22.replace("2.2 0 8", "3.0 0 8");
        assert!(matches!(parse_gmsh(&src), Err(MeshError::UnsupportedVersion(v)) if v == "3.0"));
    }

    #[test]
    fn surface_without_physical_tag_is_named() {
        let src = SQUARE_V22
            .replace("5 2 2 10 1 1 2 3", "5 2 2 0 3 1 2 3")
            .replace("6 2 2 10 1 1 3 4", "6 2 2 0 3 1 3 4");
        match parse_gmsh(&src) {
            Err(MeshError::MissingPhysicalTag(msg)) => assert!(msg.contains("surface 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn volume_elements_are_rejected() {
        let src = SQUARE_V22.replace("6 2 2 10 1 1 3 4", "6 4 2 10 1 1 2 3 4");
        assert!(matches!(parse_gmsh(&src), Err(MeshError::UnsupportedElement(_))));
    }

    #[test]
    fn non_conformal_interface_names_the_curve() {
        // left square [0,1]² has one cell edge on x = 1, the right square
        // [1,2]x[0,1] is split there by an extra node at (1, 0.5)
        let src = r#"$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
7
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 2 0 0
6 2 1 0
7 1 0.5 0
$EndNodes
$Elements
11
1 2 2 1 1 1 2 3
2 2 2 1 1 1 3 4
3 2 2 2 2 2 5 7
4 2 2 2 2 7 5 6
5 2 2 2 2 7 6 3
6 1 2 5 9 2 3
7 1 2 5 9 2 7
8 1 2 5 9 7 3
9 1 2 6 11 1 2
10 1 2 6 11 2 5
11 1 2 6 11 5 6
$EndElements
"#;
        match parse_gmsh(&src) {
            Err(MeshError::NonConformal(msg)) => assert!(msg.contains("curve 9"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
