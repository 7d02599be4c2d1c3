//! Plain-text mesh format.
//!
//! ```text
//! POINTS <n>
//! <x> <y> <z>            (n lines)
//! REGION <name>          (repeated per region)
//! CELLS <n>
//! FACES <m>
//! <owner> <neighbour|patch> <nverts> <v0> <v1> ...   (m lines)
//! PATCHES <k>
//! <name> <wall|interface|planar>                    (k lines)
//! ```
//!
//! Tokens are whitespace-delimited; `#` starts a comment. A face whose
//! second field parses as an integer is internal, otherwise it names the
//! boundary patch it belongs to.

use std::fmt::Write as _;
use std::path::Path;

use crate::geom::Vec3;

use super::{MeshError, MultiRegionMesh, PatchKind, RawFace, Region, DEFAULT_PAIRING_TOLERANCE};

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(src: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)>> =
            Box::new(src.lines().enumerate().filter_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                let toks: Vec<&str> = l.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            }));
        Lines {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn next(&mut self) -> Result<(usize, Vec<&'a str>), MeshError> {
        let (n, t) = self.inner.next().ok_or(MeshError::Parse {
            line: self.last,
            msg: "unexpected end of file".into(),
        })?;
        self.last = n;
        Ok((n, t))
    }

    fn header(&mut self, key: &str) -> Result<usize, MeshError> {
        let (line, t) = self.next()?;
        if t.len() != 2 || !t[0].eq_ignore_ascii_case(key) {
            return Err(MeshError::Parse {
                line,
                msg: format!("expected `{key} <count>`"),
            });
        }
        num(t[1], line)
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, MeshError> {
    s.parse().map_err(|_| MeshError::Parse {
        line,
        msg: format!("invalid number `{s}`"),
    })
}

pub fn parse_text(src: &str) -> Result<MultiRegionMesh, MeshError> {
    let mut lines = Lines::new(src);
    let np = lines.header("POINTS")?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        let (line, t) = lines.next()?;
        if t.len() != 3 {
            return Err(MeshError::Parse {
                line,
                msg: "expected three coordinates".into(),
            });
        }
        points.push(Vec3::new(num(t[0], line)?, num(t[1], line)?, num(t[2], line)?));
    }

    let mut regions = Vec::new();
    while lines.inner.peek().is_some() {
        let (line, t) = lines.next()?;
        if t.len() != 2 || !t[0].eq_ignore_ascii_case("REGION") {
            return Err(MeshError::Parse {
                line,
                msg: "expected `REGION <name>`".into(),
            });
        }
        let name = t[1].to_string();
        let n_cells = lines.header("CELLS")?;
        let nf = lines.header("FACES")?;
        let mut raw = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (line, t) = lines.next()?;
            if t.len() < 3 {
                return Err(MeshError::Parse {
                    line,
                    msg: "face line too short".into(),
                });
            }
            let owner = num(t[0], line)?;
            let nv: usize = num(t[2], line)?;
            if t.len() != 3 + nv {
                return Err(MeshError::Parse {
                    line,
                    msg: format!("expected {nv} vertex ids"),
                });
            }
            let vertices = t[3..]
                .iter()
                .map(|s| num(s, line))
                .collect::<Result<Vec<usize>, _>>()?;
            let (neighbour, patch) = match t[1].parse::<usize>() {
                Ok(nb) => (Some(nb), None),
                Err(_) => (None, Some(t[1].to_string())),
            };
            raw.push(RawFace {
                vertices,
                owner,
                neighbour,
                patch,
            });
        }
        let npatch = lines.header("PATCHES")?;
        let mut defs = Vec::with_capacity(npatch);
        for _ in 0..npatch {
            let (line, t) = lines.next()?;
            if t.len() != 2 {
                return Err(MeshError::Parse {
                    line,
                    msg: "expected `<name> <kind>`".into(),
                });
            }
            let kind = match t[1] {
                "wall" => PatchKind::Wall,
                "interface" => PatchKind::Interface,
                "planar" => PatchKind::Planar,
                k => {
                    return Err(MeshError::Parse {
                        line,
                        msg: format!("unknown patch kind `{k}`"),
                    })
                }
            };
            defs.push((t[0].to_string(), kind));
        }
        regions.push(Region::build(&name, &points, n_cells, raw, &defs)?);
    }
    if regions.is_empty() {
        return Err(MeshError::Parse {
            line: lines.last,
            msg: "no REGION blocks".into(),
        });
    }
    MultiRegionMesh::assemble(points, regions, DEFAULT_PAIRING_TOLERANCE)
}

pub fn load_text(path: &Path) -> Result<MultiRegionMesh, MeshError> {
    let src = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_text(&src)
}

/// Serialises a mesh in the text format. Coordinates are written with
/// round-trip precision.
pub fn to_text(mesh: &MultiRegionMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "POINTS {}", mesh.points.len());
    for p in &mesh.points {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for r in &mesh.regions {
        let _ = writeln!(s, "REGION {}", r.name);
        let _ = writeln!(s, "CELLS {}", r.n_cells);
        let _ = writeln!(s, "FACES {}", r.faces.len());
        for (fi, f) in r.faces.iter().enumerate() {
            let second = match f.neighbour {
                Some(nb) => nb.to_string(),
                None => r.patch_of(fi).unwrap().name.clone(),
            };
            let _ = write!(s, "{} {} {}", f.owner, second, f.vertices.len());
            for v in &f.vertices {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "PATCHES {}", r.patches.len());
        for p in &r.patches {
            let kind = match p.kind {
                PatchKind::Wall => "wall",
                PatchKind::Interface => "interface",
                PatchKind::Planar => "planar",
            };
            let _ = writeln!(s, "{} {}", p.name, kind);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CUBES: &str = "\
# two unit cubes along x
POINTS 12
0 0 0
1 0 0
2 0 0
0 1 0
1 1 0
2 1 0
0 0 1
1 0 1
2 0 1
0 1 1
1 1 1
2 1 1
REGION block
CELLS 2
FACES 11
0 1 4 1 4 10 7
0 sides 4 0 6 9 3
1 sides 4 2 5 11 8
0 sides 4 0 1 7 6
1 sides 4 1 2 8 7
0 sides 4 3 9 10 4
1 sides 4 4 10 11 5
0 sides 4 0 3 4 1
1 sides 4 1 4 5 2
0 sides 4 6 7 10 9
1 sides 4 7 8 11 10
PATCHES 1
sides wall
";

    #[test]
    fn parses_two_cubes() {
        let m = parse_text(TWO_CUBES).unwrap();
        let r = &m.regions[0];
        assert_eq!(r.n_cells, 2);
        assert_eq!(r.n_internal, 1);
        assert_eq!(r.patches[0].size, 10);
        assert!((r.total_volume() - 2.0).abs() < 1e-14);
        assert!((r.geometry.weight[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn round_trip() {
        let m = parse_text(TWO_CUBES).unwrap();
        let again = parse_text(&to_text(&m)).unwrap();
        assert_eq!(m.regions[0].faces, again.regions[0].faces);
    }

    #[test]
    fn reports_line_of_bad_number() {
        let bad = TWO_CUBES.replace("2 1 1\n", "2 x 1\n");
        match parse_text(&bad) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 14),
            other => panic!("unexpected {other:?}"),
        }
    }
}
