//! Gmsh MSH 4.1 ASCII reader and a minimal writer.
//!
//! Only `$MeshFormat`, `$PhysicalNames`, `$Entities`, `$Nodes` and
//! `$Elements` are interpreted; other sections are skipped. Elements of the
//! highest dimension present become the volume mesh (TRI3, QUAD4 or TET4);
//! lower-dimensional elements only contribute boundary node tags.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ElementKind, Mesh};
use crate::error::{FemError, Result};

fn gmsh_type(kind: ElementKind) -> u32 {
    match kind {
        ElementKind::Tri3 => 2,
        ElementKind::Quad4 => 3,
        ElementKind::Tet4 => 4,
    }
}

fn kind_from_gmsh(ty: u32) -> Option<ElementKind> {
    match ty {
        2 => Some(ElementKind::Tri3),
        3 => Some(ElementKind::Quad4),
        4 => Some(ElementKind::Tet4),
        _ => None,
    }
}

struct Lines<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Lines { path, lines, pos: 0 }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> FemError {
        FemError::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn current_line(&self) -> usize {
        self.lines
            .get(self.pos)
            .or_else(|| self.lines.last())
            .map_or(0, |(n, _)| *n)
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        let item = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err(self.current_line(), "unexpected end of file"))?;
        self.pos += 1;
        Ok(item)
    }

    /// Next line split into numbers of type `T`.
    fn numbers<T: std::str::FromStr>(&mut self) -> Result<(usize, Vec<T>)> {
        let (n, line) = self.next()?;
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<T>()
                    .map_err(|_| self.err(n, format!("invalid number '{tok}'")))
            })
            .collect::<Result<Vec<T>>>()?;
        Ok((n, values))
    }

    fn expect_at_least<T: std::str::FromStr>(&mut self, count: usize, what: &str) -> Result<(usize, Vec<T>)> {
        let (n, v) = self.numbers::<T>()?;
        if v.len() < count {
            return Err(self.err(n, format!("{what}: expected {count} values, found {}", v.len())));
        }
        Ok((n, v))
    }

    fn expect_end(&mut self, section: &str) -> Result<()> {
        let (n, line) = self.next()?;
        let want = format!("$End{section}");
        if line != want {
            return Err(self.err(n, format!("expected {want}, found '{line}'")));
        }
        Ok(())
    }
}

#[derive(Default)]
struct Entities {
    /// (dim, entity tag) -> physical tags
    physical: HashMap<(usize, i64), Vec<i64>>,
}

fn parse_entities(lines: &mut Lines) -> Result<Entities> {
    let mut out = Entities::default();
    let (_, counts) = lines.expect_at_least::<usize>(4, "$Entities header")?;
    for dim in 0..4 {
        for _ in 0..counts[dim] {
            let (n, v) = lines.numbers::<f64>()?;
            // points: tag x y z nPhys ...; others: tag minx miny minz maxx maxy maxz nPhys ...
            let phys_at = if dim == 0 { 4 } else { 7 };
            if v.len() <= phys_at {
                return Err(lines.err(n, "truncated entity record"));
            }
            let n_phys = v[phys_at] as usize;
            if v.len() < phys_at + 1 + n_phys {
                return Err(lines.err(n, "truncated physical tag list"));
            }
            let tags = v[phys_at + 1..phys_at + 1 + n_phys].iter().map(|&t| t as i64).collect();
            out.physical.insert((dim, v[0] as i64), tags);
        }
    }
    lines.expect_end("Entities")?;
    Ok(out)
}

/// Reads a Gmsh MSH 4.1 ASCII file.
pub fn load_gmsh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FemError::io(path, e))?;
    parse_gmsh(path, &text)
}

/// Parses MSH 4.1 ASCII text; `path` is only used in error messages.
pub fn parse_gmsh(path: &Path, text: &str) -> Result<Mesh> {
    let mut lines = Lines::new(path, text);
    let mut physical_names: HashMap<(usize, i64), String> = HashMap::new();
    let mut entities = Entities::default();
    let mut nodes: Option<Vec<(u64, [f64; 3])>> = None;
    // (entity dim, entity tag, gmsh type, element node tags)
    let mut blocks: Vec<(usize, i64, u32, Vec<Vec<u64>>, usize)> = Vec::new();
    let mut saw_format = false;

    while lines.pos < lines.lines.len() {
        let (n, header) = lines.next()?;
        match header {
            "$MeshFormat" => {
                let (ln, line) = lines.next()?;
                let mut it = line.split_whitespace();
                let version = it.next().unwrap_or("");
                let file_type = it.next().unwrap_or("");
                if version != "4.1" {
                    return Err(lines.err(ln, format!("unsupported MSH version '{version}', need 4.1")));
                }
                if file_type != "0" {
                    return Err(lines.err(ln, "binary MSH files are not supported"));
                }
                lines.expect_end("MeshFormat")?;
                saw_format = true;
            }
            "$PhysicalNames" => {
                let (_, count) = lines.expect_at_least::<usize>(1, "$PhysicalNames count")?;
                for _ in 0..count[0] {
                    let (ln, line) = lines.next()?;
                    let mut it = line.splitn(3, char::is_whitespace);
                    let dim = it.next().and_then(|t| t.parse::<usize>().ok());
                    let tag = it.next().and_then(|t| t.parse::<i64>().ok());
                    let name = it.next().map(|s| s.trim().trim_matches('"').to_string());
                    match (dim, tag, name) {
                        (Some(d), Some(t), Some(name)) => {
                            physical_names.insert((d, t), name);
                        }
                        _ => return Err(lines.err(ln, "malformed physical name")),
                    }
                }
                lines.expect_end("PhysicalNames")?;
            }
            "$Entities" => entities = parse_entities(&mut lines)?,
            "$Nodes" => {
                let (_, h) = lines.expect_at_least::<usize>(4, "$Nodes header")?;
                let (n_blocks, n_nodes) = (h[0], h[1]);
                let mut all = Vec::with_capacity(n_nodes);
                for _ in 0..n_blocks {
                    let (bn, b) = lines.expect_at_least::<i64>(4, "node block header")?;
                    let parametric = b[2] != 0;
                    if parametric {
                        return Err(lines.err(bn, "parametric node blocks are not supported"));
                    }
                    let count = b[3] as usize;
                    let mut tags = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (_, t) = lines.expect_at_least::<u64>(1, "node tag")?;
                        tags.push(t[0]);
                    }
                    for tag in tags {
                        let (_, x) = lines.expect_at_least::<f64>(3, "node coordinates")?;
                        all.push((tag, [x[0], x[1], x[2]]));
                    }
                }
                if all.len() != n_nodes {
                    return Err(lines.err(
                        n,
                        format!("$Nodes declares {n_nodes} nodes but blocks contain {}", all.len()),
                    ));
                }
                lines.expect_end("Nodes")?;
                nodes = Some(all);
            }
            "$Elements" => {
                let (_, h) = lines.expect_at_least::<usize>(4, "$Elements header")?;
                let (n_blocks, n_elements) = (h[0], h[1]);
                let mut total = 0;
                for _ in 0..n_blocks {
                    let (bn, b) = lines.expect_at_least::<i64>(4, "element block header")?;
                    let (dim, tag, ty, count) = (b[0] as usize, b[1], b[2] as u32, b[3] as usize);
                    let mut conn = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (_, v) = lines.expect_at_least::<u64>(2, "element record")?;
                        conn.push(v[1..].to_vec());
                    }
                    total += count;
                    blocks.push((dim, tag, ty, conn, bn));
                }
                if total != n_elements {
                    return Err(lines.err(
                        n,
                        format!("$Elements declares {n_elements} elements but blocks contain {total}"),
                    ));
                }
                lines.expect_end("Elements")?;
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // skip unknown section
                let end = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = lines.next()?;
                    if l == end {
                        break;
                    }
                }
            }
            other => return Err(lines.err(n, format!("unexpected line '{other}'"))),
        }
    }

    if !saw_format {
        return Err(lines.err(1, "missing $MeshFormat section"));
    }
    let mut nodes = nodes.ok_or_else(|| lines.err(lines.current_line(), "missing $Nodes section"))?;
    if blocks.is_empty() {
        return Err(lines.err(lines.current_line(), "missing or empty $Elements section"));
    }
    nodes.sort_by_key(|(tag, _)| *tag);
    let index: HashMap<u64, usize> = nodes.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    if index.len() != nodes.len() {
        return Err(lines.err(1, "duplicate node tags"));
    }

    let volume_dim = blocks.iter().map(|b| b.0).max().unwrap_or(0);
    let mut kind: Option<ElementKind> = None;
    let mut elements = Vec::new();
    let mut boundary: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (dim, tag, ty, conn, bn) in &blocks {
        let lookup = |t: &u64| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| lines.err(*bn, format!("element references unknown node {t}")))
        };
        if *dim == volume_dim {
            let k = kind_from_gmsh(*ty).ok_or_else(|| {
                FemError::UnsupportedMesh(format!("volume element type {ty} (only 2, 3, 4 are supported)"))
            })?;
            if k.dim() != volume_dim {
                return Err(FemError::UnsupportedMesh(format!(
                    "element type {ty} in a {volume_dim}-dimensional entity"
                )));
            }
            match kind {
                Some(prev) if prev != k => {
                    return Err(FemError::UnsupportedMesh(format!(
                        "mixed volume element kinds {} and {}",
                        prev.name(),
                        k.name()
                    )))
                }
                _ => kind = Some(k),
            }
            for c in conn {
                if c.len() != k.nodes_per_element() {
                    return Err(lines.err(
                        *bn,
                        format!(
                            "element of type {ty} needs {} nodes, found {}",
                            k.nodes_per_element(),
                            c.len()
                        ),
                    ));
                }
                for t in c {
                    elements.push(lookup(t)?);
                }
            }
        } else {
            let names: Vec<String> = match entities.physical.get(&(*dim, *tag)) {
                Some(phys) if !phys.is_empty() => phys
                    .iter()
                    .map(|p| {
                        physical_names
                            .get(&(*dim, *p))
                            .cloned()
                            .unwrap_or_else(|| format!("physical{dim}_{p}"))
                    })
                    .collect(),
                _ => vec![format!("entity{dim}_{tag}")],
            };
            let mut set = BTreeSet::new();
            for c in conn {
                for t in c {
                    set.insert(lookup(t)?);
                }
            }
            for name in names {
                boundary.entry(name).or_default().extend(set.iter().copied());
            }
        }
    }
    let kind = kind.ok_or_else(|| FemError::UnsupportedMesh("no volume elements".into()))?;
    let d = kind.dim();
    let coords = nodes.iter().flat_map(|(_, x)| x[..d].to_vec()).collect();
    Mesh::with_boundary(kind, coords, elements, boundary)
}

/// Serializes nodes and volume elements as MSH 4.1 ASCII (boundary tags are
/// not written).
pub fn format_gmsh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let (n, e, d) = (mesh.n_nodes(), mesh.n_elements(), mesh.dim());
    s.push_str("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n");
    let _ = writeln!(s, "$Nodes\n1 {n} 1 {n}\n{d} 1 0 {n}");
    for i in 1..=n {
        let _ = writeln!(s, "{i}");
    }
    for i in 0..n {
        let x = mesh.node(i);
        let z = if d == 3 { x[2] } else { 0.0 };
        let _ = writeln!(s, "{:?} {:?} {:?}", x[0], x[1], z);
    }
    s.push_str("$EndNodes\n");
    let _ = writeln!(s, "$Elements\n1 {e} 1 {e}\n{d} 1 {} {e}", gmsh_type(mesh.kind()));
    for el in 0..e {
        let _ = write!(s, "{}", el + 1);
        for &i in mesh.element(el) {
            let _ = write!(s, " {}", i + 1);
        }
        s.push('\n');
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_gmsh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    std::fs::write(&path, format_gmsh(mesh)).map_err(|e| FemError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_grid;

    const ONE_TRIANGLE: &str = "$MeshFormat
4.1 0 8
$EndMeshFormat
$Nodes
1 3 1 3
2 1 0 3
1
2
3
0 0 0
1 0 0
0 1 0
$EndNodes
$Elements
1 1 1 1
2 1 2 1
1 1 2 3
$EndElements
";

    fn parse(text: &str) -> Result<Mesh> {
        parse_gmsh(Path::new("test.msh"), text)
    }

    #[test]
    fn minimal_triangle() {
        let m = parse(ONE_TRIANGLE).unwrap();
        assert_eq!((m.n_nodes(), m.n_elements(), m.kind()), (3, 1, ElementKind::Tri3));
        assert_eq!(m.nodes(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn repeated_node_is_rejected() {
        let text = ONE_TRIANGLE.replace("1 1 2 3\n", "1 1 2 2\n");
        assert!(matches!(parse(&text).unwrap_err(), FemError::InvalidMesh(_)));
    }

    #[test]
    fn inverted_element_is_named() {
        let text = ONE_TRIANGLE.replace("1 1 2 3\n", "1 1 3 2\n");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, FemError::Orientation { element: 0, .. }), "{err}");
    }

    #[test]
    fn malformed_section_reports_line() {
        let text = ONE_TRIANGLE.replace("1 0 0\n", "1 zero 0\n");
        match parse(&text).unwrap_err() {
            FemError::Parse { line, .. } => assert_eq!(line, 11),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mixed_volume_kinds_are_unsupported() {
        let text = "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n$Nodes\n1 5 1 5\n2 1 0 5\n1\n2\n3\n4\n5\n\
0 0 0\n1 0 0\n1 1 0\n0 1 0\n2 0 0\n$EndNodes\n$Elements\n2 2 1 2\n2 1 3 1\n1 1 2 3 4\n2 2 2 1\n2 2 5 3\n$EndElements\n";
        assert!(matches!(parse(text).unwrap_err(), FemError::UnsupportedMesh(_)));
    }

    #[test]
    fn lower_dimensional_elements_become_tags() {
        let text = "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n\
$PhysicalNames\n1\n1 7 \"wall\"\n$EndPhysicalNames\n\
$Entities\n0 1 1 0\n3 0 0 0 1 1 0 1 7 2 1 2\n1 0 0 0 1 1 0 0 0\n$EndEntities\n\
$Nodes\n1 3 1 3\n2 1 0 3\n1\n2\n3\n0 0 0\n1 0 0\n0 1 0\n$EndNodes\n\
$Elements\n2 2 1 2\n1 3 1 1\n1 1 2\n2 1 2 1\n2 1 2 3\n$EndElements\n";
        let m = parse(text).unwrap();
        assert_eq!(m.n_elements(), 1);
        let wall = m.boundary_tag("wall").unwrap();
        assert_eq!(wall.iter().copied().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn node_tags_are_repacked() {
        let text = ONE_TRIANGLE
            .replace("1 3 1 3\n2 1 0 3\n1\n2\n3\n", "1 3 10 30\n2 1 0 3\n30\n10\n20\n")
            .replace("1 1 2 3\n", "1 10 20 30\n");
        let m = parse(&text).unwrap();
        // tags sorted: 10 -> (1,0), 20 -> (0,1), 30 -> (0,0)
        assert_eq!(m.nodes(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.element(0), &[0, 1, 2]);
    }

    #[test]
    fn write_then_read_is_idempotent() {
        for (kind, ext, div) in [
            (ElementKind::Tri3, vec![1.3, 0.7], vec![3, 4]),
            (ElementKind::Quad4, vec![2.0, 1.0], vec![2, 3]),
            (ElementKind::Tet4, vec![1.0, 0.3, 0.9], vec![2, 1, 3]),
        ] {
            let mesh = generate_grid(kind, &ext, &div).unwrap();
            let once = parse(&format_gmsh(&mesh)).unwrap();
            assert_eq!(once.nodes(), mesh.nodes());
            assert_eq!(once.elements(), mesh.elements());
            let twice = parse(&format_gmsh(&once)).unwrap();
            assert_eq!(format_gmsh(&twice), format_gmsh(&once));
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_gmsh("/nonexistent/mesh.msh").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/mesh.msh"));
    }
}
