use std::collections::{BTreeMap, BTreeSet};

use super::{ElementKind, Mesh};
use crate::error::{FemError, Result};

const TAGS_2D: [&str; 4] = ["left", "right", "bottom", "top"];
const TAGS_3D: [&str; 6] = ["left", "right", "bottom", "top", "front", "back"];

/// Face tag names attached by [`generate_grid`]: `left`/`right` are x = 0 and
/// x = Lx, `bottom`/`top` are y, `front`/`back` are z.
pub fn structured_tag_names(dim: usize) -> &'static [&'static str] {
    if dim == 2 {
        &TAGS_2D
    } else {
        &TAGS_3D
    }
}

pub(crate) fn face_axis(name: &str) -> (usize, bool) {
    match name {
        "left" => (0, false),
        "right" => (0, true),
        "bottom" => (1, false),
        "top" => (1, true),
        "front" => (2, false),
        "back" => (2, true),
        _ => unreachable!("not a structured face tag: {name}"),
    }
}

// Kuhn subdivision of the unit cube along the (0,0,0)-(1,1,1) diagonal:
// one tet per permutation of the axes.
const KUHN_PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Tensor-product grid on `[0, extents_0] × ... ` with `divisions` cells per
/// direction. Nodes are numbered x-fastest. QUAD4 cells are used as-is,
/// TRI3 splits each cell along the lower-left→upper-right diagonal, TET4
/// splits each cube into six tetrahedra sharing the main diagonal.
pub fn generate_grid(kind: ElementKind, extents: &[f64], divisions: &[usize]) -> Result<Mesh> {
    let d = kind.dim();
    if extents.len() != d || divisions.len() != d {
        return Err(FemError::InvalidParameter(format!(
            "{} grid needs {d} extents and {d} divisions, got {} and {}",
            kind.name(),
            extents.len(),
            divisions.len()
        )));
    }
    if divisions.iter().any(|&n| n == 0) {
        return Err(FemError::InvalidParameter("grid divisions must be >= 1".into()));
    }
    if extents.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(FemError::InvalidParameter("grid extents must be positive".into()));
    }

    let np: Vec<usize> = divisions.iter().map(|n| n + 1).collect();
    let n_nodes: usize = np.iter().product();
    let mut nodes = Vec::with_capacity(n_nodes * d);
    let coord = |axis: usize, i: usize| extents[axis] * i as f64 / divisions[axis] as f64;
    let nz = if d == 3 { np[2] } else { 1 };
    for k in 0..nz {
        for j in 0..np[1] {
            for i in 0..np[0] {
                nodes.push(coord(0, i));
                nodes.push(coord(1, j));
                if d == 3 {
                    nodes.push(coord(2, k));
                }
            }
        }
    }

    let id = |i: usize, j: usize, k: usize| i + np[0] * (j + np[1] * k);
    let mut elements = Vec::new();
    match kind {
        ElementKind::Quad4 | ElementKind::Tri3 => {
            for j in 0..divisions[1] {
                for i in 0..divisions[0] {
                    let (n00, n10, n01, n11) = (id(i, j, 0), id(i + 1, j, 0), id(i, j + 1, 0), id(i + 1, j + 1, 0));
                    if kind == ElementKind::Quad4 {
                        elements.extend_from_slice(&[n00, n10, n11, n01]);
                    } else {
                        elements.extend_from_slice(&[n00, n10, n11]);
                        elements.extend_from_slice(&[n00, n11, n01]);
                    }
                }
            }
        }
        ElementKind::Tet4 => {
            for k in 0..divisions[2] {
                for j in 0..divisions[1] {
                    for i in 0..divisions[0] {
                        for perm in KUHN_PERMUTATIONS {
                            let mut corner = [i, j, k];
                            let mut tet = [id(i, j, k), 0, 0, 0];
                            for (step, &axis) in perm.iter().enumerate() {
                                corner[axis] += 1;
                                tet[step + 1] = id(corner[0], corner[1], corner[2]);
                            }
                            // odd permutations come out negatively oriented
                            if is_odd(perm) {
                                tet.swap(1, 2);
                            }
                            elements.extend_from_slice(&tet);
                        }
                    }
                }
            }
        }
    }

    let mut boundary = BTreeMap::new();
    for &name in structured_tag_names(d) {
        let (axis, at_max) = face_axis(name);
        let target = if at_max { divisions[axis] } else { 0 };
        let mut set = BTreeSet::new();
        for k in 0..nz {
            for j in 0..np[1] {
                for i in 0..np[0] {
                    if [i, j, k][axis] == target {
                        set.insert(id(i, j, k));
                    }
                }
            }
        }
        boundary.insert(name.to_string(), set);
    }
    Mesh::with_boundary(kind, nodes, elements, boundary)
}

/// Concentric-ring TRI3 disk: ring `i` of `rings` carries `6i` equally spaced
/// nodes, and neighboring rings are zipped together by angle. Gives
/// `1 + 3n(n+1)` nodes and `6n²` triangles; outer nodes are tagged `"boundary"`.
pub fn generate_disk(center: [f64; 2], radius: f64, rings: usize) -> Result<Mesh> {
    if rings == 0 || !(radius > 0.0 && radius.is_finite()) {
        return Err(FemError::InvalidParameter(
            "disk needs rings >= 1 and a positive radius".into(),
        ));
    }
    let mut nodes = center.to_vec();
    let mut starts = vec![0usize];
    for i in 1..=rings {
        starts.push(nodes.len() / 2);
        let r = radius * i as f64 / rings as f64;
        for j in 0..6 * i {
            let t = std::f64::consts::TAU * j as f64 / (6 * i) as f64;
            nodes.push(center[0] + r * t.cos());
            nodes.push(center[1] + r * t.sin());
        }
    }
    let mut elements = Vec::with_capacity(6 * rings * rings * 3);
    for i in 1..=rings {
        let (na, nb) = (if i == 1 { 1 } else { 6 * (i - 1) }, 6 * i);
        let (sa, sb) = (starts[i - 1], starts[i]);
        // the center point never advances
        let (mut a, mut b) = (if i == 1 { 1 } else { 0 }, 0usize);
        while a < na || b < nb {
            let ia = sa + a % na;
            let ib = sb + b % nb;
            // fractional angles of the next candidate on each ring
            let next_a = if i == 1 {
                f64::INFINITY
            } else {
                (a + 1) as f64 / na as f64
            };
            let next_b = (b + 1) as f64 / nb as f64;
            if b < nb && (a >= na || next_b <= next_a) {
                elements.extend_from_slice(&[ia, ib, sb + (b + 1) % nb]);
                b += 1;
            } else {
                elements.extend_from_slice(&[ia, ib, sa + (a + 1) % na]);
                a += 1;
            }
        }
    }
    let outer: BTreeSet<usize> = (starts[rings]..nodes.len() / 2).collect();
    let mut boundary = BTreeMap::new();
    boundary.insert("boundary".to_string(), outer);
    Mesh::with_boundary(ElementKind::Tri3, nodes, elements, boundary)
}

fn is_odd(perm: [usize; 3]) -> bool {
    let mut inversions = 0;
    for a in 0..3 {
        for b in a + 1..3 {
            if perm[a] > perm[b] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}
