#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tg_core::mesh::{generate_grid, ElementKind, Mesh};

pub const KINDS: [ElementKind; 3] = [ElementKind::Tri3, ElementKind::Quad4, ElementKind::Tet4];

/// Grid with at most `max_elements` cells, jittered interior nodes, an
/// optional random element subset and a shuffled node numbering.
pub fn random_mesh(rng: &mut ChaCha8Rng, kind: ElementKind, max_elements: usize) -> Mesh {
    let d = kind.dim();
    let per_cell = match kind {
        ElementKind::Tri3 => 2,
        ElementKind::Quad4 => 1,
        ElementKind::Tet4 => 6,
    };
    let budget = (max_elements / per_cell).max(1);
    let mut divisions = vec![1usize; d];
    let target = rng.gen_range(1..=budget);
    // grow one random axis at a time while staying inside the budget
    loop {
        let axis = rng.gen_range(0..d);
        let cells: usize = divisions.iter().product();
        if cells / divisions[axis] * (divisions[axis] + 1) > target {
            break;
        }
        divisions[axis] += 1;
    }
    let extents: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
    let grid = generate_grid(kind, &extents, &divisions).unwrap();
    let jitter = if kind == ElementKind::Tet4 { 0.08 } else { 0.15 };
    let mut nodes = grid.nodes().to_vec();
    for i in 0..grid.n_nodes() {
        for a in 0..d {
            let x = nodes[i * d + a];
            let h = extents[a] / divisions[a] as f64;
            let interior = x > 1e-12 && x < extents[a] - 1e-12;
            if interior {
                nodes[i * d + a] = x + rng.gen_range(-jitter..jitter) * h;
            }
        }
    }
    let mut perm: Vec<usize> = (0..grid.n_nodes()).collect();
    perm.shuffle(rng);
    let mut shuffled = vec![0.0; nodes.len()];
    for (old, &new) in perm.iter().enumerate() {
        shuffled[new * d..(new + 1) * d].copy_from_slice(&nodes[old * d..(old + 1) * d]);
    }
    let elements = grid.elements().iter().map(|&n| perm[n]).collect();
    let mesh = Mesh::new(kind, shuffled, elements).unwrap();
    if mesh.n_elements() > 4 && rng.gen_bool(0.3) {
        let keep: Vec<bool> = (0..mesh.n_elements()).map(|_| rng.gen_bool(0.8)).collect();
        if keep.iter().any(|&k| k) {
            return mesh.retain_elements(|e, _| keep[e]).unwrap();
        }
    }
    mesh
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
