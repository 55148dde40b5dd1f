//! Regenerates the unstructured meshes under `data/`.
//!
//! Run: `cargo run -p tg-core --example generate_meshes -- data`

use std::path::PathBuf;

use tg_core::mesh::gmsh::write_gmsh;
use tg_core::mesh::{generate_disk, generate_grid, ElementKind};

fn main() -> tg_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir).map_err(|e| tg_core::FemError::io(&dir, e))?;

    let disk = generate_disk([0.5, 0.5], 0.5, 14)?;
    write_gmsh(&disk, dir.join("disk.msh"))?;

    // [0,1]² without the upper-right quarter
    let square = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[22, 22])?;
    let lshape = square.retain_elements(|_, c| !(c[0] > 0.5 && c[1] > 0.5))?;
    write_gmsh(&lshape, dir.join("lshape.msh"))?;

    // [0,1]³ without (0.25, 0.75)³
    let cube = generate_grid(ElementKind::Tet4, &[1.0, 1.0, 1.0], &[8, 8, 8])?;
    let hollow = cube.retain_elements(|_, c| !c.iter().all(|&x| x > 0.25 && x < 0.75))?;
    write_gmsh(&hollow, dir.join("hollow_cube.msh"))?;

    for (name, m) in [("disk", &disk), ("lshape", &lshape), ("hollow_cube", &hollow)] {
        println!("{name}: {} nodes, {} elements", m.n_nodes(), m.n_elements());
    }
    Ok(())
}
