//! Legacy ASCII VTK output.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FemError, Result};
use crate::mesh::{ElementKind, Mesh};

/// A named field attached to points or cells. `components` is 1 (scalar) or
/// the mesh dimension (vector, padded to 3 on output).
#[derive(Debug, Clone, PartialEq)]
pub struct VtkField<'a> {
    pub name: &'a str,
    pub components: usize,
    pub values: &'a [f64],
}

impl<'a> VtkField<'a> {
    pub fn scalar(name: &'a str, values: &'a [f64]) -> Self {
        VtkField {
            name,
            components: 1,
            values,
        }
    }

    pub fn vector(name: &'a str, dim: usize, values: &'a [f64]) -> Self {
        VtkField {
            name,
            components: dim,
            values,
        }
    }
}

fn cell_type(kind: ElementKind) -> u8 {
    match kind {
        ElementKind::Tri3 => 5,
        ElementKind::Quad4 => 9,
        ElementKind::Tet4 => 10,
    }
}

fn check(field: &VtkField, count: usize, what: &str) -> Result<()> {
    if field.name.is_empty() || field.name.contains(char::is_whitespace) {
        return Err(FemError::InvalidParameter(format!(
            "VTK field name {:?} must be a single token",
            field.name
        )));
    }
    if !(field.components == 1 || (2..=3).contains(&field.components)) || field.values.len() != count * field.components
    {
        return Err(FemError::Shape {
            context: format!("VTK {what} field {}", field.name),
            expected: format!("{count} x {}", field.components),
            actual: format!("{}", field.values.len()),
        });
    }
    Ok(())
}

fn write_fields(out: &mut String, fields: &[VtkField]) {
    for f in fields {
        if f.components == 1 {
            let _ = writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
            for v in f.values {
                let _ = writeln!(out, "{v}");
            }
        } else {
            let _ = writeln!(out, "VECTORS {} double", f.name);
            for chunk in f.values.chunks(f.components) {
                let z = if f.components == 3 { chunk[2] } else { 0.0 };
                let _ = writeln!(out, "{} {} {z}", chunk[0], chunk[1]);
            }
        }
    }
}

/// Renders an unstructured-grid file. Numbers use the shortest round-trip
/// representation, so output is byte-stable for identical inputs.
pub fn format_vtk(mesh: &Mesh, title: &str, point_data: &[VtkField], cell_data: &[VtkField]) -> Result<String> {
    for f in point_data {
        check(f, mesh.n_nodes(), "point")?;
    }
    for f in cell_data {
        check(f, mesh.n_elements(), "cell")?;
    }
    let d = mesh.dim();
    let k = mesh.kind().nodes_per_element();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID",
        title.lines().next().unwrap_or("")
    );
    let _ = writeln!(out, "POINTS {} double", mesh.n_nodes());
    for i in 0..mesh.n_nodes() {
        let x = mesh.node(i);
        let z = if d == 3 { x[2] } else { 0.0 };
        let _ = writeln!(out, "{} {} {z}", x[0], x[1]);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.n_elements(), mesh.n_elements() * (k + 1));
    for e in 0..mesh.n_elements() {
        let _ = write!(out, "{k}");
        for n in mesh.element(e) {
            let _ = write!(out, " {n}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.n_elements());
    let ct = cell_type(mesh.kind());
    for _ in 0..mesh.n_elements() {
        let _ = writeln!(out, "{ct}");
    }
    if !point_data.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.n_nodes());
        write_fields(&mut out, point_data);
    }
    if !cell_data.is_empty() {
        let _ = writeln!(out, "CELL_DATA {}", mesh.n_elements());
        write_fields(&mut out, cell_data);
    }
    Ok(out)
}

pub fn write_vtk(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    title: &str,
    point_data: &[VtkField],
    cell_data: &[VtkField],
) -> Result<()> {
    let path = path.as_ref();
    let text = format_vtk(mesh, title, point_data, cell_data)?;
    std::fs::write(path, text).map_err(|e| FemError::io(path, e))
}
