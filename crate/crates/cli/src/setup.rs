//! Mesh construction and boundary selection shared by the commands.

use std::collections::BTreeSet;

use crate::config::MeshSection;
use crate::error::{CliError, CliResult};
use tg_core::mesh::gmsh::load_gmsh;
use tg_core::mesh::{generate_disk, generate_grid, ElementKind, Mesh};

pub fn build_mesh(cfg: &MeshSection) -> CliResult<Mesh> {
    if let Some(path) = &cfg.file {
        return Ok(load_gmsh(path)?);
    }
    match cfg.generator.as_str() {
        "grid" => {
            let kind = ElementKind::from_name(&cfg.kind)
                .ok_or_else(|| CliError::config(format!("mesh.kind {:?} is not tri3, quad4 or tet4", cfg.kind)))?;
            let dim = kind.dim();
            if cfg.extents.len() != dim || cfg.divisions.len() != dim {
                return Err(CliError::config(format!(
                    "mesh.extents and mesh.divisions need {dim} entries for {}",
                    kind.name()
                )));
            }
            Ok(generate_grid(kind, &cfg.extents, &cfg.divisions)?)
        }
        "disk" => Ok(generate_disk(cfg.center, cfg.radius, cfg.rings)?),
        other => Err(CliError::config(format!(
            "mesh.generator must be grid or disk, got {other:?}"
        ))),
    }
}

/// `boundary` is the topological boundary, `none` is empty, anything else
/// is a comma-separated list of mesh tags.
pub fn dirichlet_nodes(mesh: &Mesh, spec: &str) -> CliResult<BTreeSet<usize>> {
    match spec.trim() {
        "boundary" => Ok(mesh.topological_boundary_nodes()),
        "none" | "" => Ok(BTreeSet::new()),
        tags => {
            let mut nodes = BTreeSet::new();
            for t in tags.split(',').map(str::trim) {
                let set = mesh.boundary_tag(t).ok_or_else(|| {
                    let known: Vec<&str> = mesh.boundary_tags().keys().map(String::as_str).collect();
                    CliError::config(format!("mesh has no boundary tag {t:?} (known: {})", known.join(", ")))
                })?;
                nodes.extend(set.iter().copied());
            }
            Ok(nodes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_tags() {
        let cfg = MeshSection::default();
        let mesh = build_mesh(&cfg).unwrap();
        assert_eq!(mesh.n_elements(), 128);
        assert_eq!(dirichlet_nodes(&mesh, "boundary").unwrap().len(), 32);
        assert_eq!(dirichlet_nodes(&mesh, "left").unwrap().len(), 9);
        assert_eq!(dirichlet_nodes(&mesh, "left,right").unwrap().len(), 18);
        assert!(dirichlet_nodes(&mesh, "nowhere").is_err());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let cfg = MeshSection {
            kind: "tet4".into(),
            ..MeshSection::default()
        };
        assert_eq!(build_mesh(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn missing_file_names_path() {
        let cfg = MeshSection {
            file: Some("/no/such/mesh.msh".into()),
            ..MeshSection::default()
        };
        let err = build_mesh(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/no/such/mesh.msh"));
    }
}
