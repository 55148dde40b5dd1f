use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::GeometryBatch;
use crate::error::{FemError, Result};
use crate::mesh::{Mesh, ReferenceTables};

/// Scalar values at every quadrature point, flat E×Q.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureValues {
    pub n_elements: usize,
    pub n_qp: usize,
    pub data: Vec<f64>,
}

impl QuadratureValues {
    pub fn constant(n_elements: usize, n_qp: usize, value: f64) -> Self {
        QuadratureValues {
            n_elements,
            n_qp,
            data: vec![value; n_elements * n_qp],
        }
    }

    pub fn get(&self, e: usize, q: usize) -> f64 {
        self.data[e * self.n_qp + q]
    }

    pub(crate) fn check_shape(&self, n_elements: usize, n_qp: usize, context: &str) -> Result<()> {
        if self.n_elements != n_elements || self.n_qp != n_qp || self.data.len() != n_elements * n_qp {
            return Err(FemError::Shape {
                context: context.to_string(),
                expected: format!("{n_elements}×{n_qp}"),
                actual: format!("{}×{} ({} values)", self.n_elements, self.n_qp, self.data.len()),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        QuadratureValues {
            n_elements: self.n_elements,
            n_qp: self.n_qp,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }
}

pub type AnalyticFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar coefficient or source, evaluated to E×Q values on demand.
#[derive(Clone)]
pub enum CoefficientField {
    Constant(f64),
    /// One value per element, constant over the element.
    PerElement(Vec<f64>),
    /// One value per mesh node, interpolated with the shape functions.
    Nodal(Vec<f64>),
    /// Pure function of physical coordinates.
    Analytic(AnalyticFn),
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Constant(c) => write!(f, "Constant({c})"),
            CoefficientField::PerElement(v) => write!(f, "PerElement({} values)", v.len()),
            CoefficientField::Nodal(v) => write!(f, "Nodal({} values)", v.len()),
            CoefficientField::Analytic(_) => write!(f, "Analytic(..)"),
        }
    }
}

impl CoefficientField {
    pub fn analytic(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CoefficientField::Analytic(Arc::new(f))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientField::Constant(_))
    }

    /// Evaluates the field at the physical quadrature points of `geom`.
    pub fn evaluate(&self, mesh: &Mesh, geom: &GeometryBatch, tables: &ReferenceTables) -> Result<QuadratureValues> {
        let (ne, nq) = (geom.n_elements, geom.n_qp);
        let data = match self {
            CoefficientField::Constant(c) => vec![*c; ne * nq],
            CoefficientField::PerElement(v) => {
                if v.len() != ne {
                    return Err(FemError::Shape {
                        context: "per-element coefficient".into(),
                        expected: format!("{ne} values"),
                        actual: format!("{} values", v.len()),
                    });
                }
                v.iter().flat_map(|&x| std::iter::repeat(x).take(nq)).collect()
            }
            CoefficientField::Nodal(v) => {
                if v.len() != mesh.n_nodes() {
                    return Err(FemError::Shape {
                        context: "nodal coefficient".into(),
                        expected: format!("{} values", mesh.n_nodes()),
                        actual: format!("{} values", v.len()),
                    });
                }
                return Ok(super::interpolate_nodal(mesh, tables, v));
            }
            CoefficientField::Analytic(f) => {
                let d = geom.dim;
                geom.qpoints.par_chunks(d).map(|x| f(x)).collect()
            }
        };
        Ok(QuadratureValues {
            n_elements: ne,
            n_qp: nq,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::batch_geometry;
    use crate::mesh::{generate_grid, reference_tables, ElementKind};

    #[test]
    fn constant_is_exact() {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[2, 2]).unwrap();
        let t = reference_tables(ElementKind::Tri3, 2).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        let c = CoefficientField::Constant(0.1).evaluate(&mesh, &g, &t).unwrap();
        assert!(c.data.iter().all(|&v| v == 0.1));
        assert_eq!(c.data.len(), 8 * 3);
    }

    #[test]
    fn nodal_reproduces_vertex_values() {
        let mesh = generate_grid(ElementKind::Quad4, &[1.0, 1.0], &[2, 2]).unwrap();
        // a rule whose points are the vertices does not exist, so evaluate a
        // bilinear field which Q1 interpolation reproduces everywhere
        let vals: Vec<f64> = (0..mesh.n_nodes())
            .map(|i| {
                let x = mesh.node(i);
                1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]
            })
            .collect();
        let t = reference_tables(ElementKind::Quad4, 3).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        let c = CoefficientField::Nodal(vals).evaluate(&mesh, &g, &t).unwrap();
        for e in 0..g.n_elements {
            for q in 0..g.n_qp {
                let x = g.qpoint(e, q);
                let exact = 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1];
                assert!((c.get(e, q) - exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn per_element_broadcasts_and_checks_length() {
        let mesh = generate_grid(ElementKind::Tri3, &[1.0, 1.0], &[1, 1]).unwrap();
        let t = reference_tables(ElementKind::Tri3, 2).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        let c = CoefficientField::PerElement(vec![1.0, 2.0])
            .evaluate(&mesh, &g, &t)
            .unwrap();
        assert_eq!(c.data, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert!(CoefficientField::PerElement(vec![1.0]).evaluate(&mesh, &g, &t).is_err());
    }

    #[test]
    fn analytic_sees_physical_points() {
        let mesh = generate_grid(ElementKind::Tri3, &[2.0, 1.0], &[1, 1]).unwrap();
        let t = reference_tables(ElementKind::Tri3, 1).unwrap();
        let g = batch_geometry(&mesh, &t).unwrap();
        let c = CoefficientField::analytic(|x| x[0]).evaluate(&mesh, &g, &t).unwrap();
        assert!((c.get(0, 0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((c.get(1, 0) - 2.0 / 3.0).abs() < 1e-15);
    }
}
