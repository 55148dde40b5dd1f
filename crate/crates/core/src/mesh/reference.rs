//! Reference elements, quadrature rules and the precomputed basis tables
//! consumed by the batched kernels.

use super::ElementKind;
use crate::error::{FemError, Result};

/// Linear Lagrange basis on a reference cell.
///
/// TRI3 lives on {x, y ≥ 0, x + y ≤ 1}, QUAD4 on [0, 1]², TET4 on the unit
/// simplex; vertices are ordered counter-clockwise (2D) or right-handed (3D).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceElement {
    pub kind: ElementKind,
}

impl ReferenceElement {
    pub fn new(kind: ElementKind) -> Self {
        ReferenceElement { kind }
    }

    /// Local DoF count per scalar field.
    pub fn k(&self) -> usize {
        self.kind.nodes_per_element()
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Reference coordinates of the vertices (DoF points), flat k×d.
    pub fn vertices(&self) -> &'static [f64] {
        match self.kind {
            ElementKind::Tri3 => &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            ElementKind::Quad4 => &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            ElementKind::Tet4 => &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn shape_values(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ElementKind::Tri3 => vec![1.0 - x[0] - x[1], x[0], x[1]],
            ElementKind::Quad4 => {
                let (s, t) = (x[0], x[1]);
                vec![(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t]
            }
            ElementKind::Tet4 => vec![1.0 - x[0] - x[1] - x[2], x[0], x[1], x[2]],
        }
    }

    /// Reference gradients, flat k×d.
    pub fn shape_gradients(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ElementKind::Tri3 => vec![-1.0, -1.0, 1.0, 0.0, 0.0, 1.0],
            ElementKind::Quad4 => {
                let (s, t) = (x[0], x[1]);
                vec![-(1.0 - t), -(1.0 - s), 1.0 - t, -s, t, s, -t, 1.0 - s]
            }
            ElementKind::Tet4 => vec![
                -1.0, -1.0, -1.0, //
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0,
            ],
        }
    }
}

/// Quadrature rule on a reference cell.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    /// Flat Q×d reference coordinates.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize, dim: usize) -> &[f64] {
        &self.points[q * dim..(q + 1) * dim]
    }

    pub fn new(kind: ElementKind, degree: usize) -> Result<Self> {
        if !(1..=4).contains(&degree) {
            return Err(FemError::QuadratureDegree { degree });
        }
        let (points, weights) = match kind {
            ElementKind::Tri3 => triangle_rule(degree),
            ElementKind::Quad4 => square_rule(degree),
            ElementKind::Tet4 => tetrahedron_rule(degree),
        };
        Ok(QuadratureRule {
            degree,
            points,
            weights,
        })
    }
}

fn triangle_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    match degree {
        1 => (vec![1.0 / 3.0, 1.0 / 3.0], vec![0.5]),
        2 => (
            vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            vec![1.0 / 6.0; 3],
        ),
        _ => {
            // six-point rule exact through degree 4
            let s10 = 10f64.sqrt();
            let inner = (38.0 - 44.0 * (0.4f64).sqrt()).sqrt();
            let a = (8.0 - s10 + inner) / 18.0;
            let b = (8.0 - s10 - inner) / 18.0;
            let root = (213125.0 - 53320.0 * s10).sqrt();
            let wa = 0.5 * (620.0 + root) / 3720.0;
            let wb = 0.5 * (620.0 - root) / 3720.0;
            let mut pts = Vec::with_capacity(12);
            let mut w = Vec::with_capacity(6);
            for (c, wc) in [(a, wa), (b, wb)] {
                for p in [[c, c], [1.0 - 2.0 * c, c], [c, 1.0 - 2.0 * c]] {
                    pts.extend_from_slice(&p);
                    w.push(wc);
                }
            }
            (pts, w)
        }
    }
}

fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.5], vec![1.0]),
        2 => {
            let g = 0.5 / 3f64.sqrt();
            (vec![0.5 - g, 0.5 + g], vec![0.5, 0.5])
        }
        _ => {
            let g = 0.5 * (0.6f64).sqrt();
            (vec![0.5 - g, 0.5, 0.5 + g], vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
        }
    }
}

fn square_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    let n = match degree {
        1 => 1,
        2 | 3 => 2,
        _ => 3,
    };
    let (x, w) = gauss_legendre_unit(n);
    let mut pts = Vec::with_capacity(2 * n * n);
    let mut ws = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            pts.extend_from_slice(&[x[i], x[j]]);
            ws.push(w[i] * w[j]);
        }
    }
    (pts, ws)
}

fn tetrahedron_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut w = Vec::new();
    // barycentric (l0, l1, l2, l3) -> reference (l1, l2, l3)
    let mut push = |bary: [f64; 4], weight: f64| {
        pts.extend_from_slice(&bary[1..]);
        w.push(weight);
    };
    match degree {
        1 => push([0.25; 4], 1.0 / 6.0),
        2 => {
            let a = (5.0 - 5f64.sqrt()) / 20.0;
            let b = 1.0 - 3.0 * a;
            for p in 0..4 {
                let mut bary = [a; 4];
                bary[p] = b;
                push(bary, 1.0 / 24.0);
            }
        }
        3 => {
            push([0.25; 4], -2.0 / 15.0);
            for p in 0..4 {
                let mut bary = [1.0 / 6.0; 4];
                bary[p] = 0.5;
                push(bary, 3.0 / 40.0);
            }
        }
        _ => {
            push([0.25; 4], -74.0 / 5625.0);
            for p in 0..4 {
                let mut bary = [1.0 / 14.0; 4];
                bary[p] = 11.0 / 14.0;
                push(bary, 343.0 / 45000.0);
            }
            let s = (5.0f64 / 14.0).sqrt();
            let (a, b) = ((1.0 + s) / 4.0, (1.0 - s) / 4.0);
            for (p, q) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
                let mut bary = [b; 4];
                bary[p] = a;
                bary[q] = a;
                push(bary, 56.0 / 2250.0);
            }
        }
    }
    (pts, w)
}

/// Basis values and gradients tabulated at the quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTables {
    pub element: ReferenceElement,
    pub rule: QuadratureRule,
    /// Flat Q×k basis values B̂.
    pub values: Vec<f64>,
    /// Flat Q×k×d reference gradients Ĝ.
    pub gradients: Vec<f64>,
}

impl ReferenceTables {
    pub fn kind(&self) -> ElementKind {
        self.element.kind
    }

    pub fn n_qp(&self) -> usize {
        self.rule.n_points()
    }

    pub fn k(&self) -> usize {
        self.element.k()
    }

    pub fn dim(&self) -> usize {
        self.element.dim()
    }
}

/// Tabulates the reference element and a quadrature rule of the given degree.
pub fn reference_tables(kind: ElementKind, quadrature_degree: usize) -> Result<ReferenceTables> {
    let element = ReferenceElement::new(kind);
    let rule = QuadratureRule::new(kind, quadrature_degree)?;
    let d = kind.dim();
    let mut values = Vec::with_capacity(rule.n_points() * element.k());
    let mut gradients = Vec::with_capacity(rule.n_points() * element.k() * d);
    for q in 0..rule.n_points() {
        let x = rule.point(q, d);
        values.extend(element.shape_values(x));
        gradients.extend(element.shape_gradients(x));
    }
    Ok(ReferenceTables {
        element,
        rule,
        values,
        gradients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [ElementKind; 3] = [ElementKind::Tri3, ElementKind::Quad4, ElementKind::Tet4];

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of the monomial x^i y^j (z^l) over the reference cell.
    fn monomial_integral(kind: ElementKind, exps: &[u32]) -> f64 {
        match kind {
            ElementKind::Quad4 => exps.iter().map(|&e| 1.0 / f64::from(e + 1)).product(),
            _ => {
                let total: u32 = exps.iter().sum::<u32>() + kind.dim() as u32;
                exps.iter().map(|&e| factorial(e)).product::<f64>() / factorial(total)
            }
        }
    }

    fn exponents(dim: usize, max: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        for i in 0..=max {
            for j in 0..=max - i {
                if dim == 2 {
                    out.push(vec![i, j]);
                } else {
                    for l in 0..=max - i - j {
                        out.push(vec![i, j, l]);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn weights_sum_to_reference_measure() {
        for kind in KINDS {
            for degree in 1..=4 {
                let rule = QuadratureRule::new(kind, degree).unwrap();
                let s: f64 = rule.weights.iter().sum();
                assert!((s - kind.reference_measure()).abs() < 1e-15, "{kind:?} {degree}");
            }
        }
    }

    #[test]
    fn rules_are_exact_to_declared_degree() {
        for kind in KINDS {
            let d = kind.dim();
            for degree in 1..=4 {
                let rule = QuadratureRule::new(kind, degree).unwrap();
                // total degree for simplices; the square rules are tensor
                // products, exact per coordinate
                for exps in exponents(d, degree as u32) {
                    let approx: f64 = (0..rule.n_points())
                        .map(|q| {
                            let x = rule.point(q, d);
                            rule.weights[q]
                                * exps
                                    .iter()
                                    .enumerate()
                                    .map(|(c, &e)| x[c].powi(e as i32))
                                    .product::<f64>()
                        })
                        .sum();
                    let exact = monomial_integral(kind, &exps);
                    assert!(
                        (approx - exact).abs() < 1e-14,
                        "{kind:?} degree {degree} monomial {exps:?}: {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn quad_degree_three_is_two_by_two_gauss() {
        let rule = QuadratureRule::new(ElementKind::Quad4, 3).unwrap();
        assert_eq!(rule.n_points(), 4);
        let g = 0.5 / 3f64.sqrt();
        assert!((rule.points[0] - (0.5 - g)).abs() < 1e-16);
        assert!(rule.weights.iter().all(|&w| w == 0.25));
    }

    #[test]
    fn triangle_centroid_rule() {
        let rule = QuadratureRule::new(ElementKind::Tri3, 1).unwrap();
        assert_eq!(rule.points, vec![1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(rule.weights, vec![0.5]);
    }

    #[test]
    fn unsupported_degree() {
        let err = reference_tables(ElementKind::Tri3, 5).unwrap_err();
        assert!(err.to_string().contains("1, 2, 3, 4"));
        assert!(reference_tables(ElementKind::Tri3, 0).is_err());
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        for kind in KINDS {
            for degree in 1..=4 {
                let t = reference_tables(kind, degree).unwrap();
                let (k, d) = (t.k(), t.dim());
                for q in 0..t.n_qp() {
                    let s: f64 = t.values[q * k..(q + 1) * k].iter().sum();
                    assert!((s - 1.0).abs() < 1e-14);
                    for c in 0..d {
                        let g: f64 = (0..k).map(|a| t.gradients[(q * k + a) * d + c]).sum();
                        assert!(g.abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn kronecker_property_at_vertices() {
        for kind in KINDS {
            let el = ReferenceElement::new(kind);
            let d = el.dim();
            for b in 0..el.k() {
                let v = el.shape_values(&el.vertices()[b * d..(b + 1) * d]);
                for (a, phi) in v.iter().enumerate() {
                    assert_eq!(*phi, if a == b { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        for kind in KINDS {
            let el = ReferenceElement::new(kind);
            let d = el.dim();
            let x: Vec<f64> = (0..d).map(|c| 0.2 + 0.1 * c as f64).collect();
            let g = el.shape_gradients(&x);
            for c in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let (vp, vm) = (el.shape_values(&xp), el.shape_values(&xm));
                for a in 0..el.k() {
                    let fd = (vp[a] - vm[a]) / (2.0 * h);
                    assert!((fd - g[a * d + c]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn tri3_gradients_constant() {
        let t = reference_tables(ElementKind::Tri3, 2).unwrap();
        for q in 0..t.n_qp() {
            assert_eq!(&t.gradients[q * 6..(q + 1) * 6], &[-1.0, -1.0, 1.0, 0.0, 0.0, 1.0]);
        }
    }
}
