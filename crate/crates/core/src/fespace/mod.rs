//! Finite element spaces on [`Mesh`]es.
//!
//! Vector-valued spaces are `multiplicity` copies of a scalar family with
//! component-blocked numbering: global DOF `c * scalar_dim + s` is scalar DOF
//! `s` of component `c`.

mod basis;
mod quadrature;

use std::sync::Arc;

pub use basis::{eval_basis, BasisValues, Continuity, DofLayout, ElementFamily};
pub use quadrature::{quadrature, QuadratureRule, MAX_DEGREE as MAX_QUADRATURE_DEGREE};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Velocity/pressure element pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementPair {
    /// Taylor-Hood P2 velocity, continuous P1 pressure.
    P2P1,
    /// Taylor-Hood P3 velocity, continuous P2 pressure.
    P3P2,
    /// Crouzeix-Raviart velocity, piecewise constant pressure.
    CrP0,
}

impl ElementPair {
    pub const ALL: [ElementPair; 3] = [ElementPair::P2P1, ElementPair::P3P2, ElementPair::CrP0];

    pub fn velocity(self) -> ElementFamily {
        match self {
            ElementPair::P2P1 => ElementFamily::P2,
            ElementPair::P3P2 => ElementFamily::P3,
            ElementPair::CrP0 => ElementFamily::Cr,
        }
    }

    pub fn pressure(self) -> ElementFamily {
        match self {
            ElementPair::P2P1 => ElementFamily::P1,
            ElementPair::P3P2 => ElementFamily::P2,
            ElementPair::CrP0 => ElementFamily::P0,
        }
    }

    /// Velocity polynomial degree `m`.
    pub fn degree(self) -> u32 {
        self.velocity().degree()
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementPair::P2P1 => "p2p1",
            ElementPair::P3P2 => "p3p2",
            ElementPair::CrP0 => "crp0",
        }
    }

    /// Builds the velocity (multiplicity 2) and pressure spaces on `mesh`.
    pub fn spaces(self, mesh: Arc<Mesh>) -> Result<(FeSpace, FeSpace)> {
        Ok((
            FeSpace::new(mesh.clone(), self.velocity(), 2)?,
            FeSpace::new(mesh, self.pressure(), 1)?,
        ))
    }
}

impl std::fmt::Display for ElementPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ElementPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "p2p1" => Ok(ElementPair::P2P1),
            "p3p2" => Ok(ElementPair::P3P2),
            "crp0" | "p1ncp0" => Ok(ElementPair::CrP0),
            other => Err(Error::Unsupported(format!("unknown element pair '{other}'"))),
        }
    }
}

/// Affine map data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub origin: [f64; 2],
    /// Jacobian columns `p1 - p0` and `p2 - p0`.
    pub jacobian: [[f64; 2]; 2],
    /// Twice the area.
    pub det: f64,
}

impl CellGeometry {
    pub fn new(v: [[f64; 2]; 3]) -> Self {
        let e1 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let e2 = [v[2][0] - v[0][0], v[2][1] - v[0][1]];
        Self {
            origin: v[0],
            jacobian: [e1, e2],
            det: e1[0] * e2[1] - e2[0] * e1[1],
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    /// Physical coordinates of a barycentric point.
    pub fn map(&self, l: [f64; 3]) -> [f64; 2] {
        let [e1, e2] = self.jacobian;
        [
            self.origin[0] + l[1] * e1[0] + l[2] * e2[0],
            self.origin[1] + l[1] * e1[1] + l[2] * e2[1],
        ]
    }

    /// Maps a reference gradient to physical coordinates (`J^-T g`).
    #[inline]
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let [e1, e2] = self.jacobian;
        let inv = 1.0 / self.det;
        [
            inv * (g[0] * e2[1] - g[1] * e1[1]),
            inv * (-g[0] * e2[0] + g[1] * e1[0]),
        ]
    }
}

/// Basis values and reference gradients of a family at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub num_local: usize,
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(family: ElementFamily, rule: QuadratureRule) -> Self {
        let n = family.num_local();
        let mut values = vec![0.0; n * rule.len()];
        let mut grads = vec![[0.0; 2]; n * rule.len()];
        for (q, p) in rule.points.iter().enumerate() {
            family.eval_into(*p, &mut values[q * n..(q + 1) * n], &mut grads[q * n..(q + 1) * n]);
        }
        Self {
            rule,
            num_local: n,
            values,
            grads,
        }
    }

    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.num_local..(q + 1) * self.num_local]
    }

    pub fn ref_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.num_local..(q + 1) * self.num_local]
    }
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    family: ElementFamily,
    multiplicity: usize,
    scalar_dim: usize,
    cell_dofs: Vec<usize>,
    dof_points: Vec<[f64; 2]>,
    boundary: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, family: ElementFamily, multiplicity: usize) -> Result<Self> {
        if !(1..=2).contains(&multiplicity) {
            return Err(Error::Unsupported(format!(
                "multiplicity must be 1 or 2, got {multiplicity}"
            )));
        }
        if multiplicity == 2 && family == ElementFamily::P0 {
            return Err(Error::Unsupported(
                "P0 is a pressure space and cannot carry velocities".into(),
            ));
        }
        let n_local = family.num_local();
        let (nv, ne, nt) = (mesh.num_nodes(), mesh.num_edges(), mesh.num_triangles());
        let scalar_dim = match family {
            ElementFamily::P0 => nt,
            ElementFamily::P1 => nv,
            ElementFamily::P2 => nv + ne,
            ElementFamily::P3 => nv + 2 * ne + nt,
            ElementFamily::Cr => ne,
        };
        let mut cell_dofs = Vec::with_capacity(nt * n_local);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let edges = mesh.cell_edges()[t];
            match family {
                ElementFamily::P0 => cell_dofs.push(t),
                ElementFamily::P1 => cell_dofs.extend_from_slice(tri),
                ElementFamily::P2 => {
                    cell_dofs.extend_from_slice(tri);
                    cell_dofs.extend(edges.iter().map(|e| nv + e));
                }
                ElementFamily::P3 => {
                    cell_dofs.extend_from_slice(tri);
                    for (k, &e) in edges.iter().enumerate() {
                        // the first local edge DOF sits next to vertex k+1
                        let start = tri[(k + 1) % 3];
                        let aligned = mesh.edges()[e].nodes[0] == start;
                        let (first, second) = if aligned { (0, 1) } else { (1, 0) };
                        cell_dofs.push(nv + 2 * e + first);
                        cell_dofs.push(nv + 2 * e + second);
                    }
                    cell_dofs.push(nv + 2 * ne + t);
                }
                ElementFamily::Cr => cell_dofs.extend_from_slice(&edges),
            }
        }
        let mut dof_points = vec![[f64::NAN; 2]; scalar_dim];
        let nodes = family.local_nodes();
        for t in 0..nt {
            let geo = CellGeometry::new(mesh.vertices(t));
            for (j, &d) in cell_dofs[t * n_local..(t + 1) * n_local].iter().enumerate() {
                if dof_points[d][0].is_nan() {
                    dof_points[d] = geo.map(nodes[j]);
                }
            }
        }
        let boundary = (0..scalar_dim)
            .filter(|&d| mesh.is_boundary_point(dof_points[d]))
            .collect();
        Ok(Self {
            mesh,
            family,
            multiplicity,
            scalar_dim,
            cell_dofs,
            dof_points,
            boundary,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> ElementFamily {
        self.family
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn dim(&self) -> usize {
        self.scalar_dim * self.multiplicity
    }

    pub fn scalar_dim(&self) -> usize {
        self.scalar_dim
    }

    pub fn num_local(&self) -> usize {
        self.family.num_local()
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_triangles()
    }

    /// Scalar DOFs of cell `t` in local order.
    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        let n = self.num_local();
        &self.cell_dofs[t * n..(t + 1) * n]
    }

    pub fn cell_geometry(&self, t: usize) -> CellGeometry {
        CellGeometry::new(self.mesh.vertices(t))
    }

    /// Nodal point of each scalar DOF.
    pub fn dof_points(&self) -> &[[f64; 2]] {
        &self.dof_points
    }

    /// Scalar DOFs whose nodal point lies on the boundary, ascending.
    pub fn scalar_boundary_dofs(&self) -> &[usize] {
        &self.boundary
    }

    /// Boundary DOFs of every component, ascending.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.multiplicity)
            .flat_map(|c| self.boundary.iter().map(move |&s| c * self.scalar_dim + s))
            .collect()
    }

    pub fn tabulate(&self, degree: u32) -> Result<Tabulation> {
        Ok(Tabulation::new(self.family, quadrature(degree)?))
    }

    /// Nodal interpolant of a scalar function (`multiplicity` 1).
    pub fn interpolate_scalar(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (s, p) in self.dof_points.iter().enumerate() {
            let v = f(p[0], p[1]);
            for c in 0..self.multiplicity {
                out[c * self.scalar_dim + s] = v;
            }
        }
        out
    }

    /// Nodal interpolant of a 2-vector field.
    pub fn interpolate_vector(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Result<Vec<f64>> {
        if self.multiplicity != 2 {
            return Err(Error::param("vector interpolation needs a multiplicity-2 space"));
        }
        let mut out = vec![0.0; self.dim()];
        for (s, p) in self.dof_points.iter().enumerate() {
            let v = f(p[0], p[1]);
            out[s] = v[0];
            out[self.scalar_dim + s] = v[1];
        }
        Ok(out)
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.dim() {
            return Err(Error::Dimension {
                context: "finite element coefficients",
                expected: self.dim(),
                actual: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Value of every component at a barycentric point of cell `t`.
    pub fn eval_in_cell(&self, coeffs: &[f64], t: usize, bary: [f64; 3]) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs)?;
        let b = eval_basis(self.family, bary)?;
        let dofs = self.cell_dofs(t);
        Ok((0..self.multiplicity)
            .map(|c| {
                let off = c * self.scalar_dim;
                dofs.iter().zip(&b.values).map(|(&d, v)| coeffs[off + d] * v).sum()
            })
            .collect())
    }

    /// Point evaluation; on shared edges the value from one adjacent cell is
    /// returned (exact for continuous families).
    pub fn eval_at(&self, coeffs: &[f64], p: [f64; 2]) -> Result<Vec<f64>> {
        let (t, mut bary) = self.mesh.locate(p)?;
        for l in bary.iter_mut() {
            *l = l.clamp(0.0, 1.0);
        }
        let s: f64 = bary.iter().sum();
        bary.iter_mut().for_each(|l| *l /= s);
        self.eval_in_cell(coeffs, t, bary)
    }
}
