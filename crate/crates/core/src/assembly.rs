//! Assembly of the discrete operators.
//!
//! | matrix | bilinear form |
//! |--------|---------------|
//! | `M`    | `(u, v)` |
//! | `K`    | `(grad u, grad v)` |
//! | `D`    | `(div u, div v)`, unscaled; the penalty weight is applied when the system is built |
//! | `B`    | `(q, div v)`, rows are pressure DOFs |
//! | `M_Q`  | `(p, q)` on the pressure space |
//! | `N(w)` | skew part of `((w . grad) u, v)` |
//!
//! Element loops run in parallel over fixed chunks of cells and are merged
//! in cell order, so the result is bit-identical to a serial loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{CellGeometry, FeSpace, Tabulation};
use crate::sparse::SparseMatrix;

const CHUNK: usize = 128;
const MAX_LOCAL: usize = 10;

/// Quadrature degrees used for a given velocity polynomial degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureDegrees {
    /// Mass, stiffness, grad-div and divergence coupling.
    pub matrix: u32,
    pub convection: u32,
    /// Load vectors and error norms.
    pub error: u32,
}

impl QuadratureDegrees {
    pub fn for_degree(degree: u32) -> Self {
        Self {
            matrix: (2 * degree).max(1),
            convection: (3 * degree).saturating_sub(1).max(1),
            error: (2 * degree + 4).min(crate::fespace::MAX_QUADRATURE_DEGREE),
        }
    }
}

/// Collects triplets from `cell_fn` over all cells, preserving cell order.
fn collect_cells<T, F>(n_cells: usize, parallel: bool, cell_fn: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Vec<T>) + Sync,
{
    let chunk = |start: usize| {
        let mut out = Vec::new();
        for t in start..(start + CHUNK).min(n_cells) {
            cell_fn(t, &mut out);
        }
        out
    };
    let starts: Vec<usize> = (0..n_cells).step_by(CHUNK).collect();
    let parts: Vec<Vec<T>> = if parallel {
        starts.par_iter().map(|&s| chunk(s)).collect()
    } else {
        starts.iter().map(|&s| chunk(s)).collect()
    };
    parts.into_iter().flatten().collect()
}

/// Physical gradients of the local basis at quadrature point `q`.
#[inline]
fn physical_grads(tab: &Tabulation, geo: &CellGeometry, q: usize, out: &mut [[f64; 2]]) {
    for (g, r) in out.iter_mut().zip(tab.ref_grads(q)) {
        *g = geo.push_gradient(*r);
    }
}

#[derive(Clone, Copy)]
enum ScalarForm {
    Mass,
    Stiffness,
}

fn scalar_form(space: &FeSpace, form: ScalarForm, degree: u32, parallel: bool) -> Result<Vec<(usize, usize, f64)>> {
    let tab = space.tabulate(degree)?;
    let n = space.num_local();
    Ok(collect_cells(space.num_cells(), parallel, |t, out| {
        let geo = space.cell_geometry(t);
        let dofs = space.cell_dofs(t);
        let mut local = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        let mut grads = [[0.0; 2]; MAX_LOCAL];
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.det;
            match form {
                ScalarForm::Mass => {
                    let phi = tab.values(q);
                    for i in 0..n {
                        for j in 0..n {
                            local[i][j] += w * phi[i] * phi[j];
                        }
                    }
                }
                ScalarForm::Stiffness => {
                    physical_grads(&tab, &geo, q, &mut grads[..n]);
                    for i in 0..n {
                        for j in 0..n {
                            local[i][j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                out.push((dofs[i], dofs[j], local[i][j]));
            }
        }
    }))
}

/// Repeats scalar triplets on every diagonal component block.
fn block_diagonal(space: &FeSpace, scalar: Vec<(usize, usize, f64)>) -> Result<SparseMatrix> {
    let ns = space.scalar_dim();
    let m = space.multiplicity();
    let mut trip = Vec::with_capacity(scalar.len() * m);
    for c in 0..m {
        trip.extend(scalar.iter().map(|&(i, j, v)| (c * ns + i, c * ns + j, v)));
    }
    SparseMatrix::from_triplets(space.dim(), space.dim(), trip)
}

fn matrix_degree(space: &FeSpace) -> u32 {
    QuadratureDegrees::for_degree(space.family().degree()).matrix
}

pub(crate) fn assemble_mass_impl(space: &FeSpace, parallel: bool) -> Result<SparseMatrix> {
    let s = scalar_form(space, ScalarForm::Mass, matrix_degree(space), parallel)?;
    let mut m = block_diagonal(space, s)?;
    m.set_symmetric(true);
    Ok(m)
}

/// L2 Gram matrix of the basis.
pub fn assemble_mass(space: &FeSpace) -> Result<SparseMatrix> {
    assemble_mass_impl(space, true)
}

/// Broken H1 seminorm Gram matrix `(grad u, grad v)`.
pub fn assemble_stiffness(space: &FeSpace) -> Result<SparseMatrix> {
    let s = scalar_form(space, ScalarForm::Stiffness, matrix_degree(space), true)?;
    let mut k = block_diagonal(space, s)?;
    k.set_symmetric(true);
    Ok(k)
}

fn require_velocity(space: &FeSpace) -> Result<()> {
    if space.multiplicity() != 2 {
        return Err(Error::param(format!(
            "expected a velocity space (multiplicity 2), got multiplicity {}",
            space.multiplicity()
        )));
    }
    Ok(())
}

/// `(div u, div v)` without the penalty weight.
pub fn assemble_graddiv(space: &FeSpace) -> Result<SparseMatrix> {
    require_velocity(space)?;
    let tab = space.tabulate(matrix_degree(space))?;
    let n = space.num_local();
    let ns = space.scalar_dim();
    let trip = collect_cells(space.num_cells(), true, |t, out| {
        let geo = space.cell_geometry(t);
        let dofs = space.cell_dofs(t);
        let mut local = [[[[0.0; 2]; 2]; MAX_LOCAL]; MAX_LOCAL];
        let mut g = [[0.0; 2]; MAX_LOCAL];
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.det;
            physical_grads(&tab, &geo, q, &mut g[..n]);
            for i in 0..n {
                for j in 0..n {
                    for c in 0..2 {
                        for d in 0..2 {
                            local[i][j][c][d] += w * g[i][c] * g[j][d];
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for c in 0..2 {
                    for d in 0..2 {
                        out.push((c * ns + dofs[i], d * ns + dofs[j], local[i][j][c][d]));
                    }
                }
            }
        }
    });
    let mut m = SparseMatrix::from_triplets(space.dim(), space.dim(), trip)?;
    m.set_symmetric(true);
    Ok(m)
}

/// `B[q, v] = (q, div v)`, shape `dim(Q) x dim(V)`.
pub fn assemble_divergence(velocity: &FeSpace, pressure: &FeSpace) -> Result<SparseMatrix> {
    require_velocity(velocity)?;
    if pressure.multiplicity() != 1 {
        return Err(Error::param("pressure space must be scalar"));
    }
    if !std::sync::Arc::ptr_eq(velocity.mesh(), pressure.mesh()) {
        return Err(Error::param("velocity and pressure spaces must share a mesh"));
    }
    let tab_v = velocity.tabulate(matrix_degree(velocity))?;
    let tab_q = Tabulation::new(pressure.family(), tab_v.rule.clone());
    let (nv, nq) = (velocity.num_local(), pressure.num_local());
    let ns = velocity.scalar_dim();
    let trip = collect_cells(velocity.num_cells(), true, |t, out| {
        let geo = velocity.cell_geometry(t);
        let vd = velocity.cell_dofs(t);
        let qd = pressure.cell_dofs(t);
        let mut local = [[[0.0; 2]; MAX_LOCAL]; MAX_LOCAL];
        let mut g = [[0.0; 2]; MAX_LOCAL];
        for q in 0..tab_v.rule.len() {
            let w = tab_v.rule.weights[q] * geo.det;
            physical_grads(&tab_v, &geo, q, &mut g[..nv]);
            let chi = tab_q.values(q);
            for a in 0..nq {
                for j in 0..nv {
                    local[a][j][0] += w * chi[a] * g[j][0];
                    local[a][j][1] += w * chi[a] * g[j][1];
                }
            }
        }
        for a in 0..nq {
            for j in 0..nv {
                for d in 0..2 {
                    out.push((qd[a], d * ns + vd[j], local[a][j][d]));
                }
            }
        }
    });
    SparseMatrix::from_triplets(pressure.dim(), velocity.dim(), trip)
}

/// Local skew convection matrices `1/2 (C - C^T)` with
/// `C[i][j] = ((w . grad) phi_j, phi_i)` on the scalar basis.
fn local_convection(
    space: &FeSpace,
    tab: &Tabulation,
    w: &[f64],
    t: usize,
    local: &mut [[f64; MAX_LOCAL]; MAX_LOCAL],
) {
    let n = space.num_local();
    let ns = space.scalar_dim();
    let geo = space.cell_geometry(t);
    let dofs = space.cell_dofs(t);
    let mut g = [[0.0; 2]; MAX_LOCAL];
    for row in local.iter_mut().take(n) {
        row[..n].fill(0.0);
    }
    for q in 0..tab.rule.len() {
        let wq = tab.rule.weights[q] * geo.det;
        let phi = tab.values(q);
        let mut wx = [0.0; 2];
        for (k, &d) in dofs.iter().enumerate() {
            wx[0] += w[d] * phi[k];
            wx[1] += w[ns + d] * phi[k];
        }
        physical_grads(tab, &geo, q, &mut g[..n]);
        for j in 0..n {
            let adv = wq * (wx[0] * g[j][0] + wx[1] * g[j][1]);
            for i in 0..n {
                local[i][j] += adv * phi[i];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (local[i][j] - local[j][i]);
            local[i][j] = s;
            local[j][i] = -s;
        }
        local[i][i] = 0.0;
    }
}

fn check_velocity_vector(space: &FeSpace, w: &[f64], context: &'static str) -> Result<()> {
    require_velocity(space)?;
    if w.len() != space.dim() {
        return Err(Error::Dimension {
            context,
            expected: space.dim(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// Skew-symmetric convection matrix `N(w) = 1/2 (C(w) - C(w)^T)`.
pub fn assemble_convection(space: &FeSpace, w: &[f64]) -> Result<SparseMatrix> {
    check_velocity_vector(space, w, "convecting velocity")?;
    let tab = space.tabulate(QuadratureDegrees::for_degree(space.family().degree()).convection)?;
    let n = space.num_local();
    let ns = space.scalar_dim();
    let trip = collect_cells(space.num_cells(), true, |t, out| {
        let mut local = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        local_convection(space, &tab, w, t, &mut local);
        let dofs = space.cell_dofs(t);
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    out.push((c * ns + dofs[i], c * ns + dofs[j], local[i][j]));
                }
            }
        }
    });
    SparseMatrix::from_triplets(space.dim(), space.dim(), trip)
}

/// Matrix-free `N(w) u`.
pub fn apply_convection(space: &FeSpace, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_velocity_vector(space, w, "convecting velocity")?;
    check_velocity_vector(space, u, "convected velocity")?;
    let tab = space.tabulate(QuadratureDegrees::for_degree(space.family().degree()).convection)?;
    let n = space.num_local();
    let ns = space.scalar_dim();
    // matrix-free: 1/2 ((w . grad) u, phi_i) - 1/2 ((w . grad) phi_i, u)
    let contributions = collect_cells(space.num_cells(), true, |t, out| {
        let geo = space.cell_geometry(t);
        let dofs = space.cell_dofs(t);
        let mut g = [[0.0; 2]; MAX_LOCAL];
        let mut local = [[0.0; 2]; MAX_LOCAL];
        for q in 0..tab.rule.len() {
            let wq = 0.5 * tab.rule.weights[q] * geo.det;
            let phi = tab.values(q);
            physical_grads(&tab, &geo, q, &mut g[..n]);
            let (mut wx, mut ux, mut grad_u) = ([0.0; 2], [0.0; 2], [[0.0; 2]; 2]);
            for (k, &d) in dofs.iter().enumerate() {
                for c in 0..2 {
                    let (wk, uk) = (w[c * ns + d], u[c * ns + d]);
                    wx[c] += wk * phi[k];
                    ux[c] += uk * phi[k];
                    grad_u[c][0] += uk * g[k][0];
                    grad_u[c][1] += uk * g[k][1];
                }
            }
            let conv = [0, 1].map(|c| wx[0] * grad_u[c][0] + wx[1] * grad_u[c][1]);
            for i in 0..n {
                let adv_i = wx[0] * g[i][0] + wx[1] * g[i][1];
                for c in 0..2 {
                    local[i][c] += wq * (conv[c] * phi[i] - adv_i * ux[c]);
                }
            }
        }
        for c in 0..2 {
            for (i, &d) in dofs.iter().enumerate() {
                out.push((c * ns + d, local[i][c]));
            }
        }
    });
    let mut y = vec![0.0; space.dim()];
    for (i, v) in contributions {
        y[i] += v;
    }
    Ok(y)
}

/// `F[i] = (f(., t), phi_i)` for a vector field `f` on a velocity space.
pub fn assemble_load(space: &FeSpace, f: impl Fn(f64, f64, f64) -> [f64; 2] + Sync, t: f64) -> Result<Vec<f64>> {
    require_velocity(space)?;
    let degree = QuadratureDegrees::for_degree(space.family().degree()).error;
    let tab = space.tabulate(degree)?;
    let n = space.num_local();
    let ns = space.scalar_dim();
    let contributions = collect_cells(space.num_cells(), true, |cell, out| {
        let geo = space.cell_geometry(cell);
        let dofs = space.cell_dofs(cell);
        let mut local = [[0.0; 2]; MAX_LOCAL];
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.det;
            let x = geo.map(tab.rule.points[q]);
            let fx = f(x[0], x[1], t);
            for (i, phi) in tab.values(q).iter().enumerate() {
                local[i][0] += w * fx[0] * phi;
                local[i][1] += w * fx[1] * phi;
            }
        }
        for i in 0..n {
            out.push((dofs[i], local[i]));
        }
    });
    let mut y = vec![0.0; space.dim()];
    for (i, v) in contributions {
        y[i] += v[0];
        y[ns + i] += v[1];
    }
    Ok(y)
}

/// `F[i] = (f, phi_i)` on a scalar space.
pub fn assemble_scalar_load(space: &FeSpace, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Vec<f64>> {
    if space.multiplicity() != 1 {
        return Err(Error::param("scalar load needs a scalar space"));
    }
    let degree = QuadratureDegrees::for_degree(space.family().degree().max(1)).error;
    let tab = space.tabulate(degree)?;
    let contributions = collect_cells(space.num_cells(), true, |cell, out| {
        let geo = space.cell_geometry(cell);
        let dofs = space.cell_dofs(cell);
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.det;
            let x = geo.map(tab.rule.points[q]);
            let fx = f(x[0], x[1]);
            for (i, phi) in tab.values(q).iter().enumerate() {
                out.push((dofs[i], w * fx * phi));
            }
        }
    });
    let mut y = vec![0.0; space.dim()];
    for (i, v) in contributions {
        y[i] += v;
    }
    Ok(y)
}

/// Prescribed values on boundary DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletBc {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl DirichletBc {
    /// Checks that every DOF is a boundary DOF of `space`.
    pub fn new(space: &FeSpace, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        let boundary = space.boundary_dofs();
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::param(format!("DOF {} constrained twice", w[0].0)));
            }
        }
        if let Some(&(d, _)) = entries.iter().find(|(d, _)| boundary.binary_search(d).is_err()) {
            return Err(Error::param(format!("DOF {d} is not a boundary DOF")));
        }
        let (dofs, values) = entries.into_iter().unzip();
        Ok(Self { dofs, values })
    }

    /// `u = 0` on every boundary DOF.
    pub fn homogeneous(space: &FeSpace) -> Self {
        let dofs = space.boundary_dofs();
        let values = vec![0.0; dofs.len()];
        Self { dofs, values }
    }

    /// Samples `g` at the nodal points of every boundary DOF of a velocity space.
    pub fn from_fn(space: &FeSpace, g: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        require_velocity(space)?;
        let ns = space.scalar_dim();
        let mut entries = Vec::new();
        for &s in space.scalar_boundary_dofs() {
            let p = space.dof_points()[s];
            let v = g(p[0], p[1]);
            entries.push((s, v[0]));
            entries.push((ns + s, v[1]));
        }
        Self::new(space, entries)
    }

    /// Unit tangential velocity on the lid `y = 1`, zero elsewhere. The two
    /// lid corners belong to the side walls.
    pub fn lid_driven(space: &FeSpace) -> Result<Self> {
        const TOL: f64 = 1e-12;
        Self::from_fn(space, |x, y| {
            if (y - 1.0).abs() < TOL && x > TOL && x < 1.0 - TOL {
                [1.0, 0.0]
            } else {
                [0.0, 0.0]
            }
        })
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Dense mask of length `n`: `Some(value)` on constrained DOFs.
    pub fn mask(&self, n: usize) -> Vec<Option<f64>> {
        let mut m = vec![None; n];
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            if d < n {
                m[d] = Some(v);
            }
        }
        m
    }

    /// Overwrites constrained entries of `x` with their prescribed values.
    pub fn impose(&self, x: &mut [f64]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            x[d] = v;
        }
    }
}

/// Symmetric elimination: constrained rows and columns become identity,
/// their couplings move to the right-hand side.
pub fn apply_dirichlet(a: &SparseMatrix, b: &[f64], bc: &DirichletBc) -> Result<(SparseMatrix, Vec<f64>)> {
    if a.nrows() != a.ncols() || b.len() != a.nrows() {
        return Err(Error::Dimension {
            context: "Dirichlet elimination",
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    if let Some(&d) = bc.dofs().iter().find(|&&d| d >= a.nrows()) {
        return Err(Error::param(format!("constrained DOF {d} outside the system")));
    }
    let mask = bc.mask(a.nrows());
    let mut rhs = b.to_vec();
    let mut trip = Vec::with_capacity(a.nnz());
    for i in 0..a.nrows() {
        if let Some(g) = mask[i] {
            trip.push((i, i, 1.0));
            rhs[i] = g;
            continue;
        }
        for (j, v) in a.row(i) {
            match mask[j] {
                Some(g) => rhs[i] -= v * g,
                None => trip.push((i, j, v)),
            }
        }
    }
    let mut out = SparseMatrix::from_triplets(a.nrows(), a.ncols(), trip)?;
    out.set_symmetric(a.is_symmetric());
    Ok((out, rhs))
}

/// The fixed operators of one velocity/pressure discretization.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub graddiv: SparseMatrix,
    pub divergence: SparseMatrix,
    pub pressure_mass: SparseMatrix,
    pub bc: DirichletBc,
}

impl OperatorSet {
    pub fn assemble(velocity: &FeSpace, pressure: &FeSpace, bc: DirichletBc) -> Result<Self> {
        Ok(Self {
            mass: assemble_mass(velocity)?,
            stiffness: assemble_stiffness(velocity)?,
            graddiv: assemble_graddiv(velocity)?,
            divergence: assemble_divergence(velocity, pressure)?,
            pressure_mass: pressure_mass(velocity, pressure)?,
            bc,
        })
    }
}

/// Pressure mass matrix integrated with the velocity matrix rule.
fn pressure_mass(velocity: &FeSpace, pressure: &FeSpace) -> Result<SparseMatrix> {
    let degree = matrix_degree(velocity).max(matrix_degree(pressure));
    let s = scalar_form(pressure, ScalarForm::Mass, degree, true)?;
    let mut m = SparseMatrix::from_triplets(pressure.dim(), pressure.dim(), s)?;
    m.set_symmetric(true);
    Ok(m)
}
