//! Per-step penalized systems and their fixed-point solution.
//!
//! One backward Euler step solves, for the unknowns `(U, P)`,
//!
//! ```text
//! [ M/k + nu K + N(U)   -B^T  ] [U]   [F + M U_prev / k]
//! [ nu B              eps M_Q ] [P] = [       0        ]
//! ```
//!
//! The convection matrix is lagged (Picard). Each iteration is written as a
//! defect correction `x += A(w)^-1 (rhs - A(U) x)` with the factors of
//! `A(w)`; with `w` equal to the current iterate this is plain Picard, and
//! with an older `w` it is a chord iteration that converges to the same
//! fixed point while reusing the factorization.

mod lu;

use std::sync::Arc;

pub use lu::{linear_solve, solve_refined, LuFactorization, SOLVE_TOLERANCE};

use crate::assembly::{apply_convection, apply_dirichlet, assemble_convection, DirichletBc, OperatorSet};
use crate::error::{Error, Result};
use crate::fespace::{ElementFamily, ElementPair, FeSpace};
use crate::mesh::Mesh;
use crate::sparse::SparseMatrix;

pub(crate) use lu::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// `u = 0` on the whole boundary.
    NoSlip,
    /// Unit tangential velocity on the top wall.
    LidDriven,
}

/// Spaces and fixed operators for one mesh and element pair.
#[derive(Debug)]
pub struct Discretization {
    pub pair: ElementPair,
    pub velocity: FeSpace,
    pub pressure: FeSpace,
    pub ops: OperatorSet,
}

impl Discretization {
    pub fn new(level: u32, pair: ElementPair, boundary: BoundaryKind) -> Result<Self> {
        Self::from_mesh(Arc::new(Mesh::unit_square(level)?), pair, boundary)
    }

    pub fn from_mesh(mesh: Arc<Mesh>, pair: ElementPair, boundary: BoundaryKind) -> Result<Self> {
        let (velocity, pressure) = pair.spaces(mesh)?;
        let bc = match boundary {
            BoundaryKind::NoSlip => DirichletBc::homogeneous(&velocity),
            BoundaryKind::LidDriven => DirichletBc::lid_driven(&velocity)?,
        };
        let ops = OperatorSet::assemble(&velocity, &pressure, bc)?;
        Ok(Self {
            pair,
            velocity,
            pressure,
            ops,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.velocity.mesh()
    }

    pub fn velocity_dim(&self) -> usize {
        self.velocity.dim()
    }

    pub fn pressure_dim(&self) -> usize {
        self.pressure.dim()
    }

    /// `sqrt(u^T M u)`, the L2 norm of a velocity field.
    pub fn mass_norm(&self, u: &[f64]) -> f64 {
        self.ops.mass.quad_form(u).max(0.0).sqrt()
    }

    /// `|| nu B U + eps M_Q P ||`, the algebraic residual of the penalty row.
    pub fn penalty_residual(&self, nu: f64, eps: f64, u: &[f64], p: &[f64]) -> f64 {
        let mut r = vec![0.0; self.pressure_dim()];
        self.ops.divergence.mul_vec_acc(nu, u, &mut r);
        self.ops.pressure_mass.mul_vec_acc(eps, p, &mut r);
        norm(&r)
    }
}

/// Viscosity, penalty parameter and time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    pub nu: f64,
    pub eps: f64,
    pub dt: f64,
}

impl Parameters {
    pub fn new(nu: f64, eps: f64, dt: f64) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("viscosity nu", nu)?;
        positive("penalty parameter eps", eps)?;
        positive("time step", dt)?;
        Ok(Self { nu, eps, dt })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convection {
    /// Skew-symmetric convection `N(U)`.
    Skew,
    /// Linear (Stokes) problem.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemForm {
    /// Block system in `(U, P)`; valid for every pair.
    Coupled,
    /// Pressure eliminated through the diagonal P0 mass matrix: solves
    /// `M/k + nu K + (nu/eps) D + N(U)` and recovers `P = -(nu/eps) M_Q^-1 B U`.
    Eliminated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorReuse {
    /// Refactor at every iterate: classical Picard.
    EveryIteration,
    /// Keep the current factors (across time steps too) while successive
    /// increments shrink by at least `max_ratio`; refactor otherwise.
    WhileContracting { max_ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    /// Relative increment `|U_new - U_old| / |U_new|` that ends the iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Growth of successive increments (with fresh factors) that is treated
    /// as divergence.
    pub divergence_factor: f64,
    pub reuse: FactorReuse,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            divergence_factor: 2.0,
            reuse: FactorReuse::EveryIteration,
        }
    }
}

impl PicardConfig {
    /// Default tolerances with factorization reuse, for long marches.
    pub fn reusing() -> Self {
        Self {
            reuse: FactorReuse::WhileContracting { max_ratio: 0.2 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::param("Picard tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("Picard needs at least one iteration"));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::param("divergence factor must exceed 1"));
        }
        if let FactorReuse::WhileContracting { max_ratio } = self.reuse {
            if !(max_ratio > 0.0 && max_ratio < 1.0) {
                return Err(Error::param("reuse contraction ratio must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
    pub last_increment: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub factorizations: usize,
    pub iterations: usize,
}

struct Factors {
    anchor: Vec<f64>,
    lu: LuFactorization,
}

/// Solver for the per-step penalized systems of one discretization.
///
/// Holds cached factors, so an instance must not be shared between threads
/// that step concurrently; independent runs use independent instances.
pub struct PenalizedSolver {
    disc: Arc<Discretization>,
    params: Parameters,
    convection: Convection,
    form: SystemForm,
    cfg: PicardConfig,
    /// Unconstrained linear part of the system matrix.
    linear: SparseMatrix,
    factors: Option<Factors>,
    stale: bool,
    stats: SolverStats,
}

impl PenalizedSolver {
    pub fn new(
        disc: Arc<Discretization>,
        params: Parameters,
        convection: Convection,
        form: SystemForm,
        cfg: PicardConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let Parameters { nu, eps, dt } = params;
        let ops = &disc.ops;
        let linear = match form {
            SystemForm::Coupled => {
                let a11 = ops.mass.add_scaled(1.0 / dt, &ops.stiffness, nu)?;
                let nv = disc.velocity_dim();
                let n = nv + disc.pressure_dim();
                let mut trip: Vec<(usize, usize, f64)> = a11.triplets().collect();
                for (q, j, v) in ops.divergence.triplets() {
                    trip.push((j, nv + q, -v));
                    trip.push((nv + q, j, nu * v));
                }
                trip.extend(ops.pressure_mass.triplets().map(|(i, j, v)| (nv + i, nv + j, eps * v)));
                SparseMatrix::from_triplets(n, n, trip)?
            }
            SystemForm::Eliminated => {
                if disc.pressure.family() != ElementFamily::P0 {
                    return Err(Error::Unsupported(format!(
                        "pressure elimination needs a P0 pressure space, got {}",
                        disc.pressure.family()
                    )));
                }
                ops.mass
                    .add_scaled(1.0 / dt, &ops.stiffness, nu)?
                    .add_scaled(1.0, &ops.graddiv, nu / eps)?
            }
        };
        Ok(Self {
            disc,
            params,
            convection,
            form,
            cfg,
            linear,
            factors: None,
            stale: false,
            stats: SolverStats::default(),
        })
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn params(&self) -> Parameters {
        self.params
    }

    pub fn config(&self) -> &PicardConfig {
        &self.cfg
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    fn system_dim(&self) -> usize {
        self.linear.nrows()
    }

    /// Unconstrained system matrix with convection lagged at `w`.
    pub fn system_matrix(&self, w: &[f64]) -> Result<SparseMatrix> {
        match self.convection {
            Convection::Off => Ok(self.linear.clone()),
            Convection::Skew => {
                let n = assemble_convection(&self.disc.velocity, w)?;
                let dim = self.system_dim();
                let embedded = SparseMatrix::from_triplets(dim, dim, n.triplets().collect())?;
                self.linear.add_scaled(1.0, &embedded, 1.0)
            }
        }
    }

    /// Unconstrained right-hand side `[F + M U_prev / k, 0]`.
    pub fn rhs(&self, u_prev: &[f64], load: &[f64]) -> Result<Vec<f64>> {
        let nv = self.disc.velocity_dim();
        for (len, context) in [(u_prev.len(), "previous velocity"), (load.len(), "load vector")] {
            if len != nv {
                return Err(Error::Dimension {
                    context,
                    expected: nv,
                    actual: len,
                });
            }
        }
        let mut b = vec![0.0; self.system_dim()];
        b[..nv].copy_from_slice(load);
        self.disc.ops.mass.mul_vec_acc(1.0 / self.params.dt, u_prev, &mut b[..nv]);
        Ok(b)
    }

    fn refactor(&mut self, w: &[f64]) -> Result<()> {
        let a = self.system_matrix(w)?;
        let zeros = vec![0.0; a.nrows()];
        let (constrained, _) = apply_dirichlet(&a, &zeros, &self.disc.ops.bc)?;
        let lu = LuFactorization::with_previous(&constrained, self.factors.as_ref().map(|f| &f.lu))?;
        self.factors = Some(Factors {
            anchor: w.to_vec(),
            lu,
        });
        self.stale = false;
        self.stats.factorizations += 1;
        Ok(())
    }

    /// Velocity at which the cached factors were computed, unless they are
    /// due for replacement.
    pub fn anchor(&self) -> Option<&[f64]> {
        self.factors.as_ref().filter(|_| !self.stale).map(|f| f.anchor.as_slice())
    }

    /// Refactors at `w`, e.g. to resume a run from a checkpoint.
    pub fn set_anchor(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.disc.velocity_dim() {
            return Err(Error::Dimension {
                context: "factorization anchor",
                expected: self.disc.velocity_dim(),
                actual: w.len(),
            });
        }
        self.refactor(w)
    }

    /// `rhs - A(U) x` with zero entries on constrained rows.
    fn nonlinear_residual(&self, rhs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let nv = self.disc.velocity_dim();
        let mut r = rhs.to_vec();
        self.linear.mul_vec_acc(-1.0, x, &mut r);
        if self.convection == Convection::Skew {
            let u = &x[..nv];
            let nu = apply_convection(&self.disc.velocity, u, u)?;
            r[..nv].iter_mut().zip(&nu).for_each(|(r, v)| *r -= v);
        }
        for &d in self.disc.ops.bc.dofs() {
            r[d] = 0.0;
        }
        Ok(r)
    }

    fn recover_pressure(&self, u: &[f64]) -> Vec<f64> {
        let Parameters { nu, eps, .. } = self.params;
        let bu = self.disc.ops.divergence.mul_vec(u);
        let diag = self.disc.ops.pressure_mass.diagonal();
        bu.iter().zip(&diag).map(|(b, m)| -(nu / eps) * b / m).collect()
    }

    fn split(&self, x: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let nv = self.disc.velocity_dim();
        match self.form {
            SystemForm::Coupled => {
                let p = x[nv..].to_vec();
                let mut u = x;
                u.truncate(nv);
                (u, p)
            }
            SystemForm::Eliminated => {
                let p = self.recover_pressure(&x);
                (x, p)
            }
        }
    }

    /// One linear solve with convection frozen at `w`.
    pub fn picard_step(&mut self, u_prev: &[f64], w: &[f64], load: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let a = self.system_matrix(w)?;
        let b = self.rhs(u_prev, load)?;
        let (a, b) = apply_dirichlet(&a, &b, &self.disc.ops.bc)?;
        let x = linear_solve(&a, &b)?;
        self.stats.factorizations += 1;
        self.stats.iterations += 1;
        Ok(self.split(x))
    }

    /// Fixed-point solve of one backward Euler step, seeded with the
    /// previous step's solution.
    pub fn nonlinear_solve(&mut self, u_prev: &[f64], p_prev: &[f64], load: &[f64]) -> Result<NonlinearSolution> {
        self.nonlinear_solve_from(u_prev, u_prev, p_prev, load)
    }

    /// As [`Self::nonlinear_solve`], starting the iteration at `(u0, p0)`;
    /// `p0` is ignored by the eliminated form.
    pub fn nonlinear_solve_from(&mut self, u_prev: &[f64], u0: &[f64], p0: &[f64], load: &[f64]) -> Result<NonlinearSolution> {
        let nv = self.disc.velocity_dim();
        let rhs = self.rhs(u_prev, load)?;
        if u0.len() != nv {
            return Err(Error::Dimension {
                context: "initial velocity iterate",
                expected: nv,
                actual: u0.len(),
            });
        }
        let mut x = u0.to_vec();
        if self.form == SystemForm::Coupled {
            if p0.len() != self.disc.pressure_dim() {
                return Err(Error::Dimension {
                    context: "initial pressure iterate",
                    expected: self.disc.pressure_dim(),
                    actual: p0.len(),
                });
            }
            x.extend_from_slice(p0);
        }
        self.disc.ops.bc.impose(&mut x);

        let mut previous_step: Option<f64> = None;
        let mut increment = f64::INFINITY;
        for iteration in 1..=self.cfg.max_iterations {
            let needs_factors = match (self.convection, self.cfg.reuse) {
                (Convection::Off, _) => self.factors.is_none(),
                (Convection::Skew, FactorReuse::EveryIteration) => true,
                (Convection::Skew, FactorReuse::WhileContracting { .. }) => self.factors.is_none() || self.stale,
            };
            if needs_factors {
                let w = x[..nv].to_vec();
                self.refactor(&w)?;
            }
            let r = self.nonlinear_residual(&rhs, &x)?;
            let factors = self.factors.as_ref().expect("factors present after refactor");
            let delta = factors.lu.solve(&r);
            x.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
            self.stats.iterations += 1;

            let step = norm(&delta[..nv]);
            increment = step / norm(&x[..nv]).max(1e-30);
            if !increment.is_finite() {
                return Err(Error::Diverged { iteration, increment });
            }
            if self.convection == Convection::Off || increment < self.cfg.tolerance {
                let (u, p) = self.split(x);
                return Ok(NonlinearSolution {
                    u,
                    p,
                    iterations: iteration,
                    last_increment: increment,
                });
            }
            if let Some(prev) = previous_step {
                let ratio = step / prev.max(f64::MIN_POSITIVE);
                if needs_factors && ratio > self.cfg.divergence_factor {
                    return Err(Error::Diverged { iteration, increment });
                }
                if let FactorReuse::WhileContracting { max_ratio } = self.cfg.reuse {
                    if ratio > max_ratio {
                        self.stale = true;
                    }
                }
            }
            previous_step = Some(step);
        }
        // the cached factors did not help; start fresh next time
        self.stale = true;
        Err(Error::NonConvergence {
            iterations: self.cfg.max_iterations,
            last_increment: increment,
        })
    }
}
