//! Manufactured solutions, discrete error norms and observed convergence rates.

use crate::assembly::QuadratureDegrees;
use crate::error::{Error, Result};
use crate::fespace::{CellGeometry, FeSpace, Tabulation};

/// Closed-form solution of the Navier-Stokes equations on the unit square
/// with its forcing.
///
/// The velocity derives from the stream function
/// `psi = e^t x^2 (x-1)^2 y^2 (y-1)^2` as `u = (psi_y, -psi_x)`, so it is
/// divergence free and vanishes on the boundary; the pressure is
/// `p = 2 e^t (x - y)`, which has zero mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    nu: f64,
}

/// `X(s) = s^2 (s-1)^2` and its first three derivatives.
fn profile(s: f64) -> [f64; 4] {
    [
        s * s * (s - 1.0) * (s - 1.0),
        4.0 * s * s * s - 6.0 * s * s + 2.0 * s,
        12.0 * s * s - 12.0 * s + 2.0,
        24.0 * s - 12.0,
    ]
}

impl ManufacturedCase {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::param(format!("viscosity must be positive, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (a, b, e) = (profile(x), profile(y), t.exp());
        [e * a[0] * b[1], -e * a[1] * b[0]]
    }

    /// `g[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
        let (a, b, e) = (profile(x), profile(y), t.exp());
        [
            [e * a[1] * b[1], e * a[0] * b[2]],
            [-e * a[2] * b[0], -e * a[1] * b[1]],
        ]
    }

    pub fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        2.0 * t.exp() * (x - y)
    }

    /// `u_t + (u . grad) u - nu lap u + grad p`; the solution is
    /// proportional to `e^t`, so `u_t = u`.
    pub fn forcing(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (a, b, e) = (profile(x), profile(y), t.exp());
        let u = self.velocity(x, y, t);
        let g = self.velocity_gradient(x, y, t);
        let lap = [
            e * (a[2] * b[1] + a[0] * b[3]),
            -e * (a[3] * b[0] + a[1] * b[2]),
        ];
        let grad_p = [2.0 * e, -2.0 * e];
        std::array::from_fn(|i| {
            u[i] + u[0] * g[i][0] + u[1] * g[i][1] - self.nu * lap[i] + grad_p[i]
        })
    }

    /// Spatial parts `(a, b)` of the forcing `f = e^t a + e^(2t) b`: `b` is
    /// the convective term, `a` everything linear in the solution.
    pub fn forcing_parts(&self, x: f64, y: f64) -> ([f64; 2], [f64; 2]) {
        let u = self.velocity(x, y, 0.0);
        let g = self.velocity_gradient(x, y, 0.0);
        let f = self.forcing(x, y, 0.0);
        let b: [f64; 2] = std::array::from_fn(|i| u[0] * g[i][0] + u[1] * g[i][1]);
        ([f[0] - b[0], f[1] - b[1]], b)
    }
}

/// Velocity and pressure errors at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTriple {
    pub t: f64,
    pub velocity_l2: f64,
    /// Full H1 norm: L2 part plus (broken) gradient seminorm.
    pub velocity_h1: f64,
    /// L2 norm after removing the mean of both pressures.
    pub pressure_l2: f64,
}

fn error_degree(space: &FeSpace) -> u32 {
    QuadratureDegrees::for_degree(space.family().degree()).error
}

fn check_dim(space: &FeSpace, coeffs: &[f64], context: &'static str) -> Result<()> {
    if coeffs.len() != space.dim() {
        return Err(Error::Dimension {
            context,
            expected: space.dim(),
            actual: coeffs.len(),
        });
    }
    Ok(())
}

/// Visits every quadrature point of every cell with the physical point,
/// the weight (including the Jacobian), the tabulation index and geometry.
fn for_each_point(space: &FeSpace, tab: &Tabulation, mut f: impl FnMut(usize, usize, [f64; 2], f64, &CellGeometry)) {
    for t in 0..space.num_cells() {
        let geo = space.cell_geometry(t);
        for (q, l) in tab.rule.points.iter().enumerate() {
            f(t, q, geo.map(*l), tab.rule.weights[q] * geo.det, &geo);
        }
    }
}

/// Squared L2 norm of `u_h - u` and of its (broken) gradient for a
/// vector-valued space.
fn vector_errors_squared(
    space: &FeSpace,
    coeffs: &[f64],
    exact: impl Fn(f64, f64) -> [f64; 2],
    exact_grad: impl Fn(f64, f64) -> [[f64; 2]; 2],
) -> Result<(f64, f64)> {
    check_dim(space, coeffs, "velocity coefficients")?;
    if space.multiplicity() != 2 {
        return Err(Error::param("velocity errors need a vector-valued space"));
    }
    let tab = space.tabulate(error_degree(space))?;
    let ns = space.scalar_dim();
    let (mut l2, mut semi) = (0.0, 0.0);
    for_each_point(space, &tab, |t, q, [x, y], w, geo| {
        let dofs = space.cell_dofs(t);
        let (phi, dphi) = (tab.values(q), tab.ref_grads(q));
        let u = exact(x, y);
        let g = exact_grad(x, y);
        for c in 0..2 {
            let (mut v, mut rg) = (0.0, [0.0; 2]);
            for (k, &d) in dofs.iter().enumerate() {
                let a = coeffs[c * ns + d];
                v += a * phi[k];
                rg[0] += a * dphi[k][0];
                rg[1] += a * dphi[k][1];
            }
            let gh = geo.push_gradient(rg);
            l2 += w * (v - u[c]).powi(2);
            semi += w * ((gh[0] - g[c][0]).powi(2) + (gh[1] - g[c][1]).powi(2));
        }
    });
    Ok((l2, semi))
}

/// L2 error of a scalar field after removing the mean of the difference.
fn scalar_error_mean_free(space: &FeSpace, coeffs: &[f64], exact: impl Fn(f64, f64) -> f64, degree: u32) -> Result<f64> {
    check_dim(space, coeffs, "pressure coefficients")?;
    let tab = space.tabulate(degree)?;
    let mut diffs = Vec::with_capacity(space.num_cells() * tab.rule.len());
    let (mut sum, mut area) = (0.0, 0.0);
    for_each_point(space, &tab, |t, q, [x, y], w, _| {
        let ph: f64 = space.cell_dofs(t).iter().zip(tab.values(q)).map(|(&d, v)| coeffs[d] * v).sum();
        let e = ph - exact(x, y);
        sum += w * e;
        area += w;
        diffs.push((w, e));
    });
    let mean = sum / area;
    Ok(diffs.iter().map(|(w, e)| w * (e - mean).powi(2)).sum::<f64>().sqrt())
}

/// L2 distance between a discrete velocity and a vector field.
pub fn velocity_l2_error(space: &FeSpace, coeffs: &[f64], exact: impl Fn(f64, f64) -> [f64; 2]) -> Result<f64> {
    let (l2, _) = vector_errors_squared(space, coeffs, exact, |_, _| [[0.0; 2]; 2])?;
    Ok(l2.sqrt())
}

/// Errors of a discrete solution `(u, p)` against the manufactured solution
/// at time `t`.
pub fn error_norms(
    velocity: &FeSpace,
    pressure: &FeSpace,
    u: &[f64],
    p: &[f64],
    case: &ManufacturedCase,
    t: f64,
) -> Result<ErrorTriple> {
    if velocity.num_cells() != pressure.num_cells() {
        return Err(Error::param("velocity and pressure spaces live on different meshes"));
    }
    let (l2, semi) = vector_errors_squared(
        velocity,
        u,
        |x, y| case.velocity(x, y, t),
        |x, y| case.velocity_gradient(x, y, t),
    )?;
    let pressure_l2 = scalar_error_mean_free(pressure, p, |x, y| case.pressure(x, y, t), error_degree(velocity))?;
    Ok(ErrorTriple {
        t,
        velocity_l2: l2.sqrt(),
        velocity_h1: (l2 + semi).sqrt(),
        pressure_l2,
    })
}

/// L2 norm of the (broken) divergence of a discrete velocity.
pub fn divergence_l2(space: &FeSpace, u: &[f64]) -> Result<f64> {
    check_dim(space, u, "velocity coefficients")?;
    let tab = space.tabulate(QuadratureDegrees::for_degree(space.family().degree()).matrix)?;
    let ns = space.scalar_dim();
    let mut sq = 0.0;
    for_each_point(space, &tab, |t, q, _, w, geo| {
        let mut div = 0.0;
        for (k, &d) in space.cell_dofs(t).iter().enumerate() {
            let g = geo.push_gradient(tab.ref_grads(q)[k]);
            div += u[d] * g[0] + u[ns + d] * g[1];
        }
        sq += w * div * div;
    });
    Ok(sq.sqrt())
}

/// `rate_i = log(e_{i-1} / e_i) / log(h_{i-1} / h_i)` for `i >= 1`.
pub fn convergence_rates(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() {
        return Err(Error::Dimension {
            context: "convergence rates (errors vs mesh sizes)",
            expected: hs.len(),
            actual: errors.len(),
        });
    }
    if errors.len() < 2 {
        return Err(Error::param("convergence rates need at least two entries"));
    }
    if let Some(index) = errors.iter().chain(hs).position(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::RateUndefined {
            index: index % errors.len(),
        });
    }
    Ok((1..errors.len())
        .map(|i| (errors[i - 1] / errors[i]).ln() / (hs[i - 1] / hs[i]).ln())
        .collect())
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("slope fit needs two equally long series of length >= 2"));
    }
    if let Some(index) = xs.iter().chain(ys).position(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::RateUndefined { index: index % xs.len() });
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
