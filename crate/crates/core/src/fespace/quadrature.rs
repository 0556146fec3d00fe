//! Quadrature on the reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.
//!
//! Low degrees use fully symmetric rules. Degrees 6 and up use a collapsed
//! (Duffy) product of Gauss-Legendre rules, which keeps every weight positive.

use crate::error::{Error, Result};

pub const MAX_DEGREE: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates `(l0, l1, l2)` with reference point `(l1, l2)`.
    pub points: Vec<[f64; 3]>,
    /// Positive weights summing to the reference area `1/2`.
    pub weights: Vec<f64>,
    /// Polynomials up to this total degree are integrated exactly.
    pub degree: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `g(x, y)` over the reference triangle.
    pub fn integrate(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * g(p[1], p[2]))
            .sum()
    }
}

/// A rule exact for polynomials of total degree `degree`.
pub fn quadrature(degree: u32) -> Result<QuadratureRule> {
    match degree {
        1 => Ok(QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            degree: 1,
        }),
        2 => {
            let mut rule = QuadratureRule {
                points: Vec::new(),
                weights: Vec::new(),
                degree: 2,
            };
            push_orbit3(&mut rule, 1.0 / 6.0, 1.0 / 6.0);
            Ok(rule)
        }
        3 | 4 => {
            let mut rule = QuadratureRule {
                points: Vec::new(),
                weights: Vec::new(),
                degree: 4,
            };
            push_orbit3(&mut rule, 0.445_948_490_915_964_9, 0.5 * 0.223_381_589_678_011_47);
            push_orbit3(&mut rule, 0.091_576_213_509_770_74, 0.5 * 0.109_951_743_655_321_87);
            Ok(rule)
        }
        5 => {
            let s15 = 15f64.sqrt();
            let mut rule = QuadratureRule {
                points: vec![[1.0 / 3.0; 3]],
                weights: vec![0.5 * 9.0 / 40.0],
                degree: 5,
            };
            push_orbit3(&mut rule, (6.0 + s15) / 21.0, 0.5 * (155.0 + s15) / 1200.0);
            push_orbit3(&mut rule, (6.0 - s15) / 21.0, 0.5 * (155.0 - s15) / 1200.0);
            Ok(rule)
        }
        6..=MAX_DEGREE => Ok(collapsed_gauss(degree)),
        _ => Err(Error::param(format!(
            "quadrature degree must be in 1..={MAX_DEGREE}, got {degree}"
        ))),
    }
}

/// Adds the three points `(a, a, 1-2a)` and permutations with weight `w`.
fn push_orbit3(rule: &mut QuadratureRule, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        rule.points.push(p);
        rule.weights.push(w);
    }
}

fn collapsed_gauss(degree: u32) -> QuadratureRule {
    // x = u, y = v (1 - u), dx dy = (1 - u) du dv: degree + 1 in u, degree in v.
    let nu = (degree as usize + 3) / 2;
    let nv = (degree as usize + 2) / 2;
    let (xu, wu) = gauss_legendre_unit(nu);
    let (xv, wv) = gauss_legendre_unit(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (u, wu) in xu.iter().zip(&wu) {
        for (v, wv) in xv.iter().zip(&wv) {
            let x = *u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    QuadratureRule {
        points,
        weights,
        degree,
    }
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub(crate) fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// `a! b! / (a + b + 2)!`
    fn monomial_integral(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn low_degree_rules_match_closed_forms() {
        let r1 = quadrature(1).unwrap();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1.weights[0], 0.5);
        let r2 = quadrature(2).unwrap();
        assert_eq!(r2.len(), 3);
        assert!(r2.weights.iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-16));
    }

    #[test]
    fn every_rule_is_exact_to_its_degree() {
        for degree in 1..=MAX_DEGREE {
            let rule = quadrature(degree).unwrap();
            assert!(rule.degree >= degree);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for p in &rule.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                assert!(p.iter().all(|&l| l > 0.0));
            }
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let got = rule.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                    let exact = monomial_integral(a, b);
                    assert!(
                        (got - exact).abs() < 1e-14,
                        "degree {degree}: x^{a} y^{b} gave {got}, expected {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn unsupported_degrees_are_rejected() {
        assert!(quadrature(0).is_err());
        assert!(quadrature(11).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre_unit(n);
            for p in 0..(2 * n) as i32 {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                assert!((got - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
            }
        }
    }
}
