//! Nodal bases on the reference triangle.
//!
//! Local numbering: vertex functions first, then edge functions (edge `k`
//! is opposite vertex `k` and runs from vertex `k+1` to vertex `k+2`), then
//! interior functions. Everything is written in barycentric coordinates and
//! differentiated by the chain rule with `l0 = 1 - x - y`, `l1 = x`, `l2 = y`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementFamily {
    /// Piecewise constants.
    P0,
    P1,
    P2,
    P3,
    /// Crouzeix-Raviart: piecewise linear, continuous at edge midpoints.
    Cr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    Continuous,
    EdgeMidpoint,
    Discontinuous,
}

/// DOFs per vertex, per edge and per cell interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub per_vertex: usize,
    pub per_edge: usize,
    pub per_cell: usize,
}

impl ElementFamily {
    pub fn degree(self) -> u32 {
        match self {
            ElementFamily::P0 => 0,
            ElementFamily::P1 | ElementFamily::Cr => 1,
            ElementFamily::P2 => 2,
            ElementFamily::P3 => 3,
        }
    }

    pub fn num_local(self) -> usize {
        match self {
            ElementFamily::P0 => 1,
            ElementFamily::P1 | ElementFamily::Cr => 3,
            ElementFamily::P2 => 6,
            ElementFamily::P3 => 10,
        }
    }

    pub fn layout(self) -> DofLayout {
        let (per_vertex, per_edge, per_cell) = match self {
            ElementFamily::P0 => (0, 0, 1),
            ElementFamily::P1 => (1, 0, 0),
            ElementFamily::P2 => (1, 1, 0),
            ElementFamily::P3 => (1, 2, 1),
            ElementFamily::Cr => (0, 1, 0),
        };
        DofLayout {
            per_vertex,
            per_edge,
            per_cell,
        }
    }

    pub fn continuity(self) -> Continuity {
        match self {
            ElementFamily::P0 => Continuity::Discontinuous,
            ElementFamily::Cr => Continuity::EdgeMidpoint,
            _ => Continuity::Continuous,
        }
    }

    /// Nodal points in barycentric coordinates, in local DOF order.
    pub fn local_nodes(self) -> Vec<[f64; 3]> {
        let vertices = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let on_edge = |k: usize, s: f64| {
            // point at fraction s from vertex k+1 towards vertex k+2
            let mut p = [0.0; 3];
            p[(k + 1) % 3] = 1.0 - s;
            p[(k + 2) % 3] = s;
            p
        };
        match self {
            ElementFamily::P0 => vec![[1.0 / 3.0; 3]],
            ElementFamily::P1 => vertices.to_vec(),
            ElementFamily::P2 => {
                let mut v = vertices.to_vec();
                v.extend((0..3).map(|k| on_edge(k, 0.5)));
                v
            }
            ElementFamily::P3 => {
                let mut v = vertices.to_vec();
                for k in 0..3 {
                    v.push(on_edge(k, 1.0 / 3.0));
                    v.push(on_edge(k, 2.0 / 3.0));
                }
                v.push([1.0 / 3.0; 3]);
                v
            }
            ElementFamily::Cr => (0..3).map(|k| on_edge(k, 0.5)).collect(),
        }
    }

    /// Values and barycentric partials `d/dl_i` of every local basis function.
    fn eval_barycentric(self, l: [f64; 3], values: &mut [f64], dl: &mut [[f64; 3]]) {
        match self {
            ElementFamily::P0 => {
                values[0] = 1.0;
                dl[0] = [0.0; 3];
            }
            ElementFamily::P1 => {
                for i in 0..3 {
                    values[i] = l[i];
                    dl[i] = [0.0; 3];
                    dl[i][i] = 1.0;
                }
            }
            ElementFamily::P2 => {
                for i in 0..3 {
                    values[i] = l[i] * (2.0 * l[i] - 1.0);
                    dl[i] = [0.0; 3];
                    dl[i][i] = 4.0 * l[i] - 1.0;
                }
                for k in 0..3 {
                    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                    values[3 + k] = 4.0 * l[a] * l[b];
                    dl[3 + k] = [0.0; 3];
                    dl[3 + k][a] = 4.0 * l[b];
                    dl[3 + k][b] = 4.0 * l[a];
                }
            }
            ElementFamily::P3 => {
                for i in 0..3 {
                    let x = l[i];
                    values[i] = 0.5 * x * (3.0 * x - 1.0) * (3.0 * x - 2.0);
                    dl[i] = [0.0; 3];
                    dl[i][i] = 0.5 * (27.0 * x * x - 18.0 * x + 2.0);
                }
                for k in 0..3 {
                    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                    for (slot, (near, far)) in [(a, b), (b, a)].into_iter().enumerate() {
                        let j = 3 + 2 * k + slot;
                        let (ln, lf) = (l[near], l[far]);
                        values[j] = 4.5 * ln * lf * (3.0 * ln - 1.0);
                        dl[j] = [0.0; 3];
                        dl[j][near] = 4.5 * lf * (6.0 * ln - 1.0);
                        dl[j][far] = 4.5 * ln * (3.0 * ln - 1.0);
                    }
                }
                values[9] = 27.0 * l[0] * l[1] * l[2];
                dl[9] = [27.0 * l[1] * l[2], 27.0 * l[0] * l[2], 27.0 * l[0] * l[1]];
            }
            ElementFamily::Cr => {
                for k in 0..3 {
                    values[k] = 1.0 - 2.0 * l[k];
                    dl[k] = [0.0; 3];
                    dl[k][k] = -2.0;
                }
            }
        }
    }

    /// Evaluates without validating the point. Gradients are with respect to
    /// the reference coordinates `(x, y)`.
    pub(crate) fn eval_into(self, l: [f64; 3], values: &mut [f64], grads: &mut [[f64; 2]]) {
        let n = self.num_local();
        let mut dl = [[0.0; 3]; 10];
        self.eval_barycentric(l, &mut values[..n], &mut dl[..n]);
        for (g, d) in grads[..n].iter_mut().zip(&dl[..n]) {
            *g = [d[1] - d[0], d[2] - d[0]];
        }
    }
}

impl fmt::Display for ElementFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ElementFamily::P0 => "P0",
            ElementFamily::P1 => "P1",
            ElementFamily::P2 => "P2",
            ElementFamily::P3 => "P3",
            ElementFamily::Cr => "CR",
        };
        f.write_str(s)
    }
}

impl FromStr for ElementFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p0" => Ok(ElementFamily::P0),
            "p1" => Ok(ElementFamily::P1),
            "p2" => Ok(ElementFamily::P2),
            "p3" => Ok(ElementFamily::P3),
            "cr" | "p1nc" => Ok(ElementFamily::Cr),
            other => Err(Error::Unsupported(format!("unknown element family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

/// Evaluates all local basis functions of `family` at a reference point
/// given in barycentric coordinates.
pub fn eval_basis(family: ElementFamily, bary: [f64; 3]) -> Result<BasisValues> {
    const TOL: f64 = 1e-12;
    let inside = bary.iter().all(|&l| (-TOL..=1.0 + TOL).contains(&l));
    if !inside || (bary.iter().sum::<f64>() - 1.0).abs() > TOL {
        return Err(Error::param(format!(
            "barycentric point {bary:?} is outside the reference triangle"
        )));
    }
    let n = family.num_local();
    let mut values = vec![0.0; n];
    let mut grads = vec![[0.0; 2]; n];
    family.eval_into(bary, &mut values, &mut grads);
    Ok(BasisValues { values, grads })
}
