//! Structured triangulations of the unit square.
//!
//! Level `i` divides the square into `2^i x 2^i` cells and splits every cell
//! along its lower-left to upper-right diagonal. Nodes are numbered row-major
//! (x fastest), triangles are counterclockwise, and local edge `k` of a
//! triangle is the edge opposite its local vertex `k`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

pub const MAX_LEVEL: u32 = 12;

/// Which wall of the unit square a boundary edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, lower global index first.
    pub nodes: [usize; 2],
    /// Owning triangles. The second owner is `None` on the boundary.
    pub owners: [Option<usize>; 2],
    pub side: Option<Side>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.owners[1].is_none()
    }
}

/// Undirected edges of a triangulation with adjacency.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    pub edges: Vec<Edge>,
    /// `cell_edges[t][k]` is the edge opposite local vertex `k` of triangle `t`.
    pub cell_edges: Vec<[usize; 3]>,
}

/// Builds the edge table of an arbitrary conforming triangulation. Edges are
/// numbered in order of first appearance while sweeping triangles in order.
pub fn edge_table(nodes: &[[f64; 2]], triangles: &[[usize; 3]]) -> EdgeTable {
    let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
    let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 4);
    let mut cell_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut local = [0usize; 3];
        for (k, slot) in local.iter_mut().enumerate() {
            let a = tri[(k + 1) % 3];
            let b = tri[(k + 2) % 3];
            let key = if a < b { [a, b] } else { [b, a] };
            let id = *index.entry(key).or_insert_with(|| {
                edges.push(Edge {
                    nodes: key,
                    owners: [Some(t), None],
                    side: None,
                });
                edges.len() - 1
            });
            if edges[id].owners[0] != Some(t) {
                edges[id].owners[1] = Some(t);
            }
            *slot = id;
        }
        cell_edges.push(local);
    }
    for e in edges.iter_mut().filter(|e| e.is_boundary()) {
        e.side = classify_side(nodes[e.nodes[0]], nodes[e.nodes[1]]);
    }
    EdgeTable { edges, cell_edges }
}

fn classify_side(p: [f64; 2], q: [f64; 2]) -> Option<Side> {
    const TOL: f64 = 1e-12;
    if p[1].abs() < TOL && q[1].abs() < TOL {
        Some(Side::Bottom)
    } else if (p[0] - 1.0).abs() < TOL && (q[0] - 1.0).abs() < TOL {
        Some(Side::Right)
    } else if (p[1] - 1.0).abs() < TOL && (q[1] - 1.0).abs() < TOL {
        Some(Side::Top)
    } else if p[0].abs() < TOL && q[0].abs() < TOL {
        Some(Side::Left)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    level: u32,
    divisions: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: EdgeTable,
    boundary_edges: Vec<(usize, Side)>,
}

impl Mesh {
    /// Uniform mesh of `[0,1]^2` with grid spacing `2^-level`.
    pub fn unit_square(level: u32) -> Result<Self> {
        if !(1..=MAX_LEVEL).contains(&level) {
            return Err(Error::param(format!(
                "mesh level must be in 1..={MAX_LEVEL}, got {level}"
            )));
        }
        let n = 1usize << level;
        let spacing = 1.0 / n as f64;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 * spacing, j as f64 * spacing]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let edges = edge_table(&nodes, &triangles);
        let boundary_edges = edges
            .edges
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.side.map(|s| (k, s)))
            .collect();
        Ok(Self {
            level,
            divisions: n,
            nodes,
            triangles,
            edges,
            boundary_edges,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per side, `2^level`.
    pub fn divisions(&self) -> usize {
        self.divisions
    }

    /// Grid spacing `2^-level`; this is the `h` reported in convergence tables.
    pub fn grid_spacing(&self) -> f64 {
        1.0 / self.divisions as f64
    }

    /// Largest triangle diameter (`sqrt(2)` times the grid spacing).
    pub fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.grid_spacing()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges.edges
    }

    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.edges.cell_edges
    }

    pub fn boundary_edges(&self) -> &[(usize, Side)] {
        &self.boundary_edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.edges.len()
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    /// Signed area; positive for counterclockwise triangles.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.vertices(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges.edges[e].nodes;
        let (p, q) = (self.nodes[a], self.nodes[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    pub fn is_boundary_point(&self, p: [f64; 2]) -> bool {
        const TOL: f64 = 1e-12;
        p[0].abs() < TOL || p[1].abs() < TOL || (p[0] - 1.0).abs() < TOL || (p[1] - 1.0).abs() < TOL
    }

    /// Finds the triangle containing `p` and its barycentric coordinates there.
    /// Points on shared edges resolve to one of the adjacent triangles.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        if !(p[0] >= -TOL && p[0] <= 1.0 + TOL && p[1] >= -TOL && p[1] <= 1.0 + TOL) {
            return Err(Error::param(format!(
                "point ({}, {}) lies outside the unit square",
                p[0], p[1]
            )));
        }
        let n = self.divisions;
        let scaled = [p[0] * n as f64, p[1] * n as f64];
        let i = (scaled[0].floor() as isize).clamp(0, n as isize - 1) as usize;
        let j = (scaled[1].floor() as isize).clamp(0, n as isize - 1) as usize;
        let (s, r) = (scaled[0] - i as f64, scaled[1] - j as f64);
        let t = 2 * (j * n + i) + usize::from(r > s);
        Ok((t, self.barycentric(t, p)))
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [p0, p1, p2] = self.vertices(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let dx = p[0] - p0[0];
        let dy = p[1] - p0[1];
        let l1 = ((p2[1] - p0[1]) * dx - (p2[0] - p0[0]) * dy) / det;
        let l2 = (-(p1[1] - p0[1]) * dx + (p1[0] - p0[0]) * dy) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Plain-text dump: one `node`, `tri` or `bedge` record per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# penfem mesh level={} nodes={} triangles={} boundary_edges={}",
            self.level,
            self.num_nodes(),
            self.num_triangles(),
            self.boundary_edges.len()
        )?;
        for (k, p) in self.nodes.iter().enumerate() {
            writeln!(out, "node {k} {:e} {:e}", p[0], p[1])?;
        }
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(out, "tri {k} {} {} {}", t[0], t[1], t[2])?;
        }
        for &(e, side) in &self.boundary_edges {
            let [a, b] = self.edges.edges[e].nodes;
            writeln!(out, "bedge {e} {a} {b} {side}")?;
        }
        Ok(())
    }
}
