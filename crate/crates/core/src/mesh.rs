//! Unit-disc triangulation by uniform refinement of a 64-triangle seed mesh.
//!
//! Midpoints of boundary edges are pushed out onto the circle, so boundary nodes
//! stay exactly equiangular at every level and the polygonal domain converges
//! to the disc.

use crate::error::{EitError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::TAU;

pub const BASE_TRIANGLES: usize = 64;

/// Level giving the 16,384-triangle mesh used by default.
pub const DESK_LEVEL: u32 = 4;

/// Seed mesh: a 16-spoke hub out to `INNER_RING`, then an annulus to 32
/// boundary nodes. Putting three quarters of the triangles in the outer
/// annulus buys boundary resolution, where high-frequency data lives.
const RING_NODES: usize = 16;
const INNER_RING: f64 = 0.75;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary nodes ordered counterclockwise, starting at θ = 0.
    pub boundary_nodes: Vec<usize>,
    /// `boundary_edges[i] = [boundary_nodes[i], boundary_nodes[i+1]]`, closing the loop.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Angle of each entry of `boundary_nodes`, in [0, 2π).
    pub boundary_angles: Vec<f64>,
}

impl TriMesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Angular length of each boundary edge (the last one wraps through 2π).
    pub fn boundary_edge_spans(&self) -> Vec<(f64, f64)> {
        let n = self.boundary_angles.len();
        (0..n)
            .map(|i| {
                let a = self.boundary_angles[i];
                let b = if i + 1 == n { TAU } else { self.boundary_angles[i + 1] };
                (a, b)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TriMesh = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(EitError::Format("triangle index out of range".into()));
        }
        if let Some(t) = (0..self.triangles.len()).find(|&t| self.signed_area(t) <= 0.0) {
            return Err(EitError::Format(format!("triangle {t} is not counterclockwise")));
        }
        let nb = self.boundary_nodes.len();
        if nb < 3 || self.boundary_edges.len() != nb || self.boundary_angles.len() != nb {
            return Err(EitError::Format("inconsistent boundary description".into()));
        }
        for i in 0..nb {
            if self.boundary_edges[i] != [self.boundary_nodes[i], self.boundary_nodes[(i + 1) % nb]] {
                return Err(EitError::Format("boundary edges do not form the node loop".into()));
            }
        }
        Ok(())
    }
}

fn base_mesh() -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut nodes = vec![[0.0, 0.0]];
    for i in 0..RING_NODES {
        let a = TAU * i as f64 / RING_NODES as f64;
        nodes.push([INNER_RING * a.cos(), INNER_RING * a.sin()]);
    }
    for j in 0..2 * RING_NODES {
        let a = TAU * j as f64 / (2 * RING_NODES) as f64;
        nodes.push([a.cos(), a.sin()]);
    }
    let inner = |i: usize| 1 + i % RING_NODES;
    let outer = |j: usize| 1 + RING_NODES + j % (2 * RING_NODES);
    let mut tris = Vec::with_capacity(BASE_TRIANGLES);
    for i in 0..RING_NODES {
        tris.push([0, inner(i), inner(i + 1)]);
        tris.push([inner(i), outer(2 * i), outer(2 * i + 1)]);
        tris.push([inner(i), outer(2 * i + 1), inner(i + 1)]);
        tris.push([inner(i + 1), outer(2 * i + 1), outer(2 * i + 2)]);
    }
    (nodes, tris)
}

fn boundary_edge_set(tris: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    // An edge is on the boundary iff its reverse never appears.
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        for k in 0..3 {
            directed.insert((t[k], t[(k + 1) % 3]), 0);
        }
    }
    directed.keys().filter(|(a, b)| !directed.contains_key(&(*b, *a))).map(|&(a, b)| ((a, b), b)).collect()
}

fn refine(nodes: &mut Vec<[f64; 2]>, tris: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let boundary = boundary_edge_set(tris);
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = mid.get(&key) {
            return m;
        }
        let (pa, pb) = (nodes[a], nodes[b]);
        let mut p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if boundary.contains_key(&(a, b)) || boundary.contains_key(&(b, a)) {
            let r = p[0].hypot(p[1]);
            p = [p[0] / r, p[1] / r];
        }
        nodes.push(p);
        let idx = nodes.len() - 1;
        mid.insert(key, idx);
        idx
    };
    let mut out = Vec::with_capacity(tris.len() * 4);
    for &[a, b, c] in tris {
        let ab = midpoint(a, b, nodes);
        let bc = midpoint(b, c, nodes);
        let ca = midpoint(c, a, nodes);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    out
}

/// Mesh with `16 · 4^level` triangles.
pub fn build_disc_mesh(level: u32) -> TriMesh {
    let (mut nodes, mut tris) = base_mesh();
    for _ in 0..level {
        tris = refine(&mut nodes, &tris);
    }
    let boundary = boundary_edge_set(&tris);
    let next: HashMap<usize, usize> = boundary.keys().copied().collect();
    // The first boundary seed node sits at θ = 0 and is never moved.
    let start = 1 + RING_NODES;
    let mut boundary_nodes = vec![start];
    let mut cur = next[&start];
    while cur != start {
        boundary_nodes.push(cur);
        cur = next[&cur];
    }
    for &b in &boundary_nodes {
        let p = nodes[b];
        let r = p[0].hypot(p[1]);
        nodes[b] = [p[0] / r, p[1] / r];
    }
    let boundary_angles = boundary_nodes.iter().map(|&b| nodes[b][1].atan2(nodes[b][0]).rem_euclid(TAU)).collect();
    let nb = boundary_nodes.len();
    let boundary_edges = (0..nb).map(|i| [boundary_nodes[i], boundary_nodes[(i + 1) % nb]]).collect();
    TriMesh { nodes, triangles: tris, boundary_nodes, boundary_edges, boundary_angles }
}

/// Refinement level whose mesh has exactly `triangles` elements, if any.
pub fn level_for_triangles(triangles: usize) -> Option<u32> {
    (0..12).find(|&l| BASE_TRIANGLES << (2 * l) == triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_mesh_is_valid() {
        let m = build_disc_mesh(0);
        assert_eq!(m.triangles.len(), BASE_TRIANGLES);
        m.validate().unwrap();
        assert_eq!(m.boundary_nodes.len(), 32);
        assert!(m.boundary_angles.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn refinement_quadruples() {
        for level in 0..4 {
            let a = build_disc_mesh(level).triangles.len();
            let b = build_disc_mesh(level + 1).triangles.len();
            assert_eq!(b, 4 * a);
        }
    }

    #[test]
    fn fine_and_desk_sizes() {
        assert_eq!(level_for_triangles(65_536), Some(DESK_LEVEL + 1));
        assert_eq!(level_for_triangles(16_384), Some(DESK_LEVEL));
        assert_eq!(level_for_triangles(1000), None);
        assert_eq!(build_disc_mesh(DESK_LEVEL).triangles.len(), 16_384);
        assert_eq!(build_disc_mesh(DESK_LEVEL + 1).triangles.len(), 65_536);
    }

    #[test]
    fn boundary_on_circle_and_equiangular() {
        let m = build_disc_mesh(3);
        m.validate().unwrap();
        let nb = m.boundary_nodes.len();
        assert_eq!(nb, 32 << 3);
        for (i, &b) in m.boundary_nodes.iter().enumerate() {
            let p = m.nodes[b];
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
            let expect = TAU * i as f64 / nb as f64;
            assert!((m.boundary_angles[i] - expect).abs() < 1e-12);
        }
        // polygon area approaches π
        let area = m.total_area();
        let inscribed = 0.5 * nb as f64 * (TAU / nb as f64).sin();
        assert!((area - inscribed).abs() < 1e-10, "{area} vs {inscribed}");
    }

    #[test]
    fn json_round_trip() {
        let m = build_disc_mesh(1);
        let back = TriMesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.boundary_nodes, m.boundary_nodes);
    }
}
