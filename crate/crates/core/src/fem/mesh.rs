//! Structured triangulations of the rectangular domain.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::elasticity::{BcKind, DomainSpec, Edge};
use crate::error::{Error, Result};

/// How each rectangular cell is split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSplit {
    /// One diagonal per cell, two triangles.
    Diagonal,
    /// Both diagonals with an added center node, four triangles.
    CrissCross,
}

impl CellSplit {
    /// Node count of an `nx × ny` cell layout.
    pub fn node_count(self, nx: usize, ny: usize) -> usize {
        match self {
            CellSplit::Diagonal => (nx + 1) * (ny + 1),
            CellSplit::CrissCross => (nx + 1) * (ny + 1) + nx * ny,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub edge: Edge,
    pub kind: BcKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mesh {
    pub domain: DomainSpec,
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub cells: (usize, usize),
    pub split: CellSplit,
    /// First triangle index of each cell; a cell owns 2 or 4 consecutive triangles.
    cell_first_triangle: Vec<usize>,
}

impl Mesh {
    /// Uniform `cells_x × cells_y` structured triangulation.
    ///
    /// Nodes are numbered row by row (criss-cross center nodes interleaved
    /// after their row of corners) so the stiffness bandwidth stays at
    /// roughly two node rows.
    pub fn structured(domain: &DomainSpec, cells_x: usize, cells_y: usize, split: CellSplit) -> Result<Self> {
        domain.validate()?;
        if cells_x == 0 || cells_y == 0 {
            return Err(Error::invalid("mesh needs at least one cell per direction"));
        }
        let hx = domain.width / cells_x as f64;
        let hy = domain.height / cells_y as f64;
        let row_stride = match split {
            CellSplit::Diagonal => cells_x + 1,
            CellSplit::CrissCross => 2 * cells_x + 1,
        };
        let corner = |i: usize, j: usize| j * row_stride + i;
        let center = |i: usize, j: usize| j * row_stride + cells_x + 1 + i;

        let mut nodes = Vec::with_capacity(split.node_count(cells_x, cells_y));
        for j in 0..=cells_y {
            for i in 0..=cells_x {
                nodes.push([i as f64 * hx, j as f64 * hy]);
            }
            if split == CellSplit::CrissCross && j < cells_y {
                for i in 0..cells_x {
                    nodes.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy]);
                }
            }
        }
        // Snap the far edges exactly onto the boundary.
        for p in &mut nodes {
            if (p[0] - domain.width).abs() < 1e-12 * domain.width {
                p[0] = domain.width;
            }
            if (p[1] - domain.height).abs() < 1e-12 * domain.height {
                p[1] = domain.height;
            }
        }

        let mut triangles = Vec::new();
        let mut cell_first_triangle = Vec::with_capacity(cells_x * cells_y);
        for j in 0..cells_y {
            for i in 0..cells_x {
                cell_first_triangle.push(triangles.len());
                let (bl, br, tr, tl) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
                match split {
                    CellSplit::Diagonal => {
                        triangles.push([bl, br, tr]);
                        triangles.push([bl, tr, tl]);
                    }
                    CellSplit::CrissCross => {
                        let c = center(i, j);
                        triangles.push([bl, br, c]);
                        triangles.push([br, tr, c]);
                        triangles.push([tr, tl, c]);
                        triangles.push([tl, bl, c]);
                    }
                }
            }
        }

        let mut boundary_edges = Vec::new();
        let mut push = |a: usize, b: usize, edge: Edge| {
            boundary_edges.push(BoundaryEdge {
                nodes: [a, b],
                edge,
                kind: domain.bc.get(edge),
            })
        };
        for i in 0..cells_x {
            push(corner(i, 0), corner(i + 1, 0), Edge::Bottom);
        }
        for j in 0..cells_y {
            push(corner(cells_x, j), corner(cells_x, j + 1), Edge::Right);
        }
        for i in (0..cells_x).rev() {
            push(corner(i + 1, cells_y), corner(i, cells_y), Edge::Top);
        }
        for j in (0..cells_y).rev() {
            push(corner(0, j + 1), corner(0, j), Edge::Left);
        }

        Ok(Self {
            domain: *domain,
            nodes,
            triangles,
            boundary_edges,
            cells: (cells_x, cells_y),
            split,
            cell_first_triangle,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Signed area of triangle `t`.
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|k| self.nodes[k]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = HashSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Cell width along x.
    pub fn h(&self) -> f64 {
        self.domain.width / self.cells.0 as f64
    }

    /// Nodes lying on edges tagged Dirichlet.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        for be in &self.boundary_edges {
            if be.kind == BcKind::Dirichlet {
                for &n in &be.nodes {
                    seen[n] = true;
                }
            }
        }
        (0..self.nodes.len()).filter(|&n| seen[n]).collect()
    }

    /// Barycentric coordinates of `(x, y)` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: f64, y: f64) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|k| self.nodes[k]);
        let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
        let l0 = ((b[1] - c[1]) * (x - c[0]) + (c[0] - b[0]) * (y - c[1])) / det;
        let l1 = ((c[1] - a[1]) * (x - c[0]) + (a[0] - c[0]) * (y - c[1])) / det;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Finds a triangle containing `(x, y)` and its barycentric weights.
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, [f64; 3])> {
        let tol = 1e-10;
        let (cx, cy) = self.cells;
        let fx = x / self.domain.width * cx as f64;
        let fy = y / self.domain.height * cy as f64;
        if !(fx >= -tol && fy >= -tol && fx <= cx as f64 + tol && fy <= cy as f64 + tol) {
            return Err(Error::PointLocation { x, y });
        }
        let i = (fx.floor().max(0.0) as usize).min(cx - 1);
        let j = (fy.floor().max(0.0) as usize).min(cy - 1);
        let first = self.cell_first_triangle[j * cx + i];
        let per_cell = match self.split {
            CellSplit::Diagonal => 2,
            CellSplit::CrissCross => 4,
        };
        let mut best = (first, [0.0; 3], f64::NEG_INFINITY);
        for t in first..first + per_cell {
            let w = self.barycentric(t, x, y);
            let min = w[0].min(w[1]).min(w[2]);
            if min > best.2 {
                best = (t, w, min);
            }
        }
        if best.2 >= -tol {
            Ok((best.0, best.1))
        } else {
            Err(Error::PointLocation { x, y })
        }
    }
}

/// Structured mesh whose node count is closest to `target_nodes`.
///
/// Candidates are square and near-square (`n × (n+1)`) cell layouts with
/// either split; ties go to square layouts, then to the criss-cross
/// pattern. A target of 41 yields the 4×4 criss-cross mesh with exactly 41
/// nodes, a target of 9 the 2×2 diagonal mesh.
pub fn build_coarse_mesh(domain: &DomainSpec, target_nodes: usize) -> Result<Mesh> {
    if target_nodes < 9 {
        return Err(Error::invalid(format!(
            "coarse mesh needs at least 9 target nodes, got {target_nodes}"
        )));
    }
    let mut best: Option<(usize, CellSplit, usize, usize)> = None;
    for extra in [0, 1] {
        for split in [CellSplit::CrissCross, CellSplit::Diagonal] {
            for n in 1.. {
                let count = split.node_count(n, n + extra);
                let diff = count.abs_diff(target_nodes);
                if best.is_none_or(|(d, ..)| diff < d) {
                    best = Some((diff, split, n, n + extra));
                }
                if count > target_nodes {
                    break;
                }
            }
        }
    }
    let (_, split, nx, ny) = best.expect("at least one candidate");
    Mesh::structured(domain, nx, ny, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_41_gives_crisscross_4x4() {
        let m = build_coarse_mesh(&DomainSpec::unit_square(), 41).unwrap();
        assert_eq!(m.node_count(), 41);
        assert_eq!(m.split, CellSplit::CrissCross);
        assert_eq!(m.triangles.len(), 64);
        let (v, e, f) = (m.node_count() as i64, m.edge_count() as i64, m.triangles.len() as i64);
        assert_eq!(v - e + f, 1);
    }

    #[test]
    fn target_9_gives_3x3_nodes_8_triangles() {
        let m = build_coarse_mesh(&DomainSpec::unit_square(), 9).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.triangles.len(), 8);
        assert!(build_coarse_mesh(&DomainSpec::unit_square(), 8).is_err());
    }

    #[test]
    fn node_count_within_tolerance_for_many_targets() {
        for target in [9, 20, 41, 100, 160, 640, 2500] {
            let m = build_coarse_mesh(&DomainSpec::unit_square(), target).unwrap();
            let rel = m.node_count().abs_diff(target) as f64 / target as f64;
            assert!(rel <= 0.15, "target {target} gave {}", m.node_count());
        }
    }

    #[test]
    fn areas_positive_and_sum_to_domain() {
        for split in [CellSplit::Diagonal, CellSplit::CrissCross] {
            for n in [1, 3, 7] {
                let m = Mesh::structured(&DomainSpec::unit_square(), n, n, split).unwrap();
                let mut total = 0.0;
                for t in 0..m.triangles.len() {
                    assert!(m.area(t) > 0.0);
                    total += m.area(t);
                }
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_edges_belong_to_one_triangle() {
        let m = build_coarse_mesh(&DomainSpec::unit_square(), 41).unwrap();
        for be in &m.boundary_edges {
            let owners = m
                .triangles
                .iter()
                .filter(|t| t.contains(&be.nodes[0]) && t.contains(&be.nodes[1]))
                .count();
            assert_eq!(owners, 1);
        }
        assert_eq!(m.boundary_edges.len(), 16);
        let top = m.boundary_edges.iter().filter(|b| b.kind == BcKind::Neumann).count();
        assert_eq!(top, 4);
    }

    #[test]
    fn locate_finds_nodes_and_rejects_outside() {
        let m = Mesh::structured(&DomainSpec::unit_square(), 3, 3, CellSplit::CrissCross).unwrap();
        for (k, p) in m.nodes.iter().enumerate() {
            let (t, w) = m.locate(p[0], p[1]).unwrap();
            let pos = m.triangles[t].iter().position(|&n| n == k).unwrap();
            assert!((w[pos] - 1.0).abs() < 1e-12);
        }
        assert!(matches!(m.locate(1.5, 0.5), Err(Error::PointLocation { .. })));
    }
}
