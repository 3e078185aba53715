//! Galerkin P1 (constant strain triangle) solver for plane-strain elastostatics.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::elasticity::{self, BcKind, LoadCase, Manufactured, MaterialParams, ProblemData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalSolution {
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub sxx: Vec<f64>,
    pub syy: Vec<f64>,
    pub sxy: Vec<f64>,
}

impl NodalSolution {
    pub fn channels(&self) -> [&[f64]; 5] {
        [&self.ux, &self.uy, &self.sxx, &self.syy, &self.sxy]
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

// Degree-2 interior rule: barycentric points, equal weights of area/3.
const TRI_QUAD3: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

// Degree-4 six-point rule (Dunavant), weights relative to the area.
const TRI_QUAD6: [([f64; 3], f64); 6] = [
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
];

/// Shape-function derivatives of triangle `t`: `(dN/dx, dN/dy, area)`.
fn shape_gradients(mesh: &Mesh, t: usize) -> ([f64; 3], [f64; 3], f64) {
    let [a, b, c] = mesh.triangles[t].map(|k| mesh.nodes[k]);
    let area = mesh.area(t);
    let inv = 1.0 / (2.0 * area);
    let dx = [(b[1] - c[1]) * inv, (c[1] - a[1]) * inv, (a[1] - b[1]) * inv];
    let dy = [(c[0] - b[0]) * inv, (a[0] - c[0]) * inv, (b[0] - a[0]) * inv];
    (dx, dy, area)
}

fn element_stiffness(mesh: &Mesh, t: usize, mat: &MaterialParams) -> [[f64; 6]; 6] {
    let (dx, dy, area) = shape_gradients(mesh, t);
    let mut b = [[0.0; 6]; 3];
    for i in 0..3 {
        b[0][2 * i] = dx[i];
        b[1][2 * i + 1] = dy[i];
        b[2][2 * i] = dy[i];
        b[2][2 * i + 1] = dx[i];
    }
    let d = mat.voigt_stiffness();
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..6 {
            db[r][c] = (0..3).map(|k| d[r][k] * b[k][c]).sum();
        }
    }
    let mut k = [[0.0; 6]; 6];
    for r in 0..6 {
        for c in 0..6 {
            k[r][c] = area * (0..3).map(|s| b[s][r] * db[s][c]).sum::<f64>();
        }
    }
    k
}

fn point_at(mesh: &Mesh, t: usize, w: &[f64; 3]) -> (f64, f64) {
    let p = mesh.triangles[t].map(|k| mesh.nodes[k]);
    (
        w[0] * p[0][0] + w[1] * p[1][0] + w[2] * p[2][0],
        w[0] * p[0][1] + w[1] * p[1][1] + w[2] * p[2][1],
    )
}

/// Solves for nodal displacements and recovers nodal stresses.
pub fn assemble_and_solve(mesh: &Mesh, mat: &MaterialParams, load: &LoadCase) -> Result<NodalSolution> {
    solve_with(mesh, mat, &Manufactured { load: *load, mat: *mat })
}

pub fn solve_with(mesh: &Mesh, mat: &MaterialParams, data: &dyn ProblemData) -> Result<NodalSolution> {
    mat.validate()?;
    let (ux, uy) = solve_displacement(mesh, mat, data)?;
    let (sxx, syy, sxy) = recover_nodal_stress(mesh, &ux, &uy, mat);
    Ok(NodalSolution {
        ux,
        uy,
        sxx,
        syy,
        sxy,
    })
}

/// Nodal displacements of the Galerkin solution.
pub fn solve_displacement(
    mesh: &Mesh,
    mat: &MaterialParams,
    data: &dyn ProblemData,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_nodes = mesh.node_count();
    let n_dof = 2 * n_nodes;

    let constrained = mesh.dirichlet_nodes();
    if constrained.is_empty() {
        return Err(Error::Singular(
            "no Dirichlet constraints; rigid-body modes are unconstrained".into(),
        ));
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n_dof];
    for &n in &constrained {
        let [x, y] = mesh.nodes[n];
        let (ux, uy) = data.displacement(x, y);
        fixed[2 * n] = Some(ux);
        fixed[2 * n + 1] = Some(uy);
    }
    let mut free_index = vec![usize::MAX; n_dof];
    let mut n_free = 0;
    for d in 0..n_dof {
        if fixed[d].is_none() {
            free_index[d] = n_free;
            n_free += 1;
        }
    }

    let mut rhs = vec![0.0; n_free];
    let mut coo = CooMatrix::new(n_free, n_free);

    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let dofs = [
            2 * tri[0],
            2 * tri[0] + 1,
            2 * tri[1],
            2 * tri[1] + 1,
            2 * tri[2],
            2 * tri[2] + 1,
        ];
        let ke = element_stiffness(mesh, t, mat);

        let area = mesh.area(t);
        let mut fe = [0.0; 6];
        for w in &TRI_QUAD3 {
            let (x, y) = point_at(mesh, t, w);
            let (bx, by) = data.body_force(x, y);
            for a in 0..3 {
                fe[2 * a] += area / 3.0 * w[a] * bx;
                fe[2 * a + 1] += area / 3.0 * w[a] * by;
            }
        }

        for r in 0..6 {
            let fr = free_index[dofs[r]];
            if fr == usize::MAX {
                continue;
            }
            rhs[fr] += fe[r];
            for c in 0..6 {
                match fixed[dofs[c]] {
                    Some(value) => rhs[fr] -= ke[r][c] * value,
                    None => coo.push(fr, free_index[dofs[c]], ke[r][c]),
                }
            }
        }
    }

    // Traction on Neumann edges, two-point Gauss per segment.
    let g = 0.5 / 3f64.sqrt();
    for be in mesh.boundary_edges.iter().filter(|b| b.kind == BcKind::Neumann) {
        let [a, b] = be.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for s in [0.5 - g, 0.5 + g] {
            let x = pa[0] + s * (pb[0] - pa[0]);
            let y = pa[1] + s * (pb[1] - pa[1]);
            let (tx, ty) = data.traction(be.edge, x, y);
            for (node, shape) in [(a, 1.0 - s), (b, s)] {
                for (comp, tc) in [(0, tx), (1, ty)] {
                    let fi = free_index[2 * node + comp];
                    if fi != usize::MAX {
                        rhs[fi] += 0.5 * len * shape * tc;
                    }
                }
            }
        }
    }

    let csc = CscMatrix::from(&coo);
    let factor = CscCholesky::factor(&csc)
        .map_err(|e| Error::Singular(format!("stiffness factorization failed: {e:?}")))?;
    let b = DMatrix::from_column_slice(n_free, 1, &rhs);
    let x = factor.solve(&b);

    let mut ux = vec![0.0; n_nodes];
    let mut uy = vec![0.0; n_nodes];
    for n in 0..n_nodes {
        for (comp, out) in [(0, &mut ux), (1, &mut uy)] {
            let d = 2 * n + comp;
            out[n] = match fixed[d] {
                Some(v) => v,
                None => x[(free_index[d], 0)],
            };
        }
    }
    if ux.iter().chain(&uy).any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite displacement in solution".into()));
    }
    Ok((ux, uy))
}

/// Element-constant stresses averaged to nodes with area weights.
pub fn recover_nodal_stress(
    mesh: &Mesh,
    ux: &[f64],
    uy: &[f64],
    mat: &MaterialParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = mesh.node_count();
    let mut acc = vec![[0.0; 3]; n];
    let mut weight = vec![0.0; n];
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let (dx, dy, area) = shape_gradients(mesh, t);
        let mut grad = [0.0; 4];
        for a in 0..3 {
            grad[0] += dx[a] * ux[tri[a]];
            grad[1] += dy[a] * ux[tri[a]];
            grad[2] += dx[a] * uy[tri[a]];
            grad[3] += dy[a] * uy[tri[a]];
        }
        let (exx, eyy, exy) = elasticity::strain_from_grad(grad[0], grad[1], grad[2], grad[3]);
        let (sxx, syy, sxy) = elasticity::constitutive_stress(exx, eyy, exy, mat);
        for &node in &tri {
            acc[node][0] += area * sxx;
            acc[node][1] += area * syy;
            acc[node][2] += area * sxy;
            weight[node] += area;
        }
    }
    let mut sxx = vec![0.0; n];
    let mut syy = vec![0.0; n];
    let mut sxy = vec![0.0; n];
    for k in 0..n {
        if weight[k] > 0.0 {
            sxx[k] = acc[k][0] / weight[k];
            syy[k] = acc[k][1] / weight[k];
            sxy[k] = acc[k][2] / weight[k];
        }
    }
    (sxx, syy, sxy)
}

/// `‖u_h − u‖_{L²(Ω)}` of the P1 displacement against a reference field.
pub fn l2_displacement_error(
    mesh: &Mesh,
    ux: &[f64],
    uy: &[f64],
    exact: impl Fn(f64, f64) -> (f64, f64),
) -> f64 {
    let mut sum = 0.0;
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let area = mesh.area(t);
        for (w, wt) in &TRI_QUAD6 {
            let (x, y) = point_at(mesh, t, w);
            let hx: f64 = (0..3).map(|a| w[a] * ux[tri[a]]).sum();
            let hy: f64 = (0..3).map(|a| w[a] * uy[tri[a]]).sum();
            let (ex, ey) = exact(x, y);
            sum += area * wt * ((hx - ex).powi(2) + (hy - ey).powi(2));
        }
    }
    sum.sqrt()
}
