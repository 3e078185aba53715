//! Physics-informed loss on structured HR grids.
//!
//! Every residual is an affine function of the grid values, so the gradient
//! of the L1 loss is `Aᵀ sign(r) / n` per term. The adjoints below are written
//! out by hand and checked against central differences in the tests.
//!
//! Derivatives use second-order central differences in the interior and
//! second-order one-sided stencils on the outermost nodes. Boundary residuals
//! compare the value linearly extrapolated from the two outermost node rows,
//! `1.5·g₀ − 0.5·g₁`, against the boundary data at the foot point on the edge.

use serde::{Deserialize, Serialize};

use crate::elasticity::{BcKind, DomainSpec, Edge, LoadCase, Manufactured, MaterialParams, ProblemData};
use crate::error::{Error, Result};
use crate::grid::{Channel, FieldGrid, GridShape};

/// Weights of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pde: f64,
    pub constitutive: f64,
    pub dirichlet: f64,
    pub neumann: f64,
}

impl LossWeights {
    /// `(H/μ, 1/μ, 20/U0, 20/μ)`.
    pub fn nondimensional(domain: &DomainSpec, mat: &MaterialParams, u0: f64) -> Self {
        Self {
            pde: domain.height / mat.lame_mu,
            constitutive: 1.0 / mat.lame_mu,
            dirichlet: 20.0 / u0,
            neumann: 20.0 / mat.lame_mu,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pde: f64,
    pub constitutive: f64,
    pub dirichlet: f64,
    pub neumann: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn weighted(pde: f64, constitutive: f64, dirichlet: f64, neumann: f64, w: &LossWeights) -> Self {
        Self {
            pde,
            constitutive,
            dirichlet,
            neumann,
            total: w.pde * pde + w.constitutive * constitutive + w.dirichlet * dirichlet + w.neumann * neumann,
        }
    }

    /// Component-wise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        let n = items.len().max(1) as f64;
        let mut out = Self::default();
        for b in items {
            out.pde += b.pde / n;
            out.constitutive += b.constitutive / n;
            out.dirichlet += b.dirichlet / n;
            out.neumann += b.neumann / n;
            out.total += b.total / n;
        }
        out
    }
}

/// Everything the residual operators need besides the grid itself.
#[derive(Clone, Copy)]
pub struct Physics<'a> {
    pub mat: MaterialParams,
    pub domain: DomainSpec,
    pub data: &'a dyn ProblemData,
}

impl<'a> Physics<'a> {
    pub fn new(mat: MaterialParams, domain: DomainSpec, data: &'a dyn ProblemData) -> Self {
        Self { mat, domain, data }
    }
}

/// Convenience holder for the manufactured problem at one load case.
pub struct ManufacturedPhysics {
    pub data: Manufactured,
    pub domain: DomainSpec,
}

impl ManufacturedPhysics {
    pub fn new(mat: MaterialParams, domain: DomainSpec, load: LoadCase) -> Self {
        Self {
            data: Manufactured { load, mat },
            domain,
        }
    }

    pub fn physics(&self) -> Physics<'_> {
        Physics::new(self.data.mat, self.domain, &self.data)
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

fn check_shape(shape: &GridShape) -> Result<()> {
    if shape.nx < 3 || shape.ny < 3 {
        return Err(Error::invalid(format!(
            "finite differences need at least 3x3 nodes, got {}x{}",
            shape.nx, shape.ny
        )));
    }
    Ok(())
}

/// `(len, stride, count, line_stride, h)` describing the lines along `axis`.
fn lines(shape: &GridShape, axis: Axis) -> (usize, usize, usize, usize, f64) {
    match axis {
        Axis::X => (shape.nx, 1, shape.ny, shape.nx, shape.hx()),
        Axis::Y => (shape.ny, shape.nx, shape.nx, 1, shape.hy()),
    }
}

/// Writes `scale · ∂f/∂axis` into `out` (overwriting).
fn diff(f: &[f64], shape: &GridShape, axis: Axis, scale: f64, out: &mut [f64]) {
    let (len, stride, count, line_stride, h) = lines(shape, axis);
    let c = scale / (2.0 * h);
    for line in 0..count {
        let base = line * line_stride;
        let at = |k: usize| f[base + k * stride];
        out[base] = c * (-3.0 * at(0) + 4.0 * at(1) - at(2));
        for k in 1..len - 1 {
            out[base + k * stride] = c * (at(k + 1) - at(k - 1));
        }
        out[base + (len - 1) * stride] = c * (3.0 * at(len - 1) - 4.0 * at(len - 2) + at(len - 3));
    }
}

/// Accumulates `scale · Dᵀ g` into `acc`, the adjoint of [`diff`].
fn diff_adjoint(g: &[f64], shape: &GridShape, axis: Axis, scale: f64, acc: &mut [f64]) {
    let (len, stride, count, line_stride, h) = lines(shape, axis);
    let c = scale / (2.0 * h);
    for line in 0..count {
        let base = line * line_stride;
        let idx = |k: usize| base + k * stride;
        let g0 = c * g[idx(0)];
        acc[idx(0)] -= 3.0 * g0;
        acc[idx(1)] += 4.0 * g0;
        acc[idx(2)] -= g0;
        for k in 1..len - 1 {
            let gk = c * g[idx(k)];
            acc[idx(k + 1)] += gk;
            acc[idx(k - 1)] -= gk;
        }
        let gn = c * g[idx(len - 1)];
        acc[idx(len - 1)] += 3.0 * gn;
        acc[idx(len - 2)] -= 4.0 * gn;
        acc[idx(len - 3)] += gn;
    }
}

/// Second-order finite-difference gradient `(∂f/∂x, ∂f/∂y)` of a single
/// channel laid out row-major on `shape`.
pub fn fd_gradient(field: &[f64], shape: &GridShape) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shape(shape)?;
    if field.len() != shape.nodes() {
        return Err(Error::shape(shape.nodes(), field.len()));
    }
    let mut dx = vec![0.0; field.len()];
    let mut dy = vec![0.0; field.len()];
    diff(field, shape, Axis::X, 1.0, &mut dx);
    diff(field, shape, Axis::Y, 1.0, &mut dy);
    Ok((dx, dy))
}

fn channel(data: &[f64], n: usize, c: Channel) -> &[f64] {
    &data[c.index() * n..(c.index() + 1) * n]
}

/// Equilibrium residual `Div σ + B` at every node.
pub fn pde_residual(grid: &FieldGrid, physics: &Physics) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shape(&grid.shape)?;
    Ok(pde_forward(grid.data(), &grid.shape, physics))
}

fn pde_forward(data: &[f64], shape: &GridShape, physics: &Physics) -> (Vec<f64>, Vec<f64>) {
    let n = shape.nodes();
    let mut rx = vec![0.0; n];
    let mut ry = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    diff(channel(data, n, Channel::Sxx), shape, Axis::X, 1.0, &mut rx);
    diff(channel(data, n, Channel::Sxy), shape, Axis::Y, 1.0, &mut tmp);
    rx.iter_mut().zip(&tmp).for_each(|(r, t)| *r += t);
    diff(channel(data, n, Channel::Sxy), shape, Axis::X, 1.0, &mut ry);
    diff(channel(data, n, Channel::Syy), shape, Axis::Y, 1.0, &mut tmp);
    ry.iter_mut().zip(&tmp).for_each(|(r, t)| *r += t);
    for j in 0..shape.ny {
        let y = shape.y(j);
        for i in 0..shape.nx {
            let (bx, by) = physics.data.body_force(shape.x(i), y);
            rx[j * shape.nx + i] += bx;
            ry[j * shape.nx + i] += by;
        }
    }
    (rx, ry)
}

fn pde_adjoint(gx: &[f64], gy: &[f64], shape: &GridShape, grad: &mut [f64]) {
    let n = shape.nodes();
    let (sxx, rest) = grad[Channel::Sxx.index() * n..].split_at_mut(n);
    let (syy, sxy) = rest.split_at_mut(n);
    diff_adjoint(gx, shape, Axis::X, 1.0, sxx);
    diff_adjoint(gx, shape, Axis::Y, 1.0, sxy);
    diff_adjoint(gy, shape, Axis::X, 1.0, sxy);
    diff_adjoint(gy, shape, Axis::Y, 1.0, syy);
}

/// `σ − ℂ:ε(u)` with the strain taken from finite differences of the
/// displacement channels. Returns the `xx`, `yy` and `xy` residual grids.
pub fn constitutive_residual(grid: &FieldGrid, mat: &MaterialParams) -> Result<[Vec<f64>; 3]> {
    check_shape(&grid.shape)?;
    Ok(constitutive_forward(grid.data(), &grid.shape, mat))
}

fn constitutive_forward(data: &[f64], shape: &GridShape, mat: &MaterialParams) -> [Vec<f64>; 3] {
    let n = shape.nodes();
    let (ux, uy) = (channel(data, n, Channel::Ux), channel(data, n, Channel::Uy));
    let mut dux_dx = vec![0.0; n];
    let mut dux_dy = vec![0.0; n];
    let mut duy_dx = vec![0.0; n];
    let mut duy_dy = vec![0.0; n];
    diff(ux, shape, Axis::X, 1.0, &mut dux_dx);
    diff(ux, shape, Axis::Y, 1.0, &mut dux_dy);
    diff(uy, shape, Axis::X, 1.0, &mut duy_dx);
    diff(uy, shape, Axis::Y, 1.0, &mut duy_dy);
    let (l, p, m) = (mat.lame_lambda, mat.p_modulus(), mat.lame_mu);
    let (sxx, syy, sxy) = (
        channel(data, n, Channel::Sxx),
        channel(data, n, Channel::Syy),
        channel(data, n, Channel::Sxy),
    );
    let mut rxx = vec![0.0; n];
    let mut ryy = vec![0.0; n];
    let mut rxy = vec![0.0; n];
    for k in 0..n {
        rxx[k] = sxx[k] - (p * dux_dx[k] + l * duy_dy[k]);
        ryy[k] = syy[k] - (l * dux_dx[k] + p * duy_dy[k]);
        rxy[k] = sxy[k] - m * (dux_dy[k] + duy_dx[k]);
    }
    [rxx, ryy, rxy]
}

fn constitutive_adjoint(g: &[Vec<f64>; 3], shape: &GridShape, mat: &MaterialParams, grad: &mut [f64]) {
    let n = shape.nodes();
    let (l, p, m) = (mat.lame_lambda, mat.p_modulus(), mat.lame_mu);
    let mut g_dux_dx = vec![0.0; n];
    let mut g_duy_dy = vec![0.0; n];
    let mut g_shear = vec![0.0; n];
    for k in 0..n {
        grad[Channel::Sxx.index() * n + k] += g[0][k];
        grad[Channel::Syy.index() * n + k] += g[1][k];
        grad[Channel::Sxy.index() * n + k] += g[2][k];
        g_dux_dx[k] = -(p * g[0][k] + l * g[1][k]);
        g_duy_dy[k] = -(l * g[0][k] + p * g[1][k]);
        g_shear[k] = -m * g[2][k];
    }
    let (ux, rest) = grad.split_at_mut(n);
    let uy = &mut rest[..n];
    diff_adjoint(&g_dux_dx, shape, Axis::X, 1.0, ux);
    diff_adjoint(&g_shear, shape, Axis::Y, 1.0, ux);
    diff_adjoint(&g_shear, shape, Axis::X, 1.0, uy);
    diff_adjoint(&g_duy_dy, shape, Axis::Y, 1.0, uy);
}

/// Boundary node pairs `(outermost, next)` along `edge` and the grid
/// coordinates of the outermost node.
fn edge_nodes(shape: &GridShape, edge: Edge) -> Vec<(usize, usize, f64, f64)> {
    let (nx, ny) = (shape.nx, shape.ny);
    let id = |i: usize, j: usize| j * nx + i;
    match edge {
        Edge::Bottom => (0..nx).map(|i| (id(i, 0), id(i, 1), shape.x(i), shape.y(0))).collect(),
        Edge::Top => (0..nx)
            .map(|i| (id(i, ny - 1), id(i, ny - 2), shape.x(i), shape.y(ny - 1)))
            .collect(),
        Edge::Left => (0..ny).map(|j| (id(0, j), id(1, j), shape.x(0), shape.y(j))).collect(),
        Edge::Right => (0..ny)
            .map(|j| (id(nx - 1, j), id(nx - 2, j), shape.x(nx - 1), shape.y(j)))
            .collect(),
    }
}

/// Residual of one boundary edge, two components per edge node.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeResidual {
    pub edge: Edge,
    pub kind: BcKind,
    /// `[r_x, r_y]` per node along the edge.
    pub values: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcResidual {
    pub edges: Vec<EdgeResidual>,
}

impl BcResidual {
    pub fn dirichlet(&self) -> impl Iterator<Item = f64> + '_ {
        self.of_kind(BcKind::Dirichlet)
    }

    pub fn neumann(&self) -> impl Iterator<Item = f64> + '_ {
        self.of_kind(BcKind::Neumann)
    }

    fn of_kind(&self, kind: BcKind) -> impl Iterator<Item = f64> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.kind == kind)
            .flat_map(|e| e.values.iter().flat_map(|v| v.iter().copied()))
    }

    pub fn edge(&self, edge: Edge) -> Option<&EdgeResidual> {
        self.edges.iter().find(|e| e.edge == edge)
    }
}

#[inline]
fn extrapolate(data: &[f64], n: usize, c: Channel, outer: usize, inner: usize) -> f64 {
    let ch = channel(data, n, c);
    1.5 * ch[outer] - 0.5 * ch[inner]
}

/// Dirichlet residual `u − u_bc` and Neumann residual `σ·n − t_bc` on the
/// tagged edges.
pub fn bc_residual(grid: &FieldGrid, physics: &Physics) -> Result<BcResidual> {
    check_shape(&grid.shape)?;
    Ok(bc_forward(grid.data(), &grid.shape, physics))
}

fn bc_forward(data: &[f64], shape: &GridShape, physics: &Physics) -> BcResidual {
    let n = shape.nodes();
    let edges = Edge::ALL
        .iter()
        .map(|&edge| {
            let kind = physics.domain.bc.get(edge);
            let (nx, ny) = edge.normal();
            let values = edge_nodes(shape, edge)
                .into_iter()
                .map(|(outer, inner, x, y)| {
                    let (bx, by) = physics.domain.project_to_edge(edge, x, y);
                    let e = |c| extrapolate(data, n, c, outer, inner);
                    match kind {
                        BcKind::Dirichlet => {
                            let (ux, uy) = physics.data.displacement(bx, by);
                            [e(Channel::Ux) - ux, e(Channel::Uy) - uy]
                        }
                        BcKind::Neumann => {
                            let (tx, ty) = physics.data.traction(edge, bx, by);
                            let (sxx, syy, sxy) = (e(Channel::Sxx), e(Channel::Syy), e(Channel::Sxy));
                            [sxx * nx + sxy * ny - tx, sxy * nx + syy * ny - ty]
                        }
                    }
                })
                .collect();
            EdgeResidual { edge, kind, values }
        })
        .collect();
    BcResidual { edges }
}

/// `scale_d`/`scale_n` multiply the upstream gradient of the Dirichlet and
/// Neumann entries respectively.
fn bc_adjoint(res: &BcResidual, shape: &GridShape, scale_d: f64, scale_n: f64, grad: &mut [f64]) {
    let n = shape.nodes();
    let mut add = |c: Channel, outer: usize, inner: usize, g: f64| {
        grad[c.index() * n + outer] += 1.5 * g;
        grad[c.index() * n + inner] -= 0.5 * g;
    };
    for er in &res.edges {
        let (nx, ny) = er.edge.normal();
        for ((outer, inner, _, _), r) in edge_nodes(shape, er.edge).into_iter().zip(&er.values) {
            let (gx, gy) = (sign(r[0]), sign(r[1]));
            match er.kind {
                BcKind::Dirichlet => {
                    add(Channel::Ux, outer, inner, scale_d * gx);
                    add(Channel::Uy, outer, inner, scale_d * gy);
                }
                BcKind::Neumann => {
                    let (gx, gy) = (scale_n * gx, scale_n * gy);
                    add(Channel::Sxx, outer, inner, gx * nx);
                    add(Channel::Sxy, outer, inner, gx * ny + gy * nx);
                    add(Channel::Syy, outer, inner, gy * ny);
                }
            }
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, usize) {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v.abs(), c + 1));
    (if count == 0 { 0.0 } else { sum / count as f64 }, count)
}

/// Weighted L1 physics loss. Each component is the mean absolute residual.
pub fn total_loss(grid: &FieldGrid, weights: &LossWeights, physics: &Physics) -> Result<LossBreakdown> {
    check_shape(&grid.shape)?;
    Ok(loss_impl(grid.data(), &grid.shape, weights, physics, None))
}

/// Loss plus its gradient with respect to every grid value.
pub fn total_loss_and_grad(
    grid: &FieldGrid,
    weights: &LossWeights,
    physics: &Physics,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_shape(&grid.shape)?;
    let mut grad = vec![0.0; grid.data().len()];
    let loss = loss_impl(grid.data(), &grid.shape, weights, physics, Some(&mut grad));
    Ok((loss, grad))
}

/// Same as [`total_loss_and_grad`] on raw channel-major data, accumulating
/// `scale · ∂L/∂data` into `grad`.
pub fn loss_and_grad_raw(
    data: &[f64],
    shape: &GridShape,
    weights: &LossWeights,
    physics: &Physics,
    scale: f64,
    grad: &mut [f64],
) -> Result<LossBreakdown> {
    check_shape(shape)?;
    if data.len() != shape.len() || grad.len() != shape.len() {
        return Err(Error::shape(shape.len(), data.len().min(grad.len())));
    }
    let mut local = vec![0.0; shape.len()];
    let loss = loss_impl(data, shape, weights, physics, Some(&mut local));
    grad.iter_mut().zip(&local).for_each(|(g, l)| *g += scale * l);
    Ok(loss)
}

fn loss_impl(
    data: &[f64],
    shape: &GridShape,
    w: &LossWeights,
    physics: &Physics,
    grad: Option<&mut [f64]>,
) -> LossBreakdown {
    let (rx, ry) = pde_forward(data, shape, physics);
    let cr = constitutive_forward(data, shape, &physics.mat);
    let bc = bc_forward(data, shape, physics);

    let (pde, n_pde) = mean_abs(rx.iter().chain(&ry));
    let (cons, n_cons) = mean_abs(cr.iter().flatten());
    let dir: Vec<f64> = bc.dirichlet().collect();
    let neu: Vec<f64> = bc.neumann().collect();
    let (dirichlet, n_dir) = mean_abs(&dir);
    let (neumann, n_neu) = mean_abs(&neu);
    let loss = LossBreakdown::weighted(pde, cons, dirichlet, neumann, w);

    if let Some(grad) = grad {
        let s = w.pde / n_pde as f64;
        let gx: Vec<f64> = rx.iter().map(|&r| s * sign(r)).collect();
        let gy: Vec<f64> = ry.iter().map(|&r| s * sign(r)).collect();
        pde_adjoint(&gx, &gy, shape, grad);

        let s = w.constitutive / n_cons as f64;
        let gc = cr.map(|r| r.iter().map(|&v| s * sign(v)).collect::<Vec<_>>());
        constitutive_adjoint(&gc, shape, &physics.mat, grad);

        let sd = if n_dir > 0 { w.dirichlet / n_dir as f64 } else { 0.0 };
        let sn = if n_neu > 0 { w.neumann / n_neu as f64 } else { 0.0 };
        bc_adjoint(&bc, shape, sd, sn, grad);
    }
    loss
}
