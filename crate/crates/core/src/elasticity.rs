//! Closed-form physics of the plane-strain elastostatics problem.
//!
//! The body force is manufactured so that
//!
//! ```text
//! u_x = cos(2πx)·sin(πy)
//! u_y = Q·sin(πx)·y⁴/4
//! ```
//!
//! solves `Div σ + B = 0` exactly on the unit square. The analytical fields
//! double as boundary data and as a verification oracle for the solver and
//! the residual operators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic Lamé constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub lame_lambda: f64,
    /// Shear modulus μ.
    pub lame_mu: f64,
}

impl MaterialParams {
    pub fn new(lame_lambda: f64, lame_mu: f64) -> Result<Self> {
        let mat = Self {
            lame_lambda,
            lame_mu,
        };
        mat.validate()?;
        Ok(mat)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lame_mu > 0.0) {
            return Err(Error::invalid(format!(
                "shear modulus must be positive, got {}",
                self.lame_mu
            )));
        }
        if !(self.lame_lambda + self.lame_mu > 0.0) {
            return Err(Error::invalid(format!(
                "lambda + mu must be positive, got {}",
                self.lame_lambda + self.lame_mu
            )));
        }
        Ok(())
    }

    /// λ + 2μ, the P-wave modulus.
    #[inline]
    pub fn p_modulus(&self) -> f64 {
        self.lame_lambda + 2.0 * self.lame_mu
    }

    /// The 3×3 plane-strain stiffness in Voigt form acting on
    /// `(εxx, εyy, 2εxy)`.
    pub fn voigt_stiffness(&self) -> [[f64; 3]; 3] {
        let l = self.lame_lambda;
        let m = self.lame_mu;
        [
            [l + 2.0 * m, l, 0.0],
            [l, l + 2.0 * m, 0.0],
            [0.0, 0.0, m],
        ]
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            lame_lambda: 1.0,
            lame_mu: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Edges of the rectangular domain, in the order used by [`DomainSpec::bc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    /// Outward unit normal.
    pub fn normal(self) -> (f64, f64) {
        match self {
            Edge::Bottom => (0.0, -1.0),
            Edge::Right => (1.0, 0.0),
            Edge::Top => (0.0, 1.0),
            Edge::Left => (-1.0, 0.0),
        }
    }

    fn index(self) -> usize {
        match self {
            Edge::Bottom => 0,
            Edge::Right => 1,
            Edge::Top => 2,
            Edge::Left => 3,
        }
    }
}

/// Per-edge boundary condition tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcPartition {
    pub bottom: BcKind,
    pub right: BcKind,
    pub top: BcKind,
    pub left: BcKind,
}

impl BcPartition {
    pub fn get(&self, edge: Edge) -> BcKind {
        [self.bottom, self.right, self.top, self.left][edge.index()]
    }

    pub fn has_dirichlet(&self) -> bool {
        Edge::ALL
            .iter()
            .any(|&e| self.get(e) == BcKind::Dirichlet)
    }
}

impl Default for BcPartition {
    /// Clamped to the manufactured trace on three sides, traction on top.
    fn default() -> Self {
        Self {
            bottom: BcKind::Dirichlet,
            right: BcKind::Dirichlet,
            top: BcKind::Neumann,
            left: BcKind::Dirichlet,
        }
    }
}

/// Axis-aligned rectangle `[0, width] × [0, height]` with its BC layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub width: f64,
    pub height: f64,
    pub bc: BcPartition,
}

impl DomainSpec {
    pub fn unit_square() -> Self {
        Self {
            width: 1.0,
            height: 1.0,
            bc: BcPartition::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::invalid(format!(
                "domain extents must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Closest point on `edge` to `(x, y)`.
    pub fn project_to_edge(&self, edge: Edge, x: f64, y: f64) -> (f64, f64) {
        match edge {
            Edge::Bottom => (x, 0.0),
            Edge::Top => (x, self.height),
            Edge::Left => (0.0, y),
            Edge::Right => (self.width, y),
        }
    }
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self::unit_square()
    }
}

/// Load magnitude `Q` and the characteristic displacement `U0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub q: f64,
    pub u0: f64,
}

impl LoadCase {
    pub const Q_MIN: f64 = 0.0;
    pub const Q_MAX: f64 = 4.0;

    pub fn new(q: f64, u0: f64) -> Result<Self> {
        let load = Self { q, u0 };
        load.validate()?;
        Ok(load)
    }

    /// Load case with the default characteristic displacement `U0 = 1`.
    pub fn with_q(q: f64) -> Result<Self> {
        Self::new(q, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        // Q grids built by repeated addition land a few ulps past the end.
        let slack = 1e-9;
        if !(self.q >= Self::Q_MIN - slack && self.q <= Self::Q_MAX + slack) {
            return Err(Error::invalid(format!("Q must lie in [0, 4], got {}", self.q)));
        }
        if !(self.u0 > 0.0) {
            return Err(Error::invalid(format!("U0 must be positive, got {}", self.u0)));
        }
        Ok(())
    }
}

/// Body force `(Bx, By)` of the manufactured problem.
pub fn body_force(x: f64, y: f64, load: &LoadCase, mat: &MaterialParams) -> (f64, f64) {
    let (l, m, q) = (mat.lame_lambda, mat.lame_mu, load.q);
    let pi2 = PI * PI;
    let c2x = (2.0 * PI * x).cos();
    let s2x = (2.0 * PI * x).sin();
    let cx = (PI * x).cos();
    let sx = (PI * x).sin();
    let sy = (PI * y).sin();
    let cy = (PI * y).cos();
    let (y2, y3, y4) = (y * y, y * y * y, y * y * y * y);

    let bx = l * (4.0 * pi2 * c2x * sy - PI * cx * q * y3)
        + m * (9.0 * pi2 * c2x * sy - PI * cx * q * y3);
    let by = l * (2.0 * pi2 * s2x * cy - 3.0 * sx * q * y2)
        + m * (-6.0 * sx * q * y2 + 2.0 * pi2 * s2x * cy + 0.25 * pi2 * sx * q * y4);
    (bx, by)
}

/// Manufactured displacement `(u_x, u_y)`.
pub fn analytical_displacement(x: f64, y: f64, load: &LoadCase) -> (f64, f64) {
    let ux = (2.0 * PI * x).cos() * (PI * y).sin();
    let uy = load.q * (PI * x).sin() * y.powi(4) / 4.0;
    (ux, uy)
}

/// Exact displacement gradient `(dux/dx, dux/dy, duy/dx, duy/dy)`.
pub fn analytical_displacement_gradient(x: f64, y: f64, load: &LoadCase) -> [f64; 4] {
    let q = load.q;
    [
        -2.0 * PI * (2.0 * PI * x).sin() * (PI * y).sin(),
        PI * (2.0 * PI * x).cos() * (PI * y).cos(),
        q * PI * (PI * x).cos() * y.powi(4) / 4.0,
        q * (PI * x).sin() * y.powi(3),
    ]
}

/// Stress of the manufactured solution.
pub fn analytical_stress(x: f64, y: f64, load: &LoadCase, mat: &MaterialParams) -> (f64, f64, f64) {
    let [dxx, dxy, dyx, dyy] = analytical_displacement_gradient(x, y, load);
    let (exx, eyy, exy) = strain_from_grad(dxx, dxy, dyx, dyy);
    constitutive_stress(exx, eyy, exy, mat)
}

/// Traction `σ·n` of the manufactured solution on `edge` at `(x, y)`.
pub fn analytical_traction(
    edge: Edge,
    x: f64,
    y: f64,
    load: &LoadCase,
    mat: &MaterialParams,
) -> (f64, f64) {
    let (sxx, syy, sxy) = analytical_stress(x, y, load, mat);
    let (nx, ny) = edge.normal();
    (sxx * nx + sxy * ny, sxy * nx + syy * ny)
}

/// Plane-strain Hooke's law, `σ = λ tr(ε) I + 2μ ε`.
#[inline]
pub fn constitutive_stress(exx: f64, eyy: f64, exy: f64, mat: &MaterialParams) -> (f64, f64, f64) {
    let tr = exx + eyy;
    let l = mat.lame_lambda;
    let m2 = 2.0 * mat.lame_mu;
    (l * tr + m2 * exx, l * tr + m2 * eyy, m2 * exy)
}

/// Symmetric part of the displacement gradient.
#[inline]
pub fn strain_from_grad(dux_dx: f64, dux_dy: f64, duy_dx: f64, duy_dy: f64) -> (f64, f64, f64) {
    (dux_dx, duy_dy, 0.5 * (dux_dy + duy_dx))
}

/// Source of body force and boundary data for a solve.
pub trait ProblemData: Sync {
    fn body_force(&self, x: f64, y: f64) -> (f64, f64);
    fn displacement(&self, x: f64, y: f64) -> (f64, f64);
    fn traction(&self, edge: Edge, x: f64, y: f64) -> (f64, f64);
}

/// Body force and boundary data taken from the manufactured solution.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub load: LoadCase,
    pub mat: MaterialParams,
}

impl ProblemData for Manufactured {
    fn body_force(&self, x: f64, y: f64) -> (f64, f64) {
        body_force(x, y, &self.load, &self.mat)
    }

    fn displacement(&self, x: f64, y: f64) -> (f64, f64) {
        analytical_displacement(x, y, &self.load)
    }

    fn traction(&self, edge: Edge, x: f64, y: f64) -> (f64, f64) {
        analytical_traction(edge, x, y, &self.load, &self.mat)
    }
}

/// Homogeneous problem: no body force, zero boundary data.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unloaded;

impl ProblemData for Unloaded {
    fn body_force(&self, _: f64, _: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn displacement(&self, _: f64, _: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn traction(&self, _: Edge, _: f64, _: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mat() -> MaterialParams {
        MaterialParams::default()
    }

    #[test]
    fn body_force_examples() {
        let q4 = LoadCase::with_q(4.0).unwrap();
        let q0 = LoadCase::with_q(0.0).unwrap();
        assert_eq!(body_force(0.0, 0.0, &q4, &mat()), (0.0, 0.0));

        let (bx, by) = body_force(0.0, 0.5, &q4, &mat());
        assert_abs_diff_eq!(bx, 8.5 * PI * PI - 0.75 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(bx, 81.5355, epsilon = 1e-4);
        assert_abs_diff_eq!(by, 0.0, epsilon = 1e-12);

        let (bx, by) = body_force(0.5, 0.5, &q0, &mat());
        assert_abs_diff_eq!(bx, -8.5 * PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(bx, -83.8917, epsilon = 1e-4);
        assert_abs_diff_eq!(by, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn displacement_examples() {
        for q in [0.0, 1.3, 4.0] {
            let load = LoadCase::with_q(q).unwrap();
            let (ux, uy) = analytical_displacement(0.37, 0.0, &load);
            assert_abs_diff_eq!(ux, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(uy, 0.0, epsilon = 1e-15);
        }
        let (ux, uy) = analytical_displacement(0.5, 1.0, &LoadCase::with_q(4.0).unwrap());
        assert_abs_diff_eq!(ux, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(uy, 1.0, epsilon = 1e-15);

        let (ux, uy) = analytical_displacement(0.25, 0.5, &LoadCase::with_q(2.0).unwrap());
        assert_abs_diff_eq!(ux, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(uy, 0.0220971, epsilon = 1e-7);
    }

    #[test]
    fn stress_examples() {
        let q4 = LoadCase::with_q(4.0).unwrap();
        for x in [0.0, 0.2, 0.5, 0.9] {
            let (_, _, sxy) = analytical_stress(x, 0.0, &q4, &mat());
            assert_abs_diff_eq!(sxy, 0.5 * PI * (2.0 * PI * x).cos(), epsilon = 1e-12);
        }
        let (_, syy, _) = analytical_stress(0.5, 1.0, &q4, &mat());
        assert_abs_diff_eq!(syy, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn constitutive_and_strain_examples() {
        assert_eq!(constitutive_stress(0.0, 0.0, 0.0, &mat()), (0.0, 0.0, 0.0));
        assert_eq!(constitutive_stress(1.0, 0.0, 0.0, &mat()), (2.0, 1.0, 0.0));
        assert_eq!(constitutive_stress(0.0, 0.0, 1.0, &mat()), (0.0, 0.0, 1.0));

        assert_eq!(strain_from_grad(1.0, 0.0, 0.0, 1.0), (1.0, 1.0, 0.0));
        assert_eq!(strain_from_grad(0.0, -1.0, 1.0, 0.0), (0.0, 0.0, 0.0));
        assert_eq!(strain_from_grad(0.0, 1.0, 0.0, 0.0), (0.0, 0.0, 0.5));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MaterialParams::new(1.0, 0.0).is_err());
        assert!(MaterialParams::new(-2.0, 1.0).is_err());
        assert!(LoadCase::new(4.5, 1.0).is_err());
        assert!(LoadCase::new(1.0, 0.0).is_err());
    }

    /// Divergence of the analytical stress by a 6th-order central difference
    /// of the closed-form stress, plus the body force.
    fn equilibrium_residual(x: f64, y: f64, load: &LoadCase) -> (f64, f64) {
        let h = 1e-3;
        let c =[(-3.0, -1.0), (-2.0, 9.0), (-1.0, -45.0), (1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
        let mut dsxx_dx = 0.0;
        let mut dsxy_dy = 0.0;
        let mut dsxy_dx = 0.0;
        let mut dsyy_dy = 0.0;
        for (k, wk) in c {
            let (sxx, _, sxy) = analytical_stress(x + k * h, y, load, &mat());
            dsxx_dx += wk * sxx;
            dsxy_dx += wk * sxy;
            let (_, syy, sxy) = analytical_stress(x, y + k * h, load, &mat());
            dsxy_dy += wk * sxy;
            dsyy_dy += wk * syy;
        }
        let scale = 1.0 / (60.0 * h);
        let (bx, by) = body_force(x, y, load, &mat());
        (
            (dsxx_dx + dsxy_dy) * scale + bx,
            (dsxy_dx + dsyy_dy) * scale + by,
        )
    }

    #[test]
    fn manufactured_solution_balances_body_force() {
        for &(x, y, q) in &[(0.3, 0.7, 4.0), (0.51, 0.12, 1.7), (0.9, 0.95, 0.0)] {
            let (rx, ry) = equilibrium_residual(x, y, &LoadCase::with_q(q).unwrap());
            assert!(rx.abs() < 1e-7 && ry.abs() < 1e-7, "({rx}, {ry})");
        }
    }

    #[test]
    fn top_edge_peak_displacement_matches_u0() {
        let load = LoadCase::with_q(4.0).unwrap();
        let peak = (0..=1000)
            .map(|i| analytical_displacement(i as f64 / 1000.0, 1.0, &load).1)
            .fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn constitutive_is_linear(
            e1 in prop::array::uniform3(-10.0f64..10.0),
            e2 in prop::array::uniform3(-10.0f64..10.0),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let m = mat();
            let lhs = constitutive_stress(
                a * e1[0] + b * e2[0], a * e1[1] + b * e2[1], a * e1[2] + b * e2[2], &m);
            let s1 = constitutive_stress(e1[0], e1[1], e1[2], &m);
            let s2 = constitutive_stress(e2[0], e2[1], e2[2], &m);
            prop_assert!((lhs.0 - (a * s1.0 + b * s2.0)).abs() < 1e-11);
            prop_assert!((lhs.1 - (a * s1.1 + b * s2.1)).abs() < 1e-11);
            prop_assert!((lhs.2 - (a * s1.2 + b * s2.2)).abs() < 1e-11);
        }

        #[test]
        fn strain_ignores_rotation(g in prop::array::uniform4(-10.0f64..10.0), w in -10.0f64..10.0) {
            let base = strain_from_grad(g[0], g[1], g[2], g[3]);
            let rotated = strain_from_grad(g[0], g[1] + w, g[2] - w, g[3]);
            prop_assert!((base.0 - rotated.0).abs() < 1e-12);
            prop_assert!((base.1 - rotated.1).abs() < 1e-12);
            prop_assert!((base.2 - rotated.2).abs() < 1e-12);
        }

        #[test]
        fn body_force_affine_in_q(x in 0.0f64..1.0, y in 0.0f64..1.0, q in 0.0f64..4.0) {
            let f = |q: f64| body_force(x, y, &LoadCase::with_q(q).unwrap(), &mat());
            let (b0, b1, bq) = (f(0.0), f(1.0), f(q));
            prop_assert!((bq.0 - (b0.0 + q * (b1.0 - b0.0))).abs() < 1e-9);
            prop_assert!((bq.1 - (b0.1 + q * (b1.1 - b0.1))).abs() < 1e-9);
        }
    }
}
