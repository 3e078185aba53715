use super::mesh::Mesh;
use super::solve::NodalSolution;
use crate::error::Result;
use crate::grid::{FieldGrid, GridShape, CHANNELS};

/// Evaluates the P1 interpolant of all five nodal channels at the grid nodes.
pub fn sample_to_grid(mesh: &Mesh, sol: &NodalSolution, shape: GridShape, q: f64) -> Result<FieldGrid> {
    let channels = sol.channels();
    let n = shape.nodes();
    let mut data = vec![0.0; CHANNELS * n];
    for j in 0..shape.ny {
        let y = shape.y(j);
        for i in 0..shape.nx {
            let x = shape.x(i);
            let (t, w) = mesh.locate(x, y)?;
            let tri = mesh.triangles[t];
            let k = j * shape.nx + i;
            for (c, values) in channels.iter().enumerate() {
                data[c * n + k] = w[0] * values[tri[0]] + w[1] * values[tri[1]] + w[2] * values[tri[2]];
            }
        }
    }
    FieldGrid::from_vec(shape, q, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::DomainSpec;
    use crate::fem::mesh::{build_coarse_mesh, CellSplit};
    use crate::grid::Channel;

    fn from_nodes(mesh: &Mesh, f: impl Fn(f64, f64) -> [f64; 5]) -> NodalSolution {
        let vals: Vec<[f64; 5]> = mesh.nodes.iter().map(|p| f(p[0], p[1])).collect();
        let col = |c: usize| vals.iter().map(|v| v[c]).collect::<Vec<_>>();
        NodalSolution {
            ux: col(0),
            uy: col(1),
            sxx: col(2),
            syy: col(3),
            sxy: col(4),
        }
    }

    #[test]
    fn constant_field_is_reproduced() {
        let mesh = build_coarse_mesh(&DomainSpec::unit_square(), 41).unwrap();
        let sol = from_nodes(&mesh, |_, _| [1.5, -2.0, 3.0, 0.25, 7.0]);
        let g = sample_to_grid(&mesh, &sol, GridShape::unit(32), 0.0).unwrap();
        for c in Channel::ALL {
            let expect = [1.5, -2.0, 3.0, 0.25, 7.0][c.index()];
            assert!(g.channel(c).iter().all(|v| (v - expect).abs() < 1e-13));
        }
    }

    #[test]
    fn affine_field_is_exact_and_nodes_hit() {
        // 8 cells → nodes at multiples of 1/8; a 4-point grid has centers at
        // 1/8, 3/8, ... which coincide with mesh nodes.
        let mesh = Mesh::structured(&DomainSpec::unit_square(), 8, 8, CellSplit::Diagonal).unwrap();
        let f = |x: f64, y: f64| [x, y, 2.0 * x - y, 1.0 + y, x + 3.0 * y];
        let sol = from_nodes(&mesh, f);
        let shape = GridShape::unit(4);
        let g = sample_to_grid(&mesh, &sol, shape, 0.0).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                let v = f(shape.x(i), shape.y(j));
                for c in Channel::ALL {
                    assert!((g.get(c, i, j) - v[c.index()]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn default_lr_and_hr_resolutions_sample() {
        let mesh = build_coarse_mesh(&DomainSpec::unit_square(), 41).unwrap();
        let sol = from_nodes(&mesh, |x, y| [x, y, x * y, 0.0, 1.0]);
        assert!(sample_to_grid(&mesh, &sol, GridShape::unit(32), 1.0).is_ok());
        let hr = sample_to_grid(&mesh, &sol, GridShape::unit(128), 1.0).unwrap();
        assert_eq!(hr.shape.nodes(), 16384);
    }
}
