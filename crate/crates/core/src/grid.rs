//! Uniform periodic configuration-space grids.
//!
//! Every axis covers the half-open interval `[lower, upper)` with `n` cells of
//! equal width. Sample nodes sit at cell centres, `lower + (i + 1/2) dx`, so a
//! grid symmetric about the origin has nodes symmetric about the origin.
//! Flattened indices are row-major: the last axis varies fastest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of grid cells a single grid may hold.
pub const MAX_GRID_POINTS: usize = 1 << 24;
/// Largest number of axes supported.
pub const MAX_AXES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n_points: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Axis {
    pub fn new(n_points: usize, lower: f64, upper: f64) -> Self {
        Axis { n_points, lower, upper }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    /// Coordinate of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Maps `x` back into `[lower, upper)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        let mut y = (x - self.lower).rem_euclid(l) + self.lower;
        if y >= self.upper {
            y -= l;
        }
        y
    }

    /// Angular wavenumbers in FFT order (0, 1, ..., n/2-1, -n/2, ..., -1) * 2pi/L.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = 2.0 * PI / self.length();
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j } else { j - n };
                m as f64 * dk
            })
            .collect()
    }

    /// Index of the cell containing `x` (after periodic wrap).
    pub fn cell_of(&self, x: f64) -> usize {
        let y = self.wrap(x);
        let i = ((y - self.lower) / self.spacing()).floor() as isize;
        i.clamp(0, self.n_points as isize - 1) as usize
    }
}

/// A rectangular periodic grid with up to four axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_AXES {
            return Err(Error::InvalidGrid(format!(
                "{} axes requested, between 1 and {MAX_AXES} supported",
                axes.len()
            )));
        }
        let mut total: usize = 1;
        for (i, a) in axes.iter().enumerate() {
            if a.n_points < 8 || !a.n_points.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: n_points = {} must be a power of two >= 8",
                    a.n_points
                )));
            }
            if !(a.lower.is_finite() && a.upper.is_finite() && a.upper > a.lower) {
                return Err(Error::InvalidGrid(format!("axis {i}: upper must exceed lower")));
            }
            total = total.saturating_mul(a.n_points);
        }
        if total > MAX_GRID_POINTS {
            return Err(Error::GridCapExceeded {
                points: total,
                cap: MAX_GRID_POINTS,
            });
        }
        Ok(Grid { axes })
    }

    /// One-dimensional convenience constructor.
    pub fn line(n_points: usize, lower: f64, upper: f64) -> Result<Self> {
        Grid::new(vec![Axis::new(n_points, lower, upper)])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n_points).collect()
    }

    pub fn total_points(&self) -> usize {
        self.axes.iter().map(|a| a.n_points).product()
    }

    /// Volume element of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    /// Length of the main diagonal of the domain.
    pub fn diameter(&self) -> f64 {
        self.axes.iter().map(|a| a.length() * a.length()).sum::<f64>().sqrt()
    }

    /// Row-major strides (last axis contiguous).
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.axes.len()];
        for a in (0..self.axes.len().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.axes[a + 1].n_points;
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for a in (0..self.axes.len()).rev() {
            let n = self.axes[a].n_points;
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Coordinates of the node with flattened index `flat`.
    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.node(i))
            .collect()
    }

    /// Evaluates `f` at every node, in flattened order.
    pub fn map_nodes<T>(&self, mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.total_points());
        let mut coords = vec![0.0; self.n_axes()];
        for flat in 0..self.total_points() {
            let idx = self.multi_index(flat);
            for (a, &i) in idx.iter().enumerate() {
                coords[a] = self.axes[a].node(i);
            }
            out.push(f(&coords));
        }
        out
    }

    /// Wraps every coordinate of `point` into the domain.
    pub fn wrap(&self, point: &mut [f64]) {
        for (x, a) in point.iter_mut().zip(&self.axes) {
            *x = a.wrap(*x);
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().zip(&self.axes).all(|(&x, a)| x >= a.lower && x < a.upper)
    }

    /// Sub-grid formed by the axes in `keep` (in the given order).
    pub fn select_axes(&self, keep: &[usize]) -> Result<Grid> {
        Grid::new(keep.iter().map(|&a| self.axes[a]).collect())
    }

    /// Sub-grid made of the cell block `start[a] .. start[a] + count[a]` on every axis.
    pub fn block(&self, start: &[usize], count: &[usize]) -> Result<Grid> {
        let axes = self
            .axes
            .iter()
            .zip(start.iter().zip(count))
            .map(|(a, (&s, &c))| {
                let dx = a.spacing();
                Axis::new(c, a.lower + s as f64 * dx, a.lower + (s + c) as f64 * dx)
            })
            .collect();
        Grid::new(axes)
    }
}

/// Role of a grid axis in a measurement setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    System,
    ApparatusPointer,
    Rest,
}

/// Assignment of a grid axis to a particle coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRole {
    pub axis_index: usize,
    pub role: Role,
    pub particle_index: usize,
    pub mass: f64,
}

impl AxisRole {
    pub fn new(axis_index: usize, role: Role, particle_index: usize, mass: f64) -> Self {
        AxisRole {
            axis_index,
            role,
            particle_index,
            mass,
        }
    }
}

/// Checks that `roles` assigns exactly one positive mass to every axis and
/// returns the masses in axis order.
pub fn masses_from_roles(grid: &Grid, roles: &[AxisRole]) -> Result<Vec<f64>> {
    let mut masses = vec![None; grid.n_axes()];
    for r in roles {
        if r.axis_index >= grid.n_axes() {
            return Err(Error::param("roles", format!("axis {} does not exist", r.axis_index)));
        }
        if !(r.mass > 0.0) || r.mass.is_nan() {
            return Err(Error::param(
                "roles",
                format!("axis {} has non-positive mass", r.axis_index),
            ));
        }
        if masses[r.axis_index].replace(r.mass).is_some() {
            return Err(Error::param(
                "roles",
                format!("axis {} has more than one role", r.axis_index),
            ));
        }
    }
    masses
        .into_iter()
        .enumerate()
        .map(|(a, m)| m.ok_or_else(|| Error::param("roles", format!("axis {a} has no role"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_axes() {
        assert!(Grid::line(12, 0.0, 1.0).is_err());
        assert!(Grid::line(4, 0.0, 1.0).is_err());
        assert!(Grid::line(16, 1.0, 1.0).is_err());
        assert!(matches!(
            Grid::new(vec![Axis::new(8192, 0.0, 1.0); 2]),
            Err(Error::GridCapExceeded { .. })
        ));
        assert!(Grid::new(vec![Axis::new(8, 0.0, 1.0); 5]).is_err());
    }

    #[test]
    fn nodes_are_cell_centres() {
        let g = Grid::line(8, -4.0, 4.0).unwrap();
        assert_eq!(g.axis(0).nodes(), vec![-3.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5]);
        assert_eq!(g.axis(0).cell_of(0.0), 4);
        assert_eq!(g.axis(0).cell_of(-4.0), 0);
        assert_eq!(g.axis(0).cell_of(4.0), 0);
        assert_eq!(g.axis(0).wrap(5.0), -3.0);
    }

    #[test]
    fn flat_and_multi_index_agree() {
        let g = Grid::new(vec![Axis::new(8, 0.0, 1.0), Axis::new(16, 0.0, 2.0)]).unwrap();
        for flat in 0..g.total_points() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.strides(), vec![16, 1]);
    }

    #[test]
    fn wavenumbers_in_fft_order() {
        let a = Axis::new(8, 0.0, 2.0 * PI);
        assert_eq!(a.wavenumbers(), vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn roles_need_one_mass_per_axis() {
        let g = Grid::new(vec![Axis::new(8, 0.0, 1.0); 2]).unwrap();
        let ok = [
            AxisRole::new(0, Role::System, 0, 1.0),
            AxisRole::new(1, Role::ApparatusPointer, 1, 5.0),
        ];
        assert_eq!(masses_from_roles(&g, &ok).unwrap(), vec![1.0, 5.0]);
        assert!(masses_from_roles(&g, &ok[..1]).is_err());
        let dup = [ok[0], ok[0]];
        assert!(masses_from_roles(&g, &dup).is_err());
        let neg = [AxisRole::new(0, Role::System, 0, -1.0), ok[1]];
        assert!(masses_from_roles(&g, &neg).is_err());
    }
}
