//! Spinor wavefunctions and probability densities on a [`Grid`].

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Amplitudes `Psi_alpha(q)` for `n_spin` components over every grid cell.
///
/// Storage is component-major: component `alpha` occupies
/// `amplitudes[alpha * total_points .. (alpha + 1) * total_points]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorWaveFunction {
    grid: Grid,
    n_spin: usize,
    amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl SpinorWaveFunction {
    pub fn new(grid: Grid, n_spin: usize, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if n_spin == 0 {
            return Err(Error::param("n_spin", "must be at least 1"));
        }
        if amplitudes.len() != n_spin * grid.total_points() {
            return Err(Error::GridMismatch(format!(
                "expected {} amplitudes, got {}",
                n_spin * grid.total_points(),
                amplitudes.len()
            )));
        }
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFiniteAmplitude);
        }
        Ok(SpinorWaveFunction {
            grid,
            n_spin,
            amplitudes,
            time,
        })
    }

    /// Single-component wavefunction sampled from `f` at the grid nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let amps = grid.map_nodes(|q| f(q));
        SpinorWaveFunction::new(grid, 1, amps, 0.0)
    }

    /// Multi-component wavefunction; `f` returns all `n_spin` components at a node.
    pub fn from_spinor_fn(grid: Grid, n_spin: usize, f: impl Fn(&[f64]) -> Vec<Complex64>) -> Result<Self> {
        let total = grid.total_points();
        let mut amps = vec![Complex64::new(0.0, 0.0); n_spin * total];
        let values = grid.map_nodes(|q| f(q));
        for (cell, comps) in values.into_iter().enumerate() {
            if comps.len() != n_spin {
                return Err(Error::GridMismatch(format!(
                    "spinor function returned {} components, expected {n_spin}",
                    comps.len()
                )));
            }
            for (alpha, z) in comps.into_iter().enumerate() {
                amps[alpha * total + cell] = z;
            }
        }
        SpinorWaveFunction::new(grid, n_spin, amps, 0.0)
    }

    pub fn zeros(grid: Grid, n_spin: usize) -> Result<Self> {
        let n = n_spin * grid.total_points();
        SpinorWaveFunction::new(grid, n_spin, vec![Complex64::new(0.0, 0.0); n], 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_spin(&self) -> usize {
        self.n_spin
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn component(&self, alpha: usize) -> &[Complex64] {
        let n = self.grid.total_points();
        &self.amplitudes[alpha * n..(alpha + 1) * n]
    }

    pub fn all_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `sum_alpha sum_cells |Psi_alpha|^2 dq`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if !(n2.sqrt() >= 1e-300) {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / n2.sqrt();
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|z| *z *= scale);
        Ok(out)
    }

    /// Multiplies every amplitude by `e^{i theta}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let ph = Complex64::from_polar(1.0, theta);
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|z| *z *= ph);
        out
    }

    /// Multiplies every amplitude (all components) by `f(q)`.
    pub fn multiplied_by(&self, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let factors = self.grid.map_nodes(f);
        let total = self.grid.total_points();
        let mut out = self.clone();
        for (i, z) in out.amplitudes.iter_mut().enumerate() {
            *z *= factors[i % total];
        }
        out
    }

    pub fn density(&self) -> DensityField {
        let total = self.grid.total_points();
        let mut values = vec![0.0; total];
        for alpha in 0..self.n_spin {
            for (v, z) in values.iter_mut().zip(self.component(alpha)) {
                *v += z.norm_sqr();
            }
        }
        DensityField::new(self.grid.clone(), values)
    }

    pub fn check_compatible(&self, other: &SpinorWaveFunction) -> Result<()> {
        if self.grid != other.grid || self.n_spin != other.n_spin {
            return Err(Error::GridMismatch(
                "wavefunctions live on different grids or spin layouts".into(),
            ));
        }
        Ok(())
    }

    /// Maximum absolute amplitude difference to `other` over all components.
    pub fn max_abs_diff(&self, other: &SpinorWaveFunction) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `<a|b> = sum_alpha sum_cells conj(a) b dq`.
pub fn inner_product(a: &SpinorWaveFunction, b: &SpinorWaveFunction) -> Result<Complex64> {
    a.check_compatible(b)?;
    let s: Complex64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum();
    Ok(s * a.grid.cell_volume())
}

/// Normalized 1D Gaussian amplitude with density standard deviation `sigma`
/// and mean momentum `momentum`: `(2 pi sigma^2)^(-1/4) exp(-(x-c)^2/(4 sigma^2) + i p x / hbar)`.
pub fn gaussian_amplitude(x: f64, center: f64, sigma: f64, momentum: f64, hbar: f64) -> Complex64 {
    let norm = (2.0 * PI * sigma * sigma).powf(-0.25);
    let d = x - center;
    Complex64::from_polar(norm * (-d * d / (4.0 * sigma * sigma)).exp(), momentum * x / hbar)
}

/// Non-negative real field over grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
    normalized: bool,
}

impl DensityField {
    /// Wraps `values`; negative or non-finite entries are a programming error
    /// and are clamped to zero.
    pub fn new(grid: Grid, mut values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.total_points(), "density size mismatch");
        for v in values.iter_mut() {
            if !(v.is_finite() && *v >= 0.0) {
                *v = 0.0;
            }
        }
        let integral = values.iter().sum::<f64>() * grid.cell_volume();
        DensityField {
            grid,
            values,
            normalized: (integral - 1.0).abs() <= 1e-9,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Probability mass of every cell (`value * dq`).
    pub fn cell_masses(&self) -> Vec<f64> {
        let dv = self.grid.cell_volume();
        self.values.iter().map(|v| v * dv).collect()
    }

    /// Returns the density rescaled to unit integral.
    pub fn normalized(&self) -> Result<DensityField> {
        let i = self.integral();
        if !(i > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(DensityField::new(
            self.grid.clone(),
            self.values.iter().map(|v| v / i).collect(),
        ))
    }

    /// Integrates out every axis not listed in `keep_axes`.
    pub fn marginal(&self, keep_axes: &[usize]) -> Result<DensityField> {
        if keep_axes.is_empty() {
            return Err(Error::EmptyAxisSet);
        }
        let n_axes = self.grid.n_axes();
        let mut keep: Vec<usize> = keep_axes.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.iter().any(|&a| a >= n_axes) {
            return Err(Error::param("keep_axes", "axis index out of range"));
        }
        if keep.len() == n_axes {
            return Ok(self.clone());
        }
        let out_grid = self.grid.select_axes(&keep)?;
        let dropped_volume: f64 = (0..n_axes)
            .filter(|a| !keep.contains(a))
            .map(|a| self.grid.axis(a).spacing())
            .product();
        let mut out = vec![0.0; out_grid.total_points()];
        let mut sub = vec![0; keep.len()];
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.grid.multi_index(flat);
            for (k, &a) in keep.iter().enumerate() {
                sub[k] = idx[a];
            }
            out[out_grid.flat_index(&sub)] += v;
        }
        out.iter_mut().for_each(|v| *v *= dropped_volume);
        let mut m = DensityField::new(out_grid, out);
        m.normalized = self.normalized;
        Ok(m)
    }

    /// Probability of the box `region[a].0 <= q_a <= region[a].1`, counting
    /// partially covered cells by their covered fraction.
    pub fn region_probability(&self, region: &[(f64, f64)]) -> Result<f64> {
        if region.len() != self.grid.n_axes() {
            return Err(Error::param(
                "region",
                format!("{} intervals given for {} axes", region.len(), self.grid.n_axes()),
            ));
        }
        let weights = region
            .iter()
            .enumerate()
            .map(|(a, &(lo, hi))| self.axis_weights(a, lo, hi))
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let idx = self.grid.multi_index(flat);
            let w: f64 = idx.iter().enumerate().map(|(a, &i)| weights[a][i]).product();
            total += v * w;
        }
        Ok(total * self.grid.cell_volume())
    }

    fn axis_weights(&self, a: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        let ax = self.grid.axis(a);
        let tol = 1e-12 * ax.length();
        if !(lo <= hi) || lo < ax.lower - tol || hi > ax.upper + tol {
            return Err(Error::RegionOutOfBounds { axis: a });
        }
        let dx = ax.spacing();
        Ok((0..ax.n_points)
            .map(|i| {
                let c0 = ax.lower + i as f64 * dx;
                let c1 = c0 + dx;
                ((hi.min(c1) - lo.max(c0)) / dx).clamp(0.0, 1.0)
            })
            .collect())
    }

    /// The cell block `start[a] .. start[a] + count[a]` as a density on its own grid.
    pub fn block(&self, start: &[usize], count: &[usize]) -> Result<DensityField> {
        let sub = self.grid.block(start, count)?;
        let values = (0..sub.total_points())
            .map(|flat| {
                let idx: Vec<usize> = sub.multi_index(flat).iter().zip(start).map(|(i, s)| i + s).collect();
                self.values[self.grid.flat_index(&idx)]
            })
            .collect();
        Ok(DensityField::new(sub, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn gaussian_1d(n: usize, l: f64, sigma: f64) -> SpinorWaveFunction {
        let g = Grid::line(n, -l, l).unwrap();
        SpinorWaveFunction::from_fn(g, |q| gaussian_amplitude(q[0], 0.0, sigma, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn normalize_halves_doubled_uniform() {
        let g = Grid::line(64, 0.0, 8.0).unwrap();
        let amp = 2.0 * (g.cell_volume() * g.total_points() as f64).powf(-0.5);
        let psi = SpinorWaveFunction::from_fn(g, |_| Complex64::new(amp, 0.0)).unwrap();
        let n = psi.normalize().unwrap();
        assert!((n.norm_sqr() - 1.0).abs() < 1e-12);
        for z in n.amplitudes() {
            assert!((z.re - amp / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_is_identity_on_normalized_gaussian() {
        let psi = gaussian_1d(256, 16.0, 1.0);
        let n = psi.normalize().unwrap();
        assert!(n.max_abs_diff(&psi) < 1e-15);
    }

    #[test]
    fn zero_wavefunction_has_zero_norm() {
        let psi = SpinorWaveFunction::zeros(Grid::line(16, 0.0, 1.0).unwrap(), 1).unwrap();
        assert_eq!(psi.normalize(), Err(Error::ZeroNorm));
    }

    #[test]
    fn rejects_non_finite_amplitudes() {
        let g = Grid::line(8, 0.0, 1.0).unwrap();
        let mut a = vec![Complex64::new(0.0, 0.0); 8];
        a[3] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(SpinorWaveFunction::new(g, 1, a, 0.0), Err(Error::NonFiniteAmplitude));
    }

    #[test]
    fn plane_wave_density_is_uniform() {
        let g = Grid::line(64, 0.0, 2.0 * PI).unwrap();
        let amp = (2.0 * PI).powf(-0.5);
        let psi = SpinorWaveFunction::from_fn(g, |q| Complex64::from_polar(amp, 5.0 * q[0])).unwrap();
        let rho = psi.density();
        for v in rho.values() {
            assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
        }
        assert!(rho.is_normalized());
    }

    #[test]
    fn spin_sum_factorizes() {
        let psi = gaussian_1d(128, 10.0, 1.3);
        let (a, b) = (Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        let grid = psi.grid().clone();
        let spinor = SpinorWaveFunction::from_spinor_fn(grid, 2, |q| {
            let phi = gaussian_amplitude(q[0], 0.0, 1.3, 0.0, 1.0);
            vec![a * phi, b * phi]
        })
        .unwrap();
        for (x, y) in spinor.density().values().iter().zip(psi.density().values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_density_peak() {
        // nodes at +-dx/2 straddle the origin; sample a grid with a node at 0
        let sigma: f64 = 0.7;
        let g = Grid::line(256, -16.0 - 0.0625, 16.0 - 0.0625).unwrap();
        let psi = SpinorWaveFunction::from_fn(g, |q| gaussian_amplitude(q[0], 0.0, sigma, 0.0, 1.0)).unwrap();
        let rho = psi.density();
        let i0 = psi.grid().axis(0).cell_of(0.0);
        assert!(psi.grid().axis(0).node(i0).abs() < 1e-12);
        let oracle = 1.0 / (2.0 * PI * sigma * sigma).sqrt();
        assert!((rho.values()[i0] - oracle).abs() < 1e-12);
    }

    #[test]
    fn marginal_of_product_density() {
        let g = Grid::new(vec![Axis::new(64, -8.0, 8.0), Axis::new(64, -12.0, 12.0)]).unwrap();
        let psi = SpinorWaveFunction::from_fn(g, |q| {
            gaussian_amplitude(q[0], 0.5, 1.0, 0.0, 1.0) * gaussian_amplitude(q[1], -1.0, 0.8, 2.0, 1.0)
        })
        .unwrap();
        let rho = psi.density();
        let mx = rho.marginal(&[0]).unwrap();
        let x_only = SpinorWaveFunction::from_fn(Grid::line(64, -8.0, 8.0).unwrap(), |q| {
            gaussian_amplitude(q[0], 0.5, 1.0, 0.0, 1.0)
        })
        .unwrap()
        .density();
        for (a, b) in mx.values().iter().zip(x_only.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(rho.marginal(&[0, 1]).unwrap(), rho);
        assert_eq!(rho.marginal(&[]), Err(Error::EmptyAxisSet));
    }

    #[test]
    fn post_measurement_pointer_marginal_is_bimodal() {
        // sum_k c_k A_k(x) R_k(y): pointer packets at -3 and +3 with masses 0.3/0.7
        let g = Grid::new(vec![Axis::new(64, -8.0, 8.0), Axis::new(128, -10.0, 10.0)]).unwrap();
        let (c1, c2) = (0.3f64.sqrt(), 0.7f64.sqrt());
        let psi = SpinorWaveFunction::from_fn(g, |q| {
            let (y, x) = (q[0], q[1]);
            c1 * gaussian_amplitude(x, -3.0, 0.5, 0.0, 1.0) * gaussian_amplitude(y, -2.0, 1.0, 0.0, 1.0)
                + c2 * gaussian_amplitude(x, 3.0, 0.5, 0.0, 1.0) * gaussian_amplitude(y, 2.0, 1.0, 0.0, 1.0)
        })
        .unwrap();
        let pointer = psi.density().marginal(&[1]).unwrap();
        // direct numerical integration of each lobe
        let dx = pointer.grid().axis(0).spacing();
        let nodes = pointer.grid().axis(0).nodes();
        let left: f64 = nodes
            .iter()
            .zip(pointer.values())
            .filter(|(x, _)| **x < 0.0)
            .map(|(_, v)| v * dx)
            .sum();
        let right: f64 = nodes
            .iter()
            .zip(pointer.values())
            .filter(|(x, _)| **x > 0.0)
            .map(|(_, v)| v * dx)
            .sum();
        assert!((left - 0.3).abs() < 1e-6, "{left}");
        assert!((right - 0.7).abs() < 1e-6, "{right}");
    }

    #[test]
    fn region_probabilities_of_gaussian() {
        let rho = gaussian_1d(1024, 20.0, 1.0).density();
        assert!((rho.region_probability(&[(-20.0, 20.0)]).unwrap() - 1.0).abs() < 1e-9);
        assert!((rho.region_probability(&[(0.0, 20.0)]).unwrap() - 0.5).abs() < 1e-6);
        // erf(1/sqrt 2)
        let oracle = 0.682_689_492_137_086;
        assert!((rho.region_probability(&[(-1.0, 1.0)]).unwrap() - oracle).abs() < 1e-3);
        assert_eq!(
            rho.region_probability(&[(-21.0, 0.0)]),
            Err(Error::RegionOutOfBounds { axis: 0 })
        );
    }

    #[test]
    fn inner_products() {
        let psi = gaussian_1d(256, 16.0, 1.0);
        assert!((inner_product(&psi, &psi).unwrap() - 1.0).norm() < 1e-12);

        let g = Grid::line(64, 0.0, 2.0 * PI).unwrap();
        let amp = (2.0 * PI).powf(-0.5);
        let k1 = SpinorWaveFunction::from_fn(g.clone(), |q| Complex64::from_polar(amp, 3.0 * q[0])).unwrap();
        let k2 = SpinorWaveFunction::from_fn(g.clone(), |q| Complex64::from_polar(amp, -7.0 * q[0])).unwrap();
        assert!(inner_product(&k1, &k2).unwrap().norm() < 1e-12);

        let (a, b) = (0.3f64.sqrt(), 0.7f64.sqrt());
        let sup = SpinorWaveFunction::from_fn(g.clone(), |q| {
            Complex64::from_polar(amp, 3.0 * q[0]) * a + Complex64::from_polar(amp, -7.0 * q[0]) * b
        })
        .unwrap();
        assert!((inner_product(&k1, &sup).unwrap() - a).norm() < 1e-12);

        let other = gaussian_1d(128, 16.0, 1.0);
        assert!(matches!(inner_product(&psi, &other), Err(Error::GridMismatch(_))));
    }
}
