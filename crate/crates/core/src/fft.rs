//! Axis-wise discrete Fourier transforms on row-major grid data.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Forward/inverse FFT plans for every axis of a grid.
#[derive(Clone)]
pub struct GridFft {
    shape: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft").field("shape", &self.shape).finish()
    }
}

impl GridFft {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let shape = grid.shape();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        GridFft {
            strides: grid.strides(),
            shape,
            forward,
            inverse,
        }
    }

    pub fn total(&self) -> usize {
        self.shape.iter().product()
    }

    fn process(&self, data: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.total());
        let n = self.shape[axis];
        let s = self.strides[axis];
        if s == 1 {
            data.par_chunks_mut(n.max(4096 / n * n)).for_each(|chunk| {
                plan.process(chunk);
            });
            return;
        }
        data.par_chunks_mut(n * s).for_each(|block| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for j in 0..s {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = block[j + i * s];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    block[j + i * s] = *v;
                }
            }
        });
    }

    /// Unnormalized forward transform along `axis`.
    pub fn forward_axis(&self, data: &mut [Complex64], axis: usize) {
        self.process(data, axis, &self.forward[axis]);
    }

    /// Inverse transform along `axis`, including the `1/n` factor.
    pub fn inverse_axis(&self, data: &mut [Complex64], axis: usize) {
        self.process(data, axis, &self.inverse[axis]);
        let scale = 1.0 / self.shape[axis] as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.forward_axis(data, a);
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.inverse_axis(data, a);
        }
    }

    /// Index of a flattened position along `axis`.
    #[inline]
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.shape[axis]
    }
}

/// Spectral derivative along `axis` (Nyquist component zeroed).
pub fn spectral_derivative(fft: &GridFft, grid: &Grid, data: &[Complex64], axis: usize) -> Vec<Complex64> {
    let mut out = data.to_vec();
    fft.forward_axis(&mut out, axis);
    let k = derivative_wavenumbers(grid, axis);
    out.par_iter_mut().enumerate().for_each(|(flat, v)| {
        *v *= Complex64::new(0.0, k[fft.axis_index(flat, axis)]);
    });
    fft.inverse_axis(&mut out, axis);
    out
}

/// Wavenumbers for first derivatives: the unpaired Nyquist mode is set to zero
/// so that derivatives of real fields stay real.
pub fn derivative_wavenumbers(grid: &Grid, axis: usize) -> Vec<f64> {
    let mut k = grid.axis(axis).wavenumbers();
    let n = k.len();
    k[n / 2] = 0.0;
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    #[test]
    fn roundtrip_2d() {
        let g = Grid::new(vec![Axis::new(8, 0.0, 1.0), Axis::new(16, 0.0, 1.0)]).unwrap();
        let fft = GridFft::new(&g);
        let orig: Vec<Complex64> = (0..g.total_points())
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut d = orig.clone();
        fft.forward(&mut d);
        fft.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_sine_along_first_axis() {
        let g = Grid::new(vec![
            Axis::new(32, 0.0, 2.0 * std::f64::consts::PI),
            Axis::new(8, 0.0, 1.0),
        ])
        .unwrap();
        let fft = GridFft::new(&g);
        let f = g.map_nodes(|q| Complex64::new((3.0 * q[0]).sin() * (1.0 + q[1]), 0.0));
        let df = spectral_derivative(&fft, &g, &f, 0);
        let expect = g.map_nodes(|q| 3.0 * (3.0 * q[0]).cos() * (1.0 + q[1]));
        for (a, b) in df.iter().zip(&expect) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }
}
