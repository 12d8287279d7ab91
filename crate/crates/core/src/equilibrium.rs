//! Quantum-equilibrium sampling, coarse-grained distances between an ensemble
//! and `|Psi|^2`, and the H-function relaxation experiment.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, AxisRole, Grid, Role};
use crate::guidance::{default_speed_cap, TrajectorySet};
use crate::propagator::{Hamiltonian, HamiltonianSchedule};
use crate::simulation::{run_coupled, DriverOptions};
use crate::state::{DensityField, SpinorWaveFunction};

/// Random stream used for trajectory `stream` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `m` points from `rho`: a flattened-cell inverse CDF followed by a
/// uniform position inside the chosen cell. Trajectory `i` uses stream `i`.
pub fn sample_density(rho: &DensityField, m: usize, seed: u64) -> Result<TrajectorySet> {
    sample_density_streams(rho, m, seed, 0)
}

/// As [`sample_density`], with trajectory `i` drawn from stream `stream_base + i`.
pub fn sample_density_streams(rho: &DensityField, m: usize, seed: u64, stream_base: u64) -> Result<TrajectorySet> {
    if !rho.is_normalized() {
        return Err(Error::UnnormalizedDensity(rho.integral()));
    }
    if m == 0 {
        return Err(Error::param("m", "need at least one sample"));
    }
    let grid = rho.grid();
    let n_axes = grid.n_axes();
    let mut cdf = Vec::with_capacity(grid.total_points());
    let mut acc = 0.0;
    for w in rho.cell_masses() {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    let last_nonzero = cdf
        .iter()
        .rposition(|&c| c < total)
        .map_or(0, |i| i + 1)
        .min(cdf.len() - 1);
    let strides = grid.strides();
    let mut positions = vec![0.0; m * n_axes];
    positions.par_chunks_mut(n_axes).enumerate().for_each(|(i, p)| {
        let mut rng = trajectory_rng(seed, stream_base + i as u64);
        let u: f64 = rng.random::<f64>() * total;
        let cell = cdf.partition_point(|&c| c <= u).min(last_nonzero);
        let mut rest = cell;
        for a in 0..n_axes {
            let idx = rest / strides[a];
            rest %= strides[a];
            let ax = grid.axis(a);
            let jitter: f64 = rng.random();
            p[a] = ax.lower + (idx as f64 + jitter) * ax.spacing();
        }
    });
    let mut set = TrajectorySet::new(n_axes, positions, 0.0, seed)?;
    set.stream_base = stream_base;
    Ok(set)
}

/// Per-axis coarse bins over a grid. Every bin holds `n_points / bins` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGraining {
    grid: Grid,
    bins: Vec<usize>,
}

impl CoarseGraining {
    pub fn new(grid: &Grid, bins: &[usize]) -> Result<Self> {
        if bins.len() != grid.n_axes() {
            return Err(Error::param("bins", "need one bin count per axis"));
        }
        for (a, &b) in bins.iter().enumerate() {
            let n = grid.axis(a).n_points;
            if b < 2 || !n.is_multiple_of(b) {
                return Err(Error::param(
                    "bins",
                    format!("axis {a}: {b} bins must be >= 2 and divide {n} points"),
                ));
            }
        }
        Ok(CoarseGraining {
            grid: grid.clone(),
            bins: bins.to_vec(),
        })
    }

    /// Same bin count on every axis.
    pub fn uniform(grid: &Grid, bins: usize) -> Result<Self> {
        Self::new(grid, &vec![bins; grid.n_axes()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    /// Volume of one coarse cell.
    pub fn cell_volume(&self) -> f64 {
        self.grid
            .axes()
            .iter()
            .zip(&self.bins)
            .map(|(a, &b)| a.length() / b as f64)
            .product()
    }

    /// Coarse cell of a point (wrapped periodically onto the grid).
    pub fn cell_of(&self, point: &[f64]) -> usize {
        let mut flat = 0;
        for (a, (&x, &b)) in point.iter().zip(&self.bins).enumerate() {
            let ax = self.grid.axis(a);
            let fine = ax.cell_of(x);
            flat = flat * b + fine / (ax.n_points / b);
        }
        flat
    }

    fn coarse_of_fine(&self, fine_flat: usize) -> usize {
        let idx = self.grid.multi_index(fine_flat);
        let mut flat = 0;
        for (a, (&i, &b)) in idx.iter().zip(&self.bins).enumerate() {
            flat = flat * b + i / (self.grid.axis(a).n_points / b);
        }
        flat
    }

    /// Probability mass of `rho` in every coarse cell.
    pub fn masses(&self, rho: &DensityField) -> Result<Vec<f64>> {
        if rho.grid() != &self.grid {
            return Err(Error::GridMismatch("density and coarse-graining grids differ".into()));
        }
        let mut out = vec![0.0; self.n_cells()];
        for (fine, w) in rho.cell_masses().into_iter().enumerate() {
            out[self.coarse_of_fine(fine)] += w;
        }
        Ok(out)
    }

    /// Fraction of trajectories in every coarse cell.
    pub fn fractions(&self, traj: &TrajectorySet) -> Result<Vec<f64>> {
        if traj.n_axes() != self.grid.n_axes() {
            return Err(Error::GridMismatch(
                "trajectories and coarse-graining have different axis counts".into(),
            ));
        }
        let counts = traj
            .positions()
            .par_chunks(traj.n_axes())
            .fold(
                || vec![0u64; self.n_cells()],
                |mut acc, p| {
                    acc[self.cell_of(p)] += 1;
                    acc
                },
            )
            .reduce(
                || vec![0u64; self.n_cells()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let m = traj.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / m).collect())
    }
}

fn require_normalized(rho: &DensityField) -> Result<()> {
    if rho.is_normalized() {
        Ok(())
    } else {
        Err(Error::UnnormalizedDensity(rho.integral()))
    }
}

/// Half the L1 distance between the ensemble's coarse histogram and the coarse masses of `rho`.
pub fn total_variation(traj: &TrajectorySet, rho: &DensityField, cg: &CoarseGraining) -> Result<f64> {
    require_normalized(rho)?;
    let p = cg.fractions(traj)?;
    let r = cg.masses(rho)?;
    Ok(0.5 * p.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Coarse-grained H-function `sum P ln(P / rho)`.
pub fn h_function(traj: &TrajectorySet, rho: &DensityField, cg: &CoarseGraining) -> Result<f64> {
    require_normalized(rho)?;
    let p = cg.fractions(traj)?;
    let r = cg.masses(rho)?;
    h_from_masses(&p, &r)
}

fn h_from_masses(p: &[f64], r: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for (cell, (&pc, &rc)) in p.iter().zip(r).enumerate() {
        if pc == 0.0 {
            continue;
        }
        if rc <= 0.0 {
            return Err(Error::SupportViolation { cell });
        }
        h += pc * (pc / rc).ln();
    }
    Ok(h)
}

/// Expected H-function of an i.i.d. equilibrium ensemble, `(cells - 1) / (2 M)`.
pub fn statistical_floor(n_cells: usize, m: usize) -> f64 {
    (n_cells as f64 - 1.0) / (2.0 * m as f64)
}

/// Expected total variation of `m` i.i.d. samples for coarse masses `p`,
/// `sum sqrt(p (1 - p) / (2 pi M))` (normal approximation per cell).
pub fn iid_total_variation_estimate(masses: &[f64], m: usize) -> f64 {
    masses
        .iter()
        .map(|p| (p * (1.0 - p) / (2.0 * PI * m as f64)).sqrt())
        .sum()
}

/// Mean total variation of `resamples` ensembles of size `m` drawn from `rho` itself.
pub fn iid_baseline(rho: &DensityField, m: usize, cg: &CoarseGraining, seed: u64, resamples: usize) -> Result<f64> {
    if resamples == 0 {
        return Err(Error::param("resamples", "need at least one resample"));
    }
    let mut total = 0.0;
    for r in 0..resamples {
        // streams beyond any ensemble index used by a run with the same seed
        let base = (1u64 << 40) + (r as u64) * (m as u64);
        let s = sample_density_streams(rho, m, seed, base)?;
        total += total_variation(&s, rho, cg)?;
    }
    Ok(total / resamples as f64)
}

/// H-function values over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HFunctionSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub ensemble_size: usize,
    pub bins: Vec<usize>,
    pub seed: u64,
}

impl HFunctionSeries {
    /// Least-squares slope of H against time.
    pub fn trend_slope(&self) -> f64 {
        let n = self.times.len() as f64;
        let mt = self.times.iter().sum::<f64>() / n;
        let mh = self.values.iter().sum::<f64>() / n;
        let cov: f64 = self
            .times
            .iter()
            .zip(&self.values)
            .map(|(t, h)| (t - mt) * (h - mh))
            .sum();
        let var: f64 = self.times.iter().map(|t| (t - mt) * (t - mt)).sum();
        cov / var
    }

    /// CSV with columns `time,H,M,seed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,H,M,seed")?;
        for (t, h) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{h},{},{}", self.ensemble_size, self.seed)?;
        }
        Ok(())
    }
}

/// Initial ensemble of the relaxation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialEnsemble {
    /// Uniform over the central quarter `[L/4, 3L/4]^2` of the box.
    CentralPatch,
    /// Sampled from `|Psi(0)|^2`.
    Equilibrium,
}

/// Two-dimensional infinite square well `[0, L]^2` with a random-phase
/// superposition of its lowest eigenmodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    pub box_length: f64,
    /// Modes `1..=modes_per_axis` on each axis, all with equal weight.
    pub modes_per_axis: usize,
    /// Grid points per axis inside the box.
    pub points_per_axis: usize,
    pub bins: usize,
    pub ensemble_size: usize,
    pub duration: f64,
    pub dt: f64,
    pub record_interval: f64,
    pub mass: f64,
    pub hbar: f64,
    pub seed: u64,
    pub phase_seed: u64,
    pub initial: InitialEnsemble,
    /// Speed cap in units of box diagonals per duration.
    pub speed_cap_factor: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            box_length: PI,
            modes_per_axis: 4,
            points_per_axis: 64,
            bins: 32,
            ensemble_size: 100_000,
            duration: 4.0 * PI,
            dt: 0.01,
            record_interval: 0.25 * PI,
            mass: 1.0,
            hbar: 1.0,
            seed: 1,
            phase_seed: 7,
            initial: InitialEnsemble::CentralPatch,
            speed_cap_factor: 1000.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxationOutcome {
    pub series: HFunctionSeries,
    /// Total variation against `|Psi|^2` at every record time.
    pub total_variation: Vec<f64>,
    pub statistical_floor: f64,
    pub cap_triggers: u64,
    pub max_norm_drift: f64,
    /// Relative change of the energy expectation over the run.
    pub energy_drift: f64,
}

impl RelaxationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be positive"))
            }
        };
        positive("box_length", self.box_length)?;
        positive("duration", self.duration)?;
        positive("dt", self.dt)?;
        positive("record_interval", self.record_interval)?;
        positive("mass", self.mass)?;
        positive("hbar", self.hbar)?;
        positive("speed_cap_factor", self.speed_cap_factor)?;
        if self.modes_per_axis * self.modes_per_axis < 8 {
            return Err(Error::param(
                "modes_per_axis",
                "the superposition needs at least 8 eigenmodes",
            ));
        }
        if 2 * self.modes_per_axis >= self.points_per_axis {
            return Err(Error::param("modes_per_axis", "modes are not resolved by the grid"));
        }
        if self.ensemble_size == 0 {
            return Err(Error::param("ensemble_size", "must be at least 1"));
        }
        // the grid and bin checks live in the constructors
        let g = self.box_grid()?;
        CoarseGraining::uniform(&g, self.bins)?;
        Ok(())
    }

    /// The box `[0, L)^2` as a grid.
    pub fn box_grid(&self) -> Result<Grid> {
        Grid::new(vec![Axis::new(self.points_per_axis, 0.0, self.box_length); 2])
    }

    /// The periodic grid `[-L, L)^2` that carries the odd extension of the box.
    pub fn torus_grid(&self) -> Result<Grid> {
        Grid::new(vec![
            Axis::new(
                2 * self.points_per_axis,
                -self.box_length,
                self.box_length
            );
            2
        ])
    }

    /// Mode phases drawn from `phase_seed`.
    pub fn phases(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.phase_seed);
        (0..self.modes_per_axis * self.modes_per_axis)
            .map(|_| 2.0 * PI * rng.random::<f64>())
            .collect()
    }

    /// Superposition of sine modes on the torus; odd in both coordinates, so
    /// the box walls are nodal lines that the dynamics never crosses.
    pub fn initial_wavefunction(&self) -> Result<SpinorWaveFunction> {
        let l = self.box_length;
        let phases = self.phases();
        let n = self.modes_per_axis;
        SpinorWaveFunction::from_fn(self.torus_grid()?, |q| {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let sx = ((i + 1) as f64 * PI * q[0] / l).sin();
                for j in 0..n {
                    let sy = ((j + 1) as f64 * PI * q[1] / l).sin();
                    s += Complex64::from_polar(sx * sy, phases[i * n + j]);
                }
            }
            s
        })?
        .normalize()
    }

    /// `|Psi|^2` restricted to the box and renormalized.
    pub fn box_density(&self, psi: &SpinorWaveFunction) -> Result<DensityField> {
        let n = self.points_per_axis;
        psi.density().block(&[n, n], &[n, n])?.normalized()
    }
}

/// Folds a torus point back into the box `[0, L]^2`.
fn reflect_into_box(p: &mut [f64]) {
    for x in p.iter_mut() {
        if *x < 0.0 {
            *x = -*x;
        }
    }
}

/// Evolves a wavefunction in the box together with a trajectory ensemble
/// and records the coarse-grained H-function.
pub fn relaxation_experiment(cfg: &RelaxationConfig) -> Result<RelaxationOutcome> {
    cfg.validate()?;
    let psi = cfg.initial_wavefunction()?;
    let torus = psi.grid().clone();
    let box_grid = cfg.box_grid()?;
    let cg = CoarseGraining::uniform(&box_grid, cfg.bins)?;
    let l = cfg.box_length;

    let traj = match cfg.initial {
        InitialEnsemble::Equilibrium => sample_density(&cfg.box_density(&psi)?, cfg.ensemble_size, cfg.seed)?,
        InitialEnsemble::CentralPatch => {
            let mut pos = vec![0.0; 2 * cfg.ensemble_size];
            pos.par_chunks_mut(2).enumerate().for_each(|(i, p)| {
                let mut rng = trajectory_rng(cfg.seed, i as u64);
                for x in p.iter_mut() {
                    *x = l * (0.25 + 0.5 * rng.random::<f64>());
                }
            });
            TrajectorySet::new(2, pos, 0.0, cfg.seed)?
        }
    };

    let roles = [
        AxisRole::new(0, Role::System, 0, cfg.mass),
        AxisRole::new(1, Role::System, 0, cfg.mass),
    ];
    let h = Hamiltonian::free(&torus, 1, &roles, cfg.hbar)?;
    let n_records = (cfg.duration / cfg.record_interval).round() as usize;
    let mut record_times: Vec<f64> = (0..n_records)
        .map(|k| k as f64 * cfg.record_interval)
        .filter(|&t| t < cfg.duration)
        .collect();
    record_times.push(cfg.duration);

    let options = DriverOptions {
        dt: cfg.dt,
        speed_cap: cfg.speed_cap_factor / 10.0 * default_speed_cap(&box_grid, cfg.duration),
        record_times,
        constraint: Some(&reflect_into_box),
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut tv = Vec::new();
    let out = run_coupled(
        &psi,
        &traj,
        &HamiltonianSchedule::constant(h),
        cfg.duration,
        &options,
        |psi, q| {
            let rho = cfg.box_density(psi)?;
            times.push(psi.time);
            values.push(h_function(q, &rho, &cg)?);
            tv.push(total_variation(q, &rho, &cg)?);
            Ok(())
        },
    )?;
    Ok(RelaxationOutcome {
        series: HFunctionSeries {
            times,
            values,
            ensemble_size: cfg.ensemble_size,
            bins: vec![cfg.bins; 2],
            seed: cfg.seed,
        },
        total_variation: tv,
        statistical_floor: statistical_floor(cg.n_cells(), cfg.ensemble_size),
        cap_triggers: out.cap_triggers,
        max_norm_drift: out.max_norm_drift,
        energy_drift: out.segment_energy_drift.iter().cloned().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::gaussian_amplitude;

    fn uniform_line(n: usize) -> DensityField {
        let g = Grid::line(n, 0.0, 1.0).unwrap();
        DensityField::new(g, vec![1.0; n])
    }

    #[test]
    fn uniform_counts_are_poissonian() {
        let rho = uniform_line(32);
        let m = 100_000;
        let s = sample_density(&rho, m, 3).unwrap();
        let cg = CoarseGraining::uniform(rho.grid(), 32).unwrap();
        let mean = m as f64 / 32.0;
        for f in cg.fractions(&s).unwrap() {
            assert!((f * m as f64 - mean).abs() < 5.0 * mean.sqrt());
        }
    }

    #[test]
    fn delta_density_samples_stay_in_cell() {
        let g = Grid::line(16, 0.0, 16.0).unwrap();
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let rho = DensityField::new(g, v);
        let s = sample_density(&rho, 1000, 1).unwrap();
        assert!(s.positions().iter().all(|&x| (5.0..6.0).contains(&x)));
    }

    #[test]
    fn gaussian_moments() {
        let g = Grid::line(1024, -16.0, 16.0).unwrap();
        let psi = SpinorWaveFunction::from_fn(g, |q| gaussian_amplitude(q[0], 0.0, 1.0, 0.0, 1.0)).unwrap();
        let m = 100_000;
        let s = sample_density(&psi.density(), m, 11).unwrap();
        let mean = s.positions().iter().sum::<f64>() / m as f64;
        let var = s.positions().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        assert!(mean.abs() < 5.0 / (m as f64).sqrt());
        // cell jitter adds dx^2 / 12 to the variance
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn sampling_is_deterministic_and_checks_normalization() {
        let rho = uniform_line(32);
        assert_eq!(
            sample_density(&rho, 100, 9).unwrap(),
            sample_density(&rho, 100, 9).unwrap()
        );
        assert_ne!(
            sample_density(&rho, 100, 9).unwrap(),
            sample_density(&rho, 100, 10).unwrap()
        );
        let g = Grid::line(8, 0.0, 1.0).unwrap();
        assert!(matches!(
            sample_density(&DensityField::new(g, vec![2.0; 8]), 10, 0),
            Err(Error::UnnormalizedDensity(_))
        ));
    }

    #[test]
    fn distances_closed_forms() {
        let rho = uniform_line(32);
        let cg = CoarseGraining::uniform(rho.grid(), 32).unwrap();
        let one_cell = TrajectorySet::new(1, vec![0.01; 500], 0.0, 0).unwrap();
        let tv = total_variation(&one_cell, &rho, &cg).unwrap();
        assert!((tv - (1.0 - 1.0 / 32.0)).abs() < 1e-12);
        let h = h_function(&one_cell, &rho, &cg).unwrap();
        assert!((h - 32f64.ln()).abs() < 1e-12);
        let exact: Vec<f64> = (0..32).map(|i| (i as f64 + 0.5) / 32.0).collect();
        let matched = TrajectorySet::new(1, exact, 0.0, 0).unwrap();
        assert_eq!(total_variation(&matched, &rho, &cg).unwrap(), 0.0);
        assert_eq!(h_function(&matched, &rho, &cg).unwrap(), 0.0);
    }

    #[test]
    fn support_violation() {
        let g = Grid::line(8, 0.0, 8.0).unwrap();
        let rho = DensityField::new(g.clone(), vec![0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0]);
        let cg = CoarseGraining::uniform(&g, 4).unwrap();
        let s = TrajectorySet::new(1, vec![0.5, 6.5], 0.0, 0).unwrap();
        assert_eq!(h_function(&s, &rho, &cg), Err(Error::SupportViolation { cell: 3 }));
    }

    #[test]
    fn coarse_graining_validation() {
        let g = Grid::line(32, 0.0, 1.0).unwrap();
        assert!(CoarseGraining::uniform(&g, 1).is_err());
        assert!(CoarseGraining::uniform(&g, 6).is_err());
        let cg = CoarseGraining::uniform(&g, 8).unwrap();
        assert!((cg.cell_volume() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_statistics_match_iid_expectations() {
        let g = Grid::line(256, -8.0, 8.0).unwrap();
        let psi = SpinorWaveFunction::from_fn(g.clone(), |q| {
            gaussian_amplitude(q[0], -2.0, 0.8, 0.0, 1.0) + gaussian_amplitude(q[0], 2.0, 1.2, 0.0, 1.0)
        })
        .unwrap()
        .normalize()
        .unwrap();
        let rho = psi.density();
        let cg = CoarseGraining::uniform(&g, 32).unwrap();
        let m = 10_000;
        let estimate = iid_total_variation_estimate(&cg.masses(&rho).unwrap(), m);
        let mut below = 0;
        let mut h_sum = 0.0;
        let seeds = 40;
        for seed in 0..seeds {
            let s = sample_density(&rho, m, seed).unwrap();
            if total_variation(&s, &rho, &cg).unwrap() < 1.5 * estimate {
                below += 1;
            }
            h_sum += h_function(&s, &rho, &cg).unwrap();
        }
        assert!(below as f64 >= 0.95 * seeds as f64, "{below}");
        // cells with negligible mass do not contribute to the chi-square count
        let floor = statistical_floor(32, m);
        let h_mean = h_sum / seeds as f64;
        assert!(h_mean < 3.0 * floor && h_mean > floor / 3.0, "{h_mean} vs {floor}");
        let base = iid_baseline(&rho, m, &cg, 5, 16).unwrap();
        assert!((base / estimate - 1.0).abs() < 0.25, "{base} vs {estimate}");
    }

    #[test]
    fn series_slope_and_csv() {
        let s = HFunctionSeries {
            times: vec![0.0, 1.0, 2.0],
            values: vec![3.0, 2.0, 1.0],
            ensemble_size: 10,
            bins: vec![4],
            seed: 2,
        };
        assert!((s.trend_slope() + 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time,H,M,seed\n0,3,10,2\n1,2,10,2\n2,1,10,2\n"
        );
    }

    #[test]
    fn box_wavefunction_is_normalized_on_the_box() {
        let cfg = RelaxationConfig::default();
        let psi = cfg.initial_wavefunction().unwrap();
        let rho = cfg.box_density(&psi).unwrap();
        assert!(rho.is_normalized());
        // each quadrant carries a quarter of the torus mass
        let full = psi.density();
        let q = full.region_probability(&[(0.0, PI), (0.0, PI)]).unwrap();
        assert!((q - 0.25).abs() < 1e-12);
        assert!(RelaxationConfig {
            modes_per_axis: 2,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(RelaxationConfig { bins: 5, ..cfg }.validate().is_err());
    }

    #[test]
    fn equilibrium_ensemble_stays_at_floor() {
        let cfg = RelaxationConfig {
            ensemble_size: 20_000,
            duration: 1.0,
            record_interval: 0.25,
            bins: 16,
            initial: InitialEnsemble::Equilibrium,
            ..RelaxationConfig::default()
        };
        let out = relaxation_experiment(&cfg).unwrap();
        for h in &out.series.values {
            assert!(*h < 3.0 * out.statistical_floor, "{h} vs {}", out.statistical_floor);
        }
        assert!(out.max_norm_drift < 1e-10);
    }
}
