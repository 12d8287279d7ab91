//! Measurement experiments: a system observable is coupled to a pointer
//! coordinate, the pointer packets separate, and each trajectory is read out
//! by the pointer region it ends up in.
//!
//! The coupling is the translation generator `g K (x) p_pointer`, switched on
//! over a window. For a region observable `K` is diagonal in position, so the
//! interaction is a drift on the pointer axis with velocity `g k(x)`, where
//! `k(x)` is the eigenvalue of the system region containing `x`.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibrium::sample_density;
use crate::error::{Error, Result};
use crate::grid::{Axis, AxisRole, Grid, Role};
use crate::guidance::{TrajectoryHistory, TrajectorySet};
use crate::propagator::{Drift, Hamiltonian, HamiltonianSchedule, Potential};
use crate::simulation::{run_coupled, DriverOptions};
use crate::state::{gaussian_amplitude, DensityField, SpinorWaveFunction};

/// Branch overlaps below this count as macroscopically distinct.
pub const OVERLAP_THRESHOLD: f64 = 1e-4;
/// Largest tolerated fraction of trajectories outside every outcome region.
pub const MAX_UNASSIGNED_FRACTION: f64 = 1e-3;
/// Branches lighter than this are left out of the overlap matrix.
const EMPTY_BRANCH_MASS: f64 = 1e-12;

/// How the eigenspaces of an observable are represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eigenspaces {
    /// Indicator functions of disjoint intervals `[lo, hi)` of one system axis.
    Regions { axis: usize, intervals: Vec<(f64, f64)> },
    /// Spin component `k` for eigenvalue `k` (two-component spinors).
    Spin,
}

/// Observable with a non-degenerate discrete spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteObservable {
    eigenvalues: Vec<f64>,
    eigenspaces: Eigenspaces,
}

fn check_disjoint(name: &str, intervals: &[(f64, f64)]) -> Result<()> {
    for (i, &(lo, hi)) in intervals.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::param(name, format!("interval {i} is empty")));
        }
        for &(lo2, hi2) in &intervals[i + 1..] {
            if lo < hi2 && lo2 < hi {
                return Err(Error::param(name, "intervals overlap"));
            }
        }
    }
    Ok(())
}

impl DiscreteObservable {
    pub fn regions(axis: usize, eigenvalues: Vec<f64>, intervals: Vec<(f64, f64)>) -> Result<Self> {
        if eigenvalues.len() != intervals.len() {
            return Err(Error::param("intervals", "need one interval per eigenvalue"));
        }
        check_disjoint("intervals", &intervals)?;
        Self::checked(eigenvalues, Eigenspaces::Regions { axis, intervals })
    }

    /// Spin observable: eigenvalue `eigenvalues[k]` on spin component `k`.
    pub fn spin(eigenvalues: [f64; 2]) -> Result<Self> {
        Self::checked(eigenvalues.to_vec(), Eigenspaces::Spin)
    }

    fn checked(eigenvalues: Vec<f64>, eigenspaces: Eigenspaces) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::param("eigenvalues", "need at least one eigenvalue"));
        }
        for (i, a) in eigenvalues.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::param("eigenvalues", "must be finite"));
            }
            if eigenvalues[i + 1..].contains(a) {
                return Err(Error::param("eigenvalues", "degenerate spectra are not supported"));
            }
        }
        Ok(DiscreteObservable {
            eigenvalues,
            eigenspaces,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenspaces(&self) -> &Eigenspaces {
        &self.eigenspaces
    }

    /// Smallest distance between two eigenvalues (`inf` for one eigenvalue).
    pub fn min_gap(&self) -> f64 {
        let mut v = self.eigenvalues.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Index of the eigenvalue whose eigenspace contains node `coords`
    /// (region observables only).
    fn region_index(&self, coords: &[f64]) -> Option<usize> {
        match &self.eigenspaces {
            Eigenspaces::Regions { axis, intervals } => {
                let x = coords[*axis];
                intervals.iter().position(|&(lo, hi)| x >= lo && x < hi)
            }
            Eigenspaces::Spin => None,
        }
    }

    /// `P_k psi`.
    pub fn project(&self, psi: &SpinorWaveFunction, k: usize) -> Result<SpinorWaveFunction> {
        if k >= self.eigenvalues.len() {
            return Err(Error::param("k", "eigenvalue index out of range"));
        }
        match &self.eigenspaces {
            Eigenspaces::Regions { axis, .. } => {
                if *axis >= psi.grid().n_axes() {
                    return Err(Error::param("observable", "system axis out of range"));
                }
                let mut out = psi.multiplied_by(|q| {
                    if self.region_index(q) == Some(k) {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                out.time = psi.time;
                Ok(out)
            }
            Eigenspaces::Spin => {
                if psi.n_spin() != 2 {
                    return Err(Error::param("observable", "spin projectors need two components"));
                }
                let total = psi.grid().total_points();
                let mut amps = psi.amplitudes().to_vec();
                let other = 1 - k;
                amps[other * total..(other + 1) * total]
                    .iter_mut()
                    .for_each(|z| *z = Complex64::new(0.0, 0.0));
                SpinorWaveFunction::new(psi.grid().clone(), 2, amps, psi.time)
            }
        }
    }

    /// `|c_k|^2 = <psi|P_k|psi>` for every eigenvalue.
    pub fn branch_masses(&self, psi: &SpinorWaveFunction) -> Result<Vec<f64>> {
        (0..self.eigenvalues.len())
            .map(|k| Ok(self.project(psi, k)?.norm_sqr()))
            .collect()
    }
}

/// Initial pointer packet `A0(y) ~ exp(-(y - center)^2 / (2 width^2))` on its own axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerSpec {
    pub axis: Axis,
    pub mass: f64,
    pub center: f64,
    /// Amplitude width `w`; the density has standard deviation `w / sqrt 2`.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetup {
    pub observable: DiscreteObservable,
    /// Roles of the system axes; the pointer becomes the next axis.
    pub system_roles: Vec<AxisRole>,
    pub pointer: PointerSpec,
    pub coupling: f64,
    pub window: (f64, f64),
    pub readout_time: f64,
    /// Pointer intervals `[lo, hi)`, one per eigenvalue, in eigenvalue order.
    pub outcome_regions: Vec<(f64, f64)>,
    pub hbar: f64,
}

impl MeasurementSetup {
    pub fn validate(&self) -> Result<()> {
        let n = self.observable.eigenvalues().len();
        if self.outcome_regions.len() != n {
            return Err(Error::param("outcome_regions", "need one region per eigenvalue"));
        }
        check_disjoint("outcome_regions", &self.outcome_regions)?;
        let ax = &self.pointer.axis;
        if self
            .outcome_regions
            .iter()
            .any(|&(lo, hi)| lo < ax.lower || hi > ax.upper)
        {
            return Err(Error::param("outcome_regions", "must lie inside the pointer axis"));
        }
        let (t_on, t_off) = self.window;
        if !(t_on < t_off && t_off <= self.readout_time) {
            return Err(Error::param("window", "need t_on < t_off <= readout time"));
        }
        if !(self.pointer.width > 0.0 && self.pointer.mass > 0.0) {
            return Err(Error::param("pointer", "width and mass must be positive"));
        }
        if !(self.hbar > 0.0) {
            return Err(Error::param("hbar", "must be positive"));
        }
        if !matches!(self.observable.eigenspaces(), Eigenspaces::Regions { .. }) {
            return Err(Error::param(
                "observable",
                "pointer couplings are implemented for region observables",
            ));
        }
        if n > 1 {
            let shift = self.coupling.abs() * (t_off - t_on) * self.observable.min_gap();
            if !(shift > 6.0 * self.pointer.width) {
                return Err(Error::param(
                    "coupling",
                    format!(
                        "pointer shift {shift} between neighbouring outcomes must exceed 6 x width {} for negligible overlap in the multi-position space",
                        self.pointer.width
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn pointer_axis_index(&self) -> usize {
        self.system_roles.len()
    }

    /// Roles of the composite system + pointer grid.
    pub fn roles(&self) -> Vec<AxisRole> {
        let mut roles = self.system_roles.clone();
        let particle = roles.iter().map(|r| r.particle_index + 1).max().unwrap_or(0);
        roles.push(AxisRole::new(
            self.pointer_axis_index(),
            Role::ApparatusPointer,
            particle,
            self.pointer.mass,
        ));
        roles
    }

    /// Index of the outcome region containing pointer coordinate `y`.
    pub fn outcome_of(&self, y: f64) -> Option<usize> {
        region_index(&self.outcome_regions, y)
    }
}

fn region_index(regions: &[(f64, f64)], y: f64) -> Option<usize> {
    regions.iter().position(|&(lo, hi)| y >= lo && y < hi)
}

/// Pointer packet sampled on its axis and normalized on the grid.
fn pointer_packet(p: &PointerSpec, hbar: f64) -> Result<Vec<Complex64>> {
    let nodes = p.axis.nodes();
    let raw: Vec<Complex64> = nodes
        .iter()
        .map(|&y| gaussian_amplitude(y, p.center, p.width / SQRT_2, 0.0, hbar))
        .collect();
    let norm = (raw.iter().map(|z| z.norm_sqr()).sum::<f64>() * p.axis.spacing()).sqrt();
    if !(norm > 1e-300) {
        return Err(Error::ZeroNorm);
    }
    Ok(raw.into_iter().map(|z| z / norm).collect())
}

/// Product state `psi_system (x) A0` on the system grid extended by the pointer axis.
pub fn compose_initial(system_psi: &SpinorWaveFunction, setup: &MeasurementSetup) -> Result<SpinorWaveFunction> {
    let sys_grid = system_psi.grid();
    if setup.system_roles.len() != sys_grid.n_axes() {
        return Err(Error::param("system_roles", "need one role per system axis"));
    }
    let mut axes = sys_grid.axes().to_vec();
    axes.push(setup.pointer.axis);
    let grid = Grid::new(axes)?;
    let pointer = pointer_packet(&setup.pointer, setup.hbar)?;
    let ny = pointer.len();
    let sys = system_psi.normalize()?;
    let amps: Vec<Complex64> = sys
        .amplitudes()
        .iter()
        .flat_map(|&s| pointer.iter().map(move |&a| s * a))
        .collect();
    debug_assert_eq!(amps.len(), sys.amplitudes().len() * ny);
    let mut psi = SpinorWaveFunction::new(grid, sys.n_spin(), amps, system_psi.time)?;
    psi.time = system_psi.time;
    Ok(psi)
}

/// Schedule: free evolution outside the window, free evolution plus the
/// pointer drift `g k(x)` inside it.
pub fn measurement_hamiltonian(setup: &MeasurementSetup, grid: &Grid, n_spin: usize) -> Result<HamiltonianSchedule> {
    setup.validate()?;
    let roles = setup.roles();
    let free = Hamiltonian::free(grid, n_spin, &roles, setup.hbar)?;
    let obs = &setup.observable;
    let velocity = grid.map_nodes(|q| {
        obs.region_index(q)
            .map_or(0.0, |k| setup.coupling * obs.eigenvalues()[k])
    });
    let coupled = free.clone().with_drift(Drift {
        axis: setup.pointer_axis_index(),
        velocity,
    })?;
    HamiltonianSchedule::new(vec![
        (f64::NEG_INFINITY, free.clone()),
        (setup.window.0, coupled),
        (setup.window.1, free),
    ])
}

/// Pointer marginal of every populated branch and their pairwise overlaps
/// `O_ij = int dy sqrt(rho_i(y) rho_j(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    /// Eigenvalue indices of the populated branches (rows/columns).
    pub outcomes: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl OverlapMatrix {
    pub fn max_off_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    m = m.max(*v);
                }
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.values.len()).map(|i| self.values[i][i]).sum()
    }
}

fn pointer_marginal(psi: &SpinorWaveFunction, pointer_axis: usize) -> Result<DensityField> {
    psi.density().marginal(&[pointer_axis])
}

pub fn overlap_matrix(psi: &SpinorWaveFunction, setup: &MeasurementSetup) -> Result<OverlapMatrix> {
    let obs = &setup.observable;
    let mut outcomes = Vec::new();
    let mut marginals = Vec::new();
    for k in 0..obs.eigenvalues().len() {
        let branch = obs.project(psi, k)?;
        if branch.norm_sqr() > EMPTY_BRANCH_MASS {
            outcomes.push(k);
            marginals.push(pointer_marginal(&branch, setup.pointer_axis_index())?);
        }
    }
    let dy = setup.pointer.axis.spacing();
    let values = marginals
        .iter()
        .map(|a| {
            marginals
                .iter()
                .map(|b| {
                    a.values()
                        .iter()
                        .zip(b.values())
                        .map(|(x, y)| (x * y).sqrt())
                        .sum::<f64>()
                        * dy
                })
                .collect()
        })
        .collect();
    Ok(OverlapMatrix { outcomes, values })
}

/// Outcome counts of an ensemble and their Born-rule targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStatistics {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    pub targets: Vec<f64>,
    pub unassigned: u64,
    pub total: u64,
    pub overlap: Option<OverlapMatrix>,
}

impl OutcomeStatistics {
    /// Tallies pointer coordinates against `regions`.
    pub fn tally(
        pointer: impl Iterator<Item = f64>,
        regions: &[(f64, f64)],
        labels: Vec<String>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let mut counts = vec![0u64; regions.len()];
        let mut unassigned = 0u64;
        let mut total = 0u64;
        for y in pointer {
            total += 1;
            match region_index(regions, y) {
                Some(k) => counts[k] += 1,
                None => unassigned += 1,
            }
        }
        if unassigned as f64 > MAX_UNASSIGNED_FRACTION * total as f64 {
            return Err(Error::TooManyUnassigned {
                unassigned: unassigned as usize,
                total: total as usize,
            });
        }
        let frequencies = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(OutcomeStatistics {
            labels,
            counts,
            frequencies,
            targets,
            unassigned,
            total,
            overlap: None,
        })
    }

    /// Standard error of outcome `k`'s frequency under its target.
    pub fn sigma(&self, k: usize) -> f64 {
        let p = self.targets[k];
        (p * (1.0 - p) / self.total as f64).sqrt()
    }
}

fn eigen_labels(obs: &DiscreteObservable) -> Vec<String> {
    obs.eigenvalues().iter().map(|k| format!("k={k}")).collect()
}

/// Assigns every trajectory to the outcome region containing its pointer
/// coordinate. Targets are left empty; see [`run_measurement`].
pub fn readout(traj: &TrajectorySet, setup: &MeasurementSetup) -> Result<OutcomeStatistics> {
    let axis = setup.pointer_axis_index();
    if traj.n_axes() <= axis {
        return Err(Error::param("traj", "trajectories have no pointer coordinate"));
    }
    OutcomeStatistics::tally(
        traj.coordinate(axis).into_iter(),
        &setup.outcome_regions,
        eigen_labels(&setup.observable),
        Vec::new(),
    )
}

/// Readout by arbitrary pointer labelings `l`; the targets are the masses
/// `|c~_l|^2` of the pointer marginal of `psi` inside each region.
pub fn generalized_readout(
    traj: &TrajectorySet,
    psi: &SpinorWaveFunction,
    pointer_axis: usize,
    regions: &[(f64, f64)],
) -> Result<OutcomeStatistics> {
    check_disjoint("regions", regions)?;
    let marginal = pointer_marginal(psi, pointer_axis)?;
    let targets = regions
        .iter()
        .map(|&r| marginal.region_probability(&[r]))
        .collect::<Result<Vec<_>>>()?;
    OutcomeStatistics::tally(
        traj.coordinate(pointer_axis).into_iter(),
        regions,
        (0..regions.len()).map(|l| format!("l={l}")).collect(),
        targets,
    )
}

/// `z_k = (freq_k - target_k) / sqrt(target_k (1 - target_k) / M)`.
pub fn born_rule_report(stats: &OutcomeStatistics) -> Vec<f64> {
    stats
        .frequencies
        .iter()
        .zip(&stats.targets)
        .enumerate()
        .map(|(k, (f, t))| {
            let d = f - t;
            if d == 0.0 {
                0.0
            } else {
                d / stats.sigma(k)
            }
        })
        .collect()
}

/// Numerical settings shared by the measurement experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub ensemble_size: usize,
    pub seed: u64,
    pub dt: f64,
    pub speed_cap: f64,
    /// Trajectory snapshots are kept every this many time units.
    pub record_interval: f64,
}

fn record_times(t0: f64, t1: f64, interval: f64) -> Vec<f64> {
    let n = ((t1 - t0) / interval).round().max(1.0) as usize;
    let mut v: Vec<f64> = (0..n).map(|k| t0 + k as f64 * interval).filter(|&t| t < t1).collect();
    v.push(t1);
    v
}

#[derive(Debug, Clone)]
pub struct MeasurementRun {
    pub stats: OutcomeStatistics,
    pub history: TrajectoryHistory,
    pub final_state: SpinorWaveFunction,
    pub cap_triggers: u64,
    pub max_norm_drift: f64,
    pub segment_energy_drift: Vec<f64>,
}

/// Full pipeline: compose, sample `|Psi(0)|^2`, evolve wavefunction and
/// ensemble to the readout time, read out. Targets are `|c_k|^2` of the
/// system state; the overlap matrix is evaluated at readout.
pub fn run_measurement(
    system_psi: &SpinorWaveFunction,
    setup: &MeasurementSetup,
    options: &EnsembleOptions,
) -> Result<MeasurementRun> {
    setup.validate()?;
    let psi0 = compose_initial(system_psi, setup)?;
    let traj0 = sample_density(&psi0.density(), options.ensemble_size, options.seed)?;
    run_measurement_from(&psi0, traj0, setup, options)
}

/// [`run_measurement`] from an already composed state and ensemble.
pub fn run_measurement_from(
    psi0: &SpinorWaveFunction,
    traj0: TrajectorySet,
    setup: &MeasurementSetup,
    options: &EnsembleOptions,
) -> Result<MeasurementRun> {
    let schedule = measurement_hamiltonian(setup, psi0.grid(), psi0.n_spin())?;
    let targets = setup.observable.branch_masses(psi0)?;
    let mut history = TrajectoryHistory::default();
    let driver = DriverOptions {
        dt: options.dt,
        speed_cap: options.speed_cap,
        record_times: record_times(psi0.time, setup.readout_time, options.record_interval),
        constraint: None,
    };
    let out = run_coupled(psi0, &traj0, &schedule, setup.readout_time, &driver, |_, q| {
        history.push(q);
        Ok(())
    })?;
    let mut stats = readout(&out.trajectories, setup)?;
    stats.targets = targets;
    stats.overlap = Some(overlap_matrix(&out.psi, setup)?);
    Ok(MeasurementRun {
        stats,
        history,
        final_state: out.psi,
        cap_triggers: out.cap_triggers,
        max_norm_drift: out.max_norm_drift,
        segment_energy_drift: out.segment_energy_drift,
    })
}

/// Spin-1/2 particle on one axis in a field gradient: during the window the
/// components feel `V = diag(-s F z, +s F z)` (`s` = field sign), then fly freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SternGerlachConfig {
    pub n_points: usize,
    pub half_width: f64,
    pub mass: f64,
    pub hbar: f64,
    /// `|alpha|^2`, the weight of the upper spin component.
    pub up_probability: f64,
    /// Phase of `beta` relative to `alpha`.
    pub relative_phase: f64,
    /// Density standard deviation of the initial packet.
    pub packet_sigma: f64,
    pub force: f64,
    pub field_sign: f64,
    pub window: (f64, f64),
    pub readout_time: f64,
}

impl Default for SternGerlachConfig {
    fn default() -> Self {
        SternGerlachConfig {
            n_points: 1024,
            half_width: 32.0,
            mass: 1.0,
            hbar: 1.0,
            up_probability: 0.3,
            relative_phase: 0.0,
            packet_sigma: 1.0,
            force: 4.0,
            field_sign: 1.0,
            window: (0.0, 1.0),
            readout_time: 3.0,
        }
    }
}

impl SternGerlachConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.up_probability) {
            return Err(Error::param("up_probability", "must lie in [0, 1]"));
        }
        if self.field_sign.abs() != 1.0 {
            return Err(Error::param("field_sign", "must be +1 or -1"));
        }
        if !(self.window.0 < self.window.1 && self.window.1 <= self.readout_time) {
            return Err(Error::param("window", "need t_on < t_off <= readout time"));
        }
        if !(self.packet_sigma > 0.0 && self.mass > 0.0 && self.hbar > 0.0 && self.half_width > 0.0) {
            return Err(Error::param("packet_sigma", "sizes and masses must be positive"));
        }
        Grid::line(self.n_points, -self.half_width, self.half_width)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::line(self.n_points, -self.half_width, self.half_width)
    }

    pub fn roles(&self) -> Vec<AxisRole> {
        vec![AxisRole::new(0, Role::ApparatusPointer, 0, self.mass)]
    }

    /// `(alpha, beta) phi(z)` with a real Gaussian `phi` centred at 0.
    pub fn initial_state(&self) -> Result<SpinorWaveFunction> {
        let alpha = Complex64::new(self.up_probability.sqrt(), 0.0);
        let beta = Complex64::from_polar((1.0 - self.up_probability).sqrt(), self.relative_phase);
        let sigma = self.packet_sigma;
        let hbar = self.hbar;
        SpinorWaveFunction::from_spinor_fn(self.grid()?, 2, |q| {
            let phi = gaussian_amplitude(q[0], 0.0, sigma, 0.0, hbar);
            vec![alpha * phi, beta * phi]
        })?
        .normalize()
    }

    pub fn schedule(&self) -> Result<HamiltonianSchedule> {
        let g = self.grid()?;
        let free = Hamiltonian::free(&g, 2, &self.roles(), self.hbar)?;
        let s = self.field_sign * self.force;
        let up: Vec<f64> = g.map_nodes(|q| -s * q[0]);
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        let field = free.clone().with_potential(Potential::Diagonal(vec![up, down]))?;
        HamiltonianSchedule::new(vec![
            (f64::NEG_INFINITY, free.clone()),
            (self.window.0, field),
            (self.window.1, free),
        ])
    }

    /// Outcome regions: upper (`z >= 0`) first, lower second.
    pub fn outcome_regions(&self) -> Vec<(f64, f64)> {
        vec![(0.0, self.half_width), (-self.half_width, 0.0)]
    }
}

#[derive(Debug, Clone)]
pub struct SternGerlachRun {
    pub stats: OutcomeStatistics,
    pub initial: TrajectorySet,
    pub history: TrajectoryHistory,
    pub cap_triggers: u64,
    pub max_norm_drift: f64,
    pub segment_energy_drift: Vec<f64>,
}

/// Runs the Stern-Gerlach experiment. The ensemble is sampled from
/// `|Psi(0)|^2` unless `initial` is supplied.
pub fn stern_gerlach_experiment(
    cfg: &SternGerlachConfig,
    options: &EnsembleOptions,
    initial: Option<TrajectorySet>,
) -> Result<SternGerlachRun> {
    cfg.validate()?;
    let psi0 = cfg.initial_state()?;
    let traj0 = match initial {
        Some(t) => t,
        None => sample_density(&psi0.density(), options.ensemble_size, options.seed)?,
    };
    let schedule = cfg.schedule()?;
    let mut history = TrajectoryHistory::default();
    let driver = DriverOptions {
        dt: options.dt,
        speed_cap: options.speed_cap,
        record_times: record_times(psi0.time, cfg.readout_time, options.record_interval),
        constraint: None,
    };
    let out = run_coupled(&psi0, &traj0, &schedule, cfg.readout_time, &driver, |_, q| {
        history.push(q);
        Ok(())
    })?;
    let spin = DiscreteObservable::spin([1.0, -1.0])?;
    let stats = OutcomeStatistics::tally(
        out.trajectories.coordinate(0).into_iter(),
        &cfg.outcome_regions(),
        vec!["up".into(), "down".into()],
        spin.branch_masses(&psi0)?,
    )?;
    Ok(SternGerlachRun {
        stats,
        initial: traj0,
        history,
        cap_triggers: out.cap_triggers,
        max_norm_drift: out.max_norm_drift,
        segment_energy_drift: out.segment_energy_drift,
    })
}
