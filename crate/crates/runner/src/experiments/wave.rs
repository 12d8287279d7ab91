use bohmian_core::equilibrium::{iid_baseline, sample_density, total_variation, CoarseGraining};
use bohmian_core::guidance::{default_speed_cap, nonlocality_probe, TrajectoryHistory};
use bohmian_core::propagator::{evolve_to, Hamiltonian, HamiltonianSchedule};
use bohmian_core::simulation::{run_coupled, DriverOptions};
use bohmian_core::state::gaussian_amplitude;
use bohmian_core::{Axis, AxisRole, DensityField, Grid, Role, SpinorWaveFunction};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{at_least, conservation_checks, positive, record_times};
use crate::artifacts::{Check, CheckKind, Csv, Report};
use crate::error::{Context, RunnerError};

const FREE: &str = "free-gaussian";
const SLIT: &str = "double-slit";
const PAIR: &str = "entangled-pair";

/// Free Gaussian amplitude at time `t` (density width `sigma` at `t = 0`, no mean momentum).
fn spreading_amplitude(x: f64, center: f64, sigma: f64, t: f64, mass: f64, hbar: f64) -> Complex64 {
    let s = Complex64::new(1.0, hbar * t / (2.0 * mass * sigma * sigma));
    let d = x - center;
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    norm / s.sqrt() * (-d * d / (4.0 * sigma * sigma * s)).exp()
}

/// Ensemble settings shared by the 1D packet experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeGaussianParams {
    pub n_points: usize,
    pub half_width: f64,
    pub mass: f64,
    pub hbar: f64,
    /// Density standard deviation at `t = 0`.
    pub sigma: f64,
    pub center: f64,
    pub momentum: f64,
    /// Final time in units of the spreading time `2 m sigma^2 / hbar`.
    pub spreading_times: f64,
    pub ensemble_size: usize,
    pub dt: f64,
    pub bins: usize,
    pub baseline_resamples: usize,
    /// Allowed ratio of the ensemble's total variation to the i.i.d. baseline.
    pub tv_factor: f64,
    pub speed_cap_factor: f64,
    pub record_interval: f64,
    pub saved_trajectories: usize,
}

impl Default for FreeGaussianParams {
    fn default() -> Self {
        FreeGaussianParams {
            n_points: 1024,
            half_width: 20.0,
            mass: 1.0,
            hbar: 1.0,
            sigma: 1.0,
            center: -2.0,
            momentum: 0.5,
            spreading_times: 2.0,
            ensemble_size: 10_000,
            dt: 0.01,
            bins: 32,
            baseline_resamples: 16,
            tv_factor: 2.0,
            speed_cap_factor: 10.0,
            record_interval: 0.5,
            saved_trajectories: 200,
        }
    }
}

impl FreeGaussianParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        positive("half_width", self.half_width)?;
        positive("mass", self.mass)?;
        positive("hbar", self.hbar)?;
        positive("sigma", self.sigma)?;
        positive("spreading_times", self.spreading_times)?;
        positive("dt", self.dt)?;
        positive("tv_factor", self.tv_factor)?;
        positive("speed_cap_factor", self.speed_cap_factor)?;
        positive("record_interval", self.record_interval)?;
        at_least("ensemble_size", self.ensemble_size, 1)?;
        at_least("baseline_resamples", self.baseline_resamples, 1)?;
        let g = Grid::line(self.n_points, -self.half_width, self.half_width)
            .map_err(|e| RunnerError::validation("n_points", e))?;
        CoarseGraining::uniform(&g, self.bins).map_err(|e| RunnerError::validation("bins", e))?;
        Ok(())
    }

    fn duration(&self) -> f64 {
        self.spreading_times * 2.0 * self.mass * self.sigma * self.sigma / self.hbar
    }
}

/// Runs a 1D ensemble with `psi0` under the free Hamiltonian and adds the
/// equivariance checks, conservation checks and data files.
#[allow(clippy::too_many_arguments)]
fn free_ensemble(
    experiment: &'static str,
    psi0: &SpinorWaveFunction,
    mass: f64,
    hbar: f64,
    duration: f64,
    p: &EnsembleSettings,
    seed: u64,
    report: &mut Report,
) -> Result<(SpinorWaveFunction, TrajectoryHistory), RunnerError> {
    let grid = psi0.grid().clone();
    let roles = [AxisRole::new(0, Role::System, 0, mass)];
    let h = Hamiltonian::free(&grid, 1, &roles, hbar).during(experiment)?;
    let traj0 = sample_density(&psi0.density(), p.ensemble_size, seed).during(experiment)?;
    let opts = DriverOptions {
        dt: p.dt,
        speed_cap: p.speed_cap_factor * default_speed_cap(&grid, duration) / 10.0,
        record_times: record_times(duration, p.record_interval),
        constraint: None,
    };
    let mut history = TrajectoryHistory::default();
    let out = run_coupled(
        psi0,
        &traj0,
        &HamiltonianSchedule::constant(h),
        duration,
        &opts,
        |_, q| {
            history.push(q);
            Ok(())
        },
    )
    .during(experiment)?;

    let rho = out.psi.density();
    let cg = CoarseGraining::uniform(&grid, p.bins).during(experiment)?;
    let tv = total_variation(&out.trajectories, &rho, &cg).during(experiment)?;
    let baseline = iid_baseline(&rho, p.ensemble_size, &cg, seed, p.baseline_resamples).during(experiment)?;
    report.metric("total_variation", tv);
    report.metric("iid_baseline", baseline);
    report.check(Check::at_most(
        "total_variation_vs_iid",
        CheckKind::Statistical,
        tv,
        p.tv_factor * baseline,
    ));
    conservation_checks(report, out.max_norm_drift, &out.segment_energy_drift);
    report.cap_triggers = out.cap_triggers;

    let masses = cg.masses(&rho).during(experiment)?;
    let fractions = cg.fractions(&out.trajectories).during(experiment)?;
    let width = grid.axis(0).length() / p.bins as f64;
    let mut hist = Csv::new(&["bin_center", "ensemble_fraction", "exact_mass"]);
    for (b, (f, m)) in fractions.iter().zip(&masses).enumerate() {
        let x = grid.axis(0).lower + (b as f64 + 0.5) * width;
        hist.row(&[x.into(), (*f).into(), (*m).into()]);
    }
    report.file("histogram.csv", hist.into_bytes());
    let mut traj = Vec::new();
    history
        .write_csv(&mut traj, p.saved_trajectories)
        .expect("writing to memory");
    report.file("trajectories.csv", traj);
    Ok((out.psi, history))
}

struct EnsembleSettings {
    ensemble_size: usize,
    dt: f64,
    bins: usize,
    baseline_resamples: usize,
    tv_factor: f64,
    speed_cap_factor: f64,
    record_interval: f64,
    saved_trajectories: usize,
}

fn density_file(grid: &Grid, numeric: &DensityField, exact: &[f64]) -> Vec<u8> {
    let mut csv = Csv::new(&["x", "density", "closed_form"]);
    for (i, (r, e)) in numeric.values().iter().zip(exact).enumerate() {
        csv.row(&[grid.axis(0).node(i).into(), (*r).into(), (*e).into()]);
    }
    csv.into_bytes()
}

pub fn free_gaussian(p: &FreeGaussianParams, seed: u64) -> Result<Report, RunnerError> {
    let grid = Grid::line(p.n_points, -p.half_width, p.half_width).during(FREE)?;
    let psi0 = SpinorWaveFunction::from_fn(grid.clone(), |q| {
        gaussian_amplitude(q[0], p.center, p.sigma, p.momentum, p.hbar)
    })
    .during(FREE)?
    .normalize()
    .during(FREE)?;
    let t = p.duration();
    let settings = EnsembleSettings {
        ensemble_size: p.ensemble_size,
        dt: p.dt,
        bins: p.bins,
        baseline_resamples: p.baseline_resamples,
        tv_factor: p.tv_factor,
        speed_cap_factor: p.speed_cap_factor,
        record_interval: p.record_interval,
        saved_trajectories: p.saved_trajectories,
    };
    let mut report = Report::default();
    let (psi, _) = free_ensemble(FREE, &psi0, p.mass, p.hbar, t, &settings, seed, &mut report)?;

    let center = p.center + p.momentum * t / p.mass;
    let exact: Vec<f64> = grid
        .axis(0)
        .nodes()
        .iter()
        .map(|&x| spreading_amplitude(x, center, p.sigma, t, p.mass, p.hbar).norm_sqr())
        .collect();
    let rho = psi.density();
    let err = rho
        .values()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.metric("closed_form_density_error", err);
    report.check(Check::below("closed_form_density", CheckKind::Analytic, err, 1e-8));
    report.metric("duration", t);
    report.file("density.csv", density_file(&grid, &rho, &exact));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSlitParams {
    pub n_points: usize,
    pub half_width: f64,
    pub mass: f64,
    pub hbar: f64,
    /// Distance between the two slit packets.
    pub slit_separation: f64,
    /// Density standard deviation of each slit packet.
    pub slit_sigma: f64,
    pub duration: f64,
    pub ensemble_size: usize,
    pub dt: f64,
    pub bins: usize,
    pub baseline_resamples: usize,
    pub tv_factor: f64,
    pub speed_cap_factor: f64,
    pub record_interval: f64,
    pub saved_trajectories: usize,
}

impl Default for DoubleSlitParams {
    fn default() -> Self {
        DoubleSlitParams {
            n_points: 2048,
            half_width: 40.0,
            mass: 1.0,
            hbar: 1.0,
            slit_separation: 4.0,
            slit_sigma: 0.5,
            duration: 4.0,
            ensemble_size: 10_000,
            dt: 0.005,
            bins: 64,
            baseline_resamples: 16,
            tv_factor: 2.0,
            speed_cap_factor: 10.0,
            record_interval: 0.1,
            saved_trajectories: 200,
        }
    }
}

impl DoubleSlitParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        positive("half_width", self.half_width)?;
        positive("mass", self.mass)?;
        positive("hbar", self.hbar)?;
        positive("slit_separation", self.slit_separation)?;
        positive("slit_sigma", self.slit_sigma)?;
        positive("duration", self.duration)?;
        positive("dt", self.dt)?;
        positive("tv_factor", self.tv_factor)?;
        positive("speed_cap_factor", self.speed_cap_factor)?;
        positive("record_interval", self.record_interval)?;
        at_least("ensemble_size", self.ensemble_size, 1)?;
        at_least("baseline_resamples", self.baseline_resamples, 1)?;
        if self.slit_separation >= self.half_width {
            return Err(RunnerError::validation(
                "slit_separation",
                "slits must lie inside the grid",
            ));
        }
        let g = Grid::line(self.n_points, -self.half_width, self.half_width)
            .map_err(|e| RunnerError::validation("n_points", e))?;
        CoarseGraining::uniform(&g, self.bins).map_err(|e| RunnerError::validation("bins", e))?;
        Ok(())
    }
}

pub fn double_slit(p: &DoubleSlitParams, seed: u64) -> Result<Report, RunnerError> {
    let grid = Grid::line(p.n_points, -p.half_width, p.half_width).during(SLIT)?;
    let a = 0.5 * p.slit_separation;
    let amp = |x: f64, t: f64| {
        spreading_amplitude(x, -a, p.slit_sigma, t, p.mass, p.hbar)
            + spreading_amplitude(x, a, p.slit_sigma, t, p.mass, p.hbar)
    };
    let psi0 = SpinorWaveFunction::from_fn(grid.clone(), |q| amp(q[0], 0.0))
        .during(SLIT)?
        .normalize()
        .during(SLIT)?;
    let settings = EnsembleSettings {
        ensemble_size: p.ensemble_size,
        dt: p.dt,
        bins: p.bins,
        baseline_resamples: p.baseline_resamples,
        tv_factor: p.tv_factor,
        speed_cap_factor: p.speed_cap_factor,
        record_interval: p.record_interval,
        saved_trajectories: p.saved_trajectories,
    };
    let mut report = Report::default();
    let (psi, history) = free_ensemble(SLIT, &psi0, p.mass, p.hbar, p.duration, &settings, seed, &mut report)?;

    let mut exact: Vec<f64> = grid
        .axis(0)
        .nodes()
        .iter()
        .map(|&x| amp(x, p.duration).norm_sqr())
        .collect();
    let total: f64 = exact.iter().sum::<f64>() * grid.cell_volume();
    exact.iter_mut().for_each(|e| *e /= total);
    let rho = psi.density();
    let err = rho
        .values()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.metric("closed_form_density_error", err);
    report.check(Check::below("closed_form_density", CheckKind::Analytic, err, 1e-8));

    // interference minima between the central maximum and the first side peaks
    let v = rho.values();
    let centre = v.len() / 2;
    let window = &v[centre - v.len() / 8..centre + v.len() / 8];
    let peak = window.iter().cloned().fold(0.0, f64::max);
    let valley = (1..window.len() - 1)
        .filter(|&i| window[i] < window[i - 1] && window[i] <= window[i + 1])
        .map(|i| window[i])
        .fold(f64::INFINITY, f64::min);
    let visibility = (peak - valley) / (peak + valley);
    report.metric("fringe_visibility", visibility);
    report.check(Check::above("fringe_visibility", CheckKind::Analytic, visibility, 0.5));
    report.check(Check::holds(
        "trajectories_never_cross",
        CheckKind::Invariant,
        history.ordering_preserved(0),
    ));
    report.file("density.csv", density_file(&grid, &rho, &exact));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntangledPairParams {
    pub n_points: usize,
    pub half_width: f64,
    pub mass_1: f64,
    pub mass_2: f64,
    pub hbar: f64,
    pub center_1: f64,
    pub center_2: f64,
    pub sigma: f64,
    /// Momentum `k` of the correlated branches `e^{i k (x1 - x2)}` and `e^{-i k (x1 - x2)}`.
    pub momentum: f64,
    /// Amplitude of the second branch; 0 gives a product state.
    pub second_branch: f64,
    pub probe_x1: f64,
    pub probe_x2: f64,
    /// Displacement of particle 2 between the two probes.
    pub displacement: f64,
    /// |dv1| a product state may show.
    pub product_limit: f64,
    /// |dv1| the entangled state must exceed (fixed from the closed-form value).
    pub entangled_threshold: f64,
    pub duration: f64,
    pub dt: f64,
}

impl Default for EntangledPairParams {
    fn default() -> Self {
        EntangledPairParams {
            n_points: 128,
            half_width: 10.0,
            mass_1: 1.0,
            mass_2: 1.0,
            hbar: 1.0,
            center_1: -2.0,
            center_2: 2.0,
            sigma: 0.7,
            momentum: 1.0,
            second_branch: 0.5,
            probe_x1: -2.0,
            probe_x2: 2.0,
            displacement: 1.0,
            product_limit: 1e-10,
            entangled_threshold: 0.1,
            duration: 1.0,
            dt: 0.01,
        }
    }
}

impl EntangledPairParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        positive("half_width", self.half_width)?;
        positive("mass_1", self.mass_1)?;
        positive("mass_2", self.mass_2)?;
        positive("hbar", self.hbar)?;
        positive("sigma", self.sigma)?;
        positive("duration", self.duration)?;
        positive("dt", self.dt)?;
        positive("entangled_threshold", self.entangled_threshold)?;
        positive("product_limit", self.product_limit)?;
        if !(self.second_branch > 0.0 && self.second_branch < 1.0) {
            return Err(RunnerError::validation(
                "second_branch",
                "must lie in (0, 1) so the entangled state has no nodes",
            ));
        }
        Grid::new(vec![Axis::new(self.n_points, -self.half_width, self.half_width); 2])
            .map_err(|e| RunnerError::validation("n_points", e))?;
        for (name, x) in [
            ("probe_x1", self.probe_x1),
            ("probe_x2", self.probe_x2),
            ("displacement", self.probe_x2 + self.displacement),
        ] {
            if x.abs() >= self.half_width {
                return Err(RunnerError::validation(name, "probe lies outside the grid"));
            }
        }
        Ok(())
    }

    fn state(&self, b: f64) -> impl Fn(f64, f64) -> (Complex64, Complex64) + '_ {
        let s2 = 2.0 * self.sigma * self.sigma;
        move |x1: f64, x2: f64| {
            let g = gaussian_amplitude(x1, self.center_1, self.sigma, 0.0, self.hbar)
                * gaussian_amplitude(x2, self.center_2, self.sigma, 0.0, self.hbar);
            let theta = self.momentum * (x1 - x2) / self.hbar;
            let up = Complex64::from_polar(1.0, theta);
            let down = Complex64::from_polar(b, -theta);
            let psi = g * (up + down);
            // d/dx1 of g (up + down)
            let dg = -(x1 - self.center_1) / s2;
            let k = self.momentum / self.hbar;
            let dpsi = g * (up * Complex64::new(dg, k) + down * Complex64::new(dg, -k));
            (psi, dpsi)
        }
    }

    fn closed_form_v1(&self, b: f64, x1: f64, x2: f64) -> f64 {
        let (psi, dpsi) = self.state(b)(x1, x2);
        self.hbar / self.mass_1 * (dpsi / psi).im
    }
}

pub fn entangled_pair(p: &EntangledPairParams, _seed: u64) -> Result<Report, RunnerError> {
    let axis = Axis::new(p.n_points, -p.half_width, p.half_width);
    let grid = Grid::new(vec![axis, axis]).during(PAIR)?;
    let roles = [
        AxisRole::new(0, Role::System, 0, p.mass_1),
        AxisRole::new(1, Role::System, 1, p.mass_2),
    ];
    let snap = |x: f64| axis.node(axis.cell_of(x));
    let (x1, xa, xb) = (snap(p.probe_x1), snap(p.probe_x2), snap(p.probe_x2 + p.displacement));

    let mut report = Report::default();
    let mut table = Csv::new(&["state", "x1", "x2", "v1_grid", "v1_closed_form"]);
    let mut entangled = None;
    for (label, b) in [("product", 0.0), ("entangled", p.second_branch)] {
        let f = p.state(b);
        let psi = SpinorWaveFunction::from_fn(grid.clone(), |q| f(q[0], q[1]).0)
            .during(PAIR)?
            .normalize()
            .during(PAIR)?;
        let (va, vb) = nonlocality_probe(&psi, &roles, p.hbar, x1, xa, xb).during(PAIR)?;
        let (ea, eb) = (p.closed_form_v1(b, x1, xa), p.closed_form_v1(b, x1, xb));
        table.row(&[label.into(), x1.into(), xa.into(), va.into(), ea.into()]);
        table.row(&[label.into(), x1.into(), xb.into(), vb.into(), eb.into()]);
        let dv = (vb - va).abs();
        report.metric(&format!("{label}_delta_v1"), dv);
        report.metric(&format!("{label}_delta_v1_closed_form"), (eb - ea).abs());
        let oracle = (va - ea).abs().max((vb - eb).abs());
        report.metric(&format!("{label}_closed_form_error"), oracle);
        report.check(Check::below(
            &format!("{label}_velocity_closed_form"),
            CheckKind::Oracle,
            oracle,
            1e-6,
        ));
        if b == 0.0 {
            report.check(Check::below(
                "product_delta_v1",
                CheckKind::Analytic,
                dv,
                p.product_limit,
            ));
        } else {
            report.check(Check::above(
                "entangled_delta_v1",
                CheckKind::Oracle,
                dv,
                p.entangled_threshold,
            ));
            entangled = Some(psi);
        }
    }
    report.file("velocities.csv", table.into_bytes());

    let psi = entangled.expect("entangled branch ran");
    let h = Hamiltonian::free(&grid, 1, &roles, p.hbar).during(PAIR)?;
    let e0 = bohmian_core::propagator::energy_expectation(&psi, &h).during(PAIR)?;
    let end = evolve_to(&psi, &h, p.duration, p.dt, &[])
        .during(PAIR)?
        .pop()
        .expect("final state");
    let e1 = bohmian_core::propagator::energy_expectation(&end, &h).during(PAIR)?;
    conservation_checks(
        &mut report,
        (end.norm_sqr() - psi.norm_sqr()).abs(),
        &[(e1 - e0).abs() / e0.abs()],
    );
    Ok(report)
}
