use bohmian_core::guidance::TrajectoryHistory;
use bohmian_core::measurement::{
    born_rule_report, run_measurement, stern_gerlach_experiment, DiscreteObservable, EnsembleOptions, MeasurementSetup,
    OutcomeStatistics, PointerSpec, SternGerlachConfig, MAX_UNASSIGNED_FRACTION, OVERLAP_THRESHOLD,
};
use bohmian_core::state::gaussian_amplitude;
use bohmian_core::{Axis, AxisRole, Grid, Role, SpinorWaveFunction};
use serde::{Deserialize, Serialize};

use super::{at_least, conservation_checks, core_validation, positive};
use crate::artifacts::{Check, CheckKind, Csv, Report};
use crate::error::{Context, RunnerError};

const TWO: &str = "two-outcome-measurement";
const SG: &str = "stern-gerlach";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoOutcomeParams {
    pub system_points: usize,
    pub system_half_width: f64,
    pub system_mass: f64,
    /// Density standard deviation of each eigenstate packet.
    pub system_sigma: f64,
    /// Centres of the eigenvalue -1 and +1 packets.
    pub system_centers: [f64; 2],
    /// `|c_1|^2, |c_2|^2`.
    pub probabilities: [f64; 2],
    pub pointer_points: usize,
    pub pointer_half_width: f64,
    pub pointer_mass: f64,
    /// Amplitude width of the initial pointer packet.
    pub pointer_width: f64,
    pub coupling: f64,
    pub window: (f64, f64),
    pub readout_time: f64,
    pub hbar: f64,
    pub ensemble_size: usize,
    pub dt: f64,
    pub speed_cap_factor: f64,
    pub record_interval: f64,
    /// Allowed |frequency - probability| in standard errors.
    pub sigma_limit: f64,
    pub saved_trajectories: usize,
}

impl Default for TwoOutcomeParams {
    fn default() -> Self {
        TwoOutcomeParams {
            system_points: 128,
            system_half_width: 8.0,
            system_mass: 10.0,
            system_sigma: 0.4,
            system_centers: [-3.0, 3.0],
            probabilities: [0.3, 0.7],
            pointer_points: 128,
            pointer_half_width: 8.0,
            pointer_mass: 50.0,
            pointer_width: 0.5,
            coupling: 4.0,
            window: (0.0, 1.0),
            readout_time: 1.5,
            hbar: 1.0,
            ensemble_size: 10_000,
            dt: 0.01,
            speed_cap_factor: 10.0,
            record_interval: 0.1,
            sigma_limit: 3.0,
            saved_trajectories: 200,
        }
    }
}

impl TwoOutcomeParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        positive("system_half_width", self.system_half_width)?;
        positive("system_mass", self.system_mass)?;
        positive("system_sigma", self.system_sigma)?;
        positive("dt", self.dt)?;
        positive("speed_cap_factor", self.speed_cap_factor)?;
        positive("record_interval", self.record_interval)?;
        positive("sigma_limit", self.sigma_limit)?;
        at_least("ensemble_size", self.ensemble_size, 1)?;
        let total: f64 = self.probabilities.iter().sum();
        if self.probabilities.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(RunnerError::validation(
                "probabilities",
                "must be non-negative and sum to 1",
            ));
        }
        if !(self.system_centers[0] < 0.0 && self.system_centers[1] > 0.0) {
            return Err(RunnerError::validation(
                "system_centers",
                "the -1 packet must lie left of 0 and the +1 packet right of it",
            ));
        }
        self.system_grid()?;
        core_validation(self.setup()?.validate())
    }

    fn system_grid(&self) -> Result<Grid, RunnerError> {
        Grid::line(self.system_points, -self.system_half_width, self.system_half_width)
            .map_err(|e| RunnerError::validation("system_points", e))
    }

    fn setup(&self) -> Result<MeasurementSetup, RunnerError> {
        let hw = self.system_half_width;
        let phw = self.pointer_half_width;
        let observable = DiscreteObservable::regions(0, vec![-1.0, 1.0], vec![(-hw, 0.0), (0.0, hw)])
            .map_err(|e| RunnerError::Validation(e.to_string()))?;
        Ok(MeasurementSetup {
            observable,
            system_roles: vec![AxisRole::new(0, Role::System, 0, self.system_mass)],
            pointer: PointerSpec {
                axis: Axis::new(self.pointer_points, -phw, phw),
                mass: self.pointer_mass,
                center: 0.0,
                width: self.pointer_width,
            },
            coupling: self.coupling,
            window: self.window,
            readout_time: self.readout_time,
            outcome_regions: vec![(-phw, 0.0), (0.0, phw)],
            hbar: self.hbar,
        })
    }

    fn system_state(&self) -> Result<SpinorWaveFunction, RunnerError> {
        let [p1, p2] = self.probabilities;
        let [c1, c2] = self.system_centers;
        SpinorWaveFunction::from_fn(self.system_grid()?, |q| {
            gaussian_amplitude(q[0], c1, self.system_sigma, 0.0, self.hbar) * p1.sqrt()
                + gaussian_amplitude(q[0], c2, self.system_sigma, 0.0, self.hbar) * p2.sqrt()
        })
        .during(TWO)?
        .normalize()
        .during(TWO)
    }
}

fn outcome_checks(report: &mut Report, stats: &OutcomeStatistics, targets: &[f64], sigma_limit: f64) {
    let m = stats.total as f64;
    for (k, (&f, &p)) in stats.frequencies.iter().zip(targets).enumerate() {
        let label = &stats.labels[k];
        let sigma = (p * (1.0 - p) / m).sqrt();
        report.metric(&format!("frequency[{label}]"), f);
        report.metric(&format!("target[{label}]"), p);
        report.check(Check::at_most(
            &format!("born_frequency[{label}]"),
            CheckKind::Statistical,
            (f - p).abs(),
            sigma_limit * sigma,
        ));
    }
    for (k, z) in born_rule_report(stats).iter().enumerate() {
        report.metric(&format!("z_score[{}]", stats.labels[k]), *z);
    }
    let unassigned = stats.unassigned as f64 / m;
    report.metric("unassigned_fraction", unassigned);
    report.check(Check::at_most(
        "unassigned_fraction",
        CheckKind::Invariant,
        unassigned,
        MAX_UNASSIGNED_FRACTION,
    ));
}

fn outcome_file(stats: &OutcomeStatistics, targets: &[f64]) -> Vec<u8> {
    let mut csv = Csv::new(&["outcome", "count", "frequency", "target"]);
    for (k, label) in stats.labels.iter().enumerate() {
        csv.row(&[
            label.as_str().into(),
            (stats.counts[k] as usize).into(),
            stats.frequencies[k].into(),
            targets[k].into(),
        ]);
    }
    csv.into_bytes()
}

fn history_file(history: &TrajectoryHistory, max: usize) -> Vec<u8> {
    let mut out = Vec::new();
    history.write_csv(&mut out, max).expect("writing to memory");
    out
}

pub fn two_outcome(p: &TwoOutcomeParams, seed: u64) -> Result<Report, RunnerError> {
    let setup = p.setup()?;
    let system = p.system_state()?;
    let diameter = (2.0 * p.system_half_width).hypot(2.0 * p.pointer_half_width);
    let opts = EnsembleOptions {
        ensemble_size: p.ensemble_size,
        seed,
        dt: p.dt,
        speed_cap: p.speed_cap_factor * diameter / p.readout_time,
        record_interval: p.record_interval,
    };
    let run = run_measurement(&system, &setup, &opts).during(TWO)?;
    let mut report = Report::default();
    outcome_checks(&mut report, &run.stats, &p.probabilities, p.sigma_limit);
    for (k, m) in run.stats.targets.iter().enumerate() {
        report.metric(&format!("branch_mass[{}]", run.stats.labels[k]), *m);
    }
    let overlap = run.stats.overlap.as_ref().expect("overlap computed at readout");
    let off = overlap.max_off_diagonal();
    report.metric("branch_overlap", off);
    report.check(Check::below(
        "branch_overlap",
        CheckKind::Analytic,
        off,
        OVERLAP_THRESHOLD,
    ));
    conservation_checks(&mut report, run.max_norm_drift, &run.segment_energy_drift);
    report.cap_triggers = run.cap_triggers;
    report.file("outcomes.csv", outcome_file(&run.stats, &p.probabilities));
    report.file("trajectories.csv", history_file(&run.history, p.saved_trajectories));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SternGerlachParams {
    pub ensemble_size: usize,
    pub dt: f64,
    pub speed_cap_factor: f64,
    pub record_interval: f64,
    pub sigma_limit: f64,
    pub saved_trajectories: usize,
    pub setup: SternGerlachConfig,
}

impl Default for SternGerlachParams {
    fn default() -> Self {
        SternGerlachParams {
            ensemble_size: 10_000,
            dt: 0.002,
            speed_cap_factor: 10.0,
            record_interval: 0.05,
            sigma_limit: 3.0,
            saved_trajectories: 200,
            setup: SternGerlachConfig::default(),
        }
    }
}

impl SternGerlachParams {
    pub fn validate(&self) -> Result<(), RunnerError> {
        positive("dt", self.dt)?;
        positive("speed_cap_factor", self.speed_cap_factor)?;
        positive("record_interval", self.record_interval)?;
        positive("sigma_limit", self.sigma_limit)?;
        at_least("ensemble_size", self.ensemble_size, 1)?;
        core_validation(self.setup.validate())
    }
}

pub fn stern_gerlach(p: &SternGerlachParams, seed: u64) -> Result<Report, RunnerError> {
    let cfg = &p.setup;
    let opts = EnsembleOptions {
        ensemble_size: p.ensemble_size,
        seed,
        dt: p.dt,
        speed_cap: p.speed_cap_factor * 2.0 * cfg.half_width / cfg.readout_time,
        record_interval: p.record_interval,
    };
    let run = stern_gerlach_experiment(cfg, &opts, None).during(SG)?;
    let targets = [cfg.up_probability, 1.0 - cfg.up_probability];
    let mut report = Report::default();
    outcome_checks(&mut report, &run.stats, &targets, p.sigma_limit);
    report.check(Check::holds(
        "trajectories_never_cross",
        CheckKind::Invariant,
        run.history.ordering_preserved(0),
    ));
    report.metric("recorded_steps", run.history.len() as f64);
    conservation_checks(&mut report, run.max_norm_drift, &run.segment_energy_drift);
    report.cap_triggers = run.cap_triggers;
    report.file("outcomes.csv", outcome_file(&run.stats, &targets));
    report.file("trajectories.csv", history_file(&run.history, p.saved_trajectories));
    Ok(report)
}
