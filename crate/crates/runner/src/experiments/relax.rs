use bohmian_core::equilibrium::{relaxation_experiment, InitialEnsemble, RelaxationConfig};
use serde::{Deserialize, Serialize};

use super::{conservation_checks, core_validation};
use crate::artifacts::{Check, CheckKind, Csv, Report};
use crate::error::{Context, RunnerError};

/// Relaxation settings; the ensemble seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationParams {
    pub box_length: f64,
    pub modes_per_axis: usize,
    pub points_per_axis: usize,
    pub bins: usize,
    pub ensemble_size: usize,
    pub duration: f64,
    pub dt: f64,
    pub record_interval: f64,
    pub mass: f64,
    pub hbar: f64,
    pub phase_seed: u64,
    pub initial: InitialEnsemble,
    pub speed_cap_factor: f64,
    /// Required ratio `H(0) / H(end)`.
    pub decay_factor: f64,
}

impl Default for RelaxationParams {
    fn default() -> Self {
        let c = RelaxationConfig::default();
        RelaxationParams {
            box_length: c.box_length,
            modes_per_axis: c.modes_per_axis,
            points_per_axis: c.points_per_axis,
            bins: c.bins,
            ensemble_size: c.ensemble_size,
            duration: c.duration,
            dt: c.dt,
            record_interval: c.record_interval,
            mass: c.mass,
            hbar: c.hbar,
            phase_seed: c.phase_seed,
            initial: c.initial,
            speed_cap_factor: c.speed_cap_factor,
            decay_factor: 3.0,
        }
    }
}

impl RelaxationParams {
    fn config(&self, seed: u64) -> RelaxationConfig {
        RelaxationConfig {
            box_length: self.box_length,
            modes_per_axis: self.modes_per_axis,
            points_per_axis: self.points_per_axis,
            bins: self.bins,
            ensemble_size: self.ensemble_size,
            duration: self.duration,
            dt: self.dt,
            record_interval: self.record_interval,
            mass: self.mass,
            hbar: self.hbar,
            seed,
            phase_seed: self.phase_seed,
            initial: self.initial,
            speed_cap_factor: self.speed_cap_factor,
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        super::positive("decay_factor", self.decay_factor)?;
        core_validation(self.config(0).validate())
    }
}

pub fn relaxation(p: &RelaxationParams, seed: u64) -> Result<Report, RunnerError> {
    let out = relaxation_experiment(&p.config(seed)).during("relaxation")?;
    let h = &out.series.values;
    let (h0, h_end) = (h[0], *h.last().expect("at least one record"));
    let slope = out.series.trend_slope();
    let mut report = Report::default();
    report.metric("h_initial", h0);
    report.metric("h_final", h_end);
    report.metric("h_slope", slope);
    report.metric("statistical_floor", out.statistical_floor);
    report.metric(
        "total_variation_final",
        *out.total_variation.last().expect("at least one record"),
    );
    report.check(Check::above("h_initial", CheckKind::Analytic, h0, 1.0));
    report.check(Check::below(
        "h_final",
        CheckKind::Statistical,
        h_end,
        h0 / p.decay_factor,
    ));
    report.check(Check::below("h_slope", CheckKind::Statistical, slope, 0.0));
    conservation_checks(&mut report, out.max_norm_drift, &[out.energy_drift]);
    report.cap_triggers = out.cap_triggers;

    let mut series = Vec::new();
    out.series.write_csv(&mut series).expect("writing to memory");
    report.file("h_function.csv", series);
    let mut tv = Csv::new(&["time", "total_variation"]);
    for (t, d) in out.series.times.iter().zip(&out.total_variation) {
        tv.row(&[(*t).into(), (*d).into()]);
    }
    report.file("total_variation.csv", tv.into_bytes());
    Ok(report)
}
