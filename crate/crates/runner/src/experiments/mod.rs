//! The nine preset experiments.

mod lattice;
mod measure;
mod relax;
mod wave;

use serde::Serialize;

pub use lattice::{BoostParams, DispersionParams, PhononTrajectoryParams};
pub use measure::{SternGerlachParams, TwoOutcomeParams};
pub use relax::RelaxationParams;
pub use wave::{DoubleSlitParams, EntangledPairParams, FreeGaussianParams};

use crate::artifacts::{Check, CheckKind, Report};
use crate::catalog::ExperimentKind;
use crate::error::RunnerError;

/// Norm drift allowed over any run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-10;
/// Relative energy drift allowed within a time-independent segment.
pub const ENERGY_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    FreeGaussian(FreeGaussianParams),
    DoubleSlit(DoubleSlitParams),
    SternGerlach(SternGerlachParams),
    TwoOutcomeMeasurement(TwoOutcomeParams),
    EntangledPair(EntangledPairParams),
    Relaxation(RelaxationParams),
    PhononDispersion(DispersionParams),
    PhononTrajectories(PhononTrajectoryParams),
    BoostCheck(BoostParams),
}

impl Params {
    pub fn defaults(kind: ExperimentKind) -> Self {
        use ExperimentKind as K;
        match kind {
            K::FreeGaussian => Params::FreeGaussian(Default::default()),
            K::DoubleSlit => Params::DoubleSlit(Default::default()),
            K::SternGerlach => Params::SternGerlach(Default::default()),
            K::TwoOutcomeMeasurement => Params::TwoOutcomeMeasurement(Default::default()),
            K::EntangledPair => Params::EntangledPair(Default::default()),
            K::Relaxation => Params::Relaxation(Default::default()),
            K::PhononDispersion => Params::PhononDispersion(Default::default()),
            K::PhononTrajectories => Params::PhononTrajectories(Default::default()),
            K::BoostCheck => Params::BoostCheck(Default::default()),
        }
    }

    pub(crate) fn from_value(kind: ExperimentKind, v: toml::Value) -> Result<Self, RunnerError> {
        use ExperimentKind as K;
        fn de<T: serde::de::DeserializeOwned>(v: toml::Value) -> Result<T, RunnerError> {
            v.try_into()
                .map_err(|e: toml::de::Error| RunnerError::ConfigParse(format!("params: {}", e.message())))
        }
        Ok(match kind {
            K::FreeGaussian => Params::FreeGaussian(de(v)?),
            K::DoubleSlit => Params::DoubleSlit(de(v)?),
            K::SternGerlach => Params::SternGerlach(de(v)?),
            K::TwoOutcomeMeasurement => Params::TwoOutcomeMeasurement(de(v)?),
            K::EntangledPair => Params::EntangledPair(de(v)?),
            K::Relaxation => Params::Relaxation(de(v)?),
            K::PhononDispersion => Params::PhononDispersion(de(v)?),
            K::PhononTrajectories => Params::PhononTrajectories(de(v)?),
            K::BoostCheck => Params::BoostCheck(de(v)?),
        })
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        match self {
            Params::FreeGaussian(p) => p.validate(),
            Params::DoubleSlit(p) => p.validate(),
            Params::SternGerlach(p) => p.validate(),
            Params::TwoOutcomeMeasurement(p) => p.validate(),
            Params::EntangledPair(p) => p.validate(),
            Params::Relaxation(p) => p.validate(),
            Params::PhononDispersion(p) => p.validate(),
            Params::PhononTrajectories(p) => p.validate(),
            Params::BoostCheck(p) => p.validate(),
        }
    }

    pub(crate) fn run(&self, seed: u64) -> Result<Report, RunnerError> {
        match self {
            Params::FreeGaussian(p) => wave::free_gaussian(p, seed),
            Params::DoubleSlit(p) => wave::double_slit(p, seed),
            Params::SternGerlach(p) => measure::stern_gerlach(p, seed),
            Params::TwoOutcomeMeasurement(p) => measure::two_outcome(p, seed),
            Params::EntangledPair(p) => wave::entangled_pair(p, seed),
            Params::Relaxation(p) => relax::relaxation(p, seed),
            Params::PhononDispersion(p) => lattice::dispersion(p),
            Params::PhononTrajectories(p) => lattice::trajectories(p, seed),
            Params::BoostCheck(p) => lattice::boost(p),
        }
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<(), RunnerError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RunnerError::validation(name, format!("must be positive, got {v}")))
    }
}

pub(crate) fn at_least(name: &str, v: usize, min: usize) -> Result<(), RunnerError> {
    if v >= min {
        Ok(())
    } else {
        Err(RunnerError::validation(
            name,
            format!("must be at least {min}, got {v}"),
        ))
    }
}

/// Maps a core validation error onto the runner's validation failure.
pub(crate) fn core_validation(r: bohmian_core::Result<()>) -> Result<(), RunnerError> {
    r.map_err(|e| RunnerError::Validation(e.to_string()))
}

/// Norm and energy conservation checks shared by every wavefunction run.
pub(crate) fn conservation_checks(report: &mut Report, norm_drift: f64, energy_drifts: &[f64]) {
    let energy = energy_drifts.iter().cloned().fold(0.0, f64::max);
    report.metric("norm_drift", norm_drift);
    report.metric("energy_drift", energy);
    report.check(Check::below(
        "norm_drift",
        CheckKind::Invariant,
        norm_drift,
        NORM_DRIFT_LIMIT,
    ));
    report.check(Check::below(
        "energy_drift",
        CheckKind::Invariant,
        energy,
        ENERGY_DRIFT_LIMIT,
    ));
}

/// `t0, t0 + dt, ...` strictly before `t1`, then `t1`.
pub(crate) fn record_times(t1: f64, interval: f64) -> Vec<f64> {
    let n = (t1 / interval).round().max(1.0) as usize;
    let mut v: Vec<f64> = (0..n).map(|k| k as f64 * interval).filter(|&t| t < t1).collect();
    v.push(t1);
    v
}
