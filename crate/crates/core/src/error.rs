use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {points} points, above the cap of {cap}")]
    GridCapExceeded { points: usize, cap: usize },
    #[error("wavefunction norm is zero")]
    ZeroNorm,
    #[error("grid or spin layout mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite amplitude encountered (time step too large for the potential scale?)")]
    NonFiniteAmplitude,
    #[error("empty axis set")]
    EmptyAxisSet,
    #[error("region out of grid bounds on axis {axis}")]
    RegionOutOfBounds { axis: usize },
    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),
    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),
    #[error("density is not normalized (integral {0})")]
    UnnormalizedDensity(f64),
    #[error("samples found in a coarse cell with zero quantum probability (cell {cell})")]
    SupportViolation { cell: usize },
    #[error("point lies on the node mask")]
    MaskedPoint,
    #[error("{unassigned} of {total} trajectories fall outside every outcome region")]
    TooManyUnassigned { unassigned: usize, total: usize },
    #[error("point lies on the nodal set of the wavefunction")]
    NodalPoint,
    #[error("boost speed {speed} is not below the invariant speed {limit}")]
    SuperluminalBoost { speed: f64, limit: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
