use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FreeGaussian,
    DoubleSlit,
    SternGerlach,
    TwoOutcomeMeasurement,
    EntangledPair,
    Relaxation,
    PhononDispersion,
    PhononTrajectories,
    BoostCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub module: &'static str,
    pub description: &'static str,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::FreeGaussian,
        ExperimentKind::DoubleSlit,
        ExperimentKind::SternGerlach,
        ExperimentKind::TwoOutcomeMeasurement,
        ExperimentKind::EntangledPair,
        ExperimentKind::Relaxation,
        ExperimentKind::PhononDispersion,
        ExperimentKind::PhononTrajectories,
        ExperimentKind::BoostCheck,
    ];

    pub fn entry(self) -> CatalogEntry {
        use ExperimentKind::*;
        let (name, module, description) = match self {
            FreeGaussian => (
                "free-gaussian",
                "guidance",
                "Spreading Gaussian packet; trajectory histogram stays equal to |psi|^2 (equivariance)",
            ),
            DoubleSlit => (
                "double-slit",
                "guidance",
                "Two overlapping packets build fringes; trajectories never cross and follow |psi|^2",
            ),
            SternGerlach => (
                "stern-gerlach",
                "measurement",
                "Spin-1/2 packet split by a field gradient; spin outcome read from position alone",
            ),
            TwoOutcomeMeasurement => (
                "two-outcome-measurement",
                "measurement",
                "Pointer coupled to a two-valued observable; outcome frequencies follow the Born weights",
            ),
            EntangledPair => (
                "entangled-pair",
                "guidance",
                "Two particles on one grid; particle 1's velocity depends on particle 2 only when entangled",
            ),
            Relaxation => (
                "relaxation",
                "equilibrium",
                "Non-equilibrium ensemble in a 2D box; coarse-grained H-function decays",
            ),
            PhononDispersion => (
                "phonon-dispersion",
                "phonon-lattice",
                "Harmonic-chain dispersion, sound speed and wave-equation residual scaling",
            ),
            PhononTrajectories => (
                "phonon-trajectories",
                "phonon-lattice",
                "Atom trajectories of one-phonon states against the quasiparticle trajectory",
            ),
            BoostCheck => (
                "boost-check",
                "phonon-lattice",
                "Wave-equation residual of a phonon packet in a moving frame with invariant speed c_s",
            ),
        };
        CatalogEntry {
            name,
            module,
            description,
        }
    }

    pub fn name(self) -> &'static str {
        self.entry().name
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Catalog entries in their fixed order.
pub fn list_experiments() -> Vec<CatalogEntry> {
    ExperimentKind::ALL.iter().map(|k| k.entry()).collect()
}
