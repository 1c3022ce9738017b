use thiserror::Error;

/// Failures of the geometric primitives and the velocity-space solvers.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("max speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("half-plane normal has zero length")]
    DegenerateNormal,
    #[error("agents {0} and {1} share the same position")]
    CoincidentAgents(u32, u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("could not place {placed} of {requested} agents after {attempts} attempts")]
    Capacity {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("unknown pedestrian id {0}")]
    UnknownPedestrian(u32),
    #[error("pedestrian {0} is never visible in the training window")]
    Unobserved(u32),
}
