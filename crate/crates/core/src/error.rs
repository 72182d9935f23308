//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A physical or model parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Domain(String),

    /// Two positions coincide where a nonzero distance is required.
    #[error("coincident positions: {0}")]
    CoincidentPositions(String),

    /// Tag ids must be unique within a deployment.
    #[error("duplicate tag id {0}")]
    DuplicateTag(u8),

    /// A tag id was referenced that is not part of the deployment.
    #[error("unknown tag id {0}")]
    UnknownTag(u8),

    /// Relay analysis asked about an index outside the interior of the line.
    #[error("relay index {index} not in 2..={max} for a {n_tags}-tag line")]
    RelayIndex {
        index: usize,
        max: usize,
        n_tags: usize,
    },

    /// Scenario or simulation configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),
}
