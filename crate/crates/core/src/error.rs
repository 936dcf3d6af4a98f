use thiserror::Error;

/// Errors produced by the tessellation laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid site set: {0}")]
    InvalidSiteSet(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid specifications differ")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("operation requires {0} topology")]
    Topology(&'static str),

    #[error("cell of site {0} meets the cut locus of its site")]
    CutLocus(usize),

    #[error("power cell {0} is empty on the quadrature grid")]
    EmptyCell(usize),

    #[error("cells {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),

    #[error("solver did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("malformed image: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
