use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("geometry failure: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Cosphericity that falls inside the ambiguity band between "merge" and
    /// "keep separate"; signals that the merge tolerance must be adjusted.
    #[error("near-degenerate cosphericity: {0}")]
    Cosphericity(String),

    /// A pretriangulation cell that facet-diagonal insertion cannot reduce to
    /// tetrahedra and octahedra.
    #[error("irreducible cell: {0}")]
    Irreducible(String),

    #[error("no admissible start: {0}")]
    NoAdmissibleStart(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
