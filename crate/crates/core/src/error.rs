use thiserror::Error;

/// Every failure mode of the pipeline, tagged with enough context to locate
/// the offending stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("solid does not fit inside the container (gap {gap:.3e})")]
    GapViolation { gap: f64 },
    #[error("solid centroid {offset:.3e} away from the origin exceeds tolerance {tol:.3e}")]
    CentroidError { offset: f64, tol: f64 },
    #[error("meshing failure: {0}")]
    MeshingFailure(String),
    #[error("inf-sup estimate {beta:.3e} below the stability floor")]
    InfSupFailure { beta: f64 },
    #[error("linear solve failed: {0}")]
    SolverDivergence(String),
    #[error("boundary datum has net flux {flux:.3e} (allowed {tol:.3e})")]
    FluxViolation { flux: f64, tol: f64 },
    #[error("shift {shift} lies on the spectrum")]
    ShiftOnSpectrum { shift: f64 },
    #[error("eigensolver did not converge: {0}")]
    NonConvergence(String),
    #[error("decay rate {lambda} puts -lambda on the computed spectrum")]
    LambdaOnSpectrum { lambda: f64 },
    #[error("only eigenvalues down to {lowest} were computed; cannot bracket -{lambda}")]
    InsufficientSpectrum { lambda: f64, lowest: f64 },
    #[error("Riccati equation has no stabilizing solution: {0}")]
    RiccatiNoSolution(String),
    #[error("fixed-point iteration diverged at mu = {mu}")]
    FixedPointDivergence { mu: f64 },
    #[error("sample grid mismatch: {0}")]
    GridMismatch(String),
    #[error("cannot fit a decay rate: {0}")]
    DegenerateFit(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
