use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsdgError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("inadmissible state at node {node}: {detail}")]
    Inadmissible { node: usize, detail: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("requested {requested} modes but the snapshot matrix has numerical rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("step size {h:e} fell below the minimum at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("carathéodory pruning stalled: {0}")]
    PruningStall(String),

    #[error("negative quadrature weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("empirical cubature did not reach tolerance {tol:e} (relative residual {residual:e})")]
    CubatureNotConverged { tol: f64, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<EsdgError>,
    },
}

impl EsdgError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        EsdgError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Labels an error with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        EsdgError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by the input (configuration, files) rather than the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            EsdgError::Stage { source, .. } => source.is_config_error(),
            other => matches!(
                other,
                EsdgError::Config { .. } | EsdgError::InvalidMesh(_) | EsdgError::Format(_) | EsdgError::Io(_)
            ),
        }
    }
}

pub type Result<T> = std::result::Result<T, EsdgError>;
