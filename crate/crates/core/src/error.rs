use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum FlockError {
    #[error("rotation undefined for (near-)antipodal pair: |x1 + x2| = {0:e}")]
    Antipodal(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("agents {i} and {j} collided (squared distance {dist_sq:e})")]
    Singularity { i: usize, j: usize, dist_sq: f64 },

    #[error("agent {agent} exceeded the speed cap at t = {t}: |v| = {speed:e}")]
    Blowup { agent: usize, speed: f64, t: f64 },

    #[error("no restart converged: best gradient norm {best_grad:e} > tolerance {grad_tol:e}")]
    NonConvergence { best_grad: f64, grad_tol: f64 },

    #[error("log covers {covered} time units, classification needs {required}")]
    InsufficientData { covered: f64, required: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("run `{name}` failed: {source}")]
    Run {
        name: String,
        #[source]
        source: Box<FlockError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FlockError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        FlockError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FlockError::Config(msg.into())
    }

    pub(crate) fn in_run(self, name: &str) -> Self {
        match self {
            e @ FlockError::Run { .. } => e,
            e => FlockError::Run {
                name: name.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any run context stripped.
    pub fn root(&self) -> &FlockError {
        match self {
            FlockError::Run { source, .. } => source.root(),
            e => e,
        }
    }

    /// Numerical failures (as opposed to bad input) map to a distinct exit status in the CLI.
    pub fn is_numerical(&self) -> bool {
        if let FlockError::Run { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            FlockError::Antipodal(_)
                | FlockError::Singularity { .. }
                | FlockError::Blowup { .. }
                | FlockError::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, FlockError>;
