use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid direction: k_y^2 + k_z^2 = {0} exceeds 1")]
    InvalidDirection(f64),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("infeasible combiner design: {0}")]
    InfeasibleDesign(String),

    #[error("numerical rank deficiency while refitting support (atom {atom})")]
    NumericalRank { atom: usize },

    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate ray geometry (reciprocal condition number {rcond:.3e})")]
    DegenerateGeometry { rcond: f64 },

    #[error("degenerate sampling grid: {0}")]
    DegenerateGrid(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for errors caused by bad configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}
