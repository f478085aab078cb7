use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rotation vector norm {0} is too close to 2π")]
    SingularRotation(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no path found within budget ({iterations} iterations, {elapsed:.3} s)")]
    PlanningFailure { iterations: usize, elapsed: f64 },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
