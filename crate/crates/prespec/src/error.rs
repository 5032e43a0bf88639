use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("support violates margin: {0}")]
    Margin(String),
    #[error("chain is not local: {0}")]
    Locality(String),
    #[error("chain is not a cycle: boundary norm {0:e}")]
    NotCycle(f64),
    #[error("quadrature did not reach tolerance, achieved residual {achieved:e}")]
    Quadrature { achieved: f64 },
    #[error("unreliable estimate: {0}")]
    Unreliable(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
