use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("projective denominator vanished (|w| = {0:e})")]
    DegenerateProjection(f64),
    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("source image {0} cannot be brought to the target resolution")]
    SourceTooSmall(String),
    #[error("insufficient data: need {needed} distinct vectors, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("loss became non-finite at step {step}")]
    DivergenceDetected { step: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input or the filesystem rather than by the
    /// computation itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Image(_)
                | Error::Json(_)
                | Error::Format(_)
                | Error::InvalidArgument(_)
                | Error::SourceTooSmall(_)
        )
    }
}
