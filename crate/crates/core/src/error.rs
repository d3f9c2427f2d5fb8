use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("instance {0} is not present in the label map")]
    UnknownInstance(u32),
    #[error("no prediction/target supplied for scale block {0}")]
    MissingScale(u32),
    #[error("no instance has a 3x3 interior block")]
    TooSmallInstance,
    #[error("placed only {placed} of {requested} instances; the next failed {attempts} attempts")]
    InfeasiblePacking {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
