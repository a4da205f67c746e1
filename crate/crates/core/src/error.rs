use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line of sight undefined: missile and target coincide")]
    ZeroRange,

    #[error("inertia tensor is singular")]
    SingularInertia,

    #[error("unknown scale-factor case {0}")]
    UnknownCase(u8),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("episode {index} (seed {seed}): {source}")]
    Episode {
        index: usize,
        seed: u64,
        #[source]
        source: Box<SimError>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
