use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("malformed number literal {text:?}: {reason}")]
    Parse { text: String, reason: String },

    #[error("value exceeds internal capacity: {0}")]
    Capacity(String),

    /// |x| lies above the largest finite value of the format. Callers decide
    /// whether to saturate or produce infinity.
    #[error("{value} is outside the finite range of {format}")]
    OverflowRange { format: String, value: String },

    #[error("{value} is not representable in {format}")]
    Encoding { format: String, value: String },

    #[error("bit pattern {bits:#x} has no meaning in {format}")]
    Decoding { format: String, bits: u64 },

    #[error("entropy source exhausted after {consumed} bits")]
    EntropyExhausted { consumed: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown format {0:?}")]
    UnknownFormat(String),

    #[error("unknown vendor {0:?}")]
    UnknownVendor(String),

    /// A "--" cell: the vendor documents no SR conversion for this pair.
    #[error("{vendor} specifies no stochastic conversion from {src} to {dst}")]
    NotSpecified {
        vendor: String,
        src: String,
        dst: String,
    },

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("profile registry: {0}")]
    Registry(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
