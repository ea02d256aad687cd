use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its supported range. `key` is the config name.
    #[error("invalid `{key}`: {message}")]
    InvalidParameter { key: String, message: String },

    #[error(
        "T*hbar = {product} does not match the declared resonance 4*pi*{nu}/{mu} = {expected}"
    )]
    OffResonance {
        product: f64,
        expected: f64,
        nu: u32,
        mu: u32,
    },

    #[error(
        "momentum basis truncated: edge population {edge_population:.3e} at step {step} \
         with basis size {basis_size} (maximum {max_basis_size})"
    )]
    Truncation {
        step: usize,
        basis_size: usize,
        max_basis_size: usize,
        edge_population: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(key: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::OffResonance { .. } | Error::Config(_) => 2,
            Error::Truncation { .. } => 3,
            Error::Io(_) => 4,
        }
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::OffResonance { .. } => "off_resonance",
            Error::Truncation { .. } => "truncation",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
