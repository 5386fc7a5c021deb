use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),

    #[error("unexpected end of stream")]
    UnexpectedEof,

    #[error("bad magic bytes in {0}")]
    BadMagic(&'static str),

    #[error("unsupported {what} version {found} (expected {expected})")]
    VersionMismatch {
        what: &'static str,
        found: u8,
        expected: u8,
    },

    #[error("{width}x{height} is not divisible by block {kx}x{ky}: pad or crop required (largest usable crop is {crop_w}x{crop_h})")]
    NotDivisible {
        width: usize,
        height: usize,
        kx: usize,
        ky: usize,
        crop_w: usize,
        crop_h: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("decode kernel unavailable")]
    DecodeKernelUnavailable,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            detail: detail.into(),
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}
