use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point format: {total} total bits, {frac} fractional bits")]
    InvalidFormat { total: u32, frac: u32 },

    #[error("cannot quantize NaN")]
    NotANumber,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("operands use mismatched fixed-point formats: {0}")]
    FormatMismatch(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("engine precondition violated: {0}")]
    Precondition(String),

    #[error("column {col} out of range for line width {width}")]
    ColumnOutOfRange { col: usize, width: usize },

    #[error("stream underrun: expected {expected} pixels, stream ended after {got}")]
    StreamUnderrun { expected: usize, got: usize },

    #[error("stream closed by consumer")]
    StreamClosed,

    #[error("tensor kind mismatch: {0}")]
    KindMismatch(String),

    #[error("empty tensor")]
    EmptyTensor,

    #[error("missing parameters for conv slot {0}")]
    MissingParams(usize),

    #[error("parameter count mismatch in conv slot {slot}: expected {expected}, got {got}")]
    ParamCount { slot: usize, expected: usize, got: usize },

    #[error("shape chain broken at layer {layer}: {reason}")]
    ShapeChain { layer: usize, reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported file version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("unknown layer kind tag {0}")]
    UnknownKind(u8),

    #[error("unsupported tensor dtype tag {0}")]
    UnsupportedDtype(u8),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
