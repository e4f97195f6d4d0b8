use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Bounds(String),
    #[error("input and output alias: {0}")]
    Aliasing(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("insufficient capacity: {0}")]
    Capacity(String),
    #[error("unsupported operand width: {0}")]
    Width(String),
    #[error("invalid instruction: {0}")]
    Instruction(String),
    #[error("request codec: {0}")]
    Codec(String),
    #[error("unmapped page {0}")]
    UnmappedPage(u32),
    #[error("address map: {0}")]
    AddressMap(String),
    #[error("config: {0}")]
    Config(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("value outside attribute domain: {0}")]
    Domain(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("image: {0}")]
    Image(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
