use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radix scheme: {0}")]
    InvalidScheme(String),

    #[error("index {index} out of range for {bins} bins")]
    IndexOutOfRange { index: usize, bins: usize },

    #[error("size {size} is not an allowed stream size for {scheme}")]
    SizeNotAllowed { size: usize, scheme: String },

    #[error("range starting at {start} of size {size} is not aligned")]
    Misaligned { start: usize, size: usize },

    #[error("range {start}..{end} overlaps occupied bins")]
    RangeOccupied { start: usize, end: usize },

    #[error("request size {0} is outside 1..=M")]
    InvalidRequestSize(usize),

    #[error("request id {0} is already in use or was used before")]
    DuplicateId(u64),

    #[error("request id {0} is not allocated")]
    UnknownId(u64),

    #[error("batch needs {requested} bins but only {available} are usable")]
    Overload { requested: usize, available: usize },

    #[error("request {id} of size {size} could not be placed")]
    BatchBlocked { id: u64, size: usize },

    #[error("frequency shift {shift} must be below {limit}")]
    InvalidShift { shift: usize, limit: usize },

    #[error("block length {block} must divide {bins}")]
    InvalidBlock { block: usize, bins: usize },

    #[error("streams overlap on subcarrier {0}")]
    OverlappingStreams(usize),

    #[error("enumeration refused for m={m}: limit is m<={limit}")]
    EnumerationTooLarge { m: u32, limit: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
