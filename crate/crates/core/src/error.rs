use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty table")]
    EmptyTable,
    #[error("column `{0}` not found in table header")]
    MissingColumn(String),
    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("column `{column}`: value `{value}` at row {row} is not a number")]
    NotNumeric {
        column: String,
        value: String,
        row: usize,
    },
    #[error("column `{column}`: non-finite value {value}")]
    NonFinite { column: String, value: f64 },
    #[error("column `{column}`: unknown category `{value}`")]
    UnknownCategory { column: String, value: String },
    #[error("target `{target}`: unknown class `{value}`")]
    UnknownClass { target: String, value: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("timestep {t} out of range 0..={max}")]
    TimestepOutOfRange { t: u32, max: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_row(self, row: usize) -> Self {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }
}
